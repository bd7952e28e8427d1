//! Transit network ingestion: trips, stops, fleet inventory, elevations and
//! route aggregation into demand-satisfaction clusters.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;
use std::time::Duration;

use crate::types::{LengthGroup, Season};

/// Mean Earth radius used by the haversine distance, in km.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Road-circuity factor applied to straight-line distances for deadheading
/// and for segment shapes.
pub const DEFAULT_CIRCUITY: f64 = 1.3;

#[derive(Debug, thiserror::Error)]
pub enum TransitError {
    #[error("{path}:{line}: {msg}")]
    MalformedRow {
        path: String,
        line: u64,
        msg: String,
    },
    #[error("trip {trip_id}: unknown stop {stop_id}")]
    UnknownStop { trip_id: String, stop_id: String },
    #[error("route {route}: no stop sequence in stops file")]
    MissingStopSequence { route: String },
    #[error("no elevation for {0}")]
    MissingElevation(String),
    #[error("elevation request failed after retries: {0}")]
    ElevationRequest(String),
    #[error("route {route}: cluster metric {metric} outside (0, 1]")]
    MetricOutOfRange { route: String, metric: f64 },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A transit stop with coordinates and (once resolved) elevation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub id: String,
    pub latitude: f64,
    pub longitude: f64,
    /// Meters above sea level; NaN until elevations are resolved.
    pub elevation: f64,
}

impl Stop {
    pub fn has_elevation(&self) -> bool {
        self.elevation.is_finite()
    }
}

/// One timetabled service trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub route_code: String,
    pub trip_id: String,
    /// Seconds of day in [0, 86400).
    pub start_time: u32,
    pub scheduled_distance_km: f64,
    pub depot: Option<String>,
    pub length_group: LengthGroup,
    /// Stop ids in service order.
    pub stop_sequence: Vec<String>,
    /// Terminal pair label, e.g. `"T1>T2"`.
    pub direction: String,
}

/// All timetabled trips of one route for one representative day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDay {
    pub route_code: String,
    pub season: Season,
    /// Days per year this schedule is in effect (92 summer, 273 winter).
    pub days_active: u32,
    /// Sorted nondecreasing by start time.
    pub trips: Vec<Trip>,
}

/// Days the summer schedule applies; winter covers the rest of the year.
pub const SUMMER_DAYS: u32 = 92;
pub const WINTER_DAYS: u32 = 365 - SUMMER_DAYS;

pub fn days_active(season: Season) -> u32 {
    match season {
        Season::Winter => WINTER_DAYS,
        Season::Summer => SUMMER_DAYS,
    }
}

/// Initial fleet cohort: count of buses of one version at one age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetCohort {
    pub bus_type: crate::types::BusType,
    pub version: String,
    pub count: u32,
    pub age_years: u32,
}

/// The existing fleet at the start of the horizon.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FleetInventory {
    pub cohorts: Vec<FleetCohort>,
}

impl FleetInventory {
    /// Remaining service life per the age rule: buses aged 11 or less may
    /// run to 16 years total, older buses to 20, never less than one year.
    pub fn remaining_lifetime(age_years: u32) -> u32 {
        let cap: u32 = if age_years <= 11 { 16 } else { 20 };
        cap.saturating_sub(age_years).max(1)
    }
}

/// Routes grouped by their averaged minimum demand-satisfaction ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteCluster {
    pub cluster_id: u32,
    /// `[lo, hi)` of the metric; the top cluster is exactly `{1.0}`.
    pub metric_lo: f64,
    pub metric_hi: f64,
    pub member_routes: Vec<String>,
    /// Bus demand per (season, length group), summed over member routes.
    pub aggregate_demand: BTreeMap<(Season, LengthGroup), u32>,
}

/// Great-circle distance via the haversine formula, in km.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

fn parse_hhmmss(s: &str) -> Result<u32, String> {
    let parts: Vec<&str> = s.trim().split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected HH:MM:SS, got {s:?}"));
    }
    let h: u32 = parts[0].parse().map_err(|_| format!("bad hour in {s:?}"))?;
    let m: u32 = parts[1]
        .parse()
        .map_err(|_| format!("bad minute in {s:?}"))?;
    let sec: u32 = parts[2]
        .parse()
        .map_err(|_| format!("bad second in {s:?}"))?;
    if h > 23 || m > 59 || sec > 59 {
        return Err(format!("time {s:?} out of range"));
    }
    Ok(h * 3600 + m * 60 + sec)
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>, TransitError> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| TransitError::Io {
            path: path.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::Other, e.to_string()),
        })
}

fn malformed(path: &Path, line: u64, msg: impl Into<String>) -> TransitError {
    TransitError::MalformedRow {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Parsed network: per-season schedule days keyed by route, the stop table,
/// per-route stop sequences and the initial fleet.
#[derive(Debug, Clone, Default)]
pub struct Network {
    pub schedule_days: Vec<ScheduleDay>,
    pub stops: BTreeMap<String, Stop>,
    /// Stop ids in sequence order per route code.
    pub route_stops: BTreeMap<String, Vec<String>>,
    pub fleet: FleetInventory,
}

impl Network {
    pub fn routes(&self) -> BTreeSet<String> {
        self.schedule_days
            .iter()
            .map(|d| d.route_code.clone())
            .collect()
    }
}

/// Parse trips, stops and fleet CSV files into a validated [`Network`].
///
/// Trips reference their route's stop sequence; a trip whose route has no
/// stop rows, or a stop row without coordinates, is an error carrying the
/// offending line. Seasons: a trip row belongs to the winter schedule unless
/// its trip id ends in `@summer`, which marks the summer timetable variant.
pub fn parse_network(
    trips_csv: &Path,
    stops_csv: &Path,
    fleet_csv: &Path,
) -> Result<Network, TransitError> {
    // stops.csv: route_code,seq,stop_id,lat,lon[,elevation_m]
    let mut stops: BTreeMap<String, Stop> = BTreeMap::new();
    let mut route_stops: BTreeMap<String, Vec<(u32, String)>> = BTreeMap::new();
    {
        let mut rdr = open_csv(stops_csv)?;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| malformed(stops_csv, 0, e.to_string()))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() < 5 {
                return Err(malformed(stops_csv, line, "expected at least 5 columns"));
            }
            let route = rec[0].to_string();
            let seq: u32 = rec[1]
                .parse()
                .map_err(|_| malformed(stops_csv, line, format!("bad seq {:?}", &rec[1])))?;
            let stop_id = rec[2].to_string();
            // A row with empty coordinates only declares sequence membership;
            // the stop itself must be defined with coordinates elsewhere.
            if !rec[3].is_empty() || !rec[4].is_empty() {
                let lat: f64 = rec[3]
                    .parse()
                    .map_err(|_| malformed(stops_csv, line, format!("bad lat {:?}", &rec[3])))?;
                let lon: f64 = rec[4]
                    .parse()
                    .map_err(|_| malformed(stops_csv, line, format!("bad lon {:?}", &rec[4])))?;
                if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
                    return Err(malformed(
                        stops_csv,
                        line,
                        format!("coordinates ({lat}, {lon}) out of range"),
                    ));
                }
                let elevation = if rec.len() > 5 && !rec[5].is_empty() {
                    rec[5].parse().map_err(|_| {
                        malformed(stops_csv, line, format!("bad elevation {:?}", &rec[5]))
                    })?
                } else {
                    f64::NAN
                };
                stops.entry(stop_id.clone()).or_insert(Stop {
                    id: stop_id.clone(),
                    latitude: lat,
                    longitude: lon,
                    elevation,
                });
            }
            route_stops.entry(route).or_default().push((seq, stop_id));
        }
    }
    let route_stops: BTreeMap<String, Vec<String>> = route_stops
        .into_iter()
        .map(|(route, mut seq)| {
            seq.sort();
            (route, seq.into_iter().map(|(_, id)| id).collect())
        })
        .collect();

    // trips.csv: route_code,trip_id,start_time_hhmmss,distance_km,depot,length_group,direction
    let mut days: BTreeMap<(String, Season), Vec<Trip>> = BTreeMap::new();
    {
        let mut rdr = open_csv(trips_csv)?;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| malformed(trips_csv, 0, e.to_string()))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() < 7 {
                return Err(malformed(trips_csv, line, "expected 7 columns"));
            }
            let route_code = rec[0].to_string();
            let trip_id = rec[1].to_string();
            let start_time =
                parse_hhmmss(&rec[2]).map_err(|msg| malformed(trips_csv, line, msg))?;
            let distance: f64 = rec[3]
                .parse()
                .map_err(|_| malformed(trips_csv, line, format!("bad distance {:?}", &rec[3])))?;
            if !(distance > 0.0) {
                return Err(malformed(
                    trips_csv,
                    line,
                    format!("distance must be positive, got {distance}"),
                ));
            }
            let depot = if rec[4].is_empty() {
                None
            } else {
                Some(rec[4].to_string())
            };
            let length_group: LengthGroup = rec[5]
                .parse()
                .map_err(|msg| malformed(trips_csv, line, msg))?;
            let direction = rec[6].to_string();

            let (season, trip_id) = match trip_id.strip_suffix("@summer") {
                Some(base) => (Season::Summer, base.to_string()),
                None => (Season::Winter, trip_id),
            };

            // Stop sequences may be direction-specific (`route>direction`
            // rows in stops.csv) or shared per route.
            let seq = route_stops
                .get(&format!("{route_code}>{direction}"))
                .or_else(|| route_stops.get(&route_code))
                .ok_or(TransitError::MissingStopSequence {
                    route: route_code.clone(),
                })?
                .clone();
            if seq.len() < 2 {
                return Err(malformed(
                    trips_csv,
                    line,
                    format!("route {route_code} has fewer than 2 stops"),
                ));
            }
            for stop_id in &seq {
                if !stops.contains_key(stop_id) {
                    return Err(TransitError::UnknownStop {
                        trip_id: trip_id.clone(),
                        stop_id: stop_id.clone(),
                    });
                }
            }

            days.entry((route_code.clone(), season)).or_default().push(Trip {
                route_code,
                trip_id,
                start_time,
                scheduled_distance_km: distance,
                depot,
                length_group,
                stop_sequence: seq,
                direction,
            });
        }
    }

    let schedule_days = days
        .into_iter()
        .map(|((route_code, season), mut trips)| {
            trips.sort_by(|a, b| {
                a.start_time
                    .cmp(&b.start_time)
                    .then_with(|| a.trip_id.cmp(&b.trip_id))
            });
            ScheduleDay {
                route_code,
                season,
                days_active: days_active(season),
                trips,
            }
        })
        .collect();

    // fleet.csv: type,version,count,age_years
    let mut fleet = FleetInventory::default();
    {
        let mut rdr = open_csv(fleet_csv)?;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| malformed(fleet_csv, 0, e.to_string()))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() < 4 {
                return Err(malformed(fleet_csv, line, "expected 4 columns"));
            }
            let bus_type = rec[0]
                .parse()
                .map_err(|msg| malformed(fleet_csv, line, msg))?;
            let version = rec[1].to_string();
            let count: u32 = rec[2]
                .parse()
                .map_err(|_| malformed(fleet_csv, line, format!("bad count {:?}", &rec[2])))?;
            let age_years: u32 = rec[3]
                .parse()
                .map_err(|_| malformed(fleet_csv, line, format!("bad age {:?}", &rec[3])))?;
            fleet.cohorts.push(FleetCohort {
                bus_type,
                version,
                count,
                age_years,
            });
        }
    }

    Ok(Network {
        schedule_days,
        stops,
        route_stops,
        fleet,
    })
}

/// Write a network back to the three CSV files (plus an elevations table
/// for any resolved elevations). Output is deterministic: rows are sorted.
pub fn write_network(net: &Network, dir: &Path) -> Result<(), TransitError> {
    use std::fmt::Write as _;
    let io_err = |e: std::io::Error, p: &Path| TransitError::Io {
        path: p.display().to_string(),
        source: e,
    };

    let mut trips = String::from(
        "route_code,trip_id,start_time_hhmmss,distance_km,depot,length_group,direction\n",
    );
    for day in &net.schedule_days {
        for t in &day.trips {
            let id_suffix = match day.season {
                Season::Winter => "",
                Season::Summer => "@summer",
            };
            let _ = writeln!(
                trips,
                "{},{}{},{:02}:{:02}:{:02},{},{},{},{}",
                t.route_code,
                t.trip_id,
                id_suffix,
                t.start_time / 3600,
                (t.start_time / 60) % 60,
                t.start_time % 60,
                t.scheduled_distance_km,
                t.depot.as_deref().unwrap_or(""),
                t.length_group,
                t.direction
            );
        }
    }
    let trips_path = dir.join("trips.csv");
    std::fs::write(&trips_path, trips).map_err(|e| io_err(e, &trips_path))?;

    let mut stops = String::from("route_code,seq,stop_id,lat,lon,elevation_m\n");
    let mut defined: BTreeSet<&str> = BTreeSet::new();
    for (route, seq) in &net.route_stops {
        for (i, stop_id) in seq.iter().enumerate() {
            let stop = &net.stops[stop_id];
            if defined.insert(stop_id) {
                let elev = if stop.has_elevation() {
                    format!("{}", stop.elevation)
                } else {
                    String::new()
                };
                let _ = writeln!(
                    stops,
                    "{},{},{},{},{},{}",
                    route,
                    i + 1,
                    stop_id,
                    stop.latitude,
                    stop.longitude,
                    elev
                );
            } else {
                let _ = writeln!(stops, "{},{},{},,,", route, i + 1, stop_id);
            }
        }
    }
    let stops_path = dir.join("stops.csv");
    std::fs::write(&stops_path, stops).map_err(|e| io_err(e, &stops_path))?;

    let mut fleet = String::from("type,version,count,age_years\n");
    for c in &net.fleet.cohorts {
        let _ = writeln!(fleet, "{},{},{},{}", c.bus_type, c.version, c.count, c.age_years);
    }
    let fleet_path = dir.join("fleet.csv");
    std::fs::write(&fleet_path, fleet).map_err(|e| io_err(e, &fleet_path))?;

    Ok(())
}

/// Source of stop elevations.
pub trait ElevationClient {
    fn elevation(&self, stop: &Stop) -> Result<f64, TransitError>;
}

/// Offline lookup table loaded from a `stop_id \t elevation_m` file.
#[derive(Debug, Clone, Default)]
pub struct OfflineElevations {
    table: BTreeMap<String, f64>,
}

impl OfflineElevations {
    pub fn new(table: BTreeMap<String, f64>) -> Self {
        OfflineElevations { table }
    }

    pub fn from_tsv(path: &Path) -> Result<Self, TransitError> {
        let mut file = std::fs::File::open(path).map_err(|e| TransitError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(|e| TransitError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut table = BTreeMap::new();
        for (i, row) in text.lines().enumerate() {
            let row = row.trim();
            if row.is_empty() {
                continue;
            }
            let mut cols = row.split('\t');
            let (Some(id), Some(elev)) = (cols.next(), cols.next()) else {
                return Err(malformed(path, i as u64 + 1, "expected `stop_id\\televation_m`"));
            };
            let elev: f64 = elev
                .trim()
                .parse()
                .map_err(|_| malformed(path, i as u64 + 1, format!("bad elevation {elev:?}")))?;
            table.insert(id.trim().to_string(), elev);
        }
        Ok(OfflineElevations { table })
    }
}

impl ElevationClient for OfflineElevations {
    fn elevation(&self, stop: &Stop) -> Result<f64, TransitError> {
        self.table
            .get(&stop.id)
            .copied()
            .ok_or_else(|| TransitError::MissingElevation(stop.id.clone()))
    }
}

/// Open-Elevation style HTTP lookup. Opt-in; requests run one at a time with
/// three retries and exponential backoff.
pub struct HttpElevations {
    endpoint: String,
    agent: ureq::Agent,
    retries: u32,
}

impl HttpElevations {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpElevations {
            endpoint: endpoint.into(),
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(20))
                .build(),
            retries: 3,
        }
    }
}

impl ElevationClient for HttpElevations {
    fn elevation(&self, stop: &Stop) -> Result<f64, TransitError> {
        let url = format!(
            "{}?locations={:.6},{:.6}",
            self.endpoint, stop.latitude, stop.longitude
        );
        let mut last_err = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(100 << attempt));
            }
            match self.agent.get(&url).call() {
                Ok(resp) => {
                    let body: serde_json::Value = resp
                        .into_json()
                        .map_err(|e| TransitError::ElevationRequest(e.to_string()))?;
                    let elev = body["results"][0]["elevation"]
                        .as_f64()
                        .ok_or_else(|| {
                            TransitError::ElevationRequest(format!(
                                "no elevation in response for {}",
                                stop.id
                            ))
                        })?;
                    return Ok(elev);
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(TransitError::ElevationRequest(last_err))
    }
}

/// Resolve elevations for every stop that does not already have one.
pub fn fetch_elevations(
    stops: &mut BTreeMap<String, Stop>,
    client: &dyn ElevationClient,
) -> Result<(), TransitError> {
    for stop in stops.values_mut() {
        if !stop.has_elevation() {
            stop.elevation = client.elevation(stop)?;
        }
    }
    Ok(())
}

/// Default cluster boundaries: `{1.00}`, then 0.05-wide bands down to 0.50,
/// then everything below 0.50 in one cluster.
pub fn default_cluster_edges() -> Vec<f64> {
    (10..=19).map(|i| i as f64 * 0.05).collect() // 0.50, 0.55, ... 0.95
}

/// Group routes into clusters of their averaged minimum demand-satisfaction
/// ratio. `metric_by_route` carries, per route, the mean over battery-bus
/// versions of the minimum DSR across lengths and seasons.
pub fn aggregate_routes(
    metric_by_route: &BTreeMap<String, f64>,
    demand_by_route: &BTreeMap<String, BTreeMap<(Season, LengthGroup), u32>>,
    edges: &[f64],
) -> Result<Vec<RouteCluster>, TransitError> {
    // Cluster 1 is exactly {1.0}; band k covers [edge, next_edge) from the
    // top down; the last cluster absorbs everything below the lowest edge.
    let mut sorted_edges = edges.to_vec();
    sorted_edges.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let n_clusters = sorted_edges.len() + 2;
    let mut clusters: Vec<RouteCluster> = Vec::with_capacity(n_clusters);
    clusters.push(RouteCluster {
        cluster_id: 1,
        metric_lo: 1.0,
        metric_hi: 1.0,
        member_routes: vec![],
        aggregate_demand: BTreeMap::new(),
    });
    let mut hi = 1.0;
    for (i, &lo) in sorted_edges.iter().enumerate() {
        clusters.push(RouteCluster {
            cluster_id: i as u32 + 2,
            metric_lo: lo,
            metric_hi: hi,
            member_routes: vec![],
            aggregate_demand: BTreeMap::new(),
        });
        hi = lo;
    }
    clusters.push(RouteCluster {
        cluster_id: n_clusters as u32,
        metric_lo: 0.0,
        metric_hi: hi,
        member_routes: vec![],
        aggregate_demand: BTreeMap::new(),
    });

    for (route, &metric) in metric_by_route {
        if !(metric > 0.0 && metric <= 1.0) {
            return Err(TransitError::MetricOutOfRange {
                route: route.clone(),
                metric,
            });
        }
        let idx = if metric == 1.0 {
            0
        } else {
            match sorted_edges.iter().position(|&lo| metric >= lo) {
                Some(i) => i + 1,
                None => n_clusters - 1,
            }
        };
        clusters[idx].member_routes.push(route.clone());
        if let Some(demand) = demand_by_route.get(route) {
            for (&key, &count) in demand {
                *clusters[idx].aggregate_demand.entry(key).or_insert(0) += count;
            }
        }
    }

    Ok(clusters.into_iter().filter(|c| !c.member_routes.is_empty()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    const STOPS: &str = "\
route_code,seq,stop_id,lat,lon,elevation_m
R1,1,S1,41.015,28.979,35.0
R1,2,S2,41.020,28.990,40.0
R1,3,S3,41.025,29.001,30.0
";

    const TRIPS: &str = "\
route_code,trip_id,start_time_hhmmss,distance_km,depot,length_group,direction
R1,T2,08:30:00,12.5,D1,12m,S1>S3
R1,T1,06:15:00,12.5,D1,12m,S1>S3
";

    const FLEET: &str = "\
type,version,count,age_years
DB,DB-12m,4,7
";

    #[test]
    fn haversine_identical_points_is_zero() {
        assert_eq!(haversine_km((41.0, 29.0), (41.0, 29.0)), 0.0);
    }

    #[test]
    fn haversine_half_circumference() {
        let d = haversine_km((0.0, 0.0), (0.0, 180.0));
        assert!((d - std::f64::consts::PI * EARTH_RADIUS_KM).abs() < 1e-6);
        assert!((d - 20015.0868).abs() < 1e-3);
    }

    #[test]
    fn haversine_matches_law_of_cosines() {
        // Independent great-circle route: spherical law of cosines.
        let (a, b) = ((41.015, 28.979), (40.991, 29.029));
        let (p1, l1) = (f64::to_radians(a.0), f64::to_radians(a.1));
        let (p2, l2) = (f64::to_radians(b.0), f64::to_radians(b.1));
        let expected =
            EARTH_RADIUS_KM * (p1.sin() * p2.sin() + p1.cos() * p2.cos() * (l2 - l1).cos()).acos();
        assert!((haversine_km(a, b) - expected).abs() < 1e-6);
    }

    #[test]
    fn haversine_symmetry_and_triangle_property() {
        let pts = [
            (41.015, 28.979),
            (40.991, 29.029),
            (41.100, 29.200),
            (40.900, 28.800),
        ];
        for &a in &pts {
            for &b in &pts {
                assert!((haversine_km(a, b) - haversine_km(b, a)).abs() < 1e-12);
                for &c in &pts {
                    let direct = haversine_km(a, c);
                    let via = haversine_km(a, b) + haversine_km(b, c);
                    assert!(direct <= via + 1e-9);
                }
            }
        }
    }

    #[test]
    fn parse_fixture_network() {
        let dir = tempfile::tempdir().unwrap();
        let trips = write_file(dir.path(), "trips.csv", TRIPS);
        let stops = write_file(dir.path(), "stops.csv", STOPS);
        let fleet = write_file(dir.path(), "fleet.csv", FLEET);
        let net = parse_network(&trips, &stops, &fleet).unwrap();

        assert_eq!(net.schedule_days.len(), 1);
        let day = &net.schedule_days[0];
        assert_eq!(day.season, Season::Winter);
        assert_eq!(day.days_active, 273);
        assert_eq!(day.trips.len(), 2);
        // Sorted by start time even though the file lists T2 first.
        assert_eq!(day.trips[0].trip_id, "T1");
        assert_eq!(day.trips[1].trip_id, "T2");
        assert_eq!(day.trips[0].stop_sequence, vec!["S1", "S2", "S3"]);
        assert_eq!(net.stops.len(), 3);
        assert_eq!(net.fleet.cohorts.len(), 1);
        assert_eq!(net.fleet.cohorts[0].count, 4);
    }

    #[test]
    fn parse_empty_trips_is_ok() {
        let dir = tempfile::tempdir().unwrap();
        let trips = write_file(
            dir.path(),
            "trips.csv",
            "route_code,trip_id,start_time_hhmmss,distance_km,depot,length_group,direction\n",
        );
        let stops = write_file(dir.path(), "stops.csv", STOPS);
        let fleet = write_file(dir.path(), "fleet.csv", "type,version,count,age_years\n");
        let net = parse_network(&trips, &stops, &fleet).unwrap();
        assert!(net.schedule_days.is_empty());
        assert!(net.fleet.cohorts.is_empty());
    }

    #[test]
    fn parse_unknown_stop_names_trip() {
        let dir = tempfile::tempdir().unwrap();
        // X9 appears in the sequence but is never defined with coordinates.
        let stops = write_file(
            dir.path(),
            "stops.csv",
            "route_code,seq,stop_id,lat,lon\nR9,1,S1,41.0,29.0\nR9,2,X9,,\n",
        );
        let trips = write_file(
            dir.path(),
            "trips.csv",
            "route_code,trip_id,start_time_hhmmss,distance_km,depot,length_group,direction\n\
             R9,T1,06:00:00,10.0,,12m,A>B\n",
        );
        let fleet = write_file(dir.path(), "fleet.csv", "type,version,count,age_years\n");
        let err = parse_network(&trips, &stops, &fleet).unwrap_err();
        assert_eq!(err.to_string(), "trip T1: unknown stop X9");
    }

    #[test]
    fn trip_on_route_without_stop_rows_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let stops = write_file(dir.path(), "stops.csv", STOPS);
        let trips = write_file(
            dir.path(),
            "trips.csv",
            "route_code,trip_id,start_time_hhmmss,distance_km,depot,length_group,direction\n\
             R7,T1,06:00:00,10.0,,12m,A>B\n",
        );
        let fleet = write_file(dir.path(), "fleet.csv", "type,version,count,age_years\n");
        let err = parse_network(&trips, &stops, &fleet).unwrap_err();
        assert!(matches!(err, TransitError::MissingStopSequence { .. }));
    }

    #[test]
    fn parse_write_parse_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let trips = write_file(dir.path(), "trips.csv", TRIPS);
        let stops = write_file(dir.path(), "stops.csv", STOPS);
        let fleet = write_file(dir.path(), "fleet.csv", FLEET);
        let net1 = parse_network(&trips, &stops, &fleet).unwrap();

        let out = tempfile::tempdir().unwrap();
        write_network(&net1, out.path()).unwrap();
        let net2 = parse_network(
            &out.path().join("trips.csv"),
            &out.path().join("stops.csv"),
            &out.path().join("fleet.csv"),
        )
        .unwrap();
        assert_eq!(net1.schedule_days, net2.schedule_days);
        assert_eq!(net1.stops, net2.stops);
        assert_eq!(net1.route_stops, net2.route_stops);
        assert_eq!(net1.fleet, net2.fleet);
    }

    #[test]
    fn parse_malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let trips = write_file(
            dir.path(),
            "trips.csv",
            "route_code,trip_id,start_time_hhmmss,distance_km,depot,length_group,direction\n\
             R1,T1,junk,12.5,D1,12m,S1>S3\n",
        );
        let stops = write_file(dir.path(), "stops.csv", STOPS);
        let fleet = write_file(dir.path(), "fleet.csv", "type,version,count,age_years\n");
        let err = parse_network(&trips, &stops, &fleet).unwrap_err();
        match err {
            TransitError::MalformedRow { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn offline_elevation_lookup() {
        let mut table = BTreeMap::new();
        table.insert("S1".to_string(), 35.0);
        let client = OfflineElevations::new(table);
        let s1 = Stop {
            id: "S1".into(),
            latitude: 41.0,
            longitude: 29.0,
            elevation: f64::NAN,
        };
        assert_eq!(client.elevation(&s1).unwrap(), 35.0);
        let s2 = Stop { id: "S2".into(), ..s1 };
        let err = client.elevation(&s2).unwrap_err();
        assert_eq!(err.to_string(), "no elevation for S2");
    }

    #[test]
    fn http_elevation_parses_mocked_body() {
        use std::net::TcpListener;

        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (mut sock, _) = listener.accept().unwrap();
            let mut buf = [0u8; 2048];
            let _ = std::io::Read::read(&mut sock, &mut buf).unwrap();
            let body = r#"{"results":[{"latitude":41.0,"longitude":29.0,"elevation":57.5}]}"#;
            let resp = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{}",
                body.len(),
                body
            );
            std::io::Write::write_all(&mut sock, resp.as_bytes()).unwrap();
        });

        let client = HttpElevations::new(format!("http://{addr}/api/v1/lookup"));
        let stop = Stop {
            id: "S1".into(),
            latitude: 41.0,
            longitude: 29.0,
            elevation: f64::NAN,
        };
        assert_eq!(client.elevation(&stop).unwrap(), 57.5);
        handle.join().unwrap();
    }

    #[test]
    fn clusters_partition_by_metric() {
        let mut metrics = BTreeMap::new();
        metrics.insert("A".to_string(), 1.0);
        metrics.insert("B".to_string(), 0.97);
        metrics.insert("C".to_string(), 0.93);
        metrics.insert("D".to_string(), 0.40);
        let mut demand = BTreeMap::new();
        for r in ["A", "B", "C", "D"] {
            let mut d = BTreeMap::new();
            d.insert((Season::Winter, LengthGroup::M12), 3u32);
            demand.insert(r.to_string(), d);
        }
        let clusters = aggregate_routes(&metrics, &demand, &default_cluster_edges()).unwrap();

        let find = |route: &str| {
            clusters
                .iter()
                .find(|c| c.member_routes.iter().any(|r| r == route))
                .unwrap()
        };
        assert_eq!(find("A").cluster_id, 1);
        assert_eq!(find("B").cluster_id, 2);
        assert_eq!(find("C").cluster_id, 3);
        assert_eq!(find("D").cluster_id, 12);

        // Partition: every route lands in exactly one cluster.
        let total: usize = clusters.iter().map(|c| c.member_routes.len()).sum();
        assert_eq!(total, 4);
        assert_eq!(
            find("A").aggregate_demand[&(Season::Winter, LengthGroup::M12)],
            3
        );
    }

    #[test]
    fn cluster_metric_out_of_range_is_error() {
        let mut metrics = BTreeMap::new();
        metrics.insert("A".to_string(), 1.2);
        let err = aggregate_routes(&metrics, &BTreeMap::new(), &default_cluster_edges());
        assert!(matches!(err, Err(TransitError::MetricOutOfRange { .. })));
    }
}
