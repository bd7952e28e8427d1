//! Deterministic synthetic transit network generator, standing in for a
//! real city's timetable and fleet data.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::Path;

use crate::transit::{
    days_active, haversine_km, write_network, FleetCohort, FleetInventory, Network, ScheduleDay,
    Stop, Trip, TransitError,
};
use crate::types::{BusType, LengthGroup, Season};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub seed: u64,
    pub n_routes: u32,
    /// Trips per route and direction on the winter schedule; summer runs
    /// about 20% fewer.
    pub trips_per_route: u32,
    /// Length groups to draw routes from.
    pub lengths: Vec<LengthGroup>,
    /// Target one-way route distance range, km.
    pub distance_range: (f64, f64),
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            seed: 7,
            n_routes: 10,
            trips_per_route: 12,
            lengths: vec![LengthGroup::M12],
            distance_range: (5.0, 40.0),
        }
    }
}

const CENTER: (f64, f64) = (41.01, 28.98);

/// Smooth synthetic terrain: gentle hills, tens of meters over a few km.
fn elevation_at(lat: f64, lon: f64) -> f64 {
    let x = (lat - CENTER.0) * 111.0;
    let y = (lon - CENTER.1) * 84.0;
    55.0 + 35.0 * (0.9 * x).sin() * (0.7 * y).cos() + 15.0 * (1.7 * y + 0.4).sin()
}

/// Generate a deterministic synthetic network: radial two-direction routes
/// with stop sequences, elevations, seasonal timetables and an old-heavy
/// diesel fleet sized to the winter demand of the given version catalog's
/// diesel buses.
///
/// The fleet is sized by a quick diesel simulation so the initial
/// inventory matches what the timetable actually needs.
pub fn generate_synthetic_city(params: &SynthParams) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut stops: BTreeMap<String, Stop> = BTreeMap::new();
    let mut route_stops: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut schedule_days: Vec<ScheduleDay> = Vec::new();

    for r in 0..params.n_routes {
        let route_code = format!("R{r:02}");
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let one_way_km = rng.gen_range(params.distance_range.0..params.distance_range.1);
        let n_stops = (one_way_km / rng.gen_range(0.6..1.1)).round().max(3.0) as usize;
        let length = params.lengths[rng.gen_range(0..params.lengths.len())];
        let depot = match rng.gen_range(0..3) {
            0 => Some("D1".to_string()),
            1 => Some("D2".to_string()),
            _ => None,
        };

        // Straight-line corridor with jitter; the scheduled distance is the
        // circuity-inflated sum of stop spacings so files stay consistent.
        let step_km = one_way_km / 1.3 / (n_stops as f64 - 1.0);
        let (mut lat, mut lon) = (
            CENTER.0 + rng.gen_range(-0.02..0.02),
            CENTER.1 + rng.gen_range(-0.02..0.02),
        );
        let mut ids = Vec::with_capacity(n_stops);
        for s in 0..n_stops {
            let id = format!("{route_code}S{s:02}");
            stops.insert(
                id.clone(),
                Stop {
                    id: id.clone(),
                    latitude: lat,
                    longitude: lon,
                    elevation: (elevation_at(lat, lon) + rng.gen_range(-3.0..3.0)).max(0.0),
                },
            );
            ids.push(id);
            let wobble = rng.gen_range(-0.25..0.25);
            lat += step_km * (angle + wobble).cos() / 111.0;
            lon += step_km * (angle + wobble).sin() / 84.0;
        }
        let out_key = format!("{route_code}>out");
        let back_key = format!("{route_code}>back");
        route_stops.insert(out_key, ids.clone());
        let mut back = ids.clone();
        back.reverse();
        route_stops.insert(back_key, back);

        // Measured one-way distance with circuity.
        let measured: f64 = ids
            .windows(2)
            .map(|w| {
                let a = &stops[&w[0]];
                let b = &stops[&w[1]];
                haversine_km((a.latitude, a.longitude), (b.latitude, b.longitude)) * 1.3
            })
            .sum();

        for season in Season::ALL {
            let n_trips = match season {
                Season::Winter => params.trips_per_route,
                Season::Summer => (params.trips_per_route as f64 * 0.8).round() as u32,
            }
            .max(1);
            let mut trips = Vec::new();
            // Alternating directions through the service day, denser at the
            // morning and evening peaks.
            let first_departure = 5.5 * 3600.0;
            let span = 16.0 * 3600.0;
            for k in 0..(2 * n_trips) {
                let frac = k as f64 / (2 * n_trips) as f64;
                let peak_pull = 0.08 * ((frac * std::f64::consts::TAU * 2.0).sin());
                let start = first_departure + (frac + peak_pull).clamp(0.0, 0.999) * span;
                let direction = if k % 2 == 0 { "out" } else { "back" };
                let seq = &route_stops[&format!("{route_code}>{direction}")];
                trips.push(Trip {
                    route_code: route_code.clone(),
                    trip_id: format!("{route_code}T{k:03}"),
                    start_time: start as u32,
                    scheduled_distance_km: (measured * 1000.0).round() / 1000.0,
                    depot: depot.clone(),
                    length_group: length,
                    stop_sequence: seq.clone(),
                    direction: direction.to_string(),
                });
            }
            trips.sort_by(|a, b| a.start_time.cmp(&b.start_time).then(a.trip_id.cmp(&b.trip_id)));
            schedule_days.push(ScheduleDay {
                route_code: route_code.clone(),
                season,
                days_active: days_active(season),
                trips,
            });
        }
    }

    let mut network = Network {
        schedule_days,
        stops,
        route_stops,
        fleet: FleetInventory::default(),
    };
    network.fleet = synthesize_fleet(&network, params.seed);
    network
}

/// Old-heavy diesel fleet sized to the winter diesel demand: the age mix
/// follows the shape of a fleet overdue for replacement.
fn synthesize_fleet(network: &Network, seed: u64) -> FleetInventory {
    use crate::sim::{simulate_day, NoDeadheadEnergy, SimParams};

    let mut demand_by_length: BTreeMap<LengthGroup, u32> = BTreeMap::new();
    let params = SimParams::default();
    for day in &network.schedule_days {
        if day.season != Season::Winter {
            continue;
        }
        let mut lengths: Vec<LengthGroup> =
            day.trips.iter().map(|t| t.length_group).collect();
        lengths.sort();
        lengths.dedup();
        for length in lengths {
            let db = crate::planner::pipeline::diesel_probe_version(length);
            let trips = crate::planner::pipeline::sim_trips_for(
                day,
                &network.stops,
                length,
                &db,
                None,
                &params,
            );
            if trips.is_empty() {
                continue;
            }
            if let Ok(result) = simulate_day(&trips, &db, &NoDeadheadEnergy, &params) {
                *demand_by_length.entry(length).or_insert(0) += result.buses_used;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(101));
    let mut cohorts = Vec::new();
    // Age shares of an aging fleet: mostly 7- and 11-year-old buses with a
    // long tail of much older ones.
    let shares: [(u32, f64); 5] = [(7, 0.32), (11, 0.43), (14, 0.05), (16, 0.10), (18, 0.10)];
    for (length, total) in demand_by_length {
        let mut assigned = 0u32;
        for (i, &(age, share)) in shares.iter().enumerate() {
            let count = if i + 1 == shares.len() {
                total.saturating_sub(assigned)
            } else {
                ((total as f64 * share).round() as u32).min(total - assigned)
            };
            assigned += count;
            if count > 0 {
                cohorts.push(FleetCohort {
                    bus_type: BusType::Diesel,
                    version: format!("DB-{length}"),
                    count,
                    age_years: age,
                });
            }
        }
        // A couple of spares so the fleet is not knife-edge sized.
        let spares = rng.gen_range(0..2);
        if spares > 0 {
            cohorts.push(FleetCohort {
                bus_type: BusType::Diesel,
                version: format!("DB-{length}"),
                count: spares,
                age_years: 7,
            });
        }
    }
    FleetInventory { cohorts }
}

/// Generate and write the network files (trips.csv, stops.csv, fleet.csv,
/// elevations.tsv) to a directory.
pub fn write_synthetic_city(params: &SynthParams, dir: &Path) -> Result<Network, TransitError> {
    let network = generate_synthetic_city(params);
    write_network(&network, dir)?;
    let mut tsv = String::new();
    for stop in network.stops.values() {
        use std::fmt::Write as _;
        let _ = writeln!(tsv, "{}\t{}", stop.id, stop.elevation);
    }
    let path = dir.join("elevations.tsv");
    std::fs::write(&path, tsv).map_err(|e| TransitError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(network)
}
