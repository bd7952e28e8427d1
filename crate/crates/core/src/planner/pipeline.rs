//! The planning pipeline: ingest → simulate → cluster → forecast → tree →
//! derive → build → solve → round → report.

use rayon::prelude::*;
use std::collections::BTreeMap;
use std::time::Instant;

use crate::energy::{self, VehiclePhysics};
use crate::money::Money;
use crate::program::{
    build_program, emission_kg, CostModel, DerivedTable, FleetProgram, HorizonConfig, NodeId,
    ProgramInputs, RouteSlot, SlotOutcome,
};
use crate::sim::{
    chargers_needed, derive_params, simulate_day, AssignmentResult, DeadheadEnergy, SimParams,
    SimTrip,
};
use crate::solver::{
    round_plan, solve_lp, MicrolpBackend, RoundedPlan, SolveResult, SolveStatus, SolverBackend,
};
use crate::transit::{
    aggregate_routes, default_cluster_edges, fetch_elevations, HttpElevations, Network,
    OfflineElevations, RouteCluster, ScheduleDay, Stop,
};
use crate::tree::{build_technology_tree, compose_scenario_tree, ScenarioTree};
use crate::types::{BusType, BusVersion, LengthGroup, Season, TechKind};

use super::config::{catalog_for, PlannerConfig};
use super::report::{build_report, PlanReport, SensitivityReport};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("ingest: {0}")]
    Ingest(#[from] crate::transit::TransitError),
    #[error("config: {0}")]
    Config(#[from] super::config::ConfigError),
    #[error("energy: {0}")]
    Energy(#[from] crate::energy::EnergyError),
    #[error("simulate: {0}")]
    Sim(#[from] crate::sim::SimError),
    #[error("forecast: {0}")]
    Forecast(#[from] crate::forecast::ForecastError),
    #[error("tree: {0}")]
    Tree(#[from] crate::tree::TreeError),
    #[error("build: {0}")]
    Program(#[from] crate::program::ProgramError),
    #[error("solve: {0}")]
    Solver(#[from] crate::solver::SolverError),
    #[error("solve: LP relaxation is {0:?}")]
    NotOptimal(SolveStatus),
    #[error("ingest: no diesel version for length {0} in the catalog")]
    NoDieselBaseline(LengthGroup),
    #[error("ingest: fleet version {0:?} not in the catalog")]
    UnknownFleetVersion(String),
    #[error("simulate: network has no demand")]
    EmptyDemand,
}

/// Everything a pipeline run produces.
pub struct PipelineArtifacts {
    pub report: PlanReport,
    pub program: FleetProgram,
    pub lp: SolveResult,
    pub plan: RoundedPlan,
    pub clusters: Vec<RouteCluster>,
    /// Per-simulation assignment dumps, when requested.
    pub assignment_dumps: BTreeMap<String, AssignmentResult>,
}

/// A plain diesel version used for demand probing before the catalog is
/// consulted (fleet synthesis).
pub fn diesel_probe_version(length: LengthGroup) -> BusVersion {
    BusVersion {
        id: format!("DB-{length}"),
        bus_type: BusType::Diesel,
        length,
        battery_capacity_kwh: 0.0,
        battery_mass_kg: 0.0,
        recharge_minutes: 0.0,
        economic_life: 15,
        purchase_cost: Money::from_dollars(200_000.0),
        diesel_l_per_km: 0.435,
        hydrogen_kg_per_km: 0.0,
    }
}

/// Simulator trips for one schedule day filtered to a length group, without
/// battery energies (diesel/hydrogen probing).
pub fn sim_trips_for(
    day: &ScheduleDay,
    stops: &BTreeMap<String, Stop>,
    length: LengthGroup,
    _version: &BusVersion,
    _energy: Option<()>,
    params: &SimParams,
) -> Vec<SimTrip> {
    day.trips
        .iter()
        .filter(|t| t.length_group == length)
        .map(|t| {
            let first = &stops[t.stop_sequence.first().unwrap()];
            let last = &stops[t.stop_sequence.last().unwrap()];
            SimTrip {
                trip_id: t.trip_id.clone(),
                start_s: t.start_time as f64,
                duration_s: t.scheduled_distance_km / params.avg_speed_kmh * 3600.0,
                distance_km: t.scheduled_distance_km,
                start_stop: first.id.clone(),
                end_stop: last.id.clone(),
                start_coord: (first.latitude, first.longitude),
                end_coord: (last.latitude, last.longitude),
                depot: t.depot.clone(),
                energy_kwh: 0.0,
            }
        })
        .collect()
}

/// Simulator trips with per-trip battery energies for a battery version.
fn sim_trips_with_energy(
    day: &ScheduleDay,
    stops: &BTreeMap<String, Stop>,
    length: LengthGroup,
    version: &BusVersion,
    phys: &VehiclePhysics,
    circuity: f64,
    params: &SimParams,
) -> Result<Vec<SimTrip>, crate::energy::EnergyError> {
    let mut out = sim_trips_for(day, stops, length, version, None, params);
    if version.bus_type.is_battery() {
        let by_id: BTreeMap<&str, &crate::transit::Trip> = day
            .trips
            .iter()
            .map(|t| (t.trip_id.as_str(), t))
            .collect();
        for st in &mut out {
            let trip = by_id[st.trip_id.as_str()];
            st.energy_kwh =
                energy::trip_energy(trip, stops, version, Some(day.season), phys, circuity)?;
        }
    }
    Ok(out)
}

struct DeadheadFor<'a> {
    version: &'a BusVersion,
    season: Season,
    phys: &'a VehiclePhysics,
}

impl DeadheadEnergy for DeadheadFor<'_> {
    fn kwh(&self, distance_km: f64) -> f64 {
        if !self.version.bus_type.is_battery() {
            return 0.0;
        }
        energy::deadhead_energy(distance_km, self.version, Some(self.season), self.phys)
            .expect("flat deadhead profile is always feasible")
    }
}

/// Key of one cached simulation: route, length, version, quantized battery
/// capacity (tenths of a kWh) and season.
type SimKey = (String, LengthGroup, String, i64, Season);

fn quantize_capacity(kwh: f64) -> i64 {
    (kwh * 10.0).round() as i64
}

struct SimTable {
    /// `None` marks a version that cannot cover the route at that capacity.
    results: BTreeMap<SimKey, Option<AssignmentResult>>,
}

impl SimTable {
    fn get(&self, key: &SimKey) -> Option<&Option<AssignmentResult>> {
        self.results.get(key)
    }
}

fn physics_for(config: &PlannerConfig, length: LengthGroup) -> VehiclePhysics {
    let _ = config;
    energy::default_physics(length)
}

/// Run every needed (route, length, version, capacity, season) simulation
/// in parallel, deterministically keyed.
#[allow(clippy::too_many_arguments)]
fn run_simulations(
    config: &PlannerConfig,
    network: &Network,
    catalog: &[BusVersion],
    tree: Option<&ScenarioTree>,
    params: &SimParams,
) -> Result<SimTable, PipelineError> {
    // Lengths actually served per route and season.
    let mut jobs: Vec<(SimKey, &ScheduleDay, BusVersion)> = Vec::new();
    let mut seen: std::collections::BTreeSet<SimKey> = std::collections::BTreeSet::new();

    for day in &network.schedule_days {
        let mut lengths: Vec<LengthGroup> = day.trips.iter().map(|t| t.length_group).collect();
        lengths.sort();
        lengths.dedup();
        for &length in &lengths {
            for version in catalog.iter().filter(|v| v.length == length) {
                // Distinct capacities this version takes across tree nodes.
                let mut capacities = vec![version.battery_capacity_kwh];
                if version.bus_type.is_battery() {
                    if let Some(tree) = tree {
                        for node in tree.nodes.iter() {
                            let (_, eff) =
                                tree.multipliers(node.id, &TechKind::Battery.to_string());
                            capacities.push(version.battery_capacity_kwh * eff);
                        }
                    }
                }
                let mut caps_q: Vec<i64> = capacities.iter().map(|&c| quantize_capacity(c)).collect();
                caps_q.sort();
                caps_q.dedup();
                for cap_q in caps_q {
                    let key: SimKey = (
                        day.route_code.clone(),
                        length,
                        version.id.clone(),
                        cap_q,
                        day.season,
                    );
                    if seen.insert(key.clone()) {
                        let scaled = if version.bus_type.is_battery() {
                            let mut v = version.clone();
                            v.battery_capacity_kwh = cap_q as f64 / 10.0;
                            v
                        } else {
                            version.clone()
                        };
                        jobs.push((key, day, scaled));
                    }
                }
            }
        }
    }

    let results: Result<Vec<(SimKey, Option<AssignmentResult>)>, PipelineError> = jobs
        .into_par_iter()
        .map(|(key, day, version)| {
            let phys = physics_for(config, key.1);
            let trips = sim_trips_with_energy(
                day,
                &network.stops,
                key.1,
                &version,
                &phys,
                config.circuity,
                params,
            )?;
            if trips.is_empty() {
                return Ok((key, None));
            }
            let deadhead = DeadheadFor {
                version: &version,
                season: day.season,
                phys: &phys,
            };
            match simulate_day(&trips, &version, &deadhead, params) {
                Ok(result) => Ok((key, Some(result))),
                Err(crate::sim::SimError::VersionInfeasible { .. }) => Ok((key, None)),
                Err(e) => Err(PipelineError::Sim(e)),
            }
        })
        .collect();

    Ok(SimTable {
        results: results?.into_iter().collect(),
    })
}

/// The pipeline up to the assembled program; shared by planning runs and
/// audits.
pub struct BuiltModel {
    pub program: FleetProgram,
    pub clusters: Vec<RouteCluster>,
    pub slots: Vec<RouteSlot>,
    pub sim_dumps: BTreeMap<String, AssignmentResult>,
    pub stage_seconds: BTreeMap<String, f64>,
}

pub fn build_model(config: &PlannerConfig, network: &Network) -> Result<BuiltModel, PipelineError> {
    let mut stage_seconds = BTreeMap::new();
    let mut network = network.clone();
    let params = SimParams {
        avg_speed_kmh: config.avg_speed_kmh,
        circuity: config.circuity,
        min_daily_km: config.min_daily_km,
    };

    // --- ingest: resolve elevations -----------------------------------------
    let t0 = Instant::now();
    if network.stops.values().any(|s| !s.has_elevation()) {
        if let Some(endpoint) = &config.elevation_endpoint {
            let client = HttpElevations::new(endpoint.clone());
            fetch_elevations(&mut network.stops, &client)?;
        } else if let Some(path) = &config.elevations_tsv {
            let client = OfflineElevations::from_tsv(path)?;
            fetch_elevations(&mut network.stops, &client)?;
        } else {
            // Default offline table: an empty one, so the first gap names
            // the stop that is missing data.
            let client = OfflineElevations::default();
            fetch_elevations(&mut network.stops, &client)?;
        }
    }
    let catalog = catalog_for(config)?;
    stage_seconds.insert("ingest".into(), t0.elapsed().as_secs_f64());

    // --- forecast and scenario tree ------------------------------------------
    let t0 = Instant::now();
    let techs_present: Vec<TechKind> = {
        let mut t: Vec<TechKind> = catalog.iter().map(|v| v.bus_type.tech()).collect();
        t.sort();
        t.dedup();
        t
    };
    let distributions: Vec<_> = config
        .distributions()?
        .into_iter()
        .filter(|d| {
            let tech = match d.technology.as_str() {
                "DB" => TechKind::Diesel,
                "BEB" => TechKind::Battery,
                _ => TechKind::Hydrogen,
            };
            techs_present.contains(&tech)
        })
        .collect();
    let tech_trees: Result<Vec<_>, _> = distributions
        .iter()
        .map(|d| build_technology_tree(d, config.stages))
        .collect();
    let tree = compose_scenario_tree(&tech_trees?, &config.periods_per_stage)?;
    stage_seconds.insert("tree".into(), t0.elapsed().as_secs_f64());

    // --- simulate -------------------------------------------------------------
    let t0 = Instant::now();
    let sims = run_simulations(config, &network, &catalog, Some(&tree), &params)?;
    stage_seconds.insert("simulate".into(), t0.elapsed().as_secs_f64());

    // --- cluster ---------------------------------------------------------------
    let t0 = Instant::now();
    // Diesel demand per route, season and length.
    let mut demand_by_route: BTreeMap<String, BTreeMap<(Season, LengthGroup), u32>> =
        BTreeMap::new();
    let mut route_lengths: BTreeMap<String, Vec<LengthGroup>> = BTreeMap::new();
    for day in &network.schedule_days {
        let mut lengths: Vec<LengthGroup> = day.trips.iter().map(|t| t.length_group).collect();
        lengths.sort();
        lengths.dedup();
        for &length in &lengths {
            let db = catalog
                .iter()
                .find(|v| v.bus_type == BusType::Diesel && v.length == length)
                .ok_or(PipelineError::NoDieselBaseline(length))?;
            let key: SimKey = (
                day.route_code.clone(),
                length,
                db.id.clone(),
                quantize_capacity(0.0),
                day.season,
            );
            if let Some(Some(result)) = sims.get(&key) {
                if result.buses_used > 0 {
                    *demand_by_route
                        .entry(day.route_code.clone())
                        .or_default()
                        .entry((day.season, length))
                        .or_insert(0) += result.buses_used;
                }
            }
            route_lengths
                .entry(day.route_code.clone())
                .or_default()
                .push(length);
        }
    }
    if demand_by_route.is_empty() {
        return Err(PipelineError::EmptyDemand);
    }

    // Cluster metric: mean over battery version families of the minimum
    // demand-satisfaction ratio at today's capacities.
    let mut metric_by_route: BTreeMap<String, f64> = BTreeMap::new();
    for (route, lengths) in &route_lengths {
        let mut lengths = lengths.clone();
        lengths.sort();
        lengths.dedup();
        // Family = (charging type, base capacity): the same family may be
        // offered at several lengths.
        let mut families: BTreeMap<(BusType, i64), Vec<f64>> = BTreeMap::new();
        for version in catalog.iter().filter(|v| v.bus_type.is_battery()) {
            if !lengths.contains(&version.length) {
                continue;
            }
            for season in Season::ALL {
                let db = catalog
                    .iter()
                    .find(|v| v.bus_type == BusType::Diesel && v.length == version.length)
                    .ok_or(PipelineError::NoDieselBaseline(version.length))?;
                let db_key: SimKey = (
                    route.clone(),
                    version.length,
                    db.id.clone(),
                    quantize_capacity(0.0),
                    season,
                );
                let ver_key: SimKey = (
                    route.clone(),
                    version.length,
                    version.id.clone(),
                    quantize_capacity(version.battery_capacity_kwh),
                    season,
                );
                let Some(Some(db_r)) = sims.get(&db_key) else { continue };
                if db_r.buses_used == 0 {
                    continue;
                }
                let family = families
                    .entry((version.bus_type, quantize_capacity(version.battery_capacity_kwh)))
                    .or_default();
                match sims.get(&ver_key) {
                    Some(Some(ver_r)) if ver_r.buses_used > 0 => {
                        family.push((db_r.buses_used as f64 / ver_r.buses_used as f64).min(1.0));
                    }
                    _ => family.push(0.0), // infeasible: counts as zero
                }
            }
        }
        if families.is_empty() {
            metric_by_route.insert(route.clone(), 1.0);
            continue;
        }
        let mins: Vec<f64> = families
            .values()
            .map(|drs| drs.iter().cloned().fold(f64::INFINITY, f64::min))
            .collect();
        let metric = mins.iter().sum::<f64>() / mins.len() as f64;
        metric_by_route.insert(route.clone(), metric.clamp(1e-9, 1.0));
    }

    let clusters = aggregate_routes(&metric_by_route, &demand_by_route, &default_cluster_edges())?;

    // Demand slots: one per (cluster, length) with demand.
    let mut slots: Vec<RouteSlot> = Vec::new();
    for cluster in &clusters {
        let mut by_length: BTreeMap<LengthGroup, BTreeMap<Season, u32>> = BTreeMap::new();
        for (&(season, length), &count) in &cluster.aggregate_demand {
            *by_length.entry(length).or_default().entry(season).or_insert(0) += count;
        }
        for (length, demand) in by_length {
            slots.push(RouteSlot {
                cluster_id: cluster.cluster_id,
                length,
                demand,
            });
        }
    }
    stage_seconds.insert("cluster".into(), t0.elapsed().as_secs_f64());

    // --- derived parameters per (version, node, slot, season) ----------------
    let t0 = Instant::now();
    let mut derived = DerivedTable::default();
    let member_routes: Vec<Vec<&str>> = slots
        .iter()
        .map(|slot| {
            clusters
                .iter()
                .find(|c| c.cluster_id == slot.cluster_id)
                .map(|c| c.member_routes.iter().map(String::as_str).collect())
                .unwrap_or_default()
        })
        .collect();

    for (v_idx, version) in catalog.iter().enumerate() {
        let nodes: Vec<NodeId> = (0..tree.nodes.len() as u32).collect();
        for n in nodes {
            let capacity = if version.bus_type.is_battery() {
                let (_, eff) = tree.multipliers(n, &TechKind::Battery.to_string());
                version.battery_capacity_kwh * eff
            } else {
                version.battery_capacity_kwh
            };
            let cap_q = quantize_capacity(capacity);
            for (s_idx, slot) in slots.iter().enumerate() {
                if slot.length != version.length {
                    continue;
                }
                for season in Season::ALL {
                    if slot.demand.get(&season).copied().unwrap_or(0) == 0 {
                        continue;
                    }
                    let db = catalog
                        .iter()
                        .find(|v| v.bus_type == BusType::Diesel && v.length == slot.length)
                        .ok_or(PipelineError::NoDieselBaseline(slot.length))?;
                    let mut db_buses = 0u32;
                    let mut ver_buses = 0u32;
                    let mut ver_km = 0.0;
                    let mut ver_kwh = 0.0;
                    let mut chargers = 0u32;
                    let mut infeasible = false;
                    for route in &member_routes[s_idx] {
                        let db_key: SimKey = (
                            route.to_string(),
                            slot.length,
                            db.id.clone(),
                            quantize_capacity(0.0),
                            season,
                        );
                        let Some(Some(db_r)) = sims.get(&db_key) else { continue };
                        if db_r.buses_used == 0 {
                            continue;
                        }
                        db_buses += db_r.buses_used;
                        let key: SimKey = (
                            route.to_string(),
                            slot.length,
                            version.id.clone(),
                            cap_q,
                            season,
                        );
                        match sims.get(&key) {
                            Some(Some(r)) if r.buses_used > 0 => {
                                ver_buses += r.buses_used;
                                ver_km += r.total_km;
                                ver_kwh += r.total_kwh;
                                chargers += chargers_needed(version, r);
                            }
                            _ => {
                                infeasible = true;
                            }
                        }
                    }
                    let outcome = if infeasible || ver_buses == 0 || db_buses == 0 {
                        SlotOutcome::Infeasible
                    } else {
                        let db_agg = AssignmentResult {
                            buses: vec![],
                            buses_used: db_buses,
                            disregarded_buses: 0,
                            total_km: 0.0,
                            total_kwh: 0.0,
                        };
                        let ver_agg = AssignmentResult {
                            buses: vec![],
                            buses_used: ver_buses,
                            disregarded_buses: 0,
                            total_km: ver_km,
                            total_kwh: ver_kwh,
                        };
                        let params = derive_params(&db_agg, &ver_agg, chargers)?;
                        SlotOutcome::Feasible {
                            params,
                            kwh_per_km: if ver_km > 0.0 { ver_kwh / ver_km } else { 0.0 },
                        }
                    };
                    derived.insert_slot(v_idx, n, s_idx, season, outcome);
                }
            }
            // Fleet-wide charger-to-bus ratio for the investment cost.
            let ratio = match version.bus_type {
                BusType::BebOvernight => 1.0,
                BusType::BebFastCharge => {
                    let mut chargers = 0u32;
                    let mut buses = 0u32;
                    for (s_idx, slot) in slots.iter().enumerate() {
                        if slot.length != version.length {
                            continue;
                        }
                        for route in &member_routes[s_idx] {
                            let key: SimKey = (
                                route.to_string(),
                                slot.length,
                                version.id.clone(),
                                cap_q,
                                Season::Winter,
                            );
                            if let Some(Some(r)) = sims.get(&key) {
                                chargers += chargers_needed(version, r);
                                buses += r.buses_used;
                            }
                        }
                    }
                    if buses > 0 {
                        chargers as f64 / buses as f64
                    } else {
                        0.0
                    }
                }
                _ => 0.0,
            };
            derived.charger_ratio.insert((v_idx, n), ratio);
        }
    }
    warn_on_capacity_regressions(&catalog, &slots, &member_routes, &sims);
    stage_seconds.insert("derive".into(), t0.elapsed().as_secs_f64());

    // --- cost model -------------------------------------------------------------
    let t0 = Instant::now();
    let mut db_price_by_length = BTreeMap::new();
    for v in catalog.iter().filter(|v| v.bus_type == BusType::Diesel) {
        db_price_by_length.insert(v.length, v.purchase_cost);
    }
    let mut powertrain_by_length = BTreeMap::new();
    for length in LengthGroup::ALL {
        let bebs: Vec<(Money, f64)> = catalog
            .iter()
            .filter(|v| v.bus_type.is_battery() && v.length == length)
            .map(|v| (v.purchase_cost, v.battery_capacity_kwh))
            .collect();
        if bebs.is_empty() {
            continue;
        }
        let db_price = *db_price_by_length
            .get(&length)
            .ok_or(PipelineError::NoDieselBaseline(length))?;
        let (pc, residuals) =
            crate::tree::calibrate_powertrain_cost(&bebs, db_price, config.costs.battery_per_kwh)?;
        if residuals.iter().any(|r| r.cents() != 0) {
            log::info!(
                "powertrain calibration residuals for {length}: {:?}",
                residuals
            );
        }
        powertrain_by_length.insert(length, pc);
    }
    let cost_model = CostModel {
        db_price_by_length,
        powertrain_by_length,
        costs: config.costs.clone(),
        discount: crate::program::discount_factor(
            config.nominal_discount_rate,
            config.inflation_rate,
        ),
    };

    // Emission baseline: the all-diesel fleet serving every slot.
    let mut baseline_kg = 0.0;
    for (s_idx, slot) in slots.iter().enumerate() {
        let db_idx = catalog
            .iter()
            .position(|v| v.bus_type == BusType::Diesel && v.length == slot.length)
            .ok_or(PipelineError::NoDieselBaseline(slot.length))?;
        for season in Season::ALL {
            let demand = slot.demand.get(&season).copied().unwrap_or(0);
            if demand == 0 {
                continue;
            }
            if let Some(SlotOutcome::Feasible { params, .. }) =
                derived.slot(db_idx, 1, s_idx, season)
            {
                baseline_kg += demand as f64
                    * emission_kg(
                        BusType::Diesel,
                        params.avg_daily_km,
                        config.costs.diesel_l_per_km,
                        season,
                        &config.costs,
                    );
            }
        }
    }

    let horizon = HorizonConfig {
        periods: config.periods,
        stages: config.stages,
        periods_per_stage: config.periods_per_stage.clone(),
        nominal_discount_rate: config.nominal_discount_rate,
        inflation_rate: config.inflation_rate,
        budgets: config.budgets.budgets(config.periods),
        emission_caps: config.emissions.caps(config.periods, baseline_kg),
        max_avg_age: config.max_avg_age,
    };

    // Initial fleet cohorts.
    let mut initial_fleet: Vec<(usize, u32, u32, u32)> = Vec::new();
    for cohort in &network.fleet.cohorts {
        let v_idx = catalog
            .iter()
            .position(|v| v.id == cohort.version)
            .ok_or_else(|| PipelineError::UnknownFleetVersion(cohort.version.clone()))?;
        let total_life = if cohort.age_years <= 11 { 16 } else { 20 };
        initial_fleet.push((v_idx, cohort.count, cohort.age_years, total_life));
    }
    stage_seconds.insert("calibrate".into(), t0.elapsed().as_secs_f64());

    // --- build --------------------------------------------------------------------
    let t0 = Instant::now();
    let demand_scale = if config.demand_scale.is_empty() {
        None
    } else {
        Some(config.demand_scale.as_slice())
    };
    let program = build_program(&ProgramInputs {
        tree: &tree,
        horizon: &horizon,
        versions: &catalog,
        slots: &slots,
        derived: &derived,
        cost_model: &cost_model,
        initial_fleet: &initial_fleet,
        demand_scale,
    })?;
    let (nv, nr, nz) = program.dimensions();
    log::info!("program dimensions: {nv} variables, {nr} rows, {nz} nonzeros");
    stage_seconds.insert("build".into(), t0.elapsed().as_secs_f64());

    // Assignment dumps for debugging, keyed deterministically.
    let mut sim_dumps = BTreeMap::new();
    if config.dump_assignments {
        for (key, result) in &sims.results {
            if let Some(r) = result {
                let (route, length, version, cap_q, season) = key;
                sim_dumps.insert(
                    format!("{route}_{length}_{version}_{cap_q}_{season}"),
                    r.clone(),
                );
            }
        }
    }

    Ok(BuiltModel {
        program,
        clusters,
        slots,
        sim_dumps,
        stage_seconds,
    })
}

/// Warn when a larger battery needs more buses on the same slot: first-fit
/// coverage is not guaranteed monotone in capacity.
fn warn_on_capacity_regressions(
    catalog: &[BusVersion],
    slots: &[RouteSlot],
    member_routes: &[Vec<&str>],
    sims: &SimTable,
) {
    for version in catalog.iter().filter(|v| v.bus_type.is_battery()) {
        for (s_idx, slot) in slots.iter().enumerate() {
            if slot.length != version.length {
                continue;
            }
            for season in Season::ALL {
                let mut by_cap: BTreeMap<i64, u32> = BTreeMap::new();
                for route in &member_routes[s_idx] {
                    for ((r, l, v, cap, q), result) in &sims.results {
                        if r == route && *l == slot.length && v == &version.id && *q == season {
                            if let Some(res) = result {
                                *by_cap.entry(*cap).or_insert(0) += res.buses_used;
                            }
                        }
                    }
                }
                let mut prev: Option<(i64, u32)> = None;
                for (&cap, &buses) in &by_cap {
                    if let Some((pcap, pbuses)) = prev {
                        if buses > pbuses {
                            log::warn!(
                                "{}: slot {} {season}: capacity {:.1} kWh needs {buses} buses vs {pbuses} at {:.1} kWh",
                                version.id,
                                slot.cluster_id,
                                cap as f64 / 10.0,
                                pcap as f64 / 10.0,
                            );
                        }
                    }
                    prev = Some((cap, buses));
                }
            }
        }
    }
}

/// Sensitivity cases: one parameter changed against the base configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivityCase {
    /// Flat 300 million USD yearly budget.
    RelaxedBudget,
    /// Emission ramp pulled forward: intermediate targets from period 6,
    /// zero from period 16.
    StrictEmission,
    /// Hydrogen at 2 USD/kg.
    LowHydrogenPrice,
}

impl SensitivityCase {
    pub fn name(&self) -> &'static str {
        match self {
            SensitivityCase::RelaxedBudget => "relaxed-budget",
            SensitivityCase::StrictEmission => "strict-emission",
            SensitivityCase::LowHydrogenPrice => "low-hydrogen",
        }
    }

    pub fn apply(&self, config: &PlannerConfig) -> PlannerConfig {
        let mut c = config.clone();
        c.preset = format!("{}+{}", config.preset, self.name());
        match self {
            SensitivityCase::RelaxedBudget => {
                c.budgets = super::config::BudgetSchedule::Flat { musd: 300.0 };
            }
            SensitivityCase::StrictEmission => {
                let zero = 16.min(config.periods);
                let start = 6.min(zero.saturating_sub(1)).max(1);
                c.emissions = super::config::EmissionSchedule::LinearRamp { start, zero };
            }
            SensitivityCase::LowHydrogenPrice => {
                c.costs.hydrogen_per_kg = Money::from_dollars(2.0);
            }
        }
        c
    }
}

/// Run the full pipeline on a parsed network.
pub fn run_pipeline(
    config: &PlannerConfig,
    network: &Network,
) -> Result<PipelineArtifacts, PipelineError> {
    run_pipeline_with(config, network, &MicrolpBackend)
}

pub fn run_pipeline_with(
    config: &PlannerConfig,
    network: &Network,
    backend: &dyn SolverBackend,
) -> Result<PipelineArtifacts, PipelineError> {
    let mut model = build_model(config, network)?;

    let t0 = Instant::now();
    let lp = solve_lp(&model.program.ir, backend)?;
    if lp.status != SolveStatus::Optimal {
        return Err(PipelineError::NotOptimal(lp.status));
    }
    model
        .stage_seconds
        .insert("solve".into(), t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let plan = round_plan(&lp, &model.program)?;
    model
        .stage_seconds
        .insert("round".into(), t0.elapsed().as_secs_f64());

    let report = build_report(
        config,
        &model.program,
        &lp,
        &plan,
        model.stage_seconds.clone(),
    );
    Ok(PipelineArtifacts {
        report,
        program: model.program,
        lp,
        plan,
        clusters: model.clusters,
        assignment_dumps: model.sim_dumps,
    })
}

/// Run a sensitivity case against an existing base run.
pub fn run_sensitivity(
    config: &PlannerConfig,
    network: &Network,
    base: &PlanReport,
    case: SensitivityCase,
) -> Result<SensitivityReport, PipelineError> {
    let variant_config = case.apply(config);
    let variant = run_pipeline(&variant_config, network)?;
    let pct_change = 100.0 * (variant.report.z_round - base.z_round) / base.z_round;
    Ok(SensitivityReport {
        case: case.name().to_string(),
        base_z_round: base.z_round,
        variant_z_round: variant.report.z_round,
        pct_change,
        variant: variant.report,
    })
}
