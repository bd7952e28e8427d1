//! Bundled presets: hand-built tiny fixtures for exact checks and
//! synthetic cities at increasing scale.

use std::collections::BTreeMap;

use crate::transit::{days_active, FleetCohort, FleetInventory, Network, ScheduleDay, Stop, Trip};
use crate::types::{BusType, LengthGroup, Season};

use super::config::{BudgetSchedule, EmissionSchedule, ForecastSource, PlannerConfig};
use super::synth::{generate_synthetic_city, SynthParams};

#[derive(Debug, thiserror::Error)]
#[error("unknown preset {0:?}")]
pub struct UnknownPreset(pub String);

/// A ready-to-run configuration with its network.
pub struct PresetBundle {
    pub config: PlannerConfig,
    pub network: Network,
}

pub const PRESET_NAMES: [&str; 6] = [
    "toy",
    "audit-toy",
    "small",
    "medium",
    "base-synthetic",
    "deterministic",
];

/// Build a named preset. Synthetic presets honor `seed_override`.
pub fn preset(name: &str, seed_override: Option<u64>) -> Result<PresetBundle, UnknownPreset> {
    match name {
        "toy" => Ok(toy()),
        "audit-toy" => Ok(audit_toy()),
        "small" => Ok(small(seed_override)),
        "medium" => Ok(medium(seed_override)),
        "base-synthetic" => Ok(base_synthetic(seed_override)),
        "deterministic" => Ok(deterministic(seed_override)),
        other => Err(UnknownPreset(other.to_string())),
    }
}

/// A one-route winter-only network needing two buses at the peak: two
/// short stops, four back-and-forth trips.
fn toy_network(fleet: FleetInventory) -> Network {
    let mk_stop = |id: &str, lat: f64, lon: f64, elev: f64| Stop {
        id: id.to_string(),
        latitude: lat,
        longitude: lon,
        elevation: elev,
    };
    let mut stops = BTreeMap::new();
    stops.insert("A".to_string(), mk_stop("A", 41.000, 29.000, 40.0));
    stops.insert("M".to_string(), mk_stop("M", 41.020, 29.025, 55.0));
    stops.insert("B".to_string(), mk_stop("B", 41.040, 29.050, 35.0));

    let out_seq = vec!["A".to_string(), "M".to_string(), "B".to_string()];
    let back_seq = vec!["B".to_string(), "M".to_string(), "A".to_string()];
    let mut route_stops = BTreeMap::new();
    route_stops.insert("T1>out".to_string(), out_seq.clone());
    route_stops.insert("T1>back".to_string(), back_seq.clone());

    let trip = |id: &str, start_h: f64, direction: &str| Trip {
        route_code: "T1".to_string(),
        trip_id: id.to_string(),
        start_time: (start_h * 3600.0) as u32,
        scheduled_distance_km: 8.0,
        depot: None,
        length_group: LengthGroup::M12,
        stop_sequence: if direction == "out" {
            out_seq.clone()
        } else {
            back_seq.clone()
        },
        direction: direction.to_string(),
    };
    // Two overlapping morning departures force two buses; the afternoon
    // pair reuses them.
    let mut trips = vec![
        trip("T1a", 6.0, "out"),
        trip("T1b", 6.1, "out"),
        trip("T1c", 10.0, "back"),
        trip("T1d", 10.1, "back"),
    ];
    trips.sort_by(|a, b| a.start_time.cmp(&b.start_time).then(a.trip_id.cmp(&b.trip_id)));

    Network {
        schedule_days: vec![ScheduleDay {
            route_code: "T1".to_string(),
            season: Season::Winter,
            days_active: days_active(Season::Winter),
            trips,
        }],
        stops,
        route_stops,
        fleet,
    }
}

/// Tiny two-period, two-scenario instance for exact enumeration: two
/// versions, no initial fleet, slack budgets.
fn toy() -> PresetBundle {
    let mut config = PlannerConfig::base("toy");
    config.periods = 2;
    config.stages = 2;
    config.periods_per_stage = vec![1, 1];
    config.version_ids = vec!["DB-12m".into(), "BEB-ONC-12m-280".into()];
    config.budgets = BudgetSchedule::Explicit {
        usd: vec![2_000_000.0, 2_000_000.0],
    };
    config.emissions = EmissionSchedule::Uncapped;
    config.forecast = ForecastSource::Canonical;
    PresetBundle {
        config,
        network: toy_network(FleetInventory::default()),
    }
}

/// Two-stage fixture for the deterministic-vs-stochastic budget audit: the
/// initial diesels die at period 2, emissions are capped to zero there, and
/// the stage-2 budget fits the mean scenario but not the slow branch.
fn audit_toy() -> PresetBundle {
    let mut config = PlannerConfig::base("audit-toy");
    config.periods = 2;
    config.stages = 2;
    config.periods_per_stage = vec![1, 1];
    config.version_ids = vec!["DB-12m".into(), "BEB-ONC-12m-280".into()];
    config.budgets = BudgetSchedule::Explicit {
        usd: vec![500_000.0, 1_000_000.0],
    };
    config.emissions = EmissionSchedule::Explicit {
        kg: vec![None, Some(0.0)],
    };
    config.forecast = ForecastSource::MeanScenario;
    let fleet = FleetInventory {
        cohorts: vec![FleetCohort {
            bus_type: BusType::Diesel,
            version: "DB-12m".to_string(),
            count: 2,
            age_years: 18,
        }],
    };
    PresetBundle {
        config,
        network: toy_network(fleet),
    }
}

fn small(seed_override: Option<u64>) -> PresetBundle {
    let mut config = PlannerConfig::base("small");
    config.seed = seed_override.unwrap_or(11);
    config.periods = 6;
    config.stages = 3;
    config.periods_per_stage = vec![2, 2, 2];
    config.version_ids = vec![
        "DB-12m".into(),
        "BEB-FC-12m-280".into(),
        "BEB-ONC-12m-280".into(),
        "BEB-ONC-12m-350".into(),
        "HFCB-12m".into(),
    ];
    config.budgets = BudgetSchedule::RampedCap {
        slope_musd: 4.0,
        cap_musd: 12.0,
    };
    config.emissions = EmissionSchedule::Uncapped;
    let network = generate_synthetic_city(&SynthParams {
        seed: config.seed,
        n_routes: 6,
        trips_per_route: 10,
        lengths: vec![LengthGroup::M12],
        distance_range: (5.0, 25.0),
    });
    PresetBundle { config, network }
}

fn medium(seed_override: Option<u64>) -> PresetBundle {
    let mut config = PlannerConfig::base("medium");
    config.seed = seed_override.unwrap_or(13);
    config.periods = 9;
    config.stages = 3;
    config.periods_per_stage = vec![3, 3, 3];
    config.version_ids = vec![
        "DB-12m".into(),
        "BEB-FC-12m-280".into(),
        "BEB-ONC-12m-280".into(),
        "BEB-ONC-12m-350".into(),
        "HFCB-12m".into(),
    ];
    config.budgets = BudgetSchedule::RampedCap {
        slope_musd: 8.0,
        cap_musd: 30.0,
    };
    config.emissions = EmissionSchedule::LinearRamp { start: 4, zero: 9 };
    let network = generate_synthetic_city(&SynthParams {
        seed: config.seed,
        n_routes: 12,
        trips_per_route: 14,
        lengths: vec![LengthGroup::M12],
        distance_range: (5.0, 30.0),
    });
    PresetBundle { config, network }
}

fn base_synthetic(seed_override: Option<u64>) -> PresetBundle {
    let mut config = PlannerConfig::base("base-synthetic");
    config.seed = seed_override.unwrap_or(7);
    config.version_ids = vec![
        "DB-12m".into(),
        "BEB-ONC-12m-280".into(),
        "HFCB-12m".into(),
    ];
    config.budgets = BudgetSchedule::RampedCap {
        slope_musd: 5.0,
        cap_musd: 25.0,
    };
    let network = generate_synthetic_city(&SynthParams {
        seed: config.seed,
        n_routes: 5,
        trips_per_route: 10,
        lengths: vec![LengthGroup::M12],
        distance_range: (5.0, 25.0),
    });
    PresetBundle { config, network }
}

/// The base-synthetic network planned against the single mean-improvement
/// scenario.
fn deterministic(seed_override: Option<u64>) -> PresetBundle {
    let mut bundle = base_synthetic(seed_override);
    bundle.config.preset = "deterministic".to_string();
    bundle.config.forecast = ForecastSource::MeanScenario;
    PresetBundle {
        config: bundle.config,
        network: bundle.network,
    }
}
