//! Planner configuration and the bundled purchaseable-version catalog.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::forecast::{Branch, ImprovementDistribution};
use crate::money::Money;
use crate::program::CostConfig;
use crate::types::{BusType, BusVersion, LengthGroup, TechKind};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Invalid(String),
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Where technology improvement distributions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum ForecastSource {
    /// The published two-branch (or k-branch) values for battery and
    /// fuel-cell technology.
    Canonical,
    /// Cluster the bundled historical series with the given branch counts.
    Computed { beb_branches: usize, hfcb_branches: usize },
    /// Single mean-improvement branch per technology (deterministic mode).
    MeanScenario,
    /// Explicit per-technology branches.
    Explicit {
        branches: BTreeMap<String, Vec<Branch>>,
    },
}

/// Budget schedule γ_t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BudgetSchedule {
    /// γ_t = min(slope·t, cap), in million USD.
    RampedCap { slope_musd: f64, cap_musd: f64 },
    /// Flat yearly budget in million USD.
    Flat { musd: f64 },
    /// Explicit per-period budgets in USD.
    Explicit { usd: Vec<f64> },
}

impl BudgetSchedule {
    pub fn budgets(&self, periods: u32) -> Vec<Money> {
        match self {
            BudgetSchedule::RampedCap { slope_musd, cap_musd } => (1..=periods)
                .map(|t| Money::from_dollars((slope_musd * t as f64).min(*cap_musd) * 1e6))
                .collect(),
            BudgetSchedule::Flat { musd } => {
                vec![Money::from_dollars(musd * 1e6); periods as usize]
            }
            BudgetSchedule::Explicit { usd } => usd.iter().map(|&d| Money::from_dollars(d)).collect(),
        }
    }
}

/// Emission cap schedule η_t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EmissionSchedule {
    /// No caps anywhere.
    Uncapped,
    /// Uncapped until `start`, then linear from the all-diesel baseline
    /// level down to zero at `zero` and beyond.
    LinearRamp { start: u32, zero: u32 },
    /// Explicit caps in kg (`None` = uncapped).
    Explicit { kg: Vec<Option<f64>> },
}

impl EmissionSchedule {
    /// Materialize per-period caps given the all-diesel baseline emission
    /// level in kg.
    pub fn caps(&self, periods: u32, baseline_kg: f64) -> Vec<Option<f64>> {
        match self {
            EmissionSchedule::Uncapped => vec![None; periods as usize],
            EmissionSchedule::LinearRamp { start, zero } => (1..=periods)
                .map(|t| {
                    if t < *start {
                        None
                    } else if t >= *zero {
                        Some(0.0)
                    } else {
                        let frac = (zero - t) as f64 / (zero - start) as f64;
                        Some(baseline_kg * frac)
                    }
                })
                .collect(),
            EmissionSchedule::Explicit { kg } => kg.clone(),
        }
    }
}

/// One technology's improvement process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechnologyConfig {
    pub tech: TechKind,
    pub branches: usize,
}

/// Full planner configuration. Serialized as versioned JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub schema_version: u32,
    pub preset: String,
    /// Input files; presets that generate their network leave these unset.
    pub trips_csv: Option<PathBuf>,
    pub stops_csv: Option<PathBuf>,
    pub fleet_csv: Option<PathBuf>,
    pub elevations_tsv: Option<PathBuf>,
    /// Opt-in online elevation lookup endpoint.
    pub elevation_endpoint: Option<String>,
    pub seed: u64,
    pub periods: u32,
    pub stages: u32,
    pub periods_per_stage: Vec<u32>,
    pub nominal_discount_rate: f64,
    pub inflation_rate: f64,
    pub max_avg_age: f64,
    pub budgets: BudgetSchedule,
    pub emissions: EmissionSchedule,
    pub forecast: ForecastSource,
    /// Version ids from the catalog to plan with (empty = all).
    pub version_ids: Vec<String>,
    pub costs: CostConfig,
    /// Road-circuity factor for deadheading and segment shapes.
    pub circuity: f64,
    /// Average operating speed, km/h.
    pub avg_speed_kmh: f64,
    /// Buses below this daily distance are not counted.
    pub min_daily_km: f64,
    /// Per-period demand multipliers (empty = all ones).
    pub demand_scale: Vec<f64>,
    /// Write per-simulation assignment dumps.
    pub dump_assignments: bool,
}

impl PlannerConfig {
    pub fn base(preset: &str) -> PlannerConfig {
        PlannerConfig {
            schema_version: 1,
            preset: preset.to_string(),
            trips_csv: None,
            stops_csv: None,
            fleet_csv: None,
            elevations_tsv: None,
            elevation_endpoint: None,
            seed: 7,
            periods: 25,
            stages: 5,
            periods_per_stage: vec![5, 5, 5, 5, 5],
            nominal_discount_rate: 0.05,
            inflation_rate: 0.04,
            max_avg_age: 9.0,
            budgets: BudgetSchedule::RampedCap {
                slope_musd: 50.0,
                cap_musd: 250.0,
            },
            emissions: EmissionSchedule::LinearRamp { start: 11, zero: 25 },
            forecast: ForecastSource::Canonical,
            version_ids: vec![],
            costs: CostConfig::default(),
            circuity: 1.3,
            avg_speed_kmh: 25.0,
            min_daily_km: 10.0,
            demand_scale: vec![],
            dump_assignments: false,
        }
    }

    pub fn from_json(text: &str) -> Result<PlannerConfig, ConfigError> {
        let config: PlannerConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != 1 {
            return Err(ConfigError::Invalid(format!(
                "unsupported schema version {}",
                self.schema_version
            )));
        }
        if self.periods_per_stage.len() != self.stages as usize {
            return Err(ConfigError::Invalid(format!(
                "periods_per_stage has {} entries for {} stages",
                self.periods_per_stage.len(),
                self.stages
            )));
        }
        if self.periods_per_stage.iter().sum::<u32>() != self.periods {
            return Err(ConfigError::Invalid(
                "periods_per_stage must sum to periods".into(),
            ));
        }
        if self.stages < 2 {
            return Err(ConfigError::Invalid("need at least 2 stages".into()));
        }
        if !self.demand_scale.is_empty() && self.demand_scale.len() != self.periods as usize {
            return Err(ConfigError::Invalid(
                "demand_scale must be empty or one entry per period".into(),
            ));
        }
        for path in [&self.trips_csv, &self.stops_csv, &self.fleet_csv] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(ConfigError::Invalid(format!(
                        "referenced file {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Improvement distributions per technology, in scenario-tree order
    /// (diesel, battery, hydrogen).
    pub fn distributions(
        &self,
    ) -> Result<Vec<ImprovementDistribution>, crate::forecast::ForecastError> {
        let mut out = vec![ImprovementDistribution::static_tech("DB")];
        match &self.forecast {
            ForecastSource::Canonical => {
                out.push(canonical_beb());
                out.push(canonical_hfcb());
            }
            ForecastSource::Computed {
                beb_branches,
                hfcb_branches,
            } => {
                let beb = crate::forecast::improvement_rates(&crate::forecast::beb_battery_series(), 5)?;
                out.push(crate::forecast::cluster_improvements(&beb, *beb_branches, "BEB")?);
                let hfcb =
                    crate::forecast::improvement_rates(&crate::forecast::hfcb_fuelcell_series(), 5)?;
                out.push(crate::forecast::cluster_improvements(
                    &hfcb,
                    *hfcb_branches,
                    "HFCB",
                )?);
            }
            ForecastSource::MeanScenario => {
                out.push(mean_scenario_beb());
                out.push(mean_scenario_hfcb());
            }
            ForecastSource::Explicit { branches } => {
                for tech in ["BEB", "HFCB"] {
                    let b = branches.get(tech).cloned().unwrap_or_else(|| {
                        vec![Branch {
                            cost_multiplier: 1.0,
                            eff_multiplier: 1.0,
                            probability: 1.0,
                            count: 0,
                        }]
                    });
                    out.push(ImprovementDistribution::from_branches(tech, b));
                }
            }
        }
        Ok(out)
    }
}

/// Published two-branch battery improvement distribution.
pub fn canonical_beb() -> ImprovementDistribution {
    ImprovementDistribution::from_branches(
        "BEB",
        vec![
            Branch {
                cost_multiplier: 0.35,
                eff_multiplier: 1.31,
                probability: 0.46,
                count: 13,
            },
            Branch {
                cost_multiplier: 0.63,
                eff_multiplier: 1.21,
                probability: 0.54,
                count: 15,
            },
        ],
    )
}

/// Published two-branch fuel-cell improvement distribution.
pub fn canonical_hfcb() -> ImprovementDistribution {
    ImprovementDistribution::from_branches(
        "HFCB",
        vec![
            Branch {
                cost_multiplier: 0.71,
                eff_multiplier: 1.09,
                probability: 0.83,
                count: 5,
            },
            Branch {
                cost_multiplier: 0.91,
                eff_multiplier: 1.04,
                probability: 0.17,
                count: 1,
            },
        ],
    )
}

/// Mean-improvement single branch for deterministic planning.
pub fn mean_scenario_beb() -> ImprovementDistribution {
    ImprovementDistribution::from_branches(
        "BEB",
        vec![Branch {
            cost_multiplier: 0.48,
            eff_multiplier: 1.26,
            probability: 1.0,
            count: 28,
        }],
    )
}

pub fn mean_scenario_hfcb() -> ImprovementDistribution {
    ImprovementDistribution::from_branches(
        "HFCB",
        vec![Branch {
            cost_multiplier: 0.74,
            eff_multiplier: 1.08,
            probability: 1.0,
            count: 6,
        }],
    )
}

/// Fast-charge full-recharge duration in minutes at 350 kW and 90%
/// charging efficiency.
fn fc_recharge_minutes(capacity_kwh: f64) -> f64 {
    capacity_kwh / (350.0 * 0.9) * 60.0
}

/// Overnight full-recharge duration in minutes at 50 kW and 90% charging
/// efficiency (informational; overnight buses do not recharge intra-day).
fn onc_recharge_minutes(capacity_kwh: f64) -> f64 {
    capacity_kwh / (50.0 * 0.9) * 60.0
}

fn version(
    bus_type: BusType,
    length: LengthGroup,
    capacity: f64,
    price: f64,
) -> BusVersion {
    let id = match bus_type {
        BusType::Diesel => format!("DB-{length}"),
        BusType::Hydrogen => format!("HFCB-{length}"),
        BusType::BebFastCharge => format!("BEB-FC-{length}-{capacity:.0}"),
        BusType::BebOvernight => format!("BEB-ONC-{length}-{capacity:.0}"),
    };
    BusVersion {
        id,
        bus_type,
        length,
        battery_capacity_kwh: capacity,
        battery_mass_kg: 5.0 * capacity,
        recharge_minutes: match bus_type {
            BusType::BebFastCharge => fc_recharge_minutes(capacity),
            BusType::BebOvernight => onc_recharge_minutes(capacity),
            _ => 0.0,
        },
        economic_life: if bus_type == BusType::Diesel { 15 } else { 12 },
        purchase_cost: Money::from_dollars(price),
        diesel_l_per_km: if bus_type == BusType::Diesel { 0.435 } else { 0.0 },
        hydrogen_kg_per_km: if bus_type == BusType::Hydrogen { 0.09 } else { 0.0 },
    }
}

/// The bundled purchase catalog: diesel, fast-charge and overnight battery
/// versions per length group, and hydrogen buses.
pub fn default_catalog() -> Vec<BusVersion> {
    use BusType::*;
    use LengthGroup::*;
    let mut v = Vec::new();
    // Diesel baselines.
    v.push(version(Diesel, M8, 0.0, 135_000.0));
    v.push(version(Diesel, M10, 0.0, 170_000.0));
    v.push(version(Diesel, M12, 0.0, 200_000.0));
    v.push(version(Diesel, M18, 0.0, 300_000.0));
    // Fast-charging battery buses.
    for (len, caps_prices) in [
        (M8, vec![(140.0, 305_000.0), (210.0, 340_000.0)]),
        (
            M10,
            vec![(140.0, 340_000.0), (210.0, 375_000.0), (280.0, 410_000.0)],
        ),
        (
            M12,
            vec![
                (140.0, 370_000.0),
                (210.0, 405_000.0),
                (280.0, 440_000.0),
                (350.0, 475_000.0),
            ],
        ),
        (
            M18,
            vec![
                (140.0, 470_000.0),
                (210.0, 505_000.0),
                (280.0, 540_000.0),
                (350.0, 575_000.0),
                (420.0, 610_000.0),
            ],
        ),
    ] {
        for (cap, price) in caps_prices {
            v.push(version(BebFastCharge, len, cap, price));
        }
    }
    // Overnight-charging battery buses.
    for (len, caps_prices) in [
        (M8, vec![(280.0, 375_000.0), (350.0, 410_000.0)]),
        (
            M10,
            vec![(280.0, 410_000.0), (350.0, 445_000.0), (420.0, 480_000.0)],
        ),
        (
            M12,
            vec![
                (280.0, 440_000.0),
                (350.0, 475_000.0),
                (420.0, 510_000.0),
                (490.0, 545_000.0),
            ],
        ),
        (
            M18,
            vec![
                (280.0, 540_000.0),
                (350.0, 575_000.0),
                (420.0, 610_000.0),
                (490.0, 645_000.0),
                (560.0, 680_000.0),
            ],
        ),
    ] {
        for (cap, price) in caps_prices {
            v.push(version(BebOvernight, len, cap, price));
        }
    }
    // Hydrogen fuel-cell buses.
    v.push(version(Hydrogen, M8, 0.0, 500_000.0));
    v.push(version(Hydrogen, M10, 0.0, 600_000.0));
    v.push(version(Hydrogen, M12, 0.0, 700_000.0));
    v.push(version(Hydrogen, M18, 0.0, 1_000_000.0));
    v
}

/// Catalog filtered to the configured version ids (all when empty).
pub fn catalog_for(config: &PlannerConfig) -> Result<Vec<BusVersion>, ConfigError> {
    let all = default_catalog();
    if config.version_ids.is_empty() {
        return Ok(all);
    }
    let mut out = Vec::new();
    for id in &config.version_ids {
        let v = all
            .iter()
            .find(|v| &v.id == id)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown version id {id:?}")))?;
        out.push(v.clone());
    }
    Ok(out)
}
