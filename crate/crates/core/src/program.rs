//! Assembly of the multi-stage fleet replacement program over a scenario
//! tree into a linear-program IR with integer markings.
//!
//! Decision variables per node: purchases, per-cohort stocks, route
//! assignments and salvages. Constraint families: route demand coverage,
//! assignment-to-stock linking, stock balance across periods (linking each
//! node to its ancestor), forced end-of-life salvage, budget, emission
//! caps, and the end-of-horizon average-age cap. The initial fleet enters
//! as fixed purchases at period 0 on the pre-root node.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::money::Money;
use crate::sim::DerivedParams;
use crate::transit::{SUMMER_DAYS, WINTER_DAYS};
use crate::tree::{bev_investment_cost, hfcb_investment_cost, BebCostInputs, ScenarioTree};
use crate::types::{BusType, BusVersion, LengthGroup, Season};

pub type Period = u32;
pub type NodeId = u32;
pub type CohortId = usize;

#[derive(Debug, thiserror::Error)]
pub enum ProgramError {
    #[error("no derived parameters for version {version} at node {node}, cluster slot {slot}, {season}")]
    MissingDerived {
        version: String,
        node: NodeId,
        slot: usize,
        season: Season,
    },
    #[error("budget vector has {got} entries, horizon needs {need}")]
    BadBudgetLength { got: usize, need: usize },
    #[error("emission cap vector has {got} entries, horizon needs {need}")]
    BadEmissionLength { got: usize, need: usize },
    #[error("version {0} not found in catalog")]
    UnknownVersion(String),
    #[error(transparent)]
    Tree(#[from] crate::tree::TreeError),
}

/// Real discount factor β from the nominal rate and inflation:
/// `β = 1 / (1 + ((1+β_nominal)/(1+ζ) − 1))`.
pub fn discount_factor(beta_nominal: f64, zeta: f64) -> f64 {
    let beta_real = (1.0 + beta_nominal) / (1.0 + zeta) - 1.0;
    1.0 / (1.0 + beta_real)
}

/// Planning horizon and the global restriction schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonConfig {
    pub periods: u32,
    pub stages: u32,
    pub periods_per_stage: Vec<u32>,
    pub nominal_discount_rate: f64,
    pub inflation_rate: f64,
    /// Investment budget γ_t for t = 1..=T.
    pub budgets: Vec<Money>,
    /// Emission cap η_t in kg CO₂ for t = 1..=T; `None` leaves the period
    /// uncapped.
    pub emission_caps: Vec<Option<f64>>,
    /// Maximum average fleet age at the end of the horizon, years.
    pub max_avg_age: f64,
}

impl HorizonConfig {
    pub fn discount(&self) -> f64 {
        discount_factor(self.nominal_discount_rate, self.inflation_rate)
    }
}

/// Unit prices for operating and investment costing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub diesel_per_l: Money,
    pub electricity_per_kwh: Money,
    pub hydrogen_per_kg: Money,
    pub diesel_l_per_km: f64,
    /// Maintenance cost per km by bus type.
    pub maintenance_db_per_km: Money,
    pub maintenance_beb_per_km: Money,
    pub maintenance_hfcb_per_km: Money,
    pub driver_per_day: Money,
    /// Battery pack cost per kWh at the start of the horizon.
    pub battery_per_kwh: Money,
    pub charger_onc: Money,
    pub charger_fc: Money,
    /// Tailpipe CO₂ per liter of diesel, kg.
    pub co2_kg_per_l: f64,
    /// Yearly salvage retention (1 − depreciation rate).
    pub salvage_retention: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            diesel_per_l: Money::from_dollars(1.29),
            electricity_per_kwh: Money::from_dollars(0.16),
            hydrogen_per_kg: Money::from_dollars(10.0),
            diesel_l_per_km: 0.435,
            maintenance_db_per_km: Money::from_dollars(0.58),
            maintenance_beb_per_km: Money::from_dollars(0.34),
            maintenance_hfcb_per_km: Money::from_dollars(0.29),
            driver_per_day: Money::from_dollars(40.0),
            battery_per_kwh: Money::from_dollars(500.0),
            charger_onc: Money::from_dollars(20_000.0),
            charger_fc: Money::from_dollars(45_000.0),
            co2_kg_per_l: 2.64,
            salvage_retention: 0.85,
        }
    }
}

pub fn days_in_season(season: Season) -> u32 {
    match season {
        Season::Winter => WINTER_DAYS,
        Season::Summer => SUMMER_DAYS,
    }
}

/// Yearly operating cost of one assigned bus in a subperiod: energy and
/// maintenance per km over the season's days, plus the driver.
pub fn o_and_m_cost(
    bus_type: BusType,
    avg_daily_km: f64,
    kwh_per_km: f64,
    hydrogen_kg_per_km: f64,
    diesel_l_per_km: f64,
    season: Season,
    costs: &CostConfig,
) -> Money {
    let energy_per_km = match bus_type {
        BusType::Diesel => costs.diesel_per_l.dollars() * diesel_l_per_km,
        BusType::BebFastCharge | BusType::BebOvernight => {
            costs.electricity_per_kwh.dollars() * kwh_per_km
        }
        BusType::Hydrogen => costs.hydrogen_per_kg.dollars() * hydrogen_kg_per_km,
    };
    let maintenance_per_km = match bus_type {
        BusType::Diesel => costs.maintenance_db_per_km,
        BusType::BebFastCharge | BusType::BebOvernight => costs.maintenance_beb_per_km,
        BusType::Hydrogen => costs.maintenance_hfcb_per_km,
    }
    .dollars();
    let days = days_in_season(season) as f64;
    Money::from_dollars(
        (energy_per_km + maintenance_per_km) * avg_daily_km * days
            + costs.driver_per_day.dollars() * days,
    )
}

/// Tailpipe CO₂ of one assigned bus over a subperiod, kg.
pub fn emission_kg(
    bus_type: BusType,
    avg_daily_km: f64,
    diesel_l_per_km: f64,
    season: Season,
    costs: &CostConfig,
) -> f64 {
    match bus_type {
        BusType::Diesel => {
            costs.co2_kg_per_l * diesel_l_per_km * avg_daily_km * days_in_season(season) as f64
        }
        _ => 0.0,
    }
}

// ---------------------------------------------------------------------------
// Cohorts and availability windows
// ---------------------------------------------------------------------------

/// A purchase cohort: one version bought in one period. Initial fleet
/// cohorts carry their age and a fixed count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub version: usize,
    pub purchased: Period,
    /// Remaining service periods: stock exists in `[purchased, purchased+life)`.
    pub life: u32,
    /// Earliest salvage, as an offset from the purchase period.
    pub salvage_offset: u32,
    /// Age at purchase (0 for new buses).
    pub initial_age: u32,
    /// Fixed size for period-0 cohorts.
    pub initial_count: Option<u32>,
}

impl Cohort {
    pub fn new_purchase(version: usize, purchased: Period, economic_life: u32) -> Cohort {
        Cohort {
            version,
            purchased,
            life: economic_life,
            salvage_offset: economic_life.div_ceil(2),
            initial_age: 0,
            initial_count: None,
        }
    }

    /// Initial cohort: remaining life and earliest salvage derive from the
    /// total economic life and the current age, so a bus past half its
    /// total life is salvageable from the first period.
    pub fn initial(version: usize, count: u32, age: u32, total_life: u32) -> Cohort {
        let life = total_life.saturating_sub(age).max(1);
        let half = total_life.div_ceil(2);
        let salvage_offset = half.saturating_sub(age).max(1);
        Cohort {
            version,
            purchased: 0,
            life,
            salvage_offset,
            initial_age: age,
            initial_count: Some(count),
        }
    }

    /// Stock exists for `t'` with `purchased ≤ t' < purchased + life`
    /// (the inclusive-start availability window).
    pub fn available_at(&self, t: Period) -> bool {
        t >= self.purchased && t < self.purchased + self.life
    }

    /// Balance rows live strictly inside the availability window
    /// (the open window: `purchased < t' < purchased + life`).
    pub fn balances_at(&self, t: Period) -> bool {
        t > self.purchased && t < self.purchased + self.life
    }

    /// Salvage variables exist for
    /// `purchased + salvage_offset ≤ t' ≤ purchased + life`.
    pub fn salvageable_at(&self, t: Period) -> bool {
        t >= self.purchased + self.salvage_offset && t <= self.purchased + self.life
    }

    pub fn end_of_life(&self) -> Period {
        self.purchased + self.life
    }

    /// Age counted by the end-of-horizon cap: `T − t + 1` plus the age the
    /// cohort already had at purchase.
    pub fn age_at(&self, t: Period) -> f64 {
        (t - self.purchased + 1 + self.initial_age) as f64
    }
}

// ---------------------------------------------------------------------------
// Derived-parameter and cost lookups
// ---------------------------------------------------------------------------

/// A demand slot: one route cluster restricted to one vehicle length. Only
/// versions of the same length may serve it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSlot {
    pub cluster_id: u32,
    pub length: LengthGroup,
    /// Diesel-equivalent bus demand per season.
    pub demand: BTreeMap<Season, u32>,
}

/// Simulation outcome for one (version, node, slot, season) combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SlotOutcome {
    Feasible {
        params: DerivedParams,
        /// Battery draw per km (0 for non-battery buses).
        kwh_per_km: f64,
    },
    /// The version cannot cover the slot's trips at this capacity.
    Infeasible,
}

/// Derived parameters per (version, purchase node, slot, season), plus the
/// fleet-wide charger-to-bus ratio per (version, node).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DerivedTable {
    pub slots: BTreeMap<(usize, NodeId, usize, Season), SlotOutcome>,
    pub charger_ratio: BTreeMap<(usize, NodeId), f64>,
}

impl DerivedTable {
    pub fn insert_slot(
        &mut self,
        version: usize,
        node: NodeId,
        slot: usize,
        season: Season,
        outcome: SlotOutcome,
    ) {
        self.slots.insert((version, node, slot, season), outcome);
    }

    pub fn slot(
        &self,
        version: usize,
        node: NodeId,
        slot: usize,
        season: Season,
    ) -> Option<&SlotOutcome> {
        self.slots.get(&(version, node, slot, season))
    }
}

/// Evaluates node-dependent investment costs, salvage values and
/// consumption for every version in the catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub db_price_by_length: BTreeMap<LengthGroup, Money>,
    /// Calibrated powertrain-minus-battery cost per length.
    pub powertrain_by_length: BTreeMap<LengthGroup, Money>,
    pub costs: CostConfig,
    pub discount: f64,
}

impl CostModel {
    /// Battery capacity of a version as purchased at `node`.
    pub fn capacity_at(&self, version: &BusVersion, tree: &ScenarioTree, node: NodeId) -> f64 {
        if version.bus_type.is_battery() {
            let (_, eff) = tree.multipliers(node, &version.bus_type.tech().to_string());
            version.battery_capacity_kwh * eff
        } else {
            version.battery_capacity_kwh
        }
    }

    fn charger_cost(&self, version: &BusVersion, ratio: f64) -> Money {
        match version.bus_type {
            BusType::BebOvernight => self.costs.charger_onc.scale(ratio),
            BusType::BebFastCharge => self.costs.charger_fc.scale(ratio),
            _ => Money::ZERO,
        }
    }

    /// Investment cost of a version purchased at `node`, optionally with an
    /// explicit battery capacity (used when auditing a plan whose
    /// capacities came from a different tree).
    pub fn investment_cost(
        &self,
        version: &BusVersion,
        tree: &ScenarioTree,
        node: NodeId,
        charger_ratio: f64,
        capacity_override: Option<f64>,
    ) -> Money {
        let tech = version.bus_type.tech().to_string();
        let (cost_mult, _) = tree.multipliers(node, &tech);
        match version.bus_type {
            BusType::Diesel => version.purchase_cost,
            BusType::Hydrogen => hfcb_investment_cost(
                self.db_price_by_length[&version.length],
                version.purchase_cost,
                cost_mult,
            ),
            BusType::BebFastCharge | BusType::BebOvernight => {
                let capacity =
                    capacity_override.unwrap_or_else(|| self.capacity_at(version, tree, node));
                let inputs = BebCostInputs {
                    db_price: self.db_price_by_length[&version.length],
                    charger_cost: self.charger_cost(version, ratio_or(charger_ratio)),
                    powertrain_cost: self.powertrain_by_length[&version.length],
                    battery_cost_per_kwh: self.costs.battery_per_kwh,
                    economic_life: version.economic_life,
                    discount_factor: self.discount,
                };
                bev_investment_cost(&inputs, capacity, cost_mult)
            }
        }
    }

    /// Investment cost without the charger share: the base that salvage
    /// values depreciate from.
    pub fn bus_only_investment(
        &self,
        version: &BusVersion,
        tree: &ScenarioTree,
        node: NodeId,
        charger_ratio: f64,
    ) -> Money {
        self.investment_cost(version, tree, node, charger_ratio, None)
            - self.charger_cost(version, ratio_or(charger_ratio))
    }

    /// Hydrogen consumption rate of a version purchased at `node`.
    pub fn hydrogen_kg_per_km(
        &self,
        version: &BusVersion,
        tree: &ScenarioTree,
        node: NodeId,
    ) -> f64 {
        if version.bus_type == BusType::Hydrogen {
            let (_, eff) = tree.multipliers(node, &BusType::Hydrogen.tech().to_string());
            crate::tree::hfcb_consumption(version.hydrogen_kg_per_km, eff)
        } else {
            0.0
        }
    }
}

fn ratio_or(r: f64) -> f64 {
    if r.is_finite() {
        r
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Linear program IR
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VariableIndex {
    Purchase {
        cohort: CohortId,
        node: NodeId,
    },
    Stock {
        cohort: CohortId,
        period: Period,
        node: NodeId,
    },
    Assign {
        cohort: CohortId,
        period: Period,
        slot: usize,
        season: Season,
        node: NodeId,
    },
    Salvage {
        cohort: CohortId,
        period: Period,
        node: NodeId,
    },
}

impl VariableIndex {
    pub fn node(&self) -> NodeId {
        match *self {
            VariableIndex::Purchase { node, .. }
            | VariableIndex::Stock { node, .. }
            | VariableIndex::Assign { node, .. }
            | VariableIndex::Salvage { node, .. } => node,
        }
    }

    pub fn lp_name(&self) -> String {
        match *self {
            VariableIndex::Purchase { cohort, node } => format!("vP_c{cohort}_n{node}"),
            VariableIndex::Stock {
                cohort,
                period,
                node,
            } => format!("vS_c{cohort}_t{period}_n{node}"),
            VariableIndex::Assign {
                cohort,
                period,
                slot,
                season,
                node,
            } => format!("vA_c{cohort}_t{period}_r{slot}_{season}_n{node}"),
            VariableIndex::Salvage {
                cohort,
                period,
                node,
            } => format!("vM_c{cohort}_t{period}_n{node}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowTag {
    Demand {
        period: Period,
        slot: usize,
        season: Season,
        node: NodeId,
    },
    Linking {
        cohort: CohortId,
        period: Period,
        season: Season,
        node: NodeId,
    },
    PurchaseLink {
        cohort: CohortId,
        node: NodeId,
    },
    Balance {
        cohort: CohortId,
        period: Period,
        node: NodeId,
    },
    ForcedSalvage {
        cohort: CohortId,
        period: Period,
        node: NodeId,
    },
    Budget {
        period: Period,
        node: NodeId,
    },
    Emission {
        period: Period,
        node: NodeId,
    },
    AgeCap {
        node: NodeId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarDef {
    pub index: VariableIndex,
    pub lower: f64,
    pub upper: f64,
    pub objective: f64,
    pub integer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub tag: RowTag,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Sparse minimization LP with integer markings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearProgramIR {
    pub vars: Vec<VarDef>,
    pub rows: Vec<Row>,
}

impl LinearProgramIR {
    pub fn nonzeros(&self) -> usize {
        self.rows.iter().map(|r| r.terms.len()).sum()
    }

    /// Objective value of a point, in the builder's fixed term order.
    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.vars
            .iter()
            .enumerate()
            .map(|(i, v)| v.objective * values[i])
            .sum()
    }

    /// Signed violation of a row at a point (positive = violated).
    pub fn row_violation(&self, row: &Row, values: &[f64]) -> f64 {
        let lhs: f64 = row.terms.iter().map(|&(i, c)| c * values[i]).sum();
        match row.sense {
            Sense::Le => lhs - row.rhs,
            Sense::Ge => row.rhs - lhs,
            Sense::Eq => (lhs - row.rhs).abs(),
        }
    }

    /// Largest relative violation across all rows.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| self.row_violation(r, values) / r.rhs.abs().max(1.0))
            .fold(0.0, f64::max)
    }

    /// Serialize in the standard LP text format.
    pub fn write_lp(&self) -> String {
        use std::fmt::Write as _;
        let name = |i: usize| self.vars[i].index.lp_name();
        let mut out = String::from("Minimize\n obj:");
        for (i, v) in self.vars.iter().enumerate() {
            if v.objective != 0.0 {
                let _ = write!(out, " {} {}", term(v.objective), name(i));
            }
        }
        out.push_str("\nSubject To\n");
        for (k, row) in self.rows.iter().enumerate() {
            let _ = write!(out, " c{k}:");
            for &(i, c) in &row.terms {
                let _ = write!(out, " {} {}", term(c), name(i));
            }
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(out, " {op} {}", row.rhs);
        }
        out.push_str("Bounds\n");
        for (i, v) in self.vars.iter().enumerate() {
            if v.upper.is_finite() {
                let _ = writeln!(out, " {} <= {} <= {}", v.lower, name(i), v.upper);
            } else if v.lower != 0.0 {
                let _ = writeln!(out, " {} <= {}", v.lower, name(i));
            }
        }
        out.push_str("Generals\n");
        for (i, v) in self.vars.iter().enumerate() {
            if v.integer {
                let _ = write!(out, " {}", name(i));
            }
        }
        out.push_str("\nEnd\n");
        out
    }
}

fn term(c: f64) -> String {
    if c >= 0.0 {
        format!("+ {c}")
    } else {
        format!("- {}", -c)
    }
}

// ---------------------------------------------------------------------------
// Program assembly
// ---------------------------------------------------------------------------

/// Everything the builder needs.
pub struct ProgramInputs<'a> {
    pub tree: &'a ScenarioTree,
    pub horizon: &'a HorizonConfig,
    pub versions: &'a [BusVersion],
    pub slots: &'a [RouteSlot],
    pub derived: &'a DerivedTable,
    pub cost_model: &'a CostModel,
    /// Initial cohorts: (version index, count, age, total economic life).
    pub initial_fleet: &'a [(usize, u32, u32, u32)],
    /// Per-period demand multiplier, length T (defaults to all ones).
    pub demand_scale: Option<&'a [f64]>,
}

/// The assembled program plus the bookkeeping to map variables back to
/// cohorts, periods, slots and nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FleetProgram {
    pub ir: LinearProgramIR,
    pub cohorts: Vec<Cohort>,
    pub tree: ScenarioTree,
    pub versions: Vec<BusVersion>,
    pub slots: Vec<RouteSlot>,
    pub var_of: BTreeMap<VariableIndex, usize>,
    pub horizon: HorizonConfig,
    /// Raw (undiscounted) investment cost per (cohort, purchase node).
    pub purchase_cost: BTreeMap<(CohortId, NodeId), Money>,
    /// Raw O&M cost per assignment variable.
    pub om_cost: BTreeMap<usize, Money>,
    /// Raw salvage value per salvage variable.
    pub salvage_value: BTreeMap<usize, Money>,
    /// Battery capacity per (cohort, purchase node), kWh.
    pub capacity: BTreeMap<(CohortId, NodeId), f64>,
    /// Cost model the program was priced with (re-used by audits).
    pub cost_model: CostModel,
    /// Charger-to-bus ratio per (version index, node).
    pub charger_ratio: BTreeMap<(usize, NodeId), f64>,
}

impl FleetProgram {
    pub fn var(&self, index: VariableIndex) -> Option<usize> {
        self.var_of.get(&index).copied()
    }

    pub fn dimensions(&self) -> (usize, usize, usize) {
        (self.ir.vars.len(), self.ir.rows.len(), self.ir.nonzeros())
    }

    /// Structural nonanticipativity audit: every variable belongs to
    /// exactly one node, and every row references only variables of its own
    /// node or (for balance rows) the period-before ancestor.
    pub fn audit_nonanticipativity(&self) -> bool {
        for row in &self.ir.rows {
            let (own, prior): (NodeId, Option<NodeId>) = match row.tag {
                RowTag::Demand { node, .. }
                | RowTag::Linking { node, .. }
                | RowTag::PurchaseLink { node, .. }
                | RowTag::Budget { node, .. }
                | RowTag::Emission { node, .. }
                | RowTag::AgeCap { node } => (node, None),
                RowTag::Balance { period, node, .. }
                | RowTag::ForcedSalvage { period, node, .. } => {
                    (node, Some(self.tree.ancestor_at(node, period - 1)))
                }
            };
            for &(i, _) in &row.terms {
                let var_node = self.ir.vars[i].index.node();
                if var_node != own && Some(var_node) != prior {
                    return false;
                }
            }
        }
        true
    }
}

pub fn build_program(inputs: &ProgramInputs) -> Result<FleetProgram, ProgramError> {
    let tree = inputs.tree;
    let horizon = inputs.horizon;
    let t_max = horizon.periods;
    if horizon.budgets.len() != t_max as usize {
        return Err(ProgramError::BadBudgetLength {
            got: horizon.budgets.len(),
            need: t_max as usize,
        });
    }
    if horizon.emission_caps.len() != t_max as usize {
        return Err(ProgramError::BadEmissionLength {
            got: horizon.emission_caps.len(),
            need: t_max as usize,
        });
    }
    let beta = horizon.discount();
    let ones = vec![1.0; t_max as usize];
    let demand_scale = inputs.demand_scale.unwrap_or(&ones);

    // Cohorts: the initial fleet at period 0, then one per (version, t≥1).
    let mut cohorts: Vec<Cohort> = Vec::new();
    for &(version, count, age, total_life) in inputs.initial_fleet {
        cohorts.push(Cohort::initial(version, count, age, total_life));
    }
    for t in 1..=t_max {
        for (v, version) in inputs.versions.iter().enumerate() {
            cohorts.push(Cohort::new_purchase(v, t, version.economic_life));
        }
    }

    let mut ir = LinearProgramIR::default();
    let mut var_of: BTreeMap<VariableIndex, usize> = BTreeMap::new();
    let mut purchase_cost: BTreeMap<(CohortId, NodeId), Money> = BTreeMap::new();
    let mut om_cost: BTreeMap<usize, Money> = BTreeMap::new();
    let mut salvage_store: BTreeMap<usize, Money> = BTreeMap::new();
    let mut capacity: BTreeMap<(CohortId, NodeId), f64> = BTreeMap::new();

    fn push_var(
        ir: &mut LinearProgramIR,
        var_of: &mut BTreeMap<VariableIndex, usize>,
        index: VariableIndex,
        lower: f64,
        upper: f64,
        objective: f64,
    ) -> usize {
        let id = ir.vars.len();
        ir.vars.push(VarDef {
            index,
            lower,
            upper,
            objective,
            integer: true,
        });
        var_of.insert(index, id);
        id
    }

    // --- Variables ----------------------------------------------------------

    // Period-0 initial fleet on the pre-root: fixed purchases and stocks.
    for (c, cohort) in cohorts.iter().enumerate() {
        if let Some(count) = cohort.initial_count {
            let n = count as f64;
            push_var(
                &mut ir,
                &mut var_of,
                VariableIndex::Purchase { cohort: c, node: 0 },
                n,
                n,
                0.0,
            );
            push_var(
                &mut ir,
                &mut var_of,
                VariableIndex::Stock {
                    cohort: c,
                    period: 0,
                    node: 0,
                },
                0.0,
                f64::INFINITY,
                0.0,
            );
            let version = &inputs.versions[cohort.version];
            purchase_cost.insert((c, 0), version.purchase_cost);
            capacity.insert((c, 0), version.battery_capacity_kwh);
        }
    }

    for node in tree.decision_nodes() {
        let n = node.id;
        let pi = node.prob;
        for t in tree.periods_of_node(n) {
            for (c, cohort) in cohorts.iter().enumerate() {
                let version = &inputs.versions[cohort.version];
                // Purchases made in this node's periods.
                if cohort.purchased == t && cohort.initial_count.is_none() {
                    let ratio = *inputs
                        .derived
                        .charger_ratio
                        .get(&(cohort.version, n))
                        .unwrap_or(&0.0);
                    let ic = inputs
                        .cost_model
                        .investment_cost(version, tree, n, ratio, None);
                    purchase_cost.insert((c, n), ic);
                    capacity.insert((c, n), inputs.cost_model.capacity_at(version, tree, n));
                    push_var(
                        &mut ir,
                        &mut var_of,
                        VariableIndex::Purchase { cohort: c, node: n },
                        0.0,
                        f64::INFINITY,
                        pi * beta.powi(t as i32 - 1) * ic.dollars(),
                    );
                }
                if !cohort.available_at(t) {
                    // Forced salvage variable at end of life.
                    if cohort.end_of_life() == t {
                        let purchase_node = tree.ancestor_at(n, cohort.purchased);
                        let value = salvage_money(inputs, tree, cohort, purchase_node, t);
                        let id = push_var(
                            &mut ir,
                            &mut var_of,
                            VariableIndex::Salvage {
                                cohort: c,
                                period: t,
                                node: n,
                            },
                            0.0,
                            f64::INFINITY,
                            -pi * beta.powi(t as i32 - 1) * value.dollars(),
                        );
                        salvage_store.insert(id, value);
                    }
                    continue;
                }
                // Stock available this period.
                push_var(
                    &mut ir,
                    &mut var_of,
                    VariableIndex::Stock {
                        cohort: c,
                        period: t,
                        node: n,
                    },
                    0.0,
                    f64::INFINITY,
                    0.0,
                );
                // Optional salvage inside the window (end-of-life handled
                // above since stock no longer exists there).
                if cohort.salvageable_at(t) {
                    let purchase_node = tree.ancestor_at(n, cohort.purchased);
                    let value = salvage_money(inputs, tree, cohort, purchase_node, t);
                    let id = push_var(
                        &mut ir,
                        &mut var_of,
                        VariableIndex::Salvage {
                            cohort: c,
                            period: t,
                            node: n,
                        },
                        0.0,
                        f64::INFINITY,
                        -pi * beta.powi(t as i32 - 1) * value.dollars(),
                    );
                    salvage_store.insert(id, value);
                }
                // Assignments to matching slots.
                let purchase_node = tree.ancestor_at(n, cohort.purchased);
                for (s, slot) in inputs.slots.iter().enumerate() {
                    if slot.length != version.length {
                        continue;
                    }
                    for &season in &Season::ALL {
                        if slot.demand.get(&season).copied().unwrap_or(0) == 0 {
                            continue;
                        }
                        let outcome = inputs
                            .derived
                            .slot(cohort.version, purchase_node, s, season)
                            .ok_or_else(|| ProgramError::MissingDerived {
                                version: version.id.clone(),
                                node: purchase_node,
                                slot: s,
                                season,
                            })?;
                        let SlotOutcome::Feasible { params, kwh_per_km } = *outcome else {
                            continue;
                        };
                        let hydrogen = inputs
                            .cost_model
                            .hydrogen_kg_per_km(version, tree, purchase_node);
                        let om = o_and_m_cost(
                            version.bus_type,
                            params.avg_daily_km,
                            kwh_per_km,
                            hydrogen,
                            inputs.cost_model.costs.diesel_l_per_km,
                            season,
                            &inputs.cost_model.costs,
                        );
                        let id = push_var(
                            &mut ir,
                            &mut var_of,
                            VariableIndex::Assign {
                                cohort: c,
                                period: t,
                                slot: s,
                                season,
                                node: n,
                            },
                            0.0,
                            f64::INFINITY,
                            pi * beta.powi(t as i32 - 1) * om.dollars(),
                        );
                        om_cost.insert(id, om);
                    }
                }
            }
        }
    }

    // --- Rows ----------------------------------------------------------------

    let var = |var_of: &BTreeMap<VariableIndex, usize>, idx: VariableIndex| -> Option<usize> {
        var_of.get(&idx).copied()
    };

    // Purchase linking: stock in the purchase period equals the purchase.
    for (c, cohort) in cohorts.iter().enumerate() {
        let t = cohort.purchased;
        let nodes: Vec<NodeId> = if t == 0 {
            if cohort.initial_count.is_some() {
                vec![0]
            } else {
                vec![]
            }
        } else {
            tree.decision_nodes()
                .filter(|n| tree.periods_of_node(n.id).contains(&t))
                .map(|n| n.id)
                .collect()
        };
        for n in nodes {
            let stock = var(
                &var_of,
                VariableIndex::Stock {
                    cohort: c,
                    period: t,
                    node: n,
                },
            );
            let purchase = var(&var_of, VariableIndex::Purchase { cohort: c, node: n });
            if let (Some(s), Some(p)) = (stock, purchase) {
                ir.rows.push(Row {
                    tag: RowTag::PurchaseLink { cohort: c, node: n },
                    terms: vec![(s, 1.0), (p, -1.0)],
                    sense: Sense::Eq,
                    rhs: 0.0,
                });
            }
        }
    }

    for node in tree.decision_nodes() {
        let n = node.id;
        for t in tree.periods_of_node(n) {
            // Balance and forced salvage against the ancestor's stock.
            for (c, cohort) in cohorts.iter().enumerate() {
                let prior = tree.ancestor_at(n, t - 1);
                let prior_stock = var(
                    &var_of,
                    VariableIndex::Stock {
                        cohort: c,
                        period: t - 1,
                        node: prior,
                    },
                );
                if cohort.balances_at(t) {
                    let stock = var(
                        &var_of,
                        VariableIndex::Stock {
                            cohort: c,
                            period: t,
                            node: n,
                        },
                    )
                    .expect("stock exists inside availability window");
                    let mut terms = vec![
                        (stock, 1.0),
                        (prior_stock.expect("prior stock exists"), -1.0),
                    ];
                    if let Some(salvage) = var(
                        &var_of,
                        VariableIndex::Salvage {
                            cohort: c,
                            period: t,
                            node: n,
                        },
                    ) {
                        terms.push((salvage, 1.0));
                    }
                    ir.rows.push(Row {
                        tag: RowTag::Balance {
                            cohort: c,
                            period: t,
                            node: n,
                        },
                        terms,
                        sense: Sense::Eq,
                        rhs: 0.0,
                    });
                } else if cohort.end_of_life() == t {
                    let salvage = var(
                        &var_of,
                        VariableIndex::Salvage {
                            cohort: c,
                            period: t,
                            node: n,
                        },
                    )
                    .expect("end-of-life salvage variable exists");
                    ir.rows.push(Row {
                        tag: RowTag::ForcedSalvage {
                            cohort: c,
                            period: t,
                            node: n,
                        },
                        terms: vec![
                            (salvage, 1.0),
                            (prior_stock.expect("prior stock exists"), -1.0),
                        ],
                        sense: Sense::Eq,
                        rhs: 0.0,
                    });
                }
            }

            // Demand coverage per slot and season.
            for (s, slot) in inputs.slots.iter().enumerate() {
                for &season in &Season::ALL {
                    let demand = slot.demand.get(&season).copied().unwrap_or(0);
                    if demand == 0 {
                        continue;
                    }
                    let mut terms = Vec::new();
                    for (c, cohort) in cohorts.iter().enumerate() {
                        if !cohort.available_at(t) {
                            continue;
                        }
                        if let Some(id) = var(
                            &var_of,
                            VariableIndex::Assign {
                                cohort: c,
                                period: t,
                                slot: s,
                                season,
                                node: n,
                            },
                        ) {
                            let purchase_node = tree.ancestor_at(n, cohort.purchased);
                            let SlotOutcome::Feasible { params, .. } = inputs
                                .derived
                                .slot(cohort.version, purchase_node, s, season)
                                .expect("assign var implies derived entry")
                            else {
                                unreachable!("assign var implies feasible slot")
                            };
                            terms.push((id, params.dsr));
                        }
                    }
                    ir.rows.push(Row {
                        tag: RowTag::Demand {
                            period: t,
                            slot: s,
                            season,
                            node: n,
                        },
                        terms,
                        sense: Sense::Ge,
                        rhs: demand as f64 * demand_scale[t as usize - 1],
                    });
                }
            }

            // Assignment-to-stock linking per cohort and season.
            for (c, cohort) in cohorts.iter().enumerate() {
                if !cohort.available_at(t) {
                    continue;
                }
                let stock = var(
                    &var_of,
                    VariableIndex::Stock {
                        cohort: c,
                        period: t,
                        node: n,
                    },
                )
                .expect("stock exists");
                for &season in &Season::ALL {
                    let mut terms = Vec::new();
                    for s in 0..inputs.slots.len() {
                        if let Some(id) = var(
                            &var_of,
                            VariableIndex::Assign {
                                cohort: c,
                                period: t,
                                slot: s,
                                season,
                                node: n,
                            },
                        ) {
                            terms.push((id, 1.0));
                        }
                    }
                    if terms.is_empty() {
                        continue;
                    }
                    terms.push((stock, -1.0));
                    ir.rows.push(Row {
                        tag: RowTag::Linking {
                            cohort: c,
                            period: t,
                            season,
                            node: n,
                        },
                        terms,
                        sense: Sense::Le,
                        rhs: 0.0,
                    });
                }
            }

            // Budget on purchases of this period.
            let mut budget_terms = Vec::new();
            for (c, cohort) in cohorts.iter().enumerate() {
                if cohort.purchased == t && cohort.initial_count.is_none() {
                    if let Some(id) = var(&var_of, VariableIndex::Purchase { cohort: c, node: n }) {
                        budget_terms.push((id, purchase_cost[&(c, n)].dollars()));
                    }
                }
            }
            if !budget_terms.is_empty() {
                ir.rows.push(Row {
                    tag: RowTag::Budget { period: t, node: n },
                    terms: budget_terms,
                    sense: Sense::Le,
                    rhs: horizon.budgets[t as usize - 1].dollars(),
                });
            }

            // Emission cap over assigned diesel buses.
            if let Some(cap) = horizon.emission_caps[t as usize - 1] {
                let mut terms = Vec::new();
                for (c, cohort) in cohorts.iter().enumerate() {
                    let version = &inputs.versions[cohort.version];
                    if version.bus_type != BusType::Diesel || !cohort.available_at(t) {
                        continue;
                    }
                    let purchase_node = tree.ancestor_at(n, cohort.purchased);
                    for (s, _) in inputs.slots.iter().enumerate() {
                        for &season in &Season::ALL {
                            if let Some(id) = var(
                                &var_of,
                                VariableIndex::Assign {
                                    cohort: c,
                                    period: t,
                                    slot: s,
                                    season,
                                    node: n,
                                },
                            ) {
                                let SlotOutcome::Feasible { params, .. } = inputs
                                    .derived
                                    .slot(cohort.version, purchase_node, s, season)
                                    .expect("assign var implies derived entry")
                                else {
                                    unreachable!()
                                };
                                let kg = emission_kg(
                                    version.bus_type,
                                    params.avg_daily_km,
                                    inputs.cost_model.costs.diesel_l_per_km,
                                    season,
                                    &inputs.cost_model.costs,
                                );
                                terms.push((id, kg));
                            }
                        }
                    }
                }
                ir.rows.push(Row {
                    tag: RowTag::Emission { period: t, node: n },
                    terms,
                    sense: Sense::Le,
                    rhs: cap,
                });
            }
        }
    }

    // End-of-horizon average age cap on final-stage nodes.
    for leaf in tree.leaves() {
        let mut terms = Vec::new();
        for (c, cohort) in cohorts.iter().enumerate() {
            if !cohort.available_at(t_max) {
                continue;
            }
            if let Some(id) = var(
                &var_of,
                VariableIndex::Stock {
                    cohort: c,
                    period: t_max,
                    node: leaf,
                },
            ) {
                terms.push((id, cohort.age_at(t_max) - horizon.max_avg_age));
            }
        }
        if !terms.is_empty() {
            ir.rows.push(Row {
                tag: RowTag::AgeCap { node: leaf },
                terms,
                sense: Sense::Le,
                rhs: 0.0,
            });
        }
    }

    Ok(FleetProgram {
        ir,
        cohorts,
        tree: tree.clone(),
        versions: inputs.versions.to_vec(),
        slots: inputs.slots.to_vec(),
        var_of,
        horizon: horizon.clone(),
        purchase_cost,
        om_cost,
        salvage_value: salvage_store,
        capacity,
        cost_model: inputs.cost_model.clone(),
        charger_ratio: inputs.derived.charger_ratio.clone(),
    })
}

fn salvage_money(
    inputs: &ProgramInputs,
    tree: &ScenarioTree,
    cohort: &Cohort,
    purchase_node: NodeId,
    t: Period,
) -> Money {
    // The existing fleet is written off: only new purchases have value.
    if cohort.initial_count.is_some() {
        return Money::ZERO;
    }
    let version = &inputs.versions[cohort.version];
    let ratio = *inputs
        .derived
        .charger_ratio
        .get(&(cohort.version, purchase_node))
        .unwrap_or(&0.0);
    let base = inputs
        .cost_model
        .bus_only_investment(version, tree, purchase_node, ratio);
    crate::tree::salvage_value(
        base,
        t - cohort.purchased,
        inputs.cost_model.costs.salvage_retention,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::ImprovementDistribution;
    use crate::tree::{build_technology_tree, compose_scenario_tree};

    #[test]
    fn discount_factor_examples() {
        let beta = discount_factor(0.05, 0.04);
        assert!((beta - 0.9904762).abs() < 1e-7);
        assert!((discount_factor(0.07, 0.07) - 1.0).abs() < 1e-15);
        assert!((discount_factor(0.05, 0.0) - 1.0 / 1.05).abs() < 1e-15);
    }

    #[test]
    fn o_and_m_diesel_winter_example() {
        // 200 km/day over the 273 winter days:
        // energy 200·0.435·1.29 + maintenance 200·0.58 + driver 40 per day.
        let costs = CostConfig::default();
        let om = o_and_m_cost(
            BusType::Diesel,
            200.0,
            0.0,
            0.0,
            costs.diesel_l_per_km,
            Season::Winter,
            &costs,
        );
        let per_day = 200.0 * 0.435 * 1.29 + 200.0 * 0.58 + 40.0;
        assert!((om.dollars() - per_day * 273.0).abs() < 0.02);
        assert!((om.dollars() - 73_226.79).abs() < 0.02);
    }

    #[test]
    fn o_and_m_zero_distance_is_driver_only() {
        let costs = CostConfig::default();
        let om = o_and_m_cost(
            BusType::BebOvernight,
            0.0,
            1.2,
            0.0,
            0.435,
            Season::Summer,
            &costs,
        );
        assert_eq!(om, Money::from_dollars(40.0 * 92.0));
    }

    #[test]
    fn hydrogen_energy_term_scales_with_price() {
        let mut costs = CostConfig::default();
        let base = o_and_m_cost(
            BusType::Hydrogen,
            100.0,
            0.0,
            0.09,
            0.435,
            Season::Summer,
            &costs,
        );
        costs.hydrogen_per_kg = Money::from_dollars(2.0);
        let cheap = o_and_m_cost(
            BusType::Hydrogen,
            100.0,
            0.0,
            0.09,
            0.435,
            Season::Summer,
            &costs,
        );
        // Only the energy term changes, by the price difference.
        let energy_base = Money::from_dollars(10.0 * 0.09).scale(100.0 * 92.0);
        let energy_cheap = Money::from_dollars(2.0 * 0.09).scale(100.0 * 92.0);
        assert_eq!(base - cheap, energy_base - energy_cheap);
    }

    #[test]
    fn cohort_windows() {
        let c = Cohort::new_purchase(0, 3, 12);
        assert!(!c.available_at(2));
        assert!(c.available_at(3));
        assert!(c.available_at(14));
        assert!(!c.available_at(15));
        assert!(!c.balances_at(3));
        assert!(c.balances_at(4));
        assert!(c.balances_at(14));
        assert!(!c.balances_at(15));
        assert!(!c.salvageable_at(8));
        assert!(c.salvageable_at(9)); // 3 + ⌈12/2⌉
        assert!(c.salvageable_at(15)); // end of life
        assert_eq!(c.end_of_life(), 15);
    }

    #[test]
    fn initial_cohort_windows_respect_true_age() {
        // 7-year-old bus with 16-year total life: 9 years left, salvageable
        // from period 1 (already near half of 16).
        let c = Cohort::initial(0, 100, 7, 16);
        assert_eq!(c.life, 9);
        assert_eq!(c.salvage_offset, 1);
        assert!(c.available_at(0));
        assert!(c.available_at(8));
        assert!(!c.available_at(9));
        // 18-year-old with 20-year life: 2 left.
        let c = Cohort::initial(0, 10, 18, 20);
        assert_eq!(c.life, 2);
        assert!(c.salvageable_at(1));
        // A 5-year-old with 16-year life must wait until age 8.
        let c = Cohort::initial(0, 10, 5, 16);
        assert_eq!(c.salvage_offset, 3);
    }

    pub fn degenerate_inputs() -> (
        ScenarioTree,
        HorizonConfig,
        Vec<BusVersion>,
        Vec<RouteSlot>,
        DerivedTable,
        CostModel,
    ) {
        let trees =
            vec![build_technology_tree(&ImprovementDistribution::static_tech("DB"), 2).unwrap()];
        let tree = compose_scenario_tree(&trees, &[1, 1]).unwrap();
        let horizon = HorizonConfig {
            periods: 2,
            stages: 2,
            periods_per_stage: vec![1, 1],
            nominal_discount_rate: 0.05,
            inflation_rate: 0.04,
            budgets: vec![Money::from_dollars(1e9); 2],
            emission_caps: vec![None, None],
            max_avg_age: 9.0,
        };
        let versions = vec![BusVersion {
            id: "DB-12m".into(),
            bus_type: BusType::Diesel,
            length: LengthGroup::M12,
            battery_capacity_kwh: 0.0,
            battery_mass_kg: 0.0,
            recharge_minutes: 0.0,
            economic_life: 15,
            purchase_cost: Money::from_dollars(200_000.0),
            diesel_l_per_km: 0.435,
            hydrogen_kg_per_km: 0.0,
        }];
        let slots = vec![RouteSlot {
            cluster_id: 1,
            length: LengthGroup::M12,
            demand: BTreeMap::from([(Season::Winter, 4), (Season::Summer, 3)]),
        }];
        let mut derived = DerivedTable::default();
        for node in 0..tree.nodes.len() as u32 {
            for &season in &Season::ALL {
                derived.insert_slot(
                    0,
                    node,
                    0,
                    season,
                    SlotOutcome::Feasible {
                        params: DerivedParams {
                            dsr: 1.0,
                            charger_to_bus: 0.0,
                            avg_daily_km: 180.0,
                        },
                        kwh_per_km: 0.0,
                    },
                );
            }
        }
        let cost_model = CostModel {
            db_price_by_length: BTreeMap::from([(
                LengthGroup::M12,
                Money::from_dollars(200_000.0),
            )]),
            powertrain_by_length: BTreeMap::from([(
                LengthGroup::M12,
                Money::from_dollars(100_000.0),
            )]),
            costs: CostConfig::default(),
            discount: discount_factor(0.05, 0.04),
        };
        (tree, horizon, versions, slots, derived, cost_model)
    }

    #[test]
    fn degenerate_program_shape() {
        let (tree, horizon, versions, slots, derived, cost_model) = degenerate_inputs();
        let initial = [(0usize, 4u32, 7u32, 16u32)];
        let program = build_program(&ProgramInputs {
            tree: &tree,
            horizon: &horizon,
            versions: &versions,
            slots: &slots,
            derived: &derived,
            cost_model: &cost_model,
            initial_fleet: &initial,
            demand_scale: None,
        })
        .unwrap();

        // Every variable appears in some row or the objective.
        let mut used = vec![false; program.ir.vars.len()];
        for row in &program.ir.rows {
            assert!(!row.terms.is_empty(), "empty row {:?}", row.tag);
            for &(i, _) in &row.terms {
                used[i] = true;
            }
        }
        for (i, v) in program.ir.vars.iter().enumerate() {
            assert!(
                used[i] || v.objective != 0.0,
                "unused variable {:?}",
                v.index
            );
        }
        assert!(program.audit_nonanticipativity());

        // Demand rows: 2 periods × 2 seasons on a single-path tree.
        let demand_rows = program
            .ir
            .rows
            .iter()
            .filter(|r| matches!(r.tag, RowTag::Demand { .. }))
            .count();
        assert_eq!(demand_rows, 4);
        // Budget rows only for decision periods.
        let budget_rows = program
            .ir
            .rows
            .iter()
            .filter(|r| matches!(r.tag, RowTag::Budget { .. }))
            .count();
        assert_eq!(budget_rows, 2);
    }

    #[test]
    fn missing_derived_entry_is_an_error() {
        let (tree, horizon, versions, slots, _, cost_model) = degenerate_inputs();
        let empty = DerivedTable::default();
        let err = build_program(&ProgramInputs {
            tree: &tree,
            horizon: &horizon,
            versions: &versions,
            slots: &slots,
            derived: &empty,
            cost_model: &cost_model,
            initial_fleet: &[],
            demand_scale: None,
        })
        .unwrap_err();
        assert!(matches!(err, ProgramError::MissingDerived { .. }));
    }

    #[test]
    fn lp_export_layout() {
        let (tree, horizon, versions, slots, derived, cost_model) = degenerate_inputs();
        let program = build_program(&ProgramInputs {
            tree: &tree,
            horizon: &horizon,
            versions: &versions,
            slots: &slots,
            derived: &derived,
            cost_model: &cost_model,
            initial_fleet: &[(0, 4, 7, 16)],
            demand_scale: None,
        })
        .unwrap();
        let lp = program.ir.write_lp();
        assert!(lp.starts_with("Minimize\n obj:"));
        assert!(lp.contains("Subject To"));
        assert!(lp.contains("Bounds"));
        assert!(lp.contains("Generals"));
        assert!(lp.trim_end().ends_with("End"));
        assert!(lp.contains("vP_c"));
        assert!(lp.contains(">= 4"));
    }
}
