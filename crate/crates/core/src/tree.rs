//! Per-technology improvement trees and their composition into the scenario
//! tree, plus the node-level evolution of capacities, investment costs and
//! consumption rates.

use serde::{Deserialize, Serialize};

use crate::forecast::ImprovementDistribution;
use crate::money::Money;

#[derive(Debug, thiserror::Error)]
pub enum TreeError {
    #[error("need at least 2 stages, got {0}")]
    TooFewStages(u32),
    #[error("technology trees have mismatched depths: {0:?}")]
    MismatchedDepths(Vec<u32>),
    #[error("periods_per_stage length {got} does not match {stages} stages")]
    BadPeriodMap { got: usize, stages: u32 },
    #[error("calibrated powertrain cost is negative ({0}); cost tables are inconsistent")]
    NegativePowertrainCost(Money),
}

/// Node of a single-technology tree. Multipliers are cumulative along the
/// root path; probabilities are joint (they multiply down the tree).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechNode {
    pub id: u32,
    pub stage: u32,
    pub parent: Option<u32>,
    pub cost_mult: f64,
    pub eff_mult: f64,
    pub prob: f64,
    /// Index of the branch taken from the parent (0 = fastest).
    pub branch: Option<usize>,
}

/// Perfect B-ary tree of cumulative improvement multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechnologyTree {
    pub technology: String,
    pub branching: usize,
    pub stages: u32,
    /// Indexed by node id; node 0 is the artificial pre-root.
    pub nodes: Vec<TechNode>,
}

impl TechnologyTree {
    pub fn nodes_at_stage(&self, stage: u32) -> Vec<&TechNode> {
        self.nodes.iter().filter(|n| n.stage == stage).collect()
    }
}

/// Branch letter for scenario labels: fastest F, slowest S, M in between.
pub fn branch_letter(branch: usize, branching: usize) -> char {
    if branching == 1 || branch == 0 {
        'F'
    } else if branch == branching - 1 {
        'S'
    } else {
        'M'
    }
}

/// Build the technology tree for one improvement distribution: breadth
/// first, each node's multipliers the product of its parent's and the
/// branch's.
pub fn build_technology_tree(
    dist: &ImprovementDistribution,
    stages: u32,
) -> Result<TechnologyTree, TreeError> {
    if stages < 2 {
        return Err(TreeError::TooFewStages(stages));
    }
    let mut nodes = vec![
        TechNode {
            id: 0,
            stage: 0,
            parent: None,
            cost_mult: 1.0,
            eff_mult: 1.0,
            prob: 1.0,
            branch: None,
        },
        TechNode {
            id: 1,
            stage: 1,
            parent: Some(0),
            cost_mult: 1.0,
            eff_mult: 1.0,
            prob: 1.0,
            branch: None,
        },
    ];
    let mut level: Vec<u32> = vec![1];
    let mut next_id = 1u32;
    for stage in 1..stages {
        let mut next_level = Vec::with_capacity(level.len() * dist.branches.len());
        for &parent_id in &level {
            let parent = nodes[parent_id as usize].clone();
            for (b, branch) in dist.branches.iter().enumerate() {
                next_id += 1;
                nodes.push(TechNode {
                    id: next_id,
                    stage: stage + 1,
                    parent: Some(parent_id),
                    cost_mult: parent.cost_mult * branch.cost_multiplier,
                    eff_mult: parent.eff_mult * branch.eff_multiplier,
                    prob: parent.prob * branch.probability,
                    branch: Some(b),
                });
                next_level.push(next_id);
            }
        }
        level = next_level;
    }
    Ok(TechnologyTree {
        technology: dist.technology.clone(),
        branching: dist.branches.len(),
        stages,
        nodes,
    })
}

/// Node of the composed scenario tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioNode {
    pub id: u32,
    pub stage: u32,
    pub parent: Option<u32>,
    /// Joint probability of reaching this node.
    pub prob: f64,
    /// Per-technology node ids in the technology trees.
    pub tech_nodes: Vec<u32>,
    /// Cumulative cost multiplier per technology.
    pub cost_mult: Vec<f64>,
    /// Cumulative efficiency multiplier per technology.
    pub eff_mult: Vec<f64>,
    /// Branch letters of the step into this node, one per improving
    /// technology (empty for stages 0 and 1).
    pub label: String,
}

/// The scenario tree: staged nodes with probabilities, ancestor map and
/// per-node technology multipliers. Node 0 is the artificial pre-root
/// owning period 0; stage s (1-based) owns its block of periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTree {
    pub technologies: Vec<String>,
    pub stages: u32,
    pub periods_per_stage: Vec<u32>,
    pub nodes: Vec<ScenarioNode>,
}

impl ScenarioTree {
    pub fn horizon(&self) -> u32 {
        self.periods_per_stage.iter().sum()
    }

    pub fn stage_of_period(&self, t: u32) -> u32 {
        if t == 0 {
            return 0;
        }
        let mut upto = 0;
        for (s, &len) in self.periods_per_stage.iter().enumerate() {
            upto += len;
            if t <= upto {
                return s as u32 + 1;
            }
        }
        self.stages
    }

    /// Periods T_n owned by a node's stage; period 0 for the pre-root.
    pub fn periods_of_node(&self, node: u32) -> std::ops::RangeInclusive<u32> {
        let stage = self.nodes[node as usize].stage;
        if stage == 0 {
            return 0..=0;
        }
        let before: u32 = self.periods_per_stage[..stage as usize - 1].iter().sum();
        (before + 1)..=(before + self.periods_per_stage[stage as usize - 1])
    }

    /// Ancestor of `node` at the stage containing period `t` (the node
    /// itself for its own periods).
    pub fn ancestor_at(&self, node: u32, t: u32) -> u32 {
        let target_stage = self.stage_of_period(t);
        let mut cur = node;
        while self.nodes[cur as usize].stage > target_stage {
            cur = self.nodes[cur as usize]
                .parent
                .expect("non-root nodes have parents");
        }
        cur
    }

    pub fn children(&self, node: u32) -> Vec<u32> {
        self.nodes
            .iter()
            .filter(|n| n.parent == Some(node))
            .map(|n| n.id)
            .collect()
    }

    /// Final-stage nodes (the scenarios).
    pub fn leaves(&self) -> Vec<u32> {
        self.nodes
            .iter()
            .filter(|n| n.stage == self.stages)
            .map(|n| n.id)
            .collect()
    }

    /// Nodes at stages 1..=S, skipping the artificial pre-root.
    pub fn decision_nodes(&self) -> impl Iterator<Item = &ScenarioNode> {
        self.nodes.iter().filter(|n| n.stage >= 1)
    }

    fn tech_index(&self, technology: &str) -> Option<usize> {
        self.technologies.iter().position(|t| t == technology)
    }

    /// Cumulative (cost, efficiency) multipliers of a technology at a node.
    pub fn multipliers(&self, node: u32, technology: &str) -> (f64, f64) {
        match self.tech_index(technology) {
            Some(j) => {
                let n = &self.nodes[node as usize];
                (n.cost_mult[j], n.eff_mult[j])
            }
            None => (1.0, 1.0),
        }
    }

    /// Stage-step labels along the path from stage 2 to this node's stage.
    pub fn path_labels(&self, node: u32) -> Vec<String> {
        let mut labels = Vec::new();
        let mut cur = node;
        while self.nodes[cur as usize].stage >= 2 {
            labels.push(self.nodes[cur as usize].label.clone());
            cur = self.nodes[cur as usize].parent.unwrap();
        }
        labels.reverse();
        labels
    }

    /// Scenario table: one row per leaf with its stage labels and
    /// probability in percent.
    pub fn scenario_table_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("scenario");
        for s in 2..=self.stages {
            let _ = write!(out, ",S{s}");
        }
        out.push_str(",probability_pct\n");
        for (i, leaf) in self.leaves().into_iter().enumerate() {
            let _ = write!(out, "{}", i + 1);
            for label in self.path_labels(leaf) {
                let _ = write!(out, ",{label}");
            }
            let _ = writeln!(out, ",{:.5}", self.nodes[leaf as usize].prob * 100.0);
        }
        out
    }
}

/// Compose per-technology trees into the scenario tree by the stagewise
/// Cartesian product, nodes labeled in lexicographic order of the
/// technology-tree node ids.
pub fn compose_scenario_tree(
    trees: &[TechnologyTree],
    periods_per_stage: &[u32],
) -> Result<ScenarioTree, TreeError> {
    let stages = trees.first().map(|t| t.stages).unwrap_or(0);
    if trees.iter().any(|t| t.stages != stages) {
        return Err(TreeError::MismatchedDepths(
            trees.iter().map(|t| t.stages).collect(),
        ));
    }
    if periods_per_stage.len() != stages as usize {
        return Err(TreeError::BadPeriodMap {
            got: periods_per_stage.len(),
            stages,
        });
    }

    let mut nodes: Vec<ScenarioNode> = vec![ScenarioNode {
        id: 0,
        stage: 0,
        parent: None,
        prob: 1.0,
        tech_nodes: vec![0; trees.len()],
        cost_mult: vec![1.0; trees.len()],
        eff_mult: vec![1.0; trees.len()],
        label: String::new(),
    }];
    // Scenario id by technology-node tuple, per stage.
    let mut index_of: std::collections::BTreeMap<Vec<u32>, u32> = std::collections::BTreeMap::new();
    index_of.insert(vec![0; trees.len()], 0);

    for stage in 1..=stages {
        // Lexicographic product of each tree's nodes at this stage.
        let per_tree: Vec<Vec<&TechNode>> = trees
            .iter()
            .map(|t| {
                let mut v = t.nodes_at_stage(stage);
                v.sort_by_key(|n| n.id);
                v
            })
            .collect();
        let mut tuples: Vec<Vec<&TechNode>> = vec![vec![]];
        for options in &per_tree {
            let mut next = Vec::with_capacity(tuples.len() * options.len());
            for partial in &tuples {
                for &opt in options {
                    let mut t = partial.clone();
                    t.push(opt);
                    next.push(t);
                }
            }
            tuples = next;
        }

        for tuple in tuples {
            let id = nodes.len() as u32;
            let tech_ids: Vec<u32> = tuple.iter().map(|n| n.id).collect();
            let parent_ids: Vec<u32> = tuple.iter().map(|n| n.parent.unwrap_or(0)).collect();
            let parent = *index_of
                .get(&parent_ids)
                .expect("parent tuple composed at the previous stage");
            let label: String = tuple
                .iter()
                .zip(trees)
                .filter(|(_, tree)| tree.branching > 1)
                .map(|(n, tree)| branch_letter(n.branch.unwrap_or(0), tree.branching))
                .collect();
            nodes.push(ScenarioNode {
                id,
                stage,
                parent: Some(parent),
                prob: tuple.iter().map(|n| n.prob).product(),
                tech_nodes: tech_ids.clone(),
                cost_mult: tuple.iter().map(|n| n.cost_mult).collect(),
                eff_mult: tuple.iter().map(|n| n.eff_mult).collect(),
                label: if stage >= 2 { label } else { String::new() },
            });
            index_of.insert(tech_ids, id);
        }
    }

    Ok(ScenarioTree {
        technologies: trees.iter().map(|t| t.technology.clone()).collect(),
        stages,
        periods_per_stage: periods_per_stage.to_vec(),
        nodes,
    })
}

/// Cost inputs for battery-bus investment costing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BebCostInputs {
    /// Diesel bus price of the same length.
    pub db_price: Money,
    /// Charger cost attributed to one bus (unit price × charger-to-bus).
    pub charger_cost: Money,
    /// Electrified powertrain excluding the battery.
    pub powertrain_cost: Money,
    /// Battery pack cost per kWh at the start of the horizon.
    pub battery_cost_per_kwh: Money,
    /// Economic life in years (mid-life replacement at ω/2).
    pub economic_life: u32,
    /// Per-period discount factor β.
    pub discount_factor: f64,
}

/// Investment cost of a battery bus at a node: diesel base plus charger
/// plus the technology-scaled powertrain-and-battery, bought twice (at
/// purchase and discounted at mid-life).
pub fn bev_investment_cost(
    inputs: &BebCostInputs,
    capacity_kwh: f64,
    cost_multiplier: f64,
) -> Money {
    let replace_factor = 1.0 + inputs.discount_factor.powf(inputs.economic_life as f64 / 2.0);
    let powertrain = inputs.powertrain_cost
        + inputs.battery_cost_per_kwh.scale(capacity_kwh);
    inputs.db_price + inputs.charger_cost + powertrain.scale(replace_factor * cost_multiplier)
}

/// Recover the powertrain-minus-battery cost from listed purchase prices:
/// price = diesel price + PC + BC·capacity. Returns the mean PC and the
/// per-version residuals when the system is over-determined.
pub fn calibrate_powertrain_cost(
    prices_and_capacities: &[(Money, f64)],
    db_price: Money,
    battery_cost_per_kwh: Money,
) -> Result<(Money, Vec<Money>), TreeError> {
    let pcs: Vec<Money> = prices_and_capacities
        .iter()
        .map(|&(price, cap)| price - db_price - battery_cost_per_kwh.scale(cap))
        .collect();
    let mean = Money(pcs.iter().map(|m| m.cents()).sum::<i64>() / pcs.len() as i64);
    if mean < Money::ZERO {
        return Err(TreeError::NegativePowertrainCost(mean));
    }
    let residuals = pcs.iter().map(|&pc| pc - mean).collect();
    Ok((mean, residuals))
}

/// Hydrogen bus investment cost at a node: the diesel base does not
/// improve, the hydrogen premium scales with the cost multiplier.
pub fn hfcb_investment_cost(db_price: Money, hfcb_price: Money, cost_multiplier: f64) -> Money {
    db_price + (hfcb_price - db_price).scale(cost_multiplier)
}

/// Hydrogen consumption rate at a node: efficiency gains cut kg/km.
pub fn hfcb_consumption(base_kg_per_km: f64, eff_multiplier: f64) -> f64 {
    base_kg_per_km / eff_multiplier
}

/// Salvage value after `age` years of service: the bus-only share of the
/// investment depreciates by a fixed annual rate.
pub fn salvage_value(bus_only_investment: Money, age_years: u32, annual_retention: f64) -> Money {
    bus_only_investment.scale(annual_retention.powi(age_years as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::Branch;

    /// Two-branch battery distribution as forecast from the bundled series,
    /// rounded to the published two decimals.
    pub fn beb_dist() -> ImprovementDistribution {
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

    pub fn hfcb_dist() -> ImprovementDistribution {
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

    fn three_trees(stages: u32) -> Vec<TechnologyTree> {
        vec![
            build_technology_tree(&ImprovementDistribution::static_tech("DB"), stages).unwrap(),
            build_technology_tree(&beb_dist(), stages).unwrap(),
            build_technology_tree(&hfcb_dist(), stages).unwrap(),
        ]
    }

    #[test]
    fn static_tree_is_a_chain_of_ones() {
        let tree =
            build_technology_tree(&ImprovementDistribution::static_tech("DB"), 2).unwrap();
        assert_eq!(tree.nodes.len(), 3); // pre-root, stage 1, stage 2
        for n in &tree.nodes {
            assert_eq!(n.cost_mult, 1.0);
            assert_eq!(n.eff_mult, 1.0);
            assert_eq!(n.prob, 1.0);
        }
    }

    #[test]
    fn beb_tree_leaves_match_published_multipliers() {
        let tree = build_technology_tree(&beb_dist(), 2).unwrap();
        let leaves = tree.nodes_at_stage(2);
        assert_eq!(leaves.len(), 2);
        assert_eq!(
            (leaves[0].cost_mult, leaves[0].eff_mult, leaves[0].prob),
            (0.35, 1.31, 0.46)
        );
        assert_eq!(
            (leaves[1].cost_mult, leaves[1].eff_mult, leaves[1].prob),
            (0.63, 1.21, 0.54)
        );
    }

    #[test]
    fn cumulative_products_along_path() {
        let tree = build_technology_tree(&beb_dist(), 3).unwrap();
        let ff = tree
            .nodes_at_stage(3)
            .into_iter()
            .find(|n| {
                let parent = &tree.nodes[n.parent.unwrap() as usize];
                n.branch == Some(0) && parent.branch == Some(0)
            })
            .unwrap();
        assert!((ff.cost_mult - 0.35 * 0.35).abs() < 1e-12);
        assert!((ff.cost_mult - 0.1225).abs() < 1e-12);
        assert!((ff.eff_mult - 1.31 * 1.31).abs() < 1e-12);
    }

    #[test]
    fn compose_reproduces_stage_two_probabilities() {
        let tree = compose_scenario_tree(&three_trees(2), &[5, 20]).unwrap();
        // Pre-root, stage-1 root, four stage-2 nodes.
        assert_eq!(tree.nodes.len(), 6);
        let stage2: Vec<&ScenarioNode> =
            tree.nodes.iter().filter(|n| n.stage == 2).collect();
        let probs: Vec<f64> = stage2.iter().map(|n| n.prob).collect();
        let expected = [0.3818, 0.0782, 0.4482, 0.0918];
        for (p, e) in probs.iter().zip(expected) {
            assert!((p - e).abs() < 1e-12, "{p} vs {e}");
        }
        assert_eq!(stage2[0].label, "FF");
        assert_eq!(stage2[1].label, "FS");
        assert_eq!(stage2[2].label, "SF");
        assert_eq!(stage2[3].label, "SS");
        // Multipliers carried over per technology.
        assert_eq!(tree.multipliers(stage2[0].id, "BEB"), (0.35, 1.31));
        assert_eq!(tree.multipliers(stage2[0].id, "HFCB"), (0.71, 1.09));
        assert_eq!(tree.multipliers(stage2[0].id, "DB"), (1.0, 1.0));
    }

    #[test]
    fn five_stages_has_256_scenarios_summing_to_one() {
        let tree = compose_scenario_tree(&three_trees(5), &[5, 5, 5, 5, 5]).unwrap();
        let leaves = tree.leaves();
        assert_eq!(leaves.len(), 256);
        let total: f64 = leaves.iter().map(|&l| tree.nodes[l as usize].prob).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(tree.horizon(), 25);
    }

    #[test]
    fn single_static_technology_gives_one_scenario() {
        let trees = vec![
            build_technology_tree(&ImprovementDistribution::static_tech("DB"), 4).unwrap(),
        ];
        let tree = compose_scenario_tree(&trees, &[2, 2, 2, 2]).unwrap();
        assert_eq!(tree.leaves().len(), 1);
        assert_eq!(tree.nodes[tree.leaves()[0] as usize].prob, 1.0);
    }

    #[test]
    fn children_probabilities_sum_to_parent() {
        let tree = compose_scenario_tree(&three_trees(3), &[2, 2, 2]).unwrap();
        for node in &tree.nodes {
            let children = tree.children(node.id);
            if !children.is_empty() && node.stage >= 1 {
                let sum: f64 = children
                    .iter()
                    .map(|&c| tree.nodes[c as usize].prob)
                    .sum();
                assert!((sum - node.prob).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ancestor_walks_reach_the_root() {
        let tree = compose_scenario_tree(&three_trees(3), &[2, 3, 1]).unwrap();
        assert_eq!(tree.horizon(), 6);
        for leaf in tree.leaves() {
            // Own periods map to the node itself.
            for t in tree.periods_of_node(leaf) {
                assert_eq!(tree.ancestor_at(leaf, t), leaf);
            }
            // Period 1 maps to the stage-1 root, period 0 to the pre-root.
            assert_eq!(tree.ancestor_at(leaf, 1), 1);
            assert_eq!(tree.ancestor_at(leaf, 0), 0);
        }
        assert_eq!(tree.stage_of_period(2), 1);
        assert_eq!(tree.stage_of_period(3), 2);
        assert_eq!(tree.stage_of_period(6), 3);
    }

    #[test]
    fn mismatched_depths_rejected() {
        let trees = vec![
            build_technology_tree(&ImprovementDistribution::static_tech("DB"), 2).unwrap(),
            build_technology_tree(&beb_dist(), 3).unwrap(),
        ];
        assert!(matches!(
            compose_scenario_tree(&trees, &[1, 1]),
            Err(TreeError::MismatchedDepths(_))
        ));
    }

    #[test]
    fn bev_cost_at_root_matches_listed_price_plus_extras() {
        // 12 m overnight charger 280 kWh: listed 440,000 with diesel base
        // 200,000, so PC + BC·280 = 240,000 and the charger adds 20,000.
        let beta: f64 = 1.04 / 1.05;
        let inputs = BebCostInputs {
            db_price: Money::from_dollars(200_000.0),
            charger_cost: Money::from_dollars(20_000.0),
            powertrain_cost: Money::from_dollars(100_000.0),
            battery_cost_per_kwh: Money::from_dollars(500.0),
            economic_life: 12,
            discount_factor: beta,
        };
        let got = bev_investment_cost(&inputs, 280.0, 1.0);
        let expected = Money::from_dollars(200_000.0 + 20_000.0)
            + Money::from_dollars(240_000.0).scale(1.0 + beta.powi(6));
        assert_eq!(got, expected);
        // Listed price + charger + discounted replacement.
        let replacement = Money::from_dollars(240_000.0).scale(beta.powi(6));
        let alt = Money::from_dollars(460_000.0) + replacement;
        assert!((got - alt).cents().abs() <= 1);
    }

    #[test]
    fn bev_cost_undiscounted_limit_doubles_powertrain() {
        let inputs = BebCostInputs {
            db_price: Money::ZERO,
            charger_cost: Money::ZERO,
            powertrain_cost: Money::from_dollars(100_000.0),
            battery_cost_per_kwh: Money::from_dollars(500.0),
            economic_life: 12,
            discount_factor: 1.0,
        };
        let got = bev_investment_cost(&inputs, 280.0, 1.0);
        assert_eq!(got, Money::from_dollars(2.0 * 240_000.0));
    }

    #[test]
    fn bev_cost_scales_powertrain_term_only() {
        let beta: f64 = 1.04 / 1.05;
        let inputs = BebCostInputs {
            db_price: Money::from_dollars(200_000.0),
            charger_cost: Money::from_dollars(20_000.0),
            powertrain_cost: Money::from_dollars(100_000.0),
            battery_cost_per_kwh: Money::from_dollars(500.0),
            economic_life: 12,
            discount_factor: beta,
        };
        let evolved_capacity = 280.0 * 1.31;
        let got = bev_investment_cost(&inputs, evolved_capacity, 0.35);
        let powertrain = 100_000.0 + 500.0 * evolved_capacity;
        let expected = Money::from_dollars(220_000.0)
            + Money::from_dollars(powertrain).scale((1.0 + beta.powi(6)) * 0.35);
        assert_eq!(got, expected);
    }

    #[test]
    fn powertrain_calibration_recovers_exact_tables() {
        // 12 m fast-charge versions from the published price list.
        let prices = [
            (Money::from_dollars(370_000.0), 140.0),
            (Money::from_dollars(405_000.0), 210.0),
            (Money::from_dollars(440_000.0), 280.0),
            (Money::from_dollars(475_000.0), 350.0),
        ];
        let (pc, residuals) = calibrate_powertrain_cost(
            &prices,
            Money::from_dollars(200_000.0),
            Money::from_dollars(500.0),
        )
        .unwrap();
        assert_eq!(pc, Money::from_dollars(100_000.0));
        assert!(residuals.iter().all(|r| r.cents() == 0));
    }

    #[test]
    fn hfcb_evolution_examples() {
        let db = Money::from_dollars(200_000.0);
        let h1 = Money::from_dollars(700_000.0);
        assert_eq!(hfcb_investment_cost(db, h1, 1.0), h1);
        assert_eq!(
            hfcb_investment_cost(db, h1, 0.71),
            Money::from_dollars(555_000.0)
        );
        assert!((hfcb_consumption(0.09, 1.0) - 0.09).abs() < 1e-15);
        assert!((hfcb_consumption(0.09, 1.09) - 0.0825688).abs() < 1e-6);
    }

    #[test]
    fn salvage_depreciates_fifteen_percent_yearly() {
        let base = Money::from_dollars(200_000.0);
        assert_eq!(salvage_value(base, 0, 0.85), base);
        assert_eq!(salvage_value(base, 1, 0.85), Money::from_dollars(170_000.0));
        assert_eq!(salvage_value(base, 2, 0.85), Money::from_dollars(144_500.0));
    }

    #[test]
    fn scenario_table_lists_leaves_with_labels() {
        let tree = compose_scenario_tree(&three_trees(3), &[1, 1, 1]).unwrap();
        let csv = tree.scenario_table_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "scenario,S2,S3,probability_pct");
        assert_eq!(lines.len(), 1 + 16);
        assert!(lines[1].starts_with("1,FF,FF,"));
        // First scenario probability: (0.46·0.83)² as a percentage.
        let p: f64 = lines[1].rsplit(',').next().unwrap().parse().unwrap();
        assert!((p - 0.3818f64 * 0.3818 * 100.0).abs() < 1e-3);
    }
}
