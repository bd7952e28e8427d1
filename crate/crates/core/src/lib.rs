//! Planning toolkit for transitioning a diesel bus fleet to battery-electric
//! and hydrogen buses.
//!
//! The crate is organized as a pipeline:
//!
//! 1. [`transit`] ingests timetable, stop and fleet data, and aggregates
//!    routes into demand clusters.
//! 2. [`energy`] computes physics-based trip energy for battery buses
//!    (traction power, optimal speed profiles, closed-form phase energies).
//! 3. [`sim`] covers a day's trips with buses of one version (greedy
//!    first-fit with fast-charge scheduling) and derives the demand
//!    satisfaction ratio, charger-to-bus ratio and daily distance.
//! 4. [`forecast`] turns historical battery / fuel-cell series into
//!    discrete joint improvement distributions via k-means.
//! 5. [`tree`] builds per-technology trees and composes them into the
//!    scenario tree, evolving capacities and costs per node.
//! 6. [`program`] assembles the multi-stage fleet replacement program as a
//!    linear-program IR with integer markings.
//! 7. [`solver`] solves the LP relaxation, rounds with feasibility repair,
//!    and provides an exhaustive MILP oracle for tiny instances.
//! 8. [`planner`] wires everything together behind presets and emits
//!    transition-plan reports.

pub mod energy;
pub mod forecast;
pub mod money;
pub mod planner;
pub mod program;
pub mod sim;
pub mod solver;
pub mod transit;
pub mod tree;
pub mod types;

pub use money::Money;
pub use types::{BusType, LengthGroup, Season, TechKind};
