//! End-to-end pipeline tests on the bundled presets.

use zebplan_core::planner::{preset, run_pipeline, run_sensitivity, SensitivityCase};
use zebplan_core::program::RowTag;
use zebplan_core::solver::FEASIBILITY_TOL;

#[test]
fn toy_pipeline_runs_and_reconciles() {
    let bundle = preset("toy", None).unwrap();
    let artifacts = run_pipeline(&bundle.config, &bundle.network).unwrap();
    let report = &artifacts.report;

    assert_eq!(report.scenario_count, 2);
    assert!(report.z_lp <= report.z_round + 1e-9);
    assert!(report.gap_percent >= -1e-9);
    assert!(report.double_entry_ok, "double-entry reconciliation failed");
    assert!(artifacts.program.audit_nonanticipativity());
    assert!(artifacts.program.ir.max_violation(&artifacts.plan.values) <= FEASIBILITY_TOL);

    // The toy is sized for exact enumeration: modest integer dimensions.
    let free_integer_vars = artifacts
        .program
        .ir
        .vars
        .iter()
        .filter(|v| v.lower != v.upper)
        .count();
    assert!(
        free_integer_vars <= 30,
        "toy should stay tiny, got {free_integer_vars} free integer variables"
    );
}

#[test]
fn toy_demand_rows_match_two_bus_peak() {
    let bundle = preset("toy", None).unwrap();
    let artifacts = run_pipeline(&bundle.config, &bundle.network).unwrap();
    let demand_rhs: Vec<f64> = artifacts
        .program
        .ir
        .rows
        .iter()
        .filter(|r| matches!(r.tag, RowTag::Demand { .. }))
        .map(|r| r.rhs)
        .collect();
    assert!(!demand_rhs.is_empty());
    assert!(demand_rhs.iter().all(|&d| (d - 2.0).abs() < 1e-9));
}

#[test]
fn toy_sensitivity_directions_hold() {
    let bundle = preset("toy", None).unwrap();
    let base = run_pipeline(&bundle.config, &bundle.network).unwrap();
    for case in [SensitivityCase::RelaxedBudget, SensitivityCase::LowHydrogenPrice] {
        let s = run_sensitivity(&bundle.config, &bundle.network, &base.report, case).unwrap();
        assert!(
            s.pct_change <= 1e-9,
            "{}: optimum increased by {}%",
            s.case,
            s.pct_change
        );
    }
    // Budgets are already slack in the toy, so relaxing them changes nothing.
    let relaxed = run_sensitivity(
        &bundle.config,
        &bundle.network,
        &base.report,
        SensitivityCase::RelaxedBudget,
    )
    .unwrap();
    assert!(relaxed.pct_change.abs() < 1e-9);
}
