use zebplan_core::planner::{preset, run_pipeline};
use zebplan_core::solver::audit_plan_against_tree;

fn main() {
    let t0 = std::time::Instant::now();
    let det = preset("deterministic", None).unwrap();
    let det_run = run_pipeline(&det.config, &det.network).unwrap();
    println!(
        "deterministic: vars={} scen={} z_round={:.0} in {:.1}s",
        det_run.report.variables,
        det_run.report.scenario_count,
        det_run.report.z_round,
        t0.elapsed().as_secs_f64()
    );

    let t0 = std::time::Instant::now();
    let base = preset("base-synthetic", None).unwrap();
    let base_run = run_pipeline(&base.config, &base.network).unwrap();
    let r = &base_run.report;
    println!(
        "base-synthetic: vars={} rows={} nz={} scen={} z_lp={:.0} z_round={:.0} gap={:.4}% in {:.1}s",
        r.variables, r.rows, r.nonzeros, r.scenario_count, r.z_lp, r.z_round, r.gap_percent,
        t0.elapsed().as_secs_f64()
    );

    // Deterministic plan audited against the stochastic tree's budgets.
    let audit = audit_plan_against_tree(&det_run.plan, &det_run.program, &base_run.program, 1.0)
        .unwrap();
    println!(
        "audit: {} violated cells, {}/{} scenarios, probability {:.4}",
        audit.cells.len(),
        audit.violating_scenarios.len(),
        audit.scenario_count,
        audit.violation_probability
    );
}
