use zebplan_core::planner::pipeline::build_model;
use zebplan_core::planner::preset;
use zebplan_core::solver::{solve_lp, MicrolpBackend};

fn main() {
    let det = preset("deterministic", None).unwrap();
    let model = build_model(&det.config, &det.network).unwrap();
    let lp = solve_lp(&model.program.ir, &MicrolpBackend).unwrap();
    println!("lp status {:?} obj {:.0}", lp.status, lp.objective);
    match zebplan_core::solver::round_plan(&lp, &model.program) {
        Ok(plan) => println!("rounded ok gap {:.4}", plan.gap_percent),
        Err(e) => {
            println!("round error: {e}");
            // Re-do the parts: assignments floor+bump, stocks, then list
            // violated rows.
        }
    }
    // Inspect LP budget utilization per (t, n).
    for (k, row) in model.program.ir.rows.iter().enumerate() {
        if let zebplan_core::program::RowTag::Budget { period, node } = row.tag {
            let lhs: f64 = row.terms.iter().map(|&(i, c)| c * lp.values[i]).sum();
            if lhs > row.rhs * 0.9 {
                println!(
                    "budget t={period} n={node}: lp spend {:.0} / {:.0} (row {k})",
                    lhs, row.rhs
                );
            }
        }
    }
}
