use zebplan_core::planner::{preset, run_pipeline};

fn main() {

    for name in ["small", "medium"] {
        let t0 = std::time::Instant::now();
        let bundle = preset(name, None).unwrap();
        match run_pipeline(&bundle.config, &bundle.network) {
            Ok(a) => {
                let r = &a.report;
                println!(
                    "{name}: vars={} rows={} nz={} scen={} z_lp={:.0} z_round={:.0} gap={:.4}% repairs={} double_entry={} total={:.1}s stages={:?}",
                    r.variables, r.rows, r.nonzeros, r.scenario_count, r.z_lp, r.z_round,
                    r.gap_percent, r.repairs, r.double_entry_ok, t0.elapsed().as_secs_f64(), r.stage_seconds
                );
            }
            Err(e) => println!("{name}: ERROR {e}"),
        }
    }
}
