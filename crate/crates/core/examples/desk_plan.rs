//! Solves the built-in desk-scale instance both ways and prints the gains.

use std::time::Instant;

use chillplan_core::mdp::{build_lp, dp_oracle, extract_policy, solve_occupancy};
use chillplan_core::scenario::DeskInstance;

fn main() -> chillplan_core::Result<()> {
    let problem = DeskInstance::default().build()?;
    let started = Instant::now();
    let lp = build_lp(&problem)?;
    let occ = solve_occupancy(&lp)?;
    let lp_time = started.elapsed();
    let started = Instant::now();
    let dp = dp_oracle(&problem)?;
    let dp_time = started.elapsed();
    let policy = extract_policy(&problem, &occ)?;
    let res = occ.residuals(&problem)?;
    println!(
        "LP: {} vars, {} rows, objective {:.9} $/h in {:.2?} ({} iterations)",
        lp.program.num_vars(),
        lp.program.num_rows(),
        occ.objective,
        lp_time,
        occ.iterations
    );
    println!(
        "DP: gain {:.9} $/h in {:.2?} ({} sweeps)",
        dp.gain, dp_time, dp.sweeps
    );
    println!(
        "residuals: normalization {:.2e}, flow {:.2e}; fallback states {}",
        res.normalization,
        res.flow,
        policy.fallback_count()
    );
    for t in 0..problem.horizon() {
        let row: Vec<String> = (0..problem.grid().len())
            .map(|i| format!("{:.1}", policy.expected_action(t, i, 0)))
            .collect();
        println!("t={t:2} {}", row.join(" "));
    }
    Ok(())
}
