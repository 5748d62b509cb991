//! Optimal feedback against constant fractions on common random numbers.

use ruinopt::exp_solver;
use ruinopt::simulator::{compare_policies, FeedbackPolicy, Policy, SimConfig};
use ruinopt::{ClaimLaw, ModelParams};

fn main() -> ruinopt::Result<()> {
    let params = ModelParams::example1();
    let law = ClaimLaw::exponential(1.0);
    let curve = exp_solver::solve(&params, 1.0, &Default::default())?;
    let policies = [
        Policy::Feedback(FeedbackPolicy::from_curve(&curve)),
        Policy::constant(params.a, "const(a)"),
        Policy::constant(-params.b, "const(-b)"),
        Policy::constant(0.0, "const(0)"),
    ];
    let cfg = SimConfig {
        n_paths: 2_000,
        ..SimConfig::default()
    };
    let cmp = compare_policies(&[1.0, 5.0], &policies, &params, &law, &cfg)?;
    for r in &cmp.report.rows {
        println!("{:>10} x0 = {}: {:.4} ± {:.4}", r.policy, r.x0, r.p_hat, r.ci_half);
    }
    println!("feedback dominated: {}", cmp.reference_dominated());
    Ok(())
}
