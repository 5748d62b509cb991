//! Monte Carlo survival under the optimal feedback against `V(x)/V(∞)`.

use ruinopt::exp_solver;
use ruinopt::simulator::{estimate_survival, FeedbackPolicy, Policy, SimConfig};
use ruinopt::{ClaimLaw, ModelParams};

fn main() -> ruinopt::Result<()> {
    let params = ModelParams::example1();
    let law = ClaimLaw::exponential(1.0);
    let curve = exp_solver::solve(&params, 1.0, &Default::default())?;
    let policy = Policy::Feedback(FeedbackPolicy::from_curve(&curve));
    let cfg = SimConfig {
        n_paths: 5_000,
        ..SimConfig::default()
    };
    let rep = estimate_survival(&[1.0, 5.0, 10.0], &policy, &params, &law, &cfg)?;
    for r in &rep.rows {
        println!(
            "x0 = {:>4}: p_hat = {:.4} ± {:.4}, V/V_inf = {:.4}",
            r.x0,
            r.p_hat,
            r.ci_half,
            curve.survival(r.x0)?
        );
    }
    Ok(())
}
