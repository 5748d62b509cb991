//! A non-exponential claim law (two-phase exponential mixture) solved by the
//! general-density march.

use ruinopt::general_solver::{self, GeneralOptions};
use ruinopt::{ClaimLaw, ModelParams};

fn main() -> ruinopt::Result<()> {
    let params = ModelParams::example1();
    let law = ClaimLaw::exp_mixture(&[0.5, 0.5], &[0.5, 1.5])?;
    let opts = GeneralOptions {
        x_max: Some(25.0),
        ..GeneralOptions::default()
    };
    let curve = general_solver::solve(&params, &law, &opts)?;
    let seq: Vec<&str> = curve.regime_sequence().iter().map(|r| r.tag()).collect();
    println!("{:?}", law);
    println!("regimes {}", seq.join(" -> "));
    for s in &curve.switch_points {
        println!("switch at {:.6} ({} -> {})", s.x, s.from.tag(), s.to.tag());
    }
    println!("near-zero handoff at {:.2e}, V_inf = {:.6}", curve.x_eps, curve.v_inf);
    Ok(())
}
