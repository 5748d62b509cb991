//! Uninvested surplus with `r = 0`: simulation against the closed-form
//! ruin probability `(λm/c) e^{-(1/m - λ/c)x}`.

use ruinopt::simulator::{estimate_survival, lundberg_ruin, Policy, SimConfig};
use ruinopt::{ClaimLaw, ModelParams};

fn main() -> ruinopt::Result<()> {
    let params = ModelParams {
        c: 0.2,
        r: 0.0,
        ..ModelParams::example1()
    };
    let law = ClaimLaw::exponential(1.0);
    let cfg = SimConfig {
        n_paths: 20_000,
        ..SimConfig::default()
    };
    let rep = estimate_survival(&[0.0, 1.0, 2.0, 5.0], &Policy::constant(0.0, "const(0)"), &params, &law, &cfg)?;
    for r in &rep.rows {
        let psi = lundberg_ruin(&params, 1.0, r.x0);
        println!("x0 = {}: ruin {:.4} ± {:.4}, exact {:.4}", r.x0, 1.0 - r.p_hat, r.ci_half, psi);
    }
    Ok(())
}
