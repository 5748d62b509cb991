//! Residual of the HJB equation, the switching-theorem table and C²
//! smoothness at the switch points.

use ruinopt::checks::{hjb_residual, smoothness, theorem_consistency};
use ruinopt::exp_solver::{self, third_order_check};
use ruinopt::{ClaimLaw, ModelParams};

fn main() -> ruinopt::Result<()> {
    let params = ModelParams::example1();
    let law = ClaimLaw::exponential(1.0);
    let curve = exp_solver::solve(&params, 1.0, &Default::default())?;
    let r = hjb_residual(&curve, &law, 64)?;
    println!("nodes {}: |L V|/(λV) ≤ {:.2e}, sup_θ L V/(λV) ≤ {:.2e}", r.nodes, r.max_at_optimum, r.max_over_theta);
    let t = theorem_consistency(&curve, 1e-6);
    println!("theorem table mismatches {}, sign violations {}", t.mismatches.len(), t.sign_violations.len());
    for s in smoothness(&curve) {
        println!("switch {} -> {} at {:.6}: V'' {:.6} | {:.6}, one-sided FD gap {:.1e}", s.from, s.to, s.x, s.vpp_left, s.vpp_right, s.mismatch);
    }
    for (i, seg) in curve.segments.iter().enumerate() {
        if seg.regime.gamma(&params).is_none() {
            continue;
        }
        let rep = third_order_check(&curve, i, &params, 1.0)?;
        println!("segment {} [{:.4}, {:.4}]: third-order deviation {:.2e}", rep.regime.tag(), rep.lo, rep.hi, rep.max_deviation);
    }
    Ok(())
}
