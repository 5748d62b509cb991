//! Solve Example 1 with exponential claims and print the regime structure.

use ruinopt::exp_solver::{self, SolveOptions};
use ruinopt::ModelParams;

fn main() -> ruinopt::Result<()> {
    let params = ModelParams::example1();
    let curve = exp_solver::solve(&params, 1.0, &SolveOptions::default())?;
    let seq: Vec<&str> = curve.regime_sequence().iter().map(|r| r.tag()).collect();
    println!("regimes      {}", seq.join(" -> "));
    for (i, s) in curve.switch_points.iter().enumerate() {
        println!("x{}           {:.10} ({} -> {})", i + 1, s.x, s.from.tag(), s.to.tag());
    }
    println!("V_inf        {:.9}", curve.v_inf);
    println!("nodes        {}", curve.nodes.len());
    for x in [0.0, 1.0, 5.0, 10.0, 20.0] {
        println!("delta({x:>4}) = {:.6}", curve.survival(x)?);
    }
    Ok(())
}
