//! Optimal fraction `θ*(x)` and the threshold constants of each example.

use ruinopt::exp_solver;
use ruinopt::regime::threshold_constants;
use ruinopt::ModelParams;

fn main() -> ruinopt::Result<()> {
    for (name, params) in [
        ("example 1", ModelParams::example1()),
        ("example 2", ModelParams::example2()),
        ("example 3", ModelParams::example3()),
    ] {
        let curve = exp_solver::solve(&params, 1.0, &Default::default())?;
        println!("{name}");
        for (label, v) in threshold_constants(&params) {
            println!("  {label:>12} = {v:.6}");
        }
        let nodes = curve.distinct_nodes();
        for x in [0.01, 0.5, 2.0, 4.0, 8.0, 20.0] {
            let n = nodes[nodes.partition_point(|n| n.x < x).min(nodes.len() - 1)];
            println!("  x = {:>8.4}  phi = {:>10.4}  theta* = {:>9.4}  {}", n.x, n.phi, n.theta_star, n.regime.tag());
        }
    }
    Ok(())
}
