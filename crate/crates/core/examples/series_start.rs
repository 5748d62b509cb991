//! Power-series start at the origin: coefficients, handoff point and the
//! boundary values `V(0) = 1`, `V'(0+) = λ/c`.

use ruinopt::exp_solver::{best_series, series_eval};
use ruinopt::regime::start_regime;
use ruinopt::ModelParams;

fn main() -> ruinopt::Result<()> {
    let params = ModelParams::example1();
    let gamma = start_regime(&params).gamma(&params).expect("boundary regime");
    let (series, x_eps) = best_series(&params, 1.0, gamma)?;
    println!("start fraction {gamma}, order {}, handoff at {x_eps:.5}", series.order);
    for k in 1..=6 {
        println!("D{k} = {:+.6e}", series.d[k]);
    }
    for x in [0.0, x_eps / 2.0, x_eps] {
        let p = series_eval(&series, x);
        println!("x = {x:.5}: V = {:.12}  V' = {:.10}  V'' = {:.8}", p.v, p.vp, p.vpp);
    }
    Ok(())
}
