//! The `solve` and `policy` subcommands driven from code, writing into a
//! temporary directory.

use ruinopt::cli::main_with_args;

fn main() {
    let out = std::env::temp_dir().join("ruinopt-cli-pipeline");
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example1.cfg");
    let out_s = out.to_string_lossy().to_string();
    let code = main_with_args(["ruinopt", "solve", "--config", cfg, "--out-dir", &out_s]);
    println!("solve exit code {code}");
    let curve = out.join("curve.csv").to_string_lossy().to_string();
    let code = main_with_args(["ruinopt", "policy", "--config", cfg, "--out-dir", &out_s, "--curve", &curve]);
    println!("policy exit code {code}");
    print!("{}", std::fs::read_to_string(out.join("policy_points.csv")).unwrap_or_default());
}
