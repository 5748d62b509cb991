//! `ruinopt` command line: `solve`, `policy`, `simulate`, `verify`, `compare`.
//!
//! Every run writes `manifest.json` next to its CSV files; each CSV has a JSON
//! sidecar carrying the manifest's SHA-256. CSVs themselves hold data only,
//! so identical configurations and seeds give byte-identical CSVs.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{ClaimSpec, RunConfig};
use crate::curve::SolutionCurve;
use crate::error::{Error, Result};
use crate::exp_solver::{self, SolveOptions};
use crate::general_solver::{self, GeneralOptions};
use crate::model::{validate, ModelParams};
use crate::regime::{threshold_constants, Regime};
use crate::simulator::{
    compare_policies, estimate_survival, lundberg_ruin, FeedbackPolicy, Policy, SimConfig, SimulationReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ruinopt", version, about = "Minimal ruin probability with constrained investment")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the value function; writes curve.csv and curve.json.
    Solve(CommonArgs),
    /// Optimal fractions, switch points and thresholds; writes policy.csv.
    Policy(PolicyArgs),
    /// Monte Carlo survival under the optimal feedback; writes simulate.csv.
    Simulate(CommonArgs),
    /// V(x0)/V(inf) against Monte Carlo; writes verify.csv, exit 3 on failure.
    Verify(CommonArgs),
    /// Feedback against constant fractions; writes compare.csv.
    Compare(CommonArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CommonArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = SimConfig::default().seed)]
    pub seed: u64,
    /// Right end of the solution grid.
    #[arg(long)]
    pub xmax: Option<f64>,
    /// Relative tolerance of the integrator.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub n_paths: usize,
    /// Uninvested Lundberg check (r = 0 allowed, fraction fixed at 0).
    #[arg(long)]
    pub oracle_mode: bool,
    /// Worker threads for the simulator.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Initial surpluses, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PolicyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Read a curve.csv instead of solving.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: String,
    /// Canonical form of the parsed configuration.
    pub config: String,
    pub options: Value,
    pub out_dir: String,
    pub tool_version: String,
    pub seed: u64,
}

impl RunManifest {
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("manifest serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// What a subcommand produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub manifest_hash: String,
    /// `false` when `verify` found a failing row.
    pub verified: bool,
    pub warnings: Vec<String>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Validation(_) | Error::Config { .. } | Error::Io(_) | Error::Json(_) => EXIT_VALIDATION,
        _ => EXIT_SOLVER,
    }
}

/// Parse `args` and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match run(&cli.command) {
        Ok(out) => {
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            for f in &out.files {
                println!("{}", f.display());
            }
            if out.verified {
                EXIT_OK
            } else {
                eprintln!("verification failed");
                EXIT_VERIFY
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cmd: &Command) -> Result<RunOutcome> {
    match cmd {
        Command::Solve(a) => cmd_solve(a),
        Command::Policy(a) => cmd_policy(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Compare(a) => cmd_compare(a),
    }
}

struct Session {
    args: CommonArgs,
    cfg: RunConfig,
    manifest: RunManifest,
    hash: String,
    files: Vec<PathBuf>,
    warnings: Vec<String>,
}

impl Session {
    fn open(name: &str, args: &CommonArgs, options: Value) -> Result<Self> {
        let mut cfg = RunConfig::load(&args.config)?;
        cfg.oracle_mode |= args.oracle_mode;
        let law = cfg.claim.law()?;
        let report = validate(&cfg.params, &law, cfg.oracle_mode);
        let mut warnings = Vec::new();
        if report.cond51 == Some(false) {
            warnings.push("the curvature condition at 0 fails; V''(0+) is not positive".into());
        }
        report.into_result()?;
        let manifest = RunManifest {
            subcommand: name.into(),
            config_path: args.config.display().to_string(),
            config: cfg.to_text(),
            options: json!({ "common": args, "extra": options }),
            out_dir: args.out_dir.display().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: args.seed,
        };
        let hash = manifest.hash();
        fs::create_dir_all(&args.out_dir)?;
        let mut s = Self {
            args: args.clone(),
            cfg,
            manifest,
            hash,
            files: Vec::new(),
            warnings,
        };
        let m = serde_json::to_value(&s.manifest)?;
        s.write_json("manifest.json", json!({ "manifest": m, "manifest_hash": s.hash }))?;
        Ok(s)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.args.out_dir.join(name)
    }

    fn write_with<F: FnOnce(&mut BufWriter<File>) -> Result<()>>(&mut self, name: &str, f: F) -> Result<()> {
        let p = self.path(name);
        let mut w = BufWriter::new(File::create(&p)?);
        f(&mut w)?;
        w.flush()?;
        self.files.push(p);
        Ok(())
    }

    fn write_json(&mut self, name: &str, mut v: Value) -> Result<()> {
        if let Value::Object(m) = &mut v {
            m.entry("manifest_hash").or_insert_with(|| json!(self.hash));
        }
        let text = serde_json::to_string_pretty(&v)?;
        self.write_with(name, |w| Ok(writeln!(w, "{text}")?))
    }

    fn solve(&mut self) -> Result<SolutionCurve> {
        let params = self.cfg.params;
        self.solve_params(&params)
    }

    fn solve_params(&mut self, params: &ModelParams) -> Result<SolutionCurve> {
        let res = solve_curve(params, &self.cfg.claim, self.args.xmax, self.args.tol);
        if let Err(e) = &res {
            let d = json!({ "error": e.to_string(), "params": params, "claim": self.cfg.claim });
            self.write_json("diagnostics.json", d)?;
        }
        let curve = res?;
        self.warnings.extend(curve.warnings.iter().cloned());
        Ok(curve)
    }

    fn sim_config(&self) -> SimConfig {
        SimConfig {
            n_paths: self.args.n_paths,
            seed: self.args.seed,
            threads: self.args.threads,
            ..SimConfig::default()
        }
    }

    fn x0s(&self) -> Vec<f64> {
        self.args
            .x0
            .clone()
            .or_else(|| self.cfg.x0.clone())
            .unwrap_or_else(|| {
                if self.cfg.oracle_mode {
                    vec![0.0, 1.0, 2.0, 5.0]
                } else {
                    vec![1.0, 5.0, 10.0]
                }
            })
    }

    fn finish(self, verified: bool) -> RunOutcome {
        RunOutcome {
            files: self.files,
            manifest_hash: self.hash,
            verified,
            warnings: self.warnings,
        }
    }
}

/// Exponential claims go to the series/ODE solver, others to the general one.
pub fn solve_curve(params: &ModelParams, claim: &ClaimSpec, xmax: Option<f64>, tol: Option<f64>) -> Result<SolutionCurve> {
    match claim {
        ClaimSpec::Exponential { mean } => {
            let mut o = SolveOptions {
                x_max: xmax,
                ..SolveOptions::default()
            };
            if let Some(t) = tol {
                o.rtol = t;
            }
            exp_solver::solve(params, *mean, &o)
        }
        ClaimSpec::ExpMixture { .. } => {
            let mut o = GeneralOptions {
                x_max: xmax,
                ..GeneralOptions::default()
            };
            if let Some(t) = tol {
                o.rtol = t;
            }
            general_solver::solve(params, &claim.law()?, &o)
        }
    }
}

fn fmt_nan(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

fn write_report(s: &mut Session, name: &str, rep: &SimulationReport) -> Result<()> {
    s.write_with(name, |w| rep.write_csv(w))
}

pub fn cmd_solve(args: &CommonArgs) -> Result<RunOutcome> {
    let mut s = Session::open("solve", args, Value::Null)?;
    let curve = s.solve()?;
    s.write_with("curve.csv", |w| curve.write_csv(w))?;
    let seq: Vec<&str> = curve.regime_sequence().iter().map(|r| r.tag()).collect();
    let meta = json!({
        "method": curve.method,
        "claim": curve.claim,
        "params": curve.params,
        "regime_sequence": seq,
        "segments": curve.segments,
        "switch_points": curve.switch_points,
        "v_inf": curve.v_inf,
        "tail": curve.tail,
        "x_eps": curve.x_eps,
        "series_order": curve.series_order,
        "x_max": curve.x_max(),
        "nodes": curve.nodes.len(),
        "warnings": curve.warnings,
    });
    s.write_json("curve.json", meta)?;
    Ok(s.finish(true))
}

pub fn cmd_policy(pargs: &PolicyArgs) -> Result<RunOutcome> {
    let extra = json!({ "curve": pargs.curve });
    let mut s = Session::open("policy", &pargs.common, extra)?;
    let params = s.cfg.params;
    // (x, phi, theta text, regime)
    let rows: Vec<(f64, f64, String, Regime)> = match &pargs.curve {
        Some(path) => SolutionCurve::read_csv(BufReader::new(File::open(path)?))?
            .into_iter()
            .map(|r| (r.x, r.phi, r.theta_star, r.regime))
            .collect(),
        None => s
            .solve()?
            .nodes
            .iter()
            .map(|n| (n.x, n.phi, n.theta_star.to_string(), n.regime))
            .collect(),
    };
    s.write_with("policy.csv", |w| {
        writeln!(w, "x,phi,theta_star,regime")?;
        for (x, phi, t, reg) in &rows {
            writeln!(w, "{x},{},{t},{}", fmt_nan(*phi), reg.tag())?;
        }
        Ok(())
    })?;
    let switches: Vec<(f64, Regime, Regime)> = rows
        .windows(2)
        .filter(|p| p[0].3 != p[1].3)
        .map(|p| (p[1].0, p[0].3, p[1].3))
        .collect();
    let thresholds = threshold_constants(&params);
    s.write_with("policy_points.csv", |w| {
        writeln!(w, "kind,name,value,from,to")?;
        for (i, (x, from, to)) in switches.iter().enumerate() {
            writeln!(w, "switch,x{},{x},{},{}", i + 1, from.tag(), to.tag())?;
        }
        for (name, v) in &thresholds {
            writeln!(w, "threshold,{name},{v},,")?;
        }
        Ok(())
    })?;
    let meta = json!({
        "switch_points": switches.iter().map(|(x, f, t)| json!({"x": x, "from": f.tag(), "to": t.tag()})).collect::<Vec<_>>(),
        "thresholds": thresholds.iter().map(|(n, v)| json!({"name": n, "value": v})).collect::<Vec<_>>(),
        "rows": rows.len(),
    });
    s.write_json("policy.json", meta)?;
    Ok(s.finish(true))
}

fn primary_policy(s: &mut Session) -> Result<(Policy, Option<SolutionCurve>)> {
    if s.cfg.oracle_mode {
        Ok((Policy::constant(0.0, "const(0)"), None))
    } else {
        let curve = s.solve()?;
        Ok((Policy::Feedback(FeedbackPolicy::from_curve(&curve)), Some(curve)))
    }
}

pub fn cmd_simulate(args: &CommonArgs) -> Result<RunOutcome> {
    let mut s = Session::open("simulate", args, Value::Null)?;
    let (policy, _) = primary_policy(&mut s)?;
    let law = s.cfg.claim.law()?;
    let rep = estimate_survival(&s.x0s(), &policy, &s.cfg.params, &law, &s.sim_config())?;
    s.warnings.extend(rep.warnings.iter().cloned());
    write_report(&mut s, "simulate.csv", &rep)?;
    s.write_json("simulate.json", serde_json::to_value(&rep)?)?;
    Ok(s.finish(true))
}

#[derive(Debug, Clone, Serialize)]
struct VerifyRow {
    x0: f64,
    target: f64,
    p_hat: f64,
    ci_half: f64,
    diff: f64,
    pass: bool,
}

pub fn cmd_verify(args: &CommonArgs) -> Result<RunOutcome> {
    let mut s = Session::open("verify", args, Value::Null)?;
    let (policy, curve) = primary_policy(&mut s)?;
    let law = s.cfg.claim.law()?;
    let params = s.cfg.params;
    let rep = estimate_survival(&s.x0s(), &policy, &params, &law, &s.sim_config())?;
    s.warnings.extend(rep.warnings.iter().cloned());
    let mut rows = Vec::new();
    for r in &rep.rows {
        let target = match &curve {
            Some(c) => c.survival(r.x0)?,
            None => 1.0 - lundberg_ruin(&params, law.mean(), r.x0),
        };
        let diff = r.p_hat - target;
        rows.push(VerifyRow {
            x0: r.x0,
            target,
            p_hat: r.p_hat,
            ci_half: r.ci_half,
            diff,
            pass: diff.abs() <= 2.0 * r.ci_half,
        });
    }
    s.write_with("verify.csv", |w| {
        writeln!(w, "x0,target,p_hat,ci_half,diff,pass")?;
        for r in &rows {
            writeln!(w, "{},{},{},{},{},{}", r.x0, r.target, r.p_hat, r.ci_half, r.diff, r.pass)?;
        }
        Ok(())
    })?;
    let ok = rows.iter().all(|r| r.pass);
    let meta = json!({
        "target": if curve.is_some() { "V(x0)/V_inf" } else { "1 - Lundberg ruin probability" },
        "rows": rows,
        "all_pass": ok,
        "simulation": rep,
    });
    s.write_json("verify.json", meta)?;
    Ok(s.finish(ok))
}

pub fn cmd_compare(args: &CommonArgs) -> Result<RunOutcome> {
    let mut s = Session::open("compare", args, Value::Null)?;
    let params = s.cfg.params;
    let law = s.cfg.claim.law()?;
    let mut policies = Vec::new();
    let mut notes = Vec::new();
    if s.cfg.oracle_mode {
        policies.push(Policy::constant(0.0, "const(0)"));
    } else {
        let curve = s.solve()?;
        policies.push(Policy::Feedback(FeedbackPolicy::from_curve(&curve)));
        policies.push(Policy::constant(params.a, "const(a)"));
        policies.push(Policy::constant(-params.b, "const(-b)"));
        policies.push(Policy::constant(0.0, "const(0)"));
        let cap = params.a.min(1.0);
        policies.push(Policy::Feedback(FeedbackPolicy::clamped(&curve, 0.0, cap, "feedback_clamped_0_min(a;1)")));
        let proxy = ModelParams { a: cap, b: 1e-3, ..params };
        match s.solve_params(&proxy) {
            Ok(c) => policies.push(Policy::Feedback(FeedbackPolicy::from_curve(&c).relabel("resolved_a_min(a;1)_b_1e-3"))),
            Err(e) => notes.push(format!("re-solved no-short proxy (a = {cap}, b = 1e-3) failed: {e}")),
        }
    }
    let cmp = compare_policies(&s.x0s(), &policies, &params, &law, &s.sim_config())?;
    s.warnings.extend(cmp.report.warnings.iter().cloned());
    s.warnings.extend(notes.iter().cloned());
    write_report(&mut s, "compare.csv", &cmp.report)?;
    s.write_with("compare_dominance.csv", |w| {
        writeln!(w, "x0,reference,other,diff,gate,dominated")?;
        for d in &cmp.dominance {
            writeln!(w, "{},{},{},{},{},{}", d.x0, d.reference, d.other, d.diff, d.gate, d.dominated)?;
        }
        Ok(())
    })?;
    let meta = json!({
        "policies": policies.iter().map(|p| p.label()).collect::<Vec<_>>(),
        "reference_dominated": cmp.reference_dominated(),
        "dominance": cmp.dominance,
        "notes": notes,
        "simulation": cmp.report,
    });
    s.write_json("compare.json", meta)?;
    Ok(s.finish(true))
}

