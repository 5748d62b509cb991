//! Monte Carlo of the controlled surplus
//! `dX = [c + rX + (μ - r)θX] dt + σθX dB - dS` under feedback fractions.
//!
//! Claim epochs are sampled exactly; between them the diffusion is stepped
//! with `θ` frozen per step on a dyadic grid of one keyed Brownian path.
//! Claims come from a ChaCha stream keyed by `(seed, x0 index, path index)`,
//! so every policy and every step size sees the same random inputs.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::SolutionCurve;
use crate::error::{Error, Result};
use crate::model::{ClaimLaw, ModelParams};

/// Feedback fraction `θ(x)` interpolated from a curve's `θ*` column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackPolicy {
    pub label: String,
    xs: Vec<f64>,
    thetas: Vec<f64>,
    lo: f64,
    hi: f64,
    /// `start[k]`: last node index with `x ≤ k·width`.
    start: Vec<u32>,
    inv_width: f64,
}

impl FeedbackPolicy {
    /// `θ*` of the curve, clamped to `[-b, a]`.
    pub fn from_curve(curve: &SolutionCurve) -> Self {
        let p = &curve.params;
        Self::clamped(curve, -p.b, p.a, "feedback")
    }

    /// `θ*` of the curve clamped to `[lo, hi]`.
    pub fn clamped(curve: &SolutionCurve, lo: f64, hi: f64, label: &str) -> Self {
        let nodes = curve.distinct_nodes();
        let xs: Vec<f64> = nodes.iter().map(|n| n.x).collect();
        let n = xs.len();
        let inv_width = n as f64 / (xs[n - 1] - xs[0]).max(f64::MIN_POSITIVE);
        let start = (0..=n)
            .map(|k| {
                let x = xs[0] + k as f64 / inv_width;
                (xs.partition_point(|&v| v <= x).max(1) - 1) as u32
            })
            .collect();
        Self {
            label: label.into(),
            xs,
            thetas: nodes.iter().map(|n| n.theta_star).collect(),
            lo,
            hi,
            start,
            inv_width,
        }
    }

    pub fn relabel(mut self, label: &str) -> Self {
        self.label = label.into();
        self
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let t = if x <= self.xs[0] {
            self.thetas[0]
        } else if x >= self.xs[n - 1] {
            self.thetas[n - 1]
        } else {
            let mut i = self.start[((x - self.xs[0]) * self.inv_width) as usize] as usize;
            while self.xs[i + 1] <= x {
                i += 1;
            }
            while self.xs[i] > x {
                i -= 1;
            }
            let w = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
            self.thetas[i] + w * (self.thetas[i + 1] - self.thetas[i])
        };
        t.clamp(self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Policy {
    Constant { theta: f64, label: String },
    Feedback(FeedbackPolicy),
}

impl Policy {
    pub fn constant(theta: f64, label: impl Into<String>) -> Self {
        Policy::Constant {
            theta,
            label: label.into(),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Policy::Constant { label, .. } => label,
            Policy::Feedback(f) => &f.label,
        }
    }

    #[inline]
    pub fn theta(&self, x: f64) -> f64 {
        match self {
            Policy::Constant { theta, .. } => *theta,
            Policy::Feedback(f) => f.eval(x),
        }
    }

    /// Whether every emitted fraction lies in `[-b, a]`.
    pub fn is_admissible(&self, params: &ModelParams) -> bool {
        match self {
            Policy::Constant { theta, .. } => params.admissible(*theta),
            Policy::Feedback(f) => f.lo >= -params.b && f.hi <= params.a,
        }
    }
}

/// Time stepping between claims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Exact geometric factor over the step, premium by the trapezoid rule.
    LogEuler,
    /// Plain Euler–Maruyama.
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    /// Time horizon; default `400/λ`.
    pub horizon: Option<f64>,
    /// Surplus treated as certain survival; default `50·max x0`.
    pub upper_barrier: Option<f64>,
    /// Largest time step; default `0.01/λ`.
    pub euler_dt: Option<f64>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub scheme: Scheme,
    /// Cap on the log-variance `σ²θ²h` of a single step.
    pub max_step_variance: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            horizon: None,
            upper_barrier: None,
            euler_dt: None,
            seed: 20_240_601,
            threads: None,
            scheme: Scheme::LogEuler,
            max_step_variance: 0.01,
        }
    }
}

/// Configuration with every default filled in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSim {
    pub n_paths: usize,
    pub horizon: f64,
    pub upper_barrier: f64,
    pub euler_dt: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub max_step_variance: f64,
}

impl SimConfig {
    pub fn resolve(&self, params: &ModelParams, x0s: &[f64]) -> Result<ResolvedSim> {
        let x_top = x0s.iter().cloned().fold(0.0, f64::max);
        let r = ResolvedSim {
            n_paths: self.n_paths,
            horizon: self.horizon.unwrap_or(400.0 / params.lambda),
            upper_barrier: self.upper_barrier.unwrap_or(50.0 * x_top.max(1.0)),
            euler_dt: self.euler_dt.unwrap_or(0.01 / params.lambda),
            seed: self.seed,
            scheme: self.scheme,
            max_step_variance: self.max_step_variance,
        };
        let mut v = Vec::new();
        if !(r.euler_dt > 0.0 && r.euler_dt <= 0.01 / params.lambda * (1.0 + 1e-12)) {
            v.push(format!("euler_dt must lie in (0, 0.01/lambda] (got {})", r.euler_dt));
        }
        if !(r.upper_barrier >= 10.0 * x_top) {
            v.push(format!(
                "upper barrier {} must be at least 10 x the largest initial surplus {x_top}",
                r.upper_barrier
            ));
        }
        if !(r.max_step_variance > 0.0) {
            v.push(format!("max_step_variance must be positive (got {})", r.max_step_variance));
        }
        if !(r.horizon > 0.0) {
            v.push(format!("horizon must be positive (got {})", r.horizon));
        }
        if let Some(x) = x0s.iter().find(|x| !(**x >= 0.0)) {
            v.push(format!("initial surplus must be non-negative (got {x})"));
        }
        if v.is_empty() {
            Ok(r)
        } else {
            Err(Error::Validation(v))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PathOutcome {
    /// Surplus went negative at time `t`; `at_claim` tells whether a claim
    /// or the diffusion caused it.
    Ruin { t: f64, at_claim: bool },
    SurviveBarrier { t: f64 },
    Censored,
}

/// Splitmix64 finaliser.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splitmix64 generator; a handful of draws per Brownian node.
struct KeyedStream(u64);

impl RngCore for KeyedStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        mix(self.0)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let b = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&b[..chunk.len()]);
        }
    }
}

/// Depth of the dyadic Brownian tree below a base cell.
pub const TREE_DEPTH: u32 = 24;

/// A Brownian path built by dyadic midpoint refinement of base cells of
/// length `base`. Every node's normal is a pure function of the path key and
/// the node position, so runs with different step sizes query the same path.
pub struct BrownianPath {
    key: u64,
    base: f64,
    tick: f64,
    /// `(cell, increment over the cell)` of the current base cell.
    cell: Option<(u64, f64)>,
    /// Per level: `(cell, parent index, left-half increment)`.
    memo: Vec<Option<(u64, u64, f64)>>,
}

impl BrownianPath {
    pub fn new(key: u64, base: f64) -> Self {
        Self {
            key,
            base,
            tick: base / (1u64 << TREE_DEPTH) as f64,
            cell: None,
            memo: vec![None; TREE_DEPTH as usize + 1],
        }
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    fn normal(&self, level: u32, cell: u64, index: u64) -> f64 {
        let h = mix(mix(self.key ^ mix(cell)) ^ ((level as u64) << 40 | index));
        StandardNormal.sample(&mut KeyedStream(h))
    }

    fn cell_increment(&mut self, cell: u64) -> f64 {
        match self.cell {
            Some((c, d)) if c == cell => d,
            _ => {
                let d = self.base.sqrt() * self.normal(0, cell, 0);
                self.cell = Some((cell, d));
                d
            }
        }
    }

    /// Increment of the left half of node `parent` at `level - 1`, whose
    /// own increment is `d`.
    fn left(&mut self, level: u32, cell: u64, parent: u64, d: f64) -> f64 {
        if let Some((c, p, l)) = self.memo[level as usize] {
            if c == cell && p == parent {
                return l;
            }
        }
        let half_len = self.base / (1u64 << level) as f64;
        let l = 0.5 * d + (0.5 * half_len).sqrt() * self.normal(level, cell, parent);
        self.memo[level as usize] = Some((cell, parent, l));
        l
    }

    /// `W(cell·base + (s + frac)·tick) - W(cell·base)` for `s ≤ 2^depth`.
    fn within(&mut self, cell: u64, s: u64, frac: f64) -> f64 {
        let d0 = self.cell_increment(cell);
        if s >= 1u64 << TREE_DEPTH {
            return d0;
        }
        let (mut w, mut d) = (0.0, d0);
        for level in 1..=TREE_DEPTH {
            let shift = TREE_DEPTH - level;
            if frac == 0.0 && s & ((2u64 << shift) - 1) == 0 {
                return w;
            }
            let parent = s >> (shift + 1);
            let l = self.left(level, cell, parent, d);
            if (s >> shift) & 1 == 1 {
                w += l;
                d -= l;
            } else {
                d = l;
            }
        }
        w + frac * d
    }
}

/// A point on the time axis tied to a base cell of a [`BrownianPath`].
#[derive(Debug, Clone, Copy)]
struct Mark {
    cell: u64,
    tick: u64,
    frac: f64,
}

impl Mark {
    fn at_time(t: f64, w: &BrownianPath) -> Self {
        let u = t / w.tick;
        let k = u.floor();
        let frac = (u - k).clamp(0.0, 1.0);
        let k = k as u64;
        Self {
            cell: k >> TREE_DEPTH,
            tick: k & ((1u64 << TREE_DEPTH) - 1),
            frac,
        }
    }

    fn time(&self, w: &BrownianPath) -> f64 {
        (((self.cell << TREE_DEPTH) + self.tick) as f64 + self.frac) * w.tick
    }

    /// Next grid point of spacing `2^-level` base cells, as seen from this
    /// mark's cell (so a cell end is tick `2^depth` of the same cell).
    fn next_grid(&self, level: u32) -> Self {
        let g = 1u64 << (TREE_DEPTH - level);
        Self {
            cell: self.cell,
            tick: (self.tick / g + 1) * g,
            frac: 0.0,
        }
    }

    /// Same instant, expressed in the following cell when at a cell end.
    fn normalised(self) -> Self {
        if self.tick >= 1u64 << TREE_DEPTH {
            Self {
                cell: self.cell + 1,
                tick: 0,
                frac: self.frac,
            }
        } else {
            self
        }
    }
}

/// Random inputs of one path: a ChaCha stream for claim epochs and sizes,
/// and a keyed Brownian path. Both depend only on `(seed, x0 index, path)`.
pub struct PathRngs {
    pub claims: ChaCha8Rng,
    pub brownian: BrownianPath,
}

impl PathRngs {
    pub fn new(seed: u64, ix0: usize, path: usize, base: f64) -> Self {
        let z = mix(seed ^ mix((ix0 as u64) ^ mix(path as u64)));
        let mut claims = ChaCha8Rng::seed_from_u64(z);
        claims.set_stream(0);
        Self {
            claims,
            brownian: BrownianPath::new(mix(z ^ 0x5EED), base),
        }
    }
}

/// Advance `x` over `h` with fraction `theta` and Brownian increment `dw`.
#[inline]
fn advance(x: f64, theta: f64, h: f64, dw: f64, params: &ModelParams, scheme: Scheme) -> f64 {
    let c = params.c;
    let drift = params.r + params.excess_return() * theta;
    let vol = params.sigma * theta;
    if vol == 0.0 {
        return if drift == 0.0 {
            x + c * h
        } else {
            x * (drift * h).exp() + c * (drift * h).exp_m1() / drift
        };
    }
    match scheme {
        Scheme::LogEuler => {
            let phi = ((drift - 0.5 * vol * vol) * h + vol * dw).exp();
            phi * x + 0.5 * c * h * (1.0 + phi)
        }
        Scheme::Euler => x + (c + drift * x) * h + vol * x * dw,
    }
}

/// Coarsest tree level whose spacing does not exceed `h`.
fn level_for(h: f64, base: f64) -> u32 {
    let mut level = 0;
    while level < TREE_DEPTH && base / (1u64 << level) as f64 > h * (1.0 + 1e-12) {
        level += 1;
    }
    level
}

/// One trajectory from `x0`.
pub fn simulate_path(
    x0: f64,
    policy: &Policy,
    params: &ModelParams,
    law: &ClaimLaw,
    cfg: &ResolvedSim,
    rngs: &mut PathRngs,
) -> Result<PathOutcome> {
    if !(x0 >= 0.0) {
        return Err(Error::Contract(format!("initial surplus must be non-negative (got {x0})")));
    }
    let mut x = x0;
    let mut t = 0.0;
    if x >= cfg.upper_barrier {
        return Ok(PathOutcome::SurviveBarrier { t });
    }
    let dt_level = level_for(cfg.euler_dt, rngs.brownian.base());
    // current mark and W relative to the start of its cell, when known
    let mut here = Mark::at_time(0.0, &rngs.brownian);
    let mut w_here: Option<f64> = None;
    loop {
        let wait: f64 = Exp1.sample(&mut rngs.claims);
        let t_claim = t + wait / params.lambda;
        let t_stop = t_claim.min(cfg.horizon);
        while t < t_stop {
            let theta = policy.theta(x);
            debug_assert!(params.admissible(theta) || !policy.is_admissible(params));
            let vol = params.sigma * theta;
            if vol == 0.0 {
                // deterministic growth to the next event
                x = advance(x, theta, t_stop - t, 0.0, params, cfg.scheme);
                t = t_stop;
                here = Mark::at_time(t, &rngs.brownian);
                w_here = None;
            } else {
                let level = dt_level.max(level_for(cfg.max_step_variance / (vol * vol), rngs.brownian.base()));
                let grid = here.next_grid(level);
                let t_grid = grid.time(&rngs.brownian);
                let (next, t_next) = if t_grid < t_stop {
                    (grid, t_grid)
                } else {
                    let m = Mark::at_time(t_stop, &rngs.brownian);
                    // a stop time that rounds into the next cell ends this one
                    let m = if m.cell > here.cell { grid } else { m };
                    (m, t_stop)
                };
                let w0 = match w_here {
                    Some(w) => w,
                    None => rngs.brownian.within(here.cell, here.tick, here.frac),
                };
                let w1 = rngs.brownian.within(next.cell, next.tick, next.frac);
                x = advance(x, theta, t_next - t, w1 - w0, params, cfg.scheme);
                t = t_next;
                let n = next.normalised();
                w_here = if n.cell == next.cell { Some(w1) } else { Some(0.0) };
                here = n;
                if x < 0.0 {
                    return Ok(PathOutcome::Ruin { t, at_claim: false });
                }
            }
            if x >= cfg.upper_barrier {
                return Ok(PathOutcome::SurviveBarrier { t });
            }
        }
        if t_claim >= cfg.horizon {
            return Ok(PathOutcome::Censored);
        }
        x -= law.sample(&mut rngs.claims);
        if x < 0.0 {
            return Ok(PathOutcome::Ruin { t, at_claim: true });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub x0: f64,
    pub policy: String,
    /// Estimated survival probability.
    pub p_hat: f64,
    /// `1.96·sqrt(p(1 - p)/n)`.
    pub ci_half: f64,
    pub n: usize,
    pub censored_frac: f64,
    /// Fraction of ruins caused by the diffusion rather than a claim.
    pub ruin_between_claims_frac: f64,
}

pub const REPORT_CSV_HEADER: &str = "x0,policy,p_hat,ci_half,n,censored_frac";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub rows: Vec<SimRow>,
    pub config: Option<ResolvedSim>,
    pub warnings: Vec<String>,
}

impl SimulationReport {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{REPORT_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.x0, r.policy, r.p_hat, r.ci_half, r.n, r.censored_frac
            )?;
        }
        Ok(())
    }
}

pub fn ci_half_width(p: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        _ => Ok(f()),
    }
}

#[derive(Default, Clone, Copy)]
struct Tally {
    survive: usize,
    censored: usize,
    ruin: usize,
    ruin_diffusion: usize,
}

impl Tally {
    fn merge(self, o: Tally) -> Tally {
        Tally {
            survive: self.survive + o.survive,
            censored: self.censored + o.censored,
            ruin: self.ruin + o.ruin,
            ruin_diffusion: self.ruin_diffusion + o.ruin_diffusion,
        }
    }
}

fn run_rows(
    x0s: &[f64],
    policy: &Policy,
    params: &ModelParams,
    law: &ClaimLaw,
    cfg: &ResolvedSim,
) -> Result<Vec<SimRow>> {
    let mut rows = Vec::with_capacity(x0s.len());
    for (ix, &x0) in x0s.iter().enumerate() {
        let tally = (0..cfg.n_paths)
            .into_par_iter()
            .map(|path| {
                let mut rngs = PathRngs::new(cfg.seed, ix, path, 0.01 / params.lambda);
                let out = simulate_path(x0, policy, params, law, cfg, &mut rngs)?;
                Ok::<Tally, Error>(match out {
                    PathOutcome::Ruin { at_claim, .. } => Tally {
                        ruin: 1,
                        ruin_diffusion: usize::from(!at_claim),
                        ..Tally::default()
                    },
                    PathOutcome::SurviveBarrier { .. } => Tally {
                        survive: 1,
                        ..Tally::default()
                    },
                    PathOutcome::Censored => Tally {
                        survive: 1,
                        censored: 1,
                        ..Tally::default()
                    },
                })
            })
            .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;
        let n = cfg.n_paths;
        let p = tally.survive as f64 / n as f64;
        rows.push(SimRow {
            x0,
            policy: policy.label().to_string(),
            p_hat: p,
            ci_half: ci_half_width(p, n),
            n,
            censored_frac: tally.censored as f64 / n as f64,
            ruin_between_claims_frac: if tally.ruin == 0 {
                0.0
            } else {
                tally.ruin_diffusion as f64 / tally.ruin as f64
            },
        });
    }
    Ok(rows)
}

fn censor_warnings(rows: &[SimRow]) -> Vec<String> {
    rows.iter()
        .filter(|r| r.censored_frac > 0.05)
        .map(|r| {
            format!(
                "{}: {:.1}% of paths from x0 = {} hit the horizon; increase the horizon or the barrier \
                 (censored paths count as survivals, biasing p_hat upward)",
                r.policy,
                100.0 * r.censored_frac,
                r.x0
            )
        })
        .collect()
}

/// Survival estimates at each `x0`. Censored paths count as survivals.
pub fn estimate_survival(
    x0s: &[f64],
    policy: &Policy,
    params: &ModelParams,
    law: &ClaimLaw,
    config: &SimConfig,
) -> Result<SimulationReport> {
    if config.n_paths == 0 || x0s.is_empty() {
        return Ok(SimulationReport {
            rows: Vec::new(),
            config: None,
            warnings: Vec::new(),
        });
    }
    let cfg = config.resolve(params, x0s)?;
    let rows = in_pool(config.threads, || run_rows(x0s, policy, params, law, &cfg))??;
    let warnings = censor_warnings(&rows);
    Ok(SimulationReport {
        rows,
        config: Some(cfg),
        warnings,
    })
}

/// A pairwise dominance check against the first (reference) policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceRow {
    pub x0: f64,
    pub reference: String,
    pub other: String,
    /// `p_other - p_reference`.
    pub diff: f64,
    /// `2·sqrt(ci_ref² + ci_other²)`.
    pub gate: f64,
    /// `diff > gate`.
    pub dominated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub report: SimulationReport,
    pub dominance: Vec<DominanceRow>,
}

impl ComparisonReport {
    pub fn reference_dominated(&self) -> bool {
        self.dominance.iter().any(|d| d.dominated)
    }
}

/// Run every policy on common random numbers and check that the first one
/// is not beaten beyond two combined confidence half-widths.
pub fn compare_policies(
    x0s: &[f64],
    policies: &[Policy],
    params: &ModelParams,
    law: &ClaimLaw,
    config: &SimConfig,
) -> Result<ComparisonReport> {
    if policies.is_empty() {
        return Err(Error::Contract("no policies to compare".into()));
    }
    let mut rows = Vec::new();
    let mut resolved = None;
    for pol in policies {
        let r = estimate_survival(x0s, pol, params, law, config)?;
        resolved = resolved.or(r.config);
        rows.extend(r.rows);
    }
    let mut dominance = Vec::new();
    let k = x0s.len();
    for (pi, pol) in policies.iter().enumerate().skip(1) {
        for i in 0..k {
            let (a, b) = (&rows[i], &rows[pi * k + i]);
            let diff = b.p_hat - a.p_hat;
            let gate = 2.0 * (a.ci_half.powi(2) + b.ci_half.powi(2)).sqrt();
            dominance.push(DominanceRow {
                x0: x0s[i],
                reference: policies[0].label().to_string(),
                other: pol.label().to_string(),
                diff,
                gate,
                dominated: diff > gate,
            });
        }
    }
    let warnings = censor_warnings(&rows);
    Ok(ComparisonReport {
        report: SimulationReport {
            rows,
            config: resolved,
            warnings,
        },
        dominance,
    })
}

/// Ruin probability of the uninvested model with exponential claims,
/// `ψ(x) = (λm/c) e^{-(1/m - λ/c)x}`.
pub fn lundberg_ruin(params: &ModelParams, mean: f64, x: f64) -> f64 {
    let rho = params.lambda * mean / params.c;
    rho * (-(1.0 / mean - params.lambda / params.c) * x).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle() -> ModelParams {
        ModelParams {
            c: 0.2,
            lambda: 0.09,
            r: 0.0,
            ..ModelParams::example1()
        }
    }

    #[test]
    fn lundberg_closed_form() {
        let p = oracle();
        assert!((lundberg_ruin(&p, 1.0, 0.0) - 0.45).abs() < 1e-15);
        assert!((1.0 - lundberg_ruin(&p, 1.0, 2.0) - 0.850_2).abs() < 1e-4);
    }

    #[test]
    fn bucketed_lookup_matches_bisection() {
        let p = ModelParams::example1();
        let c = crate::exp_solver::solve(&p, 1.0, &Default::default()).unwrap();
        let f = FeedbackPolicy::from_curve(&c);
        for k in 0..20_000 {
            let x = 1e-7 * 1.001f64.powi(k);
            if x >= c.x_max() {
                break;
            }
            let i = f.xs.partition_point(|&v| v <= x) - 1;
            let w = (x - f.xs[i]) / (f.xs[i + 1] - f.xs[i]);
            let want = (f.thetas[i] + w * (f.thetas[i + 1] - f.thetas[i])).clamp(-p.b, p.a);
            assert_eq!(f.eval(x), want, "x = {x}");
        }
    }

    #[test]
    fn brownian_tree_is_additive_and_scaled() {
        let base = 0.25;
        let mut sum_sq = 0.0;
        let n = 4000;
        for k in 0..n {
            let mut w = BrownianPath::new(k, base);
            let full = w.within(3, 1 << TREE_DEPTH, 0.0);
            let quarter = 1u64 << (TREE_DEPTH - 2);
            let parts: f64 = (0..4).map(|j| w.within(3, (j + 1) * quarter, 0.0) - w.within(3, j * quarter, 0.0)).sum();
            assert!((parts - full).abs() < 1e-12);
            let q = w.within(3, quarter, 0.0);
            sum_sq += q * q;
        }
        let var = sum_sq / n as f64;
        assert!((var - base / 4.0).abs() < 4.0 * base / 4.0 * (2.0 / n as f64).sqrt(), "{var}");
    }

    #[test]
    fn ci_formula() {
        assert!((ci_half_width(0.5, 100) - 0.098).abs() < 1e-12);
        assert_eq!(ci_half_width(1.0, 10), 0.0);
    }

    #[test]
    fn no_claims_and_large_premium_reach_the_barrier() {
        let p = ModelParams { c: 100.0, ..ModelParams::example1() };
        let zero = ClaimLaw::general("zero", |_| 0.0, |_| 1.0, 1e-12).with_sampler(|_| 0.0);
        let cfg = SimConfig { n_paths: 50, ..Default::default() }.resolve(&p, &[1.0]).unwrap();
        for path in 0..50 {
            let mut g = PathRngs::new(1, 0, path, 0.01 / p.lambda);
            let out = simulate_path(1.0, &Policy::constant(0.0, "zero"), &p, &zero, &cfg, &mut g).unwrap();
            assert!(matches!(out, PathOutcome::SurviveBarrier { .. }));
        }
    }

    #[test]
    fn negative_start_is_rejected() {
        let p = ModelParams::example1();
        let cfg = SimConfig::default().resolve(&p, &[1.0]).unwrap();
        let mut g = PathRngs::new(1, 0, 0, 0.01 / p.lambda);
        let law = ClaimLaw::exponential(1.0);
        assert!(simulate_path(-1.0, &Policy::constant(0.0, "z"), &p, &law, &cfg, &mut g).is_err());
        assert!(SimConfig::default().resolve(&p, &[-1.0]).is_err());
    }

    #[test]
    fn empty_report_for_zero_paths() {
        let p = ModelParams::example1();
        let cfg = SimConfig { n_paths: 0, ..Default::default() };
        let r = estimate_survival(&[1.0], &Policy::constant(0.0, "z"), &p, &ClaimLaw::exponential(1.0), &cfg).unwrap();
        assert!(r.rows.is_empty());
    }

    #[test]
    fn identical_policies_give_identical_estimates() {
        let p = ModelParams::example1();
        let law = ClaimLaw::exponential(1.0);
        let cfg = SimConfig { n_paths: 400, ..Default::default() };
        let pols = [Policy::constant(0.5, "half"), Policy::constant(0.5, "half again")];
        let r = compare_policies(&[1.0, 3.0], &pols, &p, &law, &cfg).unwrap();
        assert_eq!(r.report.rows[0].p_hat, r.report.rows[2].p_hat);
        assert_eq!(r.report.rows[1].p_hat, r.report.rows[3].p_hat);
        assert!(!r.reference_dominated());
    }

    #[test]
    fn reruns_are_bit_identical() {
        let p = ModelParams::example1();
        let law = ClaimLaw::exponential(1.0);
        let cfg = SimConfig { n_paths: 300, threads: Some(3), ..Default::default() };
        let pol = Policy::constant(-2.0, "short");
        let a = estimate_survival(&[2.0], &pol, &p, &law, &cfg).unwrap();
        let b = estimate_survival(&[2.0], &pol, &p, &law, &SimConfig { threads: Some(1), ..cfg }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oracle_survival_small_sample() {
        let p = oracle();
        let law = ClaimLaw::exponential(1.0);
        let cfg = SimConfig { n_paths: 20_000, ..Default::default() };
        let r = estimate_survival(&[0.0, 2.0], &Policy::constant(0.0, "none"), &p, &law, &cfg).unwrap();
        for row in &r.rows {
            let exact = 1.0 - lundberg_ruin(&p, 1.0, row.x0);
            assert!((row.p_hat - exact).abs() <= 2.0 * row.ci_half, "{row:?} vs {exact}");
        }
    }

    #[test]
    fn config_bounds_are_enforced() {
        let p = ModelParams::example1();
        let bad_dt = SimConfig { euler_dt: Some(1.0), ..Default::default() };
        assert!(bad_dt.resolve(&p, &[1.0]).is_err());
        let bad_barrier = SimConfig { upper_barrier: Some(5.0), ..Default::default() };
        assert!(bad_barrier.resolve(&p, &[1.0]).is_err());
    }
}
