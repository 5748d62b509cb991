//! General claim densities: the constant-regime equation is solved on
//! `[0, ε]` by two-stage Radau IIA collocation, then `w = W'` is marched by
//! `w' = Tw` with
//!
//! `Tw(x) = 2 inf_{|θ|>A} {M(W)(x) - [c + rx + θx(μ - r)]w(x)} / (θ²σ²x²)`.
//!
//! The convolution `M(W)(x) = λ[W(x)S(x) + ∫₀ˣ (W(x) - W(y)) f(x - y) dy]`
//! is accumulated over cached Gauss points of every finished grid interval;
//! differences `W(x) - W(y)` are carried as sums of increments so the
//! integrand never cancels.

use serde::{Deserialize, Serialize};

use crate::curve::{
    CurveNode, Method, RegimeSegment, SegmentEnd, SolutionCurve, SwitchPoint, TailReport,
};
use crate::error::{Error, Result};
use crate::exp_solver::extrapolate_tail;
use crate::model::{regime_constants, ClaimLaw, ModelParams};
use crate::ode::{integrate, AcceptedStep, Control, IntegratorOptions, OdeSystem, Tolerances};
use crate::operators::curvature_inf_unchecked;
use crate::quadrature::{
    hermite3_offset_from_right, lagrange_derivative, GridFunction, GL4_NODES, GL4_WEIGHTS,
};
use crate::regime::{self, Regime};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralOptions {
    /// Right end; default `200·c/λ`.
    pub x_max: Option<f64>,
    /// Initial handoff point `ε`.
    pub epsilon: f64,
    /// Collocation steps on `[0, ε]`.
    pub near_zero_steps: usize,
    /// Halvings of `ε` allowed when the near-zero solution loses `V' > 0`.
    pub max_retries: usize,
    pub rtol: f64,
    pub atol: f64,
    pub cutoff_factor: f64,
}

impl Default for GeneralOptions {
    fn default() -> Self {
        Self {
            x_max: None,
            epsilon: 1e-3,
            near_zero_steps: 400,
            max_retries: 8,
            rtol: 1e-10,
            atol: 1e-12,
            cutoff_factor: 1e-6,
        }
    }
}

/// Constant-regime solution on `[0, ε]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearZeroTable {
    pub gamma: f64,
    pub xs: Vec<f64>,
    pub v: Vec<f64>,
    pub vp: Vec<f64>,
    pub vpp: Vec<f64>,
    pub mv: Vec<f64>,
    /// `V(x_{i+1}) - V(x_i)`, kept separately from the absolute values.
    pub dv: Vec<f64>,
}

impl NearZeroTable {
    pub fn epsilon(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    /// Same table multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let s = |v: &Vec<f64>| v.iter().map(|x| k * x).collect();
        Self {
            gamma: self.gamma,
            xs: self.xs.clone(),
            v: s(&self.v),
            vp: s(&self.vp),
            vpp: s(&self.vpp),
            mv: s(&self.mv),
            dv: s(&self.dv),
        }
    }
}

/// Cached quadrature of the finished part of `W`.
#[derive(Clone)]
struct History {
    xs: Vec<f64>,
    /// Absolute `W` at the nodes.
    w_abs: Vec<f64>,
    slopes: Vec<f64>,
    /// Gauss points per interval.
    pts: Vec<[f64; 4]>,
    /// Interval length times Gauss weight.
    wts: Vec<[f64; 4]>,
    /// `W(x_{i+1}) - W(y)` at the Gauss points.
    g: Vec<[f64; 4]>,
    /// `W(x_n) - W(x_{i+1})` for the current last node `x_n`.
    suffix: Vec<f64>,
}

impl History {
    fn new(x0: f64, w0: f64, slope0: f64) -> Self {
        Self {
            xs: vec![x0],
            w_abs: vec![w0],
            slopes: vec![slope0],
            pts: Vec::new(),
            wts: Vec::new(),
            g: Vec::new(),
            suffix: Vec::new(),
        }
    }

    fn last_x(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    fn last_w(&self) -> f64 {
        *self.w_abs.last().unwrap()
    }

    fn last_slope(&self) -> f64 {
        *self.slopes.last().unwrap()
    }

    /// Append the node `x1` with increment `dw = W(x1) - W(x_n)`.
    fn push(&mut self, x1: f64, dw: f64, slope1: f64) {
        let x0 = self.last_x();
        let s0 = self.last_slope();
        let h = x1 - x0;
        let mut pts = [0.0; 4];
        let mut wts = [0.0; 4];
        let mut g = [0.0; 4];
        for p in 0..4 {
            let t = GL4_NODES[p];
            pts[p] = x0 + t * h;
            wts[p] = h * GL4_WEIGHTS[p];
            g[p] = -hermite3_offset_from_right(t, h, dw, s0, slope1);
        }
        for s in &mut self.suffix {
            *s += dw;
        }
        self.suffix.push(0.0);
        self.pts.push(pts);
        self.wts.push(wts);
        self.g.push(g);
        self.xs.push(x1);
        self.w_abs.push(self.last_w() + dw);
        self.slopes.push(slope1);
    }

    /// `(Σ hω f(x - y), Σ hω (W(x_n) - W(y)) f(x - y))` over the history.
    fn sums(&self, law: &ClaimLaw, x: f64) -> (f64, f64) {
        let mut mass = 0.0;
        let mut acc = 0.0;
        for i in 0..self.pts.len() {
            let s = self.suffix[i];
            let (pts, wts, g) = (&self.pts[i], &self.wts[i], &self.g[i]);
            for p in 0..4 {
                let fw = wts[p] * law.density(x - pts[p]);
                mass += fw;
                acc += fw * (s + g[p]);
            }
        }
        (mass, acc)
    }

    /// `M(W)(x)` for `x ≥ x_n` with `W(x) = W(x_n) + z` and `W'(x) = slope`,
    /// the open interval `[x_n, x]` interpolated by cubic Hermite.
    fn m_at(&self, law: &ClaimLaw, lambda: f64, x: f64, z: f64, slope: f64) -> f64 {
        let (mass, acc) = self.sums(law, x);
        let xn = self.last_x();
        let h = x - xn;
        let mut local = 0.0;
        if h > 0.0 {
            let s0 = self.last_slope();
            for p in 0..4 {
                let t = GL4_NODES[p];
                let diff = -hermite3_offset_from_right(t, h, z, s0, slope);
                local += h * GL4_WEIGHTS[p] * diff * law.density(h * (1.0 - t));
            }
        }
        lambda * ((self.last_w() + z) * law.survival(x) + z * mass + acc + local)
    }
}

fn history_of(table: &NearZeroTable) -> History {
    let mut h = History::new(table.xs[0], table.v[0], table.vp[0]);
    for i in 1..table.xs.len() {
        h.push(table.xs[i], table.dv[i - 1], table.vp[i]);
    }
    h
}

fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut s = b[row];
        for k in row + 1..4 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// `V''(0+)` of the constant regime `gamma`:
/// `(λ/c)(λ/c - f(0) - (r + γ(μ - r))/c)`.
pub fn curvature_at_zero(params: &ModelParams, law: &ClaimLaw, gamma: f64) -> f64 {
    crate::exp_solver::curvature_at_zero(params, law.density_at_zero(), gamma)
}

/// Solve `σ̄²x²V''/2 + (c + μ̄x)V' - M(V) = 0` on `[0, ε]` with `V(0) = 1`,
/// `V'(0) = λ/c` by Radau IIA (stages at `h/3` and `h`) on `steps` equal
/// steps. The stage equations are linear because `M` is; the local part of
/// the convolution uses the quadratic through the step's collocation values.
pub fn solve_constant_regime_near_zero(
    params: &ModelParams,
    law: &ClaimLaw,
    gamma: f64,
    epsilon: f64,
    steps: usize,
) -> Result<NearZeroTable> {
    if !(epsilon > 0.0) || steps == 0 {
        return Err(Error::Contract(format!(
            "near-zero solve needs epsilon > 0 and steps > 0 (got {epsilon}, {steps})"
        )));
    }
    let rc = regime_constants(params, gamma)?;
    let (lambda, c) = (params.lambda, params.c);
    let s2 = rc.sigma_bar * rc.sigma_bar;
    const CS: [f64; 2] = [1.0 / 3.0, 1.0];
    const A: [[f64; 2]; 2] = [[5.0 / 12.0, -1.0 / 12.0], [0.75, 0.25]];
    // quadratic Lagrange basis through t = 0, 1/3, 1, weights of nodes 1 and 2
    let l1 = |t: f64| -4.5 * t * (t - 1.0);
    let l2 = |t: f64| 1.5 * t * (t - 1.0 / 3.0);

    let h = epsilon / steps as f64;
    let mut hist = History::new(0.0, 1.0, lambda / c);
    let mut table = NearZeroTable {
        gamma,
        xs: vec![0.0],
        v: vec![1.0],
        vp: vec![lambda / c],
        vpp: vec![curvature_at_zero(params, law, gamma)],
        mv: vec![lambda],
        dv: Vec::new(),
    };
    for n in 0..steps {
        let xn = n as f64 * h;
        let vn = hist.last_w();
        let pn = hist.last_slope();
        let mut alpha = [0.0; 2];
        let mut beta = [[0.0; 2]; 2];
        let mut q = [0.0; 2];
        let mut g = [0.0; 2];
        for k in 0..2 {
            let xk = xn + CS[k] * h;
            let (mass, acc) = hist.sums(law, xk);
            let surv = law.survival(xk);
            alpha[k] = lambda * (vn * surv + acc);
            beta[k][k] += lambda * (surv + mass);
            let hk = CS[k] * h;
            for p in 0..4 {
                let sp = GL4_NODES[p];
                let t = CS[k] * sp;
                let fw = hk * GL4_WEIGHTS[p] * law.density(hk * (1.0 - sp));
                beta[k][k] += lambda * fw;
                beta[k][0] -= lambda * fw * l1(t);
                beta[k][1] -= lambda * fw * l2(t);
            }
            q[k] = 2.0 / (s2 * xk * xk);
            g[k] = c + rc.mu_bar * xk;
        }
        // unknowns [Z1, P1, Z2, P2]
        let mut m = [[0.0; 4]; 4];
        let mut rhs = [0.0; 4];
        for j in 0..2 {
            let zr = 2 * j;
            m[zr][zr] = 1.0;
            for k in 0..2 {
                m[zr][2 * k + 1] -= h * A[j][k];
            }
            let pr = 2 * j + 1;
            m[pr][pr] += 1.0;
            rhs[pr] = pn;
            for k in 0..2 {
                let coef = h * A[j][k] * q[k];
                rhs[pr] += coef * alpha[k];
                m[pr][0] -= coef * beta[k][0];
                m[pr][2] -= coef * beta[k][1];
                m[pr][2 * k + 1] += coef * g[k];
            }
        }
        let u = solve4(m, rhs)
            .ok_or_else(|| Error::abort(xn, "singular collocation system near zero"))?;
        let (z2, p2) = (u[2], u[3]);
        if !(p2 > 0.0) || !z2.is_finite() {
            return Err(Error::abort(
                xn + h,
                format!("constant-regime solution lost V' > 0 (V' = {p2:.3e})"),
            ));
        }
        let x1 = xn + h;
        let m2 = alpha[1] + beta[1][0] * u[0] + beta[1][1] * z2;
        hist.push(x1, z2, p2);
        table.xs.push(x1);
        table.v.push(hist.last_w());
        table.vp.push(p2);
        table.vpp.push(q[1] * (m2 - g[1] * p2));
        table.mv.push(m2);
        table.dv.push(z2);
    }
    Ok(table)
}

/// Inputs of the operator `T`.
#[derive(Debug, Clone)]
pub struct TOperatorContext {
    pub params: ModelParams,
    pub law: ClaimLaw,
    pub epsilon: f64,
    pub table: NearZeroTable,
    /// Exclusion cutoff `A`.
    pub cutoff: f64,
}

impl TOperatorContext {
    pub fn new(params: &ModelParams, law: &ClaimLaw, table: NearZeroTable, cutoff_factor: f64) -> Self {
        Self {
            params: *params,
            law: law.clone(),
            epsilon: table.epsilon(),
            table,
            cutoff: cutoff_factor * params.a.min(params.b),
        }
    }
}

/// `Tw(x)` for `w` tabulated on `[ε, x']`, `x' ≥ x`. `W` is the table on
/// `[0, ε]` continued by `V_γ(ε) + ∫_ε w`, with the integral taken exactly
/// on the cubic Hermite interpolant of `w`.
pub fn t_operator(ctx: &TOperatorContext, w: &GridFunction, x: f64) -> Result<f64> {
    let eps = ctx.epsilon;
    if (w.x_min() - eps).abs() > 1e-12 * eps.max(1.0) || x < eps || x > w.x_max() {
        return Err(Error::Contract(format!(
            "w must start at epsilon = {eps} and cover x = {x}"
        )));
    }
    let mut hist = history_of(&ctx.table);
    let xs = w.xs();
    let (vals, slopes) = (w.values(), w.slopes());
    let mut i = 0;
    while i + 1 < xs.len() && xs[i + 1] <= x {
        let h = xs[i + 1] - xs[i];
        // ∫ of the cubic Hermite of w with end slopes w'
        let dw = h * (vals[i] + vals[i + 1]) / 2.0 + h * h * (slopes[i] - slopes[i + 1]) / 12.0;
        hist.push(xs[i + 1], dw, vals[i + 1]);
        i += 1;
    }
    let (wx, z) = if x > hist.last_x() {
        let h = x - xs[i];
        let (wv, _) = w.eval_with_slope(x);
        let t = h / (xs[i + 1] - xs[i]);
        let z = gl_cubic_integral(w, i, t);
        (wv, z)
    } else {
        (vals[i], 0.0)
    };
    let p = &ctx.params;
    let mv = hist.m_at(&ctx.law, p.lambda, x, z, wx);
    Ok(curvature_inf_unchecked(x, wx, mv, p, ctx.cutoff))
}

/// `∫_{x_i}^{x_i + t h} w` on interval `i` of `w`.
fn gl_cubic_integral(w: &GridFunction, i: usize, t: f64) -> f64 {
    let x0 = w.xs()[i];
    let h = w.xs()[i + 1] - x0;
    let len = t * h;
    let mut s = 0.0;
    for p in 0..4 {
        s += GL4_WEIGHTS[p] * w.eval(x0 + GL4_NODES[p] * len);
    }
    s * len
}

/// March output: `W`, `w = W'`, `Tw = W''` and `M(W)` at accepted nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WMarch {
    pub xs: Vec<f64>,
    pub big_w: Vec<f64>,
    pub w: Vec<f64>,
    pub tw: Vec<f64>,
    pub mv: Vec<f64>,
}

struct WSystem<'a> {
    ctx: &'a TOperatorContext,
    hist: History,
    out: WMarch,
    fatal: Option<Error>,
}

impl WSystem<'_> {
    fn t_at(&self, x: f64, z: f64, w: f64) -> (f64, f64) {
        let p = &self.ctx.params;
        let mv = self.hist.m_at(&self.ctx.law, p.lambda, x, z, w);
        (curvature_inf_unchecked(x, w, mv, p, self.ctx.cutoff), mv)
    }
}

impl OdeSystem<2> for WSystem<'_> {
    fn rhs(&mut self, x: f64, y: &[f64; 2]) -> [f64; 2] {
        [y[1], self.t_at(x, y[0], y[1]).0]
    }

    fn on_step(&mut self, step: &AcceptedStep<'_, 2>) -> Control {
        let [z, w] = *step.y1;
        if !(w > 0.0) {
            self.fatal = Some(Error::abort(
                step.x1,
                format!("w = W' reached {w:.3e}; positivity violated"),
            ));
            return Control::Stop;
        }
        self.hist.push(step.x1, z, w);
        let (tw, mv) = self.t_at(step.x1, 0.0, w);
        self.out.xs.push(step.x1);
        self.out.big_w.push(self.hist.last_w());
        self.out.w.push(w);
        self.out.tw.push(tw);
        self.out.mv.push(mv);
        Control::Continue
    }

    fn reanchor(&mut self, _x: f64, y: &mut [f64; 2]) -> bool {
        y[0] = 0.0;
        false
    }
}

/// March `w' = Tw`, `w(ε) = V_γ'(ε)` from `ε` to `x_max`.
pub fn integrate_w(ctx: &TOperatorContext, x_max: f64, rtol: f64, atol: f64) -> Result<WMarch> {
    let t = &ctx.table;
    let n = t.xs.len() - 1;
    let mut sys = WSystem {
        ctx,
        hist: history_of(t),
        out: WMarch {
            xs: vec![t.xs[n]],
            big_w: vec![t.v[n]],
            w: vec![t.vp[n]],
            tw: Vec::new(),
            mv: Vec::new(),
        },
        fatal: None,
    };
    let (tw0, mv0) = sys.t_at(t.xs[n], 0.0, t.vp[n]);
    sys.out.tw.push(tw0);
    sys.out.mv.push(mv0);
    let tol = Tolerances {
        rtol,
        atol: [atol, 0.0],
    };
    let res = integrate(&mut sys, t.xs[n], [0.0, t.vp[n]], x_max, &tol, &IntegratorOptions::default());
    if let Some(e) = sys.fatal.take() {
        return Err(e);
    }
    res?;
    Ok(sys.out)
}

fn node_from(x: f64, v: f64, vp: f64, vpp: f64, mv: f64, params: &ModelParams, forced: Option<Regime>) -> CurveNode {
    let mu_r = params.excess_return();
    let i = mv - (params.c + params.r * x) * vp;
    let phi = if x > 0.0 { 2.0 * i / (mu_r * x * vp) } else { f64::NAN };
    let regime = forced.unwrap_or_else(|| regime::classify(phi, params));
    CurveNode {
        x,
        v,
        vp,
        vpp,
        j: v - mv / params.lambda,
        mv,
        phi,
        theta_star: regime.theta(phi, params),
        regime,
    }
}

/// Concatenate the near-zero table and the march into a curve. The node at
/// `ε` appears twice: first with the table's `V''`, then with `Tw(ε)`.
pub fn assemble_solution(ctx: &TOperatorContext, march: &WMarch) -> SolutionCurve {
    let p = &ctx.params;
    let start = regime::start_regime(p);
    let t = &ctx.table;
    let mut nodes = Vec::with_capacity(t.xs.len() + march.xs.len());
    for i in 0..t.xs.len() {
        let mut n = node_from(t.xs[i], t.v[i], t.vp[i], t.vpp[i], t.mv[i], p, Some(start));
        if i == 0 {
            n.phi = 2.0 * t.gamma;
            n.j = 0.0;
        }
        nodes.push(n);
    }
    for i in 0..march.xs.len() {
        nodes.push(node_from(march.xs[i], march.big_w[i], march.w[i], march.tw[i], march.mv[i], p, None));
    }
    let first = t.xs.len();
    let mut segments = Vec::new();
    let mut switch_points = Vec::new();
    let mut seg_lo = 0.0;
    let mut current = start;
    for k in first..nodes.len() {
        let reg = nodes[k].regime;
        if reg == current {
            continue;
        }
        let (a, b) = (&nodes[k - 1], &nodes[k]);
        let level = boundary_between(current, reg, p);
        let xs = match level {
            Some(l) if (b.phi - a.phi) != 0.0 => a.x + (l - a.phi) * (b.x - a.x) / (b.phi - a.phi),
            _ => b.x,
        }
        .clamp(a.x, b.x);
        let frac = if b.x > a.x { (xs - a.x) / (b.x - a.x) } else { 0.0 };
        let vpp = a.vpp + frac * (b.vpp - a.vpp);
        let (fd_left, fd_right) = node_differences(&nodes, k, xs);
        switch_points.push(SwitchPoint {
            x: xs,
            from: current,
            to: reg,
            phi: level.unwrap_or(b.phi),
            vpp_left: vpp,
            vpp_right: vpp,
            fd_left,
            fd_right,
        });
        segments.push(RegimeSegment {
            lo: seg_lo,
            hi: xs,
            regime: current,
            terminal_event: SegmentEnd::Switch,
        });
        seg_lo = xs;
        current = reg;
    }
    segments.push(RegimeSegment {
        lo: seg_lo,
        hi: nodes.last().unwrap().x,
        regime: current,
        terminal_event: SegmentEnd::Horizon,
    });
    let mut curve = SolutionCurve {
        method: Method::General,
        params: *p,
        claim: format!("{:?}", ctx.law),
        nodes,
        segments,
        switch_points,
        v_inf: f64::NAN,
        tail: TailReport {
            q: f64::NAN,
            d: f64::NAN,
            tail: 0.0,
            negligible: false,
            warning: None,
        },
        x_eps: ctx.epsilon,
        series_order: None,
        warnings: Vec::new(),
    };
    let (v_inf, tail) = extrapolate_tail(&curve, p);
    if let Some(w) = &tail.warning {
        curve.warnings.push(w.clone());
    }
    curve.v_inf = v_inf;
    curve.tail = tail;
    curve
}

/// `φ` level separating two adjacent regimes, if they share a boundary.
fn boundary_between(from: Regime, to: Regime, params: &ModelParams) -> Option<f64> {
    let (lo, hi) = regime::phi_bounds(from, params);
    let (lo2, hi2) = regime::phi_bounds(to, params);
    if hi == lo2 {
        Some(hi)
    } else if lo == hi2 {
        Some(lo)
    } else {
        None
    }
}

/// One-sided three-node derivatives of `V'` at `x` from the nodes before
/// `k` and from `k` on.
fn node_differences(nodes: &[CurveNode], k: usize, x: f64) -> (f64, f64) {
    let pick = |i: [usize; 3]| {
        lagrange_derivative(
            [nodes[i[0]].x, nodes[i[1]].x, nodes[i[2]].x],
            [nodes[i[0]].vp, nodes[i[1]].vp, nodes[i[2]].vp],
            x,
        )
    };
    let left = if k >= 3 { pick([k - 3, k - 2, k - 1]) } else { f64::NAN };
    let right = if k + 2 < nodes.len() { pick([k, k + 1, k + 2]) } else { f64::NAN };
    (left, right)
}

/// `V''` on both sides of the handoff point, from the equations and from
/// one-sided node differences.
pub fn handoff_smoothness(curve: &SolutionCurve) -> Option<SwitchPoint> {
    let k = curve
        .nodes
        .windows(2)
        .position(|w| w[0].x == w[1].x && w[0].x == curve.x_eps)?;
    let (l, r) = (&curve.nodes[k], &curve.nodes[k + 1]);
    let nodes = &curve.nodes;
    let fd_left = if k >= 2 {
        lagrange_derivative(
            [nodes[k - 2].x, nodes[k - 1].x, l.x],
            [nodes[k - 2].vp, nodes[k - 1].vp, l.vp],
            l.x,
        )
    } else {
        f64::NAN
    };
    let fd_right = if k + 3 < nodes.len() {
        lagrange_derivative(
            [r.x, nodes[k + 2].x, nodes[k + 3].x],
            [r.vp, nodes[k + 2].vp, nodes[k + 3].vp],
            r.x,
        )
    } else {
        f64::NAN
    };
    Some(SwitchPoint {
        x: l.x,
        from: l.regime,
        to: r.regime,
        phi: r.phi,
        vpp_left: l.vpp,
        vpp_right: r.vpp,
        fd_left,
        fd_right,
    })
}

/// Full general-path solve.
pub fn solve(params: &ModelParams, law: &ClaimLaw, opts: &GeneralOptions) -> Result<SolutionCurve> {
    if !(params.r > 0.0) {
        return Err(Error::Validation(vec![format!(
            "the HJB solver needs r > 0 (got {})",
            params.r
        )]));
    }
    if params.excess_return() == 0.0 {
        return Err(Error::Unsupported(
            "mu = r on the general-density path; use exponential claims".into(),
        ));
    }
    let gamma = regime::start_regime(params).gamma(params).unwrap();
    let x_max = opts.x_max.unwrap_or(200.0 * params.c / params.lambda);
    let mut eps = opts.epsilon;
    let mut retries = 0;
    let table = loop {
        match solve_constant_regime_near_zero(params, law, gamma, eps, opts.near_zero_steps) {
            Ok(t) => break t,
            Err(Error::SolverAbort { .. }) if retries < opts.max_retries => {
                eps *= 0.5;
                retries += 1;
            }
            Err(e) => return Err(e),
        }
    };
    let ctx = TOperatorContext::new(params, law, table, opts.cutoff_factor);
    let march = integrate_w(&ctx, x_max, opts.rtol, opts.atol)?;
    let mut curve = assemble_solution(&ctx, &march);
    if retries > 0 {
        curve
            .warnings
            .push(format!("epsilon halved {retries} time(s) to {eps}"));
    }
    Ok(curve)
}
