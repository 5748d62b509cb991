//! Exponential claims: with `F(s) = 1 - e^{-s/m}` the convolution
//! `J(x) = ∫₀ˣ V(x-s) dF(s)` obeys `J' = (V - J)/m`, so the HJB equation
//! becomes an ODE. The solver integrates `(V, V', D)` with `D = V - J`
//! (so `M(V) = λD` never cancels), starting from the asymptotic series of
//! the constant-fraction solution at the singular point `x = 0`.

use serde::{Deserialize, Serialize};

use crate::curve::{
    power_law_tail, CurveNode, Method, RegimeSegment, SegmentEnd, SolutionCurve, SwitchPoint,
    TailReport,
};
use crate::error::{Error, Result};
use crate::model::{regime_constants, ModelParams, RegimeConstants};
use crate::ode::{
    bisect_root, integrate, numeric_jacobian, AcceptedStep, Control, IntegratorOptions, OdeSystem, Tolerances,
};
use crate::regime::{self, Regime};

/// Coefficients of `V(x) = C₀ + D₁[x + Σ_{k≥2} C_k x^k]` with `C_k = D_k/k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesExpansion {
    pub c0: f64,
    /// `d[k] = D_k` for `k = 1..=order`; `d[0]` is unused.
    pub d: Vec<f64>,
    pub order: usize,
    pub constants: RegimeConstants,
    pub lambda: f64,
    pub c: f64,
    pub m: f64,
}

impl SeriesExpansion {
    pub fn c_k(&self, k: usize) -> f64 {
        self.d[k] / k as f64
    }
}

/// Series value at `x` together with the convolution quantities implied by
/// the regime equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub v: f64,
    pub vp: f64,
    pub vpp: f64,
    pub j: f64,
    /// `M(V)/λ = V - J`.
    pub d: f64,
}

pub fn series_coefficients(params: &ModelParams, m: f64, gamma: f64, order: usize) -> Result<SeriesExpansion> {
    if order < 3 {
        return Err(Error::Contract(format!("series order must be at least 3 (got {order})")));
    }
    let rc = regime_constants(params, gamma)?;
    let (c, lambda) = (params.c, params.lambda);
    let (mb, s2) = (rc.mu_bar, rc.sigma_bar * rc.sigma_bar);
    let mut d = vec![0.0; order + 1];
    d[1] = lambda / c;
    d[2] = -((mb - lambda) / c + 1.0 / m);
    d[3] = -(d[2] * (s2 + 2.0 * mb - lambda + c / m) + mb / m) / (2.0 * c);
    for k in 4..=order {
        let kf = k as f64;
        d[k] = -d[k - 1] * ((kf - 1.0) * (kf - 2.0) * s2 / 2.0 + (kf - 1.0) * mb - lambda + c / m)
            / (c * (kf - 1.0))
            - (1.0 / m) * d[k - 2] * ((kf - 3.0) * s2 / 2.0 + mb) / (c * (kf - 1.0));
    }
    Ok(SeriesExpansion {
        c0: 1.0,
        d,
        order,
        constants: rc,
        lambda,
        c,
        m,
    })
}

pub fn series_eval(exp: &SeriesExpansion, x: f64) -> SeriesPoint {
    let d1 = exp.d[1];
    let (mut sv, mut svp, mut svpp) = (x, 1.0, 0.0);
    let mut pk = 1.0; // x^{k-2}
    for k in 2..=exp.order {
        let kf = k as f64;
        let dk = exp.d[k];
        svpp += dk * (kf - 1.0) * pk;
        svp += dk * pk * x;
        sv += dk / kf * pk * x * x;
        pk *= x;
    }
    let v = exp.c0 + d1 * sv;
    let vp = d1 * svp;
    let vpp = d1 * svpp;
    let rc = &exp.constants;
    let m_val = 0.5 * rc.sigma_bar * rc.sigma_bar * x * x * vpp + (exp.c + rc.mu_bar * x) * vp;
    let dd = m_val / exp.lambda;
    SeriesPoint {
        v,
        vp,
        vpp,
        j: v - dd,
        d: dd,
    }
}

/// Largest `x ∈ [1e-6, 0.1]` at which the last retained term of each of
/// `V`, `V'`, `V''` is below `1e-12` of its partial sum.
pub fn handoff_point(exp: &SeriesExpansion) -> f64 {
    const LO: f64 = 1e-6;
    const HI: f64 = 0.1;
    let ok = |x: f64| last_term_ratio(exp, x) <= 1e-12;
    if ok(HI) {
        return HI;
    }
    if !ok(LO) {
        return LO;
    }
    let (mut lo, mut hi) = (LO.ln(), HI.ln());
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if ok(mid.exp()) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo.exp()
}

fn last_term_ratio(exp: &SeriesExpansion, x: f64) -> f64 {
    let k = exp.order;
    let kf = k as f64;
    let dk = exp.d[k];
    if dk == 0.0 {
        return 0.0;
    }
    let p = series_eval(exp, x);
    let d1 = exp.d[1];
    let t_v = (d1 * dk / kf * x.powi(k as i32)).abs();
    let t_vp = (d1 * dk * x.powi(k as i32 - 1)).abs();
    let t_vpp = (d1 * dk * (kf - 1.0) * x.powi(k as i32 - 2)).abs();
    let r = |t: f64, s: f64| if s == 0.0 { f64::INFINITY } else { t / s.abs() };
    r(t_v, p.v).max(r(t_vp, p.vp)).max(r(t_vpp, p.vpp))
}

/// Order in `[8, 40]` whose handoff point is largest.
pub fn best_series(params: &ModelParams, m: f64, gamma: f64) -> Result<(SeriesExpansion, f64)> {
    let mut best: Option<(SeriesExpansion, f64)> = None;
    for order in 8..=40 {
        let e = series_coefficients(params, m, gamma, order)?;
        let x = handoff_point(&e);
        if best.as_ref().map_or(true, |(_, bx)| x > *bx) {
            best = Some((e, x));
        }
    }
    Ok(best.unwrap())
}

/// `(x, V, V', J)` of the convolution-augmented system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState {
    pub x: f64,
    pub v: f64,
    pub vp: f64,
    pub j: f64,
}

/// Derivative of `(V, V', J)` in the constant regime `gamma`:
/// `V'' = 2[λ(V - J) - (c + μ̄x)V'] / (σ̄²x²)`, `J' = (V - J)/m`.
pub fn rhs_constant_regime(s: &AugmentedState, gamma: f64, params: &ModelParams, m: f64) -> Result<[f64; 3]> {
    if !(s.x > 0.0) {
        return Err(Error::Contract(format!(
            "constant-regime equation is singular at x = {}; use the series there",
            s.x
        )));
    }
    let rc = regime_constants(params, gamma)?;
    let d = s.v - s.j;
    let vpp = constant_vpp(s.x, s.vp, d, params.lambda, params.c, &rc);
    Ok([s.vp, vpp, d / m])
}

/// Derivative of `(V, V', J)` in the interior regime:
/// `V'' = -(μ - r)²V'² / (2σ²I)` with `I = λ(V - J) - (c + rx)V'`.
pub fn rhs_interior_regime(s: &AugmentedState, params: &ModelParams, m: f64) -> Result<[f64; 3]> {
    let d = s.v - s.j;
    let i = params.lambda * d - (params.c + params.r * s.x) * s.vp;
    if !(i > 0.0) {
        return Err(Error::abort(
            s.x,
            format!("interior regime needs I > 0 but I = {i:.3e}"),
        ));
    }
    Ok([s.vp, interior_vpp(s.x, s.vp, d, params), d / m])
}

#[inline]
fn constant_vpp(x: f64, vp: f64, d: f64, lambda: f64, c: f64, rc: &RegimeConstants) -> f64 {
    let s = rc.sigma_bar * x;
    2.0 * (lambda * d - (c + rc.mu_bar * x) * vp) / (s * s)
}

#[inline]
fn interior_vpp(x: f64, vp: f64, d: f64, params: &ModelParams) -> f64 {
    let i = params.lambda * d - (params.c + params.r * x) * vp;
    let k = params.excess_return() * vp;
    -k * k / (2.0 * params.sigma * params.sigma * i)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Right end of the grid; default `200·c/λ`.
    pub x_max: Option<f64>,
    pub rtol: f64,
    /// Absolute tolerance on `V`; `V'` and `D` are controlled relatively.
    pub atol: f64,
    /// Series order; default picks the order with the largest handoff point.
    pub series_order: Option<usize>,
    /// Forced handoff point.
    pub x_eps: Option<f64>,
    pub max_switches: usize,
    /// Vertex-exclusion cutoff `A = factor·min(a, b)`.
    pub cutoff_factor: f64,
    /// Bracket width when locating a switch.
    pub event_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            x_max: None,
            rtol: 1e-10,
            atol: 1e-12,
            series_order: None,
            x_eps: None,
            max_switches: 16,
            cutoff_factor: 1e-6,
            event_tol: 1e-10,
        }
    }
}

impl SolveOptions {
    pub fn resolved_x_max(&self, params: &ModelParams) -> f64 {
        self.x_max.unwrap_or(200.0 * params.c / params.lambda)
    }
}

/// Right-hand side of one regime on the state `(V, V', D)`.
#[derive(Debug, Clone, Copy)]
struct RegimeRhs {
    params: ModelParams,
    m: f64,
    regime: Regime,
    rc: RegimeConstants,
    /// Integrate towards decreasing `x` from this point.
    reverse_from: Option<f64>,
}

impl RegimeRhs {
    fn new(params: &ModelParams, m: f64, regime: Regime) -> Self {
        let gamma = regime.gamma(params).unwrap_or(params.a);
        Self {
            params: *params,
            m,
            regime,
            rc: params.effective(gamma),
            reverse_from: None,
        }
    }

    #[inline]
    fn eval(&self, x: f64, y: &[f64; 3]) -> [f64; 3] {
        let p = &self.params;
        let [_, vp, d] = *y;
        match self.regime {
            Regime::Long | Regime::Short => {
                [vp, constant_vpp(x, vp, d, p.lambda, p.c, &self.rc), vp - d / self.m]
            }
            Regime::Interior => {
                let i = p.lambda * d - (p.c + p.r * x) * vp;
                let vpp = if i > 0.0 {
                    interior_vpp(x, vp, d, p)
                } else {
                    f64::NAN
                };
                [vp, vpp, vp - d / self.m]
            }
            Regime::Flat => {
                let g = p.c + p.r * x;
                let v1 = p.lambda * d / g;
                let d1 = v1 - d / self.m;
                [v1, p.lambda * (d1 * g - d * p.r) / (g * g), d1]
            }
        }
    }
}

impl OdeSystem<3> for RegimeRhs {
    fn rhs(&mut self, x: f64, y: &[f64; 3]) -> [f64; 3] {
        match self.reverse_from {
            None => self.eval(x, y),
            Some(x0) => {
                let f = self.eval(x0 - (x - x0), y);
                [-f[0], -f[1], -f[2]]
            }
        }
    }
}

/// A located regime change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchEvent {
    pub x: f64,
    pub from: Regime,
    pub to: Regime,
}

/// Switching function of a regime: the event fires when it changes sign in
/// the stated direction.
fn watch(regime: Regime, params: &ModelParams) -> Vec<(f64, bool)> {
    if params.excess_return() == 0.0 {
        // (level, upward) on V'' sign; handled by `switch_value`
        return vec![(0.0, regime == Regime::Flat)];
    }
    let (lo, hi) = regime::phi_bounds(regime, params);
    let mut out = Vec::new();
    if hi.is_finite() {
        out.push((hi, true));
    }
    if lo.is_finite() {
        out.push((lo, false));
    }
    out
}

/// `φ` for `μ ≠ r`; otherwise the curvature whose sign decides between
/// `θ = 0` and the largest-magnitude endpoint.
#[inline]
fn switch_value(x: f64, y: &[f64; 3], rhs: &RegimeRhs) -> f64 {
    let p = &rhs.params;
    let i = p.lambda * y[2] - (p.c + p.r * x) * y[1];
    if p.excess_return() == 0.0 {
        match rhs.regime {
            Regime::Flat => rhs.eval(x, y)[1],
            _ => i,
        }
    } else {
        2.0 * i / (p.excess_return() * x * y[1])
    }
}

fn regime_after(level: f64, upward: bool, from: Regime, params: &ModelParams) -> Regime {
    if params.excess_return() == 0.0 {
        let big = if params.a >= params.b { Regime::Long } else { Regime::Short };
        return if from == Regime::Flat { big } else { Regime::Flat };
    }
    regime::next_regime(level, upward, params)
}

/// Examine one accepted step for a crossing of the active regime's
/// switching boundaries; returns the earliest crossing located to within
/// `tol` on the continuous output.
pub fn detect_switch(
    step: &AcceptedStep<'_, 3>,
    regime: Regime,
    params: &ModelParams,
    m: f64,
    tol: f64,
) -> Option<SwitchEvent> {
    let rhs = RegimeRhs::new(params, m, regime);
    let g0 = switch_value(step.x0, step.y0, &rhs);
    let g1 = switch_value(step.x1, step.y1, &rhs);
    let mut best: Option<SwitchEvent> = None;
    for (level, upward) in watch(regime, params) {
        let crossed = if upward {
            g0 <= level && g1 > level
        } else {
            g0 >= level && g1 < level
        };
        if !crossed {
            continue;
        }
        let dense = *step.dense;
        let root = bisect_root(
            |x| switch_value(x, &dense.eval(x), &rhs) - level,
            step.x0,
            step.x1,
            g0 - level,
            tol,
        );
        let to = regime_after(level, upward, regime, params);
        if best.map_or(true, |b| root < b.x) {
            best = Some(SwitchEvent { x: root, from: regime, to });
        }
    }
    best
}

struct Segment<'a> {
    rhs: RegimeRhs,
    nodes: &'a mut Vec<CurveNode>,
    event: Option<SwitchEvent>,
    fatal: Option<Error>,
    cutoff: f64,
    event_tol: f64,
}

impl OdeSystem<3> for Segment<'_> {
    fn rhs(&mut self, x: f64, y: &[f64; 3]) -> [f64; 3] {
        self.rhs.eval(x, y)
    }

    fn jacobian(&mut self, x: f64, y: &[f64; 3], f: &[f64; 3]) -> [[f64; 3]; 3] {
        if self.rhs.regime != Regime::Interior {
            return numeric_jacobian(self, x, y, f);
        }
        let p = &self.rhs.params;
        let [_, vp, d] = *y;
        let g = p.c + p.r * x;
        let i = p.lambda * d - g * vp;
        let e = p.excess_return();
        let s2 = p.sigma * p.sigma;
        let k2 = e * e * vp * vp;
        [
            [0.0, 1.0, 0.0],
            [0.0, -e * e * vp / (s2 * i) - k2 * g / (2.0 * s2 * i * i), k2 * p.lambda / (2.0 * s2 * i * i)],
            [0.0, 1.0, -1.0 / self.rhs.m],
        ]
    }

    fn on_step(&mut self, step: &AcceptedStep<'_, 3>) -> Control {
        let p = self.rhs.params;
        if !(step.y1[1] > 0.0) {
            self.fatal = Some(Error::abort(
                step.x1,
                format!("value function stopped increasing (V' = {:.3e})", step.y1[1]),
            ));
            return Control::Stop;
        }
        if let Some(ev) = detect_switch(step, self.rhs.regime, &p, self.rhs.m, self.event_tol) {
            self.event = Some(ev);
            return Control::StopAt(ev.x);
        }
        if p.excess_return() != 0.0 {
            let phi = switch_value(step.x1, step.y1, &self.rhs);
            if phi.abs() < self.cutoff {
                self.fatal = Some(Error::abort(
                    step.x1,
                    format!("|phi| = {:.3e} fell below the exclusion cutoff {:.3e}", phi.abs(), self.cutoff),
                ));
                return Control::Stop;
            }
        }
        self.nodes.push(make_node(step.x1, step.y1, step.k1[1], &self.rhs));
        Control::Continue
    }
}

fn make_node(x: f64, y: &[f64; 3], vpp: f64, rhs: &RegimeRhs) -> CurveNode {
    let p = &rhs.params;
    let [v, vp, d] = *y;
    let phi = if p.excess_return() == 0.0 {
        f64::NAN
    } else {
        2.0 * (p.lambda * d - (p.c + p.r * x) * vp) / (p.excess_return() * x * vp)
    };
    CurveNode {
        x,
        v,
        vp,
        vpp,
        j: v - d,
        mv: p.lambda * d,
        phi,
        theta_star: rhs.regime.theta(phi, p),
        regime: rhs.regime,
    }
}

/// Curvature right at `x = 0+` of the constant-fraction solution,
/// `(λ/c)(λ/c - f(0) - (r + γ(μ - r))/c)`.
pub fn curvature_at_zero(params: &ModelParams, f0: f64, gamma: f64) -> f64 {
    let l = params.lambda / params.c;
    l * (l - f0 - (params.r + gamma * params.excess_return()) / params.c)
}

/// Solve the HJB equation for exponential claims of mean `m`.
pub fn solve(params: &ModelParams, m: f64, opts: &SolveOptions) -> Result<SolutionCurve> {
    if !(params.r > 0.0) {
        return Err(Error::Validation(vec![format!(
            "the HJB solver needs r > 0 (got {})",
            params.r
        )]));
    }
    let x_max = opts.resolved_x_max(params);
    let cutoff = opts.cutoff_factor * params.a.min(params.b);
    let tol = Tolerances {
        rtol: opts.rtol,
        atol: [opts.atol, 0.0, 0.0],
    };
    let mut warnings = Vec::new();
    let mut nodes = Vec::new();

    let equal_rates = params.excess_return() == 0.0;
    let mut regime = if equal_rates {
        let gamma = regime::max_abs_fraction(params);
        if curvature_at_zero(params, 1.0 / m, gamma) > 0.0 {
            if gamma > 0.0 { Regime::Long } else { Regime::Short }
        } else {
            Regime::Flat
        }
    } else {
        regime::start_regime(params)
    };

    // near-zero start
    let (x0, y0, series_order) = if regime == Regime::Flat {
        let y = [1.0, params.lambda / params.c, 1.0];
        let rhs = RegimeRhs::new(params, m, regime);
        let vpp0 = rhs.eval(0.0, &y)[1];
        nodes.push(make_node(0.0, &y, vpp0, &rhs));
        nodes.last_mut().unwrap().j = 0.0;
        (0.0, y, None)
    } else {
        let gamma = regime.gamma(params).unwrap();
        let (exp, mut x_eps) = match opts.series_order {
            Some(k) => {
                let e = series_coefficients(params, m, gamma, k)?;
                let x = handoff_point(&e);
                (e, x)
            }
            None => best_series(params, m, gamma)?,
        };
        if let Some(x) = opts.x_eps {
            x_eps = x;
        }
        let rhs = RegimeRhs::new(params, m, regime);
        // the series region must not contain a switch
        let mut shrinks = 0;
        while !equal_rates {
            let sp = series_eval(&exp, x_eps);
            let phi = switch_value(x_eps, &[sp.v, sp.vp, sp.d], &rhs);
            if regime::classify(phi, params) == regime && sp.vp > 0.0 {
                break;
            }
            x_eps *= 0.5;
            shrinks += 1;
            if shrinks > 60 {
                return Err(Error::abort(x_eps, "no handoff point keeps the start regime"));
            }
        }
        if shrinks > 0 {
            warnings.push(format!("handoff point halved {shrinks} time(s) to stay in the start regime"));
        }
        let s0 = series_eval(&exp, 0.0);
        nodes.push(CurveNode {
            x: 0.0,
            v: s0.v,
            vp: s0.vp,
            vpp: s0.vpp,
            j: 0.0,
            mv: params.lambda,
            phi: if equal_rates { f64::NAN } else { 2.0 * gamma },
            theta_star: gamma,
            regime,
        });
        for k in (1..=12).rev() {
            let x = x_eps * 0.5f64.powi(k);
            let sp = series_eval(&exp, x);
            nodes.push(make_node(x, &[sp.v, sp.vp, sp.d], sp.vpp, &rhs));
        }
        let sp = series_eval(&exp, x_eps);
        let y = [sp.v, sp.vp, sp.d];
        nodes.push(make_node(x_eps, &y, sp.vpp, &rhs));
        (x_eps, y, Some(exp.order))
    };

    let mut segments = Vec::new();
    let mut switch_points = Vec::new();
    let mut x = x0;
    let mut y = y0;
    let mut seg_lo = 0.0;
    let mut h_init = None;
    loop {
        let mut seg = Segment {
            rhs: RegimeRhs::new(params, m, regime),
            nodes: &mut nodes,
            event: None,
            fatal: None,
            cutoff,
            event_tol: opts.event_tol,
        };
        let iopts = IntegratorOptions {
            h_init,
            ..IntegratorOptions::default()
        };
        let out = integrate(&mut seg, x, y, x_max, &tol, &iopts);
        if let Some(e) = seg.fatal.take() {
            return Err(e);
        }
        let event = seg.event.take();
        let out = out?;
        h_init = Some(out.h_next);
        match event {
            Some(ev) if out.stopped => {
                let left = RegimeRhs::new(params, m, ev.from);
                let right = RegimeRhs::new(params, m, ev.to);
                let vpp_left = left.eval(out.x, &out.y)[1];
                let vpp_right = right.eval(out.x, &out.y)[1];
                nodes.push(make_node(out.x, &out.y, vpp_left, &left));
                nodes.push(make_node(out.x, &out.y, vpp_right, &right));
                let (fd_left, fd_right) = one_sided_differences(out.x, &out.y, &left, &right, &tol)?;
                switch_points.push(SwitchPoint {
                    x: out.x,
                    from: ev.from,
                    to: ev.to,
                    phi: switch_value(out.x, &out.y, &left),
                    vpp_left,
                    vpp_right,
                    fd_left,
                    fd_right,
                });
                segments.push(RegimeSegment {
                    lo: seg_lo,
                    hi: out.x,
                    regime: ev.from,
                    terminal_event: SegmentEnd::Switch,
                });
                if switch_points.len() > opts.max_switches {
                    return Err(Error::SwitchOscillation {
                        count: switch_points.len(),
                        limit: opts.max_switches,
                        x: out.x,
                    });
                }
                if ev.to == ev.from {
                    return Err(Error::abort(out.x, "switch event re-entered the same regime"));
                }
                regime = ev.to;
                seg_lo = out.x;
                x = out.x;
                y = out.y;
                if x >= x_max {
                    break;
                }
            }
            _ => {
                segments.push(RegimeSegment {
                    lo: seg_lo,
                    hi: out.x,
                    regime,
                    terminal_event: SegmentEnd::Horizon,
                });
                break;
            }
        }
    }
    if segments.last().map(|s| s.terminal_event) != Some(SegmentEnd::Horizon) {
        segments.push(RegimeSegment {
            lo: seg_lo,
            hi: x_max,
            regime,
            terminal_event: SegmentEnd::Horizon,
        });
    }

    let mut curve = SolutionCurve {
        method: Method::Exponential,
        params: *params,
        claim: format!("Exponential(mean = {m})"),
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
        x_eps: x0,
        series_order,
        warnings,
    };
    let (v_inf, tail) = extrapolate_tail(&curve, params);
    if let Some(w) = &tail.warning {
        curve.warnings.push(w.clone());
    }
    curve.v_inf = v_inf;
    curve.tail = tail;
    Ok(curve)
}

/// Backward and forward second-order differences of `V'` at a switch,
/// each computed from the equation of its own side.
fn one_sided_differences(
    x: f64,
    y: &[f64; 3],
    left: &RegimeRhs,
    right: &RegimeRhs,
    tol: &Tolerances<3>,
) -> Result<(f64, f64)> {
    let delta = (1e-2 * x).min(1e-3);
    let fine = Tolerances {
        rtol: tol.rtol.min(1e-12),
        atol: [tol.atol[0].min(1e-14), 0.0, 0.0],
    };
    let opts = IntegratorOptions::default();
    let probe = |rhs: &RegimeRhs, reverse: bool| -> Result<[f64; 2]> {
        let mut sys = *rhs;
        if reverse {
            sys.reverse_from = Some(x);
        }
        let a = integrate(&mut sys, x, *y, x + delta, &fine, &opts)?;
        let b = integrate(&mut sys, a.x, a.y, x + 2.0 * delta, &fine, &opts)?;
        Ok([a.y[1], b.y[1]])
    };
    let [l1, l2] = probe(left, true)?;
    let [r1, r2] = probe(right, false)?;
    let v0 = y[1];
    Ok((
        (3.0 * v0 - 4.0 * l1 + l2) / (2.0 * delta),
        (-3.0 * v0 + 4.0 * r1 - r2) / (2.0 * delta),
    ))
}

/// `V(∞)` from the power-law decay `V' ≈ d x^{-q}` of the terminal regime,
/// with `q = 2μ̄/σ̄²` of that regime, or of the long regime when the curve
/// ends in the interior regime.
pub fn extrapolate_tail(curve: &SolutionCurve, params: &ModelParams) -> (f64, TailReport) {
    let terminal = curve.segments.last().map(|s| s.regime).unwrap_or(Regime::Long);
    let gamma = match terminal {
        Regime::Long | Regime::Short => terminal.gamma(params).unwrap(),
        Regime::Interior | Regime::Flat => params.a,
    };
    let rc = params.effective(gamma);
    let q = 2.0 * rc.mu_bar / (rc.sigma_bar * rc.sigma_bar);
    let nodes = curve.distinct_nodes();
    let xs: Vec<f64> = nodes.iter().map(|n| n.x).collect();
    let vps: Vec<f64> = nodes.iter().map(|n| n.vp).collect();
    let v_end = nodes.last().map(|n| n.v).unwrap_or(f64::NAN);
    let tail = power_law_tail(&xs, &vps, v_end, q);
    (v_end + tail.tail, tail)
}

/// Result of integrating the third-order linear form on one constant
/// segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThirdOrderReport {
    pub lo: f64,
    pub hi: f64,
    pub regime: Regime,
    /// Largest relative deviation in `V` or `V'` over the segment's nodes.
    pub max_deviation: f64,
    /// `cV''(0+) + (μ̄ - λ + c/m)V'(0+)` scaled by `cV''(0+)`, first segment only.
    pub boundary_residual: Option<f64>,
}

struct ThirdOrder {
    rc: RegimeConstants,
    lambda: f64,
    c: f64,
    m: f64,
}

impl OdeSystem<3> for ThirdOrder {
    fn rhs(&mut self, x: f64, y: &[f64; 3]) -> [f64; 3] {
        let s2 = self.rc.sigma_bar * self.rc.sigma_bar;
        let mb = self.rc.mu_bar;
        let a2 = x * x / self.m + 2.0 * (1.0 + mb / s2) * x + 2.0 * self.c / s2;
        let a1 = 2.0 / s2 * (mb - self.lambda + (self.c + mb * x) / self.m);
        [y[1], y[2], -(a2 * y[2] + a1 * y[1]) / (x * x)]
    }
}

/// Integrate `x²V''' + [x²/m + 2(1 + μ̄/σ̄²)x + 2c/σ̄²]V'' +
/// (2/σ̄²)[μ̄ - λ + (c + μ̄x)/m]V' = 0` across the constant-regime segment
/// `segment` from its left node and compare with the curve.
pub fn third_order_check(
    curve: &SolutionCurve,
    segment: usize,
    params: &ModelParams,
    m: f64,
) -> Result<ThirdOrderReport> {
    let seg = curve
        .segments
        .get(segment)
        .ok_or_else(|| Error::Contract(format!("no segment {segment}")))?;
    let gamma = match seg.regime {
        Regime::Long | Regime::Short => seg.regime.gamma(params).unwrap(),
        other => {
            return Err(Error::Contract(format!(
                "third-order form applies to constant regimes only, not {other}"
            )))
        }
    };
    let rc = regime_constants(params, gamma)?;
    let start_x = seg.lo.max(curve.x_eps);
    let nodes: Vec<CurveNode> = curve
        .nodes
        .iter()
        .filter(|n| n.regime == seg.regime && n.x >= start_x && n.x <= seg.hi)
        .copied()
        .collect();
    let first = nodes
        .first()
        .ok_or_else(|| Error::Contract("segment has no nodes".into()))?;
    let mut sys = ThirdOrder {
        rc,
        lambda: params.lambda,
        c: params.c,
        m,
    };
    let tol = Tolerances {
        rtol: 1e-11,
        atol: [1e-14, 0.0, 0.0],
    };
    let mut x = first.x;
    let mut y = [first.v, first.vp, first.vpp];
    let mut dev: f64 = 0.0;
    for n in nodes.iter().skip(1) {
        if n.x <= x {
            continue;
        }
        let out = integrate(&mut sys, x, y, n.x, &tol, &IntegratorOptions::default())?;
        x = out.x;
        y = out.y;
        dev = dev
            .max((y[0] - n.v).abs() / n.v.abs())
            .max((y[1] - n.vp).abs() / n.vp.abs());
    }
    let boundary_residual = if segment == 0 {
        let n0 = curve.nodes[0];
        let lhs = params.c * n0.vpp;
        Some((lhs + (rc.mu_bar - params.lambda + params.c / m) * n0.vp) / lhs.abs().max(1e-300))
    } else {
        None
    };
    Ok(ThirdOrderReport {
        lo: seg.lo,
        hi: seg.hi,
        regime: seg.regime,
        max_deviation: dev,
        boundary_residual,
    })
}
