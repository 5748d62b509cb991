//! Pointwise HJB quantities: the jump operator, the generator, the vertex
//! and maximizer of the generator, and the diagnostic ratios built from
//! `I = M(V) - (c + rx)V'`.
//!
//! The HJB equation is read as `sup_θ L^θ V = 0`. Solving it for `V''`
//! gives the equivalent infimum form used by [`curvature_inf`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClaimLaw, ModelParams};
use crate::quadrature::{adaptive_gl4, GridFunction};

/// A point of a candidate solution: `V`, its derivatives and `M(V)` at `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointState {
    pub x: f64,
    pub v: f64,
    pub vp: f64,
    pub vpp: Option<f64>,
    pub mv: f64,
}

impl PointState {
    pub fn new(x: f64, v: f64, vp: f64, vpp: f64, mv: f64) -> Self {
        Self {
            x,
            v,
            vp,
            vpp: Some(vpp),
            mv,
        }
    }

    pub fn first_order(x: f64, v: f64, vp: f64, mv: f64) -> Self {
        Self {
            x,
            v,
            vp,
            vpp: None,
            mv,
        }
    }

    fn require_vpp(&self) -> Result<f64> {
        self.vpp
            .ok_or_else(|| Error::Contract(format!("second derivative missing at x = {}", self.x)))
    }

    /// Multiply `V`, `V'`, `V''` and `M(V)` by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            x: self.x,
            v: k * self.v,
            vp: k * self.vp,
            vpp: self.vpp.map(|v| k * v),
            mv: k * self.mv,
        }
    }
}

/// A quantity that is not defined at the given point, naming the vanishing
/// denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Undefined(pub &'static str);

impl fmt::Display for Undefined {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "undefined: {} vanishes", self.0)
    }
}

impl std::error::Error for Undefined {}

/// Which row of the maximizer case table produced the fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Concave, vertex inside `[-b, a]`.
    Vertex,
    CapAtA,
    CapAtMinusB,
    /// Convex, endpoint chosen by comparing the vertex with `(a - b)/2`.
    ConvexSplit,
    Inflection,
    /// Direct comparison of generator values at a finite candidate set.
    Comparison,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaximizerResult {
    pub theta_star: f64,
    pub branch: Branch,
}

/// Tolerance for inflection detection: `|V''| ≤ 1e-12 (1 + |V'|/x)`.
pub fn inflection_band(p: &PointState) -> f64 {
    1e-12 * (1.0 + p.vp.abs() / p.x)
}

/// `M(V)(x) = λ[V(x) - ∫₀ˣ V(x-s) f(s) ds]`, evaluated as
/// `λ[V(x)(1 - F(x)) + ∫₀ˣ (V(x) - V(y)) f(x-y) dy]` with adaptive
/// Gauss-Legendre panels on each grid interval.
pub fn jump_operator_m(v: &GridFunction, law: &ClaimLaw, x: f64, lambda: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Contract(format!("jump operator needs x >= 0 (got {x})")));
    }
    if x > v.x_max() * (1.0 + 1e-12) || v.x_min() > 0.0 {
        return Err(Error::Contract(format!(
            "table covers [{}, {}] but the jump operator needs [0, {x}]",
            v.x_min(),
            v.x_max()
        )));
    }
    let vx = v.eval(x);
    let scale = vx.abs().max(1e-300);
    let tol = 1e-13 * scale;
    let xs = v.xs();
    let ix = v.locate(x);
    // W(x) - W(x_{k+1}) accumulated from the right, interval by interval
    let head = v.offset_in(ix, x);
    let mut integral = 0.0;
    let mut err = 0.0;
    let mut above = head;
    for ku in (0..=ix).rev() {
        let lo = xs[ku];
        let hi = if ku == ix { x } else { xs[ku + 1] };
        if hi > lo {
            let right = above;
            let (val, e) = adaptive_gl4(lo, hi, tol, 24, &mut |y: f64| {
                let d = if ku == ix {
                    head - v.offset_in(ix, y)
                } else {
                    right + v.offset_to_right(ku, y)
                };
                d * law.density(x - y)
            });
            integral += val;
            err += e;
        }
        if ku != ix {
            above += v.values()[ku + 1] - v.values()[ku];
        }
    }
    if err > 1e-9 * scale.max(integral.abs()) {
        return Err(Error::abort(
            x,
            format!("convolution quadrature did not converge (error estimate {err:.3e})"),
        ));
    }
    Ok(lambda * (vx * law.survival(x) + integral))
}

/// `L^θ V(x) = σ²x²θ²V''/2 + [c + rx + (μ - r)θx]V' - M(V)`.
pub fn generator_l(theta: f64, p: &PointState, params: &ModelParams) -> Result<f64> {
    let vpp = p.require_vpp()?;
    Ok(generator_value(theta, p.x, p.vp, vpp, p.mv, params))
}

#[inline]
pub(crate) fn generator_value(theta: f64, x: f64, vp: f64, vpp: f64, mv: f64, params: &ModelParams) -> f64 {
    let s = params.sigma * theta * x;
    0.5 * s * s * vpp + (params.c + params.r * x + params.excess_return() * theta * x) * vp - mv
}

/// Unconstrained vertex of the θ-quadratic, `-(μ - r)V'/(σ²xV'')`.
pub fn alpha_vertex(p: &PointState, params: &ModelParams) -> Result<std::result::Result<f64, Undefined>> {
    let vpp = p.require_vpp()?;
    if vpp.abs() <= inflection_band(p) {
        return Ok(Err(Undefined("V''")));
    }
    Ok(Ok(-params.excess_return() * p.vp / (params.sigma * params.sigma * p.x * vpp)))
}

/// Maximizer of `θ ↦ L^θ V(x)` over `[-b, a]` by the case table on the sign
/// of `V''`; for `μ = r` the generator values at `{0, a, -b}` are compared.
pub fn maximizer(p: &PointState, params: &ModelParams) -> Result<MaximizerResult> {
    let vpp = p.require_vpp()?;
    let (a, b) = (params.a, params.b);
    let dm = params.excess_return();
    if dm == 0.0 {
        return maximizer_by_comparison(p, params, &[0.0, a, -b]);
    }
    if vpp.abs() <= inflection_band(p) {
        let theta_star = if dm >= 0.0 { a } else { -b };
        return Ok(MaximizerResult {
            theta_star,
            branch: Branch::Inflection,
        });
    }
    let vertex = -dm * p.vp / (params.sigma * params.sigma * p.x * vpp);
    if vpp < 0.0 {
        let (theta_star, branch) = if vertex > a {
            (a, Branch::CapAtA)
        } else if vertex < -b {
            (-b, Branch::CapAtMinusB)
        } else {
            (vertex, Branch::Vertex)
        };
        return Ok(MaximizerResult { theta_star, branch });
    }
    let split = 0.5 * (a - b);
    let theta_star = if vertex < split {
        a
    } else if vertex > split {
        -b
    } else if dm > 0.0 {
        a
    } else {
        -b
    };
    Ok(MaximizerResult {
        theta_star,
        branch: Branch::ConvexSplit,
    })
}

/// Argmax of the generator over an explicit candidate list; the first
/// candidate wins ties.
pub fn maximizer_by_comparison(
    p: &PointState,
    params: &ModelParams,
    candidates: &[f64],
) -> Result<MaximizerResult> {
    let vpp = p.require_vpp()?;
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for &theta in candidates {
        if !params.admissible(theta) {
            continue;
        }
        let value = generator_value(theta, p.x, p.vp, vpp, p.mv, params);
        if value > best.0 {
            best = (value, theta);
        }
    }
    if best.1.is_nan() {
        return Err(Error::Contract("no admissible candidate fraction".into()));
    }
    Ok(MaximizerResult {
        theta_star: best.1,
        branch: Branch::Comparison,
    })
}

/// `I = M(V) - (c + rx)V'`.
pub fn i_of(p: &PointState, params: &ModelParams) -> f64 {
    p.mv - (params.c + params.r * p.x) * p.vp
}

/// `φ = 2I / ((μ - r)xV')`.
pub fn phi(p: &PointState, params: &ModelParams) -> std::result::Result<f64, Undefined> {
    let den = params.excess_return() * p.x * p.vp;
    if den == 0.0 {
        return Err(Undefined("(mu - r) x V'"));
    }
    Ok(2.0 * i_of(p, params) / den)
}

/// `ψ = -(μ - r)²V'² / (2σ²I)`.
pub fn psi(p: &PointState, params: &ModelParams) -> std::result::Result<f64, Undefined> {
    let i = i_of(p, params);
    if i == 0.0 {
        return Err(Undefined("M(V) - (c + rx) V'"));
    }
    let k = params.excess_return() * p.vp;
    Ok(-k * k / (2.0 * params.sigma * params.sigma * i))
}

/// `(ξ, η)` for the constant fraction `γ`: with
/// `N = M(V) - (c + rx + (μ - r)γx)V'`,
/// `ξ = -γ²(μ - r)xV'/(2N)` and `η = 2N/(σ²γ²x²)`.
pub fn xi_eta(
    gamma: f64,
    p: &PointState,
    params: &ModelParams,
) -> std::result::Result<(f64, f64), Undefined> {
    let n = p.mv - (params.c + params.r * p.x + params.excess_return() * gamma * p.x) * p.vp;
    if n == 0.0 {
        return Err(Undefined("M(V) - (c + rx + (mu - r) gamma x) V'"));
    }
    let xi = -gamma * gamma * params.excess_return() * p.x * p.vp / (2.0 * n);
    let s = params.sigma * gamma * p.x;
    let eta = 2.0 * n / (s * s);
    Ok((xi, eta))
}

/// `2 inf { I - (μ - r)θxV' } / (σ²θ²x²)` over `θ ∈ [-b, a]`, `|θ| > A`.
///
/// The ratio's only stationary point is `θ = φ`, where it equals `ψ`, so
/// the infimum is taken over `{-b, a, φ, ±A}`. One side of the origin may
/// be empty when `A` exceeds `a` or `b`; both sides empty is rejected.
pub fn curvature_inf(p: &PointState, params: &ModelParams, cutoff: f64) -> Result<f64> {
    let (a, b) = (params.a, params.b);
    if !(cutoff >= 0.0) || (cutoff >= a && cutoff >= b) {
        return Err(Error::Contract(format!(
            "exclusion cutoff {cutoff} leaves no admissible fraction in [-{b}, {a}]"
        )));
    }
    Ok(curvature_inf_unchecked(p.x, p.vp, p.mv, params, cutoff))
}

#[inline]
pub(crate) fn curvature_inf_unchecked(x: f64, vp: f64, mv: f64, params: &ModelParams, cutoff: f64) -> f64 {
    let (a, b) = (params.a, params.b);
    let i = mv - (params.c + params.r * x) * vp;
    let k = params.excess_return() * x * vp;
    let s2 = params.sigma * params.sigma * x * x;
    let ratio = |theta: f64| 2.0 * (i - k * theta) / (s2 * theta * theta);
    let mut best = f64::INFINITY;
    let mut consider = |theta: f64| {
        let v = ratio(theta);
        if v < best {
            best = v;
        }
    };
    if a > cutoff {
        consider(a);
        consider(cutoff.max(f64::MIN_POSITIVE));
    }
    if b > cutoff {
        consider(-b);
        consider(-cutoff.max(f64::MIN_POSITIVE));
    }
    if k != 0.0 {
        let stationary = 2.0 * i / k;
        if stationary.abs() > cutoff && stationary >= -b && stationary <= a {
            consider(stationary);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ex1() -> ModelParams {
        ModelParams::example1()
    }

    #[test]
    fn jump_operator_of_constant_is_survival() {
        let xs: Vec<f64> = (0..=40).map(|i| i as f64 * 0.25).collect();
        let g = GridFunction::new(xs.clone(), vec![1.0; xs.len()], vec![0.0; xs.len()]).unwrap();
        let law = ClaimLaw::exponential(1.0);
        for &x in &[0.0, 0.3, 2.0, 7.77, 10.0] {
            let m = jump_operator_m(&g, &law, x, 0.09).unwrap();
            assert!((m - 0.09 * (-x).exp()).abs() < 1e-15, "x = {x}: {m}");
        }
        assert_eq!(jump_operator_m(&g, &law, 0.0, 0.09).unwrap(), 0.09);
    }

    #[test]
    fn jump_operator_of_identity() {
        let xs: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let g = GridFunction::new(xs.clone(), xs.clone(), vec![1.0; xs.len()]).unwrap();
        let m = jump_operator_m(&g, &ClaimLaw::exponential(1.0), 1.0, 1.0).unwrap();
        // 1 - ∫₀¹ (1 - s) e^{-s} ds = 1 - e^{-1}
        assert!((m - (1.0 - (-1f64).exp())).abs() < 1e-12, "{m}");
        assert!((m - 0.632_120_558_828_557_7).abs() < 1e-12);
    }

    #[test]
    fn jump_operator_rejects_negative_level() {
        let g = GridFunction::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert!(jump_operator_m(&g, &ClaimLaw::exponential(1.0), -0.1, 1.0).is_err());
    }

    #[test]
    fn generator_examples() {
        let p = PointState::new(1.0, 1.0, 1.0, -1.0, 0.05);
        let l = generator_l(1.0, &p, &ex1()).unwrap();
        assert!((l - (-0.015)).abs() < 1e-15, "{l}");
        let l0 = generator_l(0.0, &p, &ex1()).unwrap();
        assert!((l0 - ((0.02 + 0.015) * 1.0 - 0.05)).abs() < 1e-15);
        assert!(generator_l(0.0, &PointState::first_order(1.0, 1.0, 1.0, 0.05), &ex1()).is_err());
    }

    #[test]
    fn vertex_examples() {
        let p = PointState::new(1.0, 1.0, 4.5, -1.0, 0.0);
        let v = alpha_vertex(&p, &ex1()).unwrap().unwrap();
        assert!((v - 2.25).abs() < 1e-12);
        let flat = ModelParams { mu: 0.015, ..ex1() };
        assert_eq!(alpha_vertex(&p, &flat).unwrap().unwrap(), 0.0);
        let infl = PointState::new(1.0, 1.0, 4.5, 0.0, 0.0);
        assert!(alpha_vertex(&infl, &ex1()).unwrap().is_err());
    }

    #[test]
    fn maximizer_examples() {
        let p = PointState::new(1.0, 1.0, 4.5, -1.0, 0.0);
        let m = maximizer(&p, &ex1()).unwrap();
        assert_eq!(m.theta_star, 1.0);
        assert_eq!(m.branch, Branch::CapAtA);

        // convex with vertex -0.4 > (a - b)/2 = -9.5: x = 1, V' = 4.5
        // vertex = -0.005 * 4.5 / (0.01 * V'') = -0.4  =>  V'' = 5.625
        let q = PointState::new(1.0, 1.0, 4.5, 5.625, 0.0);
        assert!((alpha_vertex(&q, &ex1()).unwrap().unwrap() + 0.4).abs() < 1e-12);
        let m = maximizer(&q, &ex1()).unwrap();
        assert_eq!(m.theta_star, -20.0);
        assert_eq!(m.branch, Branch::ConvexSplit);

        let r = PointState::new(1.0, 1.0, 4.5, 0.0, 0.0);
        let m = maximizer(&r, &ex1()).unwrap();
        assert_eq!(m.theta_star, 1.0);
        assert_eq!(m.branch, Branch::Inflection);
    }

    #[test]
    fn maximizer_equal_rates_compares_three_candidates() {
        let p = ModelParams { mu: 0.015, ..ex1() };
        let concave = PointState::new(1.0, 1.0, 4.5, -1.0, 0.0);
        assert_eq!(maximizer(&concave, &p).unwrap().theta_star, 0.0);
        let convex = PointState::new(1.0, 1.0, 4.5, 1.0, 0.0);
        assert_eq!(maximizer(&convex, &p).unwrap().theta_star, -20.0);
    }

    #[test]
    fn phi_psi_i_examples() {
        let p = PointState::first_order(1.0, 1.0, 4.5, 0.08);
        let i = i_of(&p, &ex1());
        assert!((i - (-0.0775)).abs() < 1e-15);
        let f = phi(&p, &ex1()).unwrap();
        assert!((f - (-6.888_888_888_888_889)).abs() < 1e-12, "{f}");
        let s = psi(&p, &ex1()).unwrap();
        let lhs = s * 0.01 * 1.0 * f;
        assert!((lhs - (-0.005 * 4.5)).abs() <= 1e-12 * 0.0225);

        let zero = PointState::first_order(1.0, 1.0, 4.5, 0.035 * 4.5);
        assert_eq!(phi(&zero, &ex1()).unwrap(), 0.0);
        assert!(psi(&zero, &ex1()).is_err());

        let novp = PointState::first_order(1.0, 1.0, 0.0, 0.3);
        assert_eq!(i_of(&novp, &ex1()), 0.3);
    }

    #[test]
    fn eta_increases_with_jump_term() {
        let p = PointState::first_order(2.0, 1.0, 0.5, 0.2);
        let (_, e0) = xi_eta(1.0, &p, &ex1()).unwrap();
        let q = PointState { mv: p.mv + 1.0, ..p };
        let (_, e1) = xi_eta(1.0, &q, &ex1()).unwrap();
        assert!(e1 > e0);
    }

    #[test]
    fn curvature_inf_equal_rates_uses_largest_fraction() {
        let p = ModelParams { mu: 0.015, ..ex1() };
        let s = PointState::first_order(1.0, 1.0, 1.0, 0.5);
        let v = curvature_inf(&s, &p, 1e-6).unwrap();
        let i = 0.5 - 0.035;
        assert!((v - 2.0 * i / (0.01 * 400.0)).abs() < 1e-15);
    }

    #[test]
    fn curvature_inf_rejects_empty_feasible_set() {
        let s = PointState::first_order(1.0, 1.0, 1.0, 0.5);
        assert!(curvature_inf(&s, &ex1(), 25.0).is_err());
        assert!(curvature_inf(&s, &ex1(), 5.0).is_ok());
    }

    fn any_params() -> impl Strategy<Value = ModelParams> {
        (
            0.005f64..0.2,
            0.01f64..0.5,
            -0.1f64..0.1,
            0.001f64..0.1,
            0.05f64..0.5,
            0.1f64..25.0,
            0.1f64..25.0,
        )
            .prop_map(|(c, lambda, mu, r, sigma, a, b)| ModelParams {
                c,
                lambda,
                mu,
                r,
                sigma,
                a,
                b,
            })
    }

    proptest! {
        #[test]
        fn maximizer_dominates_sampled_fractions(
            params in any_params(),
            x in 0.01f64..50.0,
            vp in 1e-6f64..10.0,
            vpp in -10.0f64..10.0,
            mv in 0.0f64..1.0,
        ) {
            let p = PointState::new(x, 1.0, vp, vpp, mv);
            let best = maximizer(&p, &params).unwrap();
            prop_assert!(params.admissible(best.theta_star));
            let lstar = generator_l(best.theta_star, &p, &params).unwrap();
            let scale = (params.sigma * params.sigma * x * x * (params.a.max(params.b)).powi(2) * vpp.abs())
                + (params.c + params.r * x + params.excess_return().abs() * params.a.max(params.b) * x) * vp
                + mv;
            for k in 0..=256 {
                let theta = -params.b + (params.a + params.b) * k as f64 / 256.0;
                let l = generator_l(theta, &p, &params).unwrap();
                prop_assert!(lstar >= l - 1e-12 * scale, "theta {} gives {} > {}", theta, l, lstar);
            }
        }

        #[test]
        fn diagnostic_identities(
            params in any_params(),
            x in 0.01f64..50.0,
            vp in 1e-6f64..10.0,
            mv in 0.0f64..1.0,
            gamma in -25.0f64..25.0,
        ) {
            prop_assume!(params.excess_return().abs() > 1e-6);
            prop_assume!(gamma.abs() > 1e-3);
            let p = PointState::first_order(x, 1.0, vp, mv);
            if let (Ok(f), Ok(s)) = (phi(&p, &params), psi(&p, &params)) {
                let lhs = s * params.sigma * params.sigma * x * f;
                let rhs = -params.excess_return() * vp;
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
                let i = i_of(&p, &params);
                prop_assert!(f.signum() == (i * params.excess_return()).signum() || i == 0.0);
            }
            if let Ok((xi, eta)) = xi_eta(gamma, &p, &params) {
                let lhs = eta * params.sigma * params.sigma * x * xi;
                let rhs = -params.excess_return() * vp;
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
            }
        }

        #[test]
        fn scale_invariance(
            params in any_params(),
            x in 0.01f64..50.0,
            vp in 1e-6f64..10.0,
            vpp in -10.0f64..10.0,
            mv in 0.0f64..1.0,
            k in 0.01f64..100.0,
        ) {
            prop_assume!(vpp.abs() > 1e-6);
            prop_assume!(params.excess_return() != 0.0);
            let p = PointState::new(x, 1.0, vp, vpp, mv);
            let q = p.scaled(k);
            let (a1, a2) = (alpha_vertex(&p, &params).unwrap().unwrap(), alpha_vertex(&q, &params).unwrap().unwrap());
            prop_assert!((a1 - a2).abs() <= 1e-12 * a1.abs().max(1e-300));
            let (m1, m2) = (maximizer(&p, &params).unwrap(), maximizer(&q, &params).unwrap());
            prop_assert_eq!(m1.branch, m2.branch);
            prop_assert!((m1.theta_star - m2.theta_star).abs() <= 1e-12 * m1.theta_star.abs().max(1.0));
            if let (Ok(f1), Ok(f2)) = (phi(&p, &params), phi(&q, &params)) {
                prop_assert!((f1 - f2).abs() <= 1e-12 * f1.abs().max(1e-300));
            }
        }

        #[test]
        fn curvature_inf_matches_dense_minimum(
            params in any_params(),
            x in 0.01f64..50.0,
            vp in 1e-6f64..10.0,
            mv in 0.0f64..1.0,
        ) {
            let cutoff = params.a.min(params.b) * 1e-6;
            let p = PointState::first_order(x, 1.0, vp, mv);
            let v = curvature_inf(&p, &params, cutoff).unwrap();
            let s2 = params.sigma * params.sigma * x * x;
            let i = i_of(&p, &params);
            let k = params.excess_return() * x * vp;
            for j in 0..=400 {
                let theta = -params.b + (params.a + params.b) * j as f64 / 400.0;
                if theta.abs() <= cutoff { continue; }
                let r = 2.0 * (i - k * theta) / (s2 * theta * theta);
                prop_assert!(v <= r + 1e-12 * r.abs());
            }
            // the infimum makes the generator's sup vanish
            let pt = PointState::new(x, 1.0, vp, v, mv);
            let best = maximizer_by_comparison(&pt, &params, &[params.a, -params.b]).unwrap();
            let l = generator_l(best.theta_star, &pt, &params).unwrap();
            prop_assert!(l <= 1e-9 * (mv + (params.c + params.r * x) * vp));
        }
    }
}
