//! Diagnostics on a solved curve: HJB residual, agreement of the policy
//! with the switching theorems, C² smoothness at switches, the convolution
//! state, and agreement between two solutions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::SolutionCurve;
use crate::error::Result;
use crate::model::{ClaimLaw, ModelParams};
use crate::operators::{generator_value, jump_operator_m};
use crate::quadrature::{adaptive_gl4, gauss_legendre_panels, GridFunction};
use crate::regime::switch_threshold;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub nodes: usize,
    /// `max |L^{θ*}V| / (λV)`.
    pub max_at_optimum: f64,
    pub worst_x_optimum: f64,
    /// `max_θ L^θ V / (λV)` over the sampled fractions, largest over nodes.
    pub max_over_theta: f64,
    pub worst_x_theta: f64,
    /// Largest `|M_curve - M_quadrature| / (λV)`.
    pub max_m_gap: f64,
}

impl ResidualReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_at_optimum <= tol && self.max_over_theta <= tol
    }
}

/// `M(V)` at every abscissa of `g`, by quadrature of the quintic
/// interpolant. Exponential laws use the exact one-step recursion
/// `J(x + h) = e^{-h/m} J(x) + (1/m)∫ V(y) e^{-(x + h - y)/m} dy`; other laws
/// integrate the full convolution at each node.
pub fn jump_on_grid(g: &GridFunction, law: &ClaimLaw, lambda: f64) -> Result<Vec<f64>> {
    let xs = g.xs();
    if let Some(m) = law.exponential_mean() {
        let mut out = Vec::with_capacity(xs.len());
        let mut j = 0.0;
        out.push(lambda * g.values()[0]);
        for k in 1..xs.len() {
            let (lo, hi) = (xs[k - 1], xs[k]);
            let inc = gauss_legendre_panels(lo, hi, 2, |y| g.eval(y) * ((y - hi) / m).exp());
            j = j * (-(hi - lo) / m).exp() + inc / m;
            out.push(lambda * (g.values()[k] - j));
        }
        return Ok(out);
    }
    xs.par_iter().map(|&x| jump_operator_m(g, law, x, lambda)).collect()
}

/// HJB residual at every node `x > 0`, with `M(V)` recomputed from the
/// quintic interpolant of the curve (see [`jump_on_grid`]), and the
/// supremum property checked on `n_theta` equally spaced fractions in
/// `[-b, a]`.
pub fn hjb_residual(curve: &SolutionCurve, law: &ClaimLaw, n_theta: usize) -> Result<ResidualReport> {
    let p = curve.params;
    let g = curve.value_function()?;
    let nodes = curve.distinct_nodes();
    let ms = jump_on_grid(&g, law, p.lambda)?;
    let thetas: Vec<f64> = (0..n_theta.max(2))
        .map(|i| -p.b + (p.a + p.b) * i as f64 / (n_theta.max(2) - 1) as f64)
        .collect();
    let rows: Vec<Result<(f64, f64, f64, f64)>> = nodes
        .par_iter()
        .zip(ms.par_iter())
        .filter(|(n, _)| n.x > 0.0)
        .map(|(n, &mv)| {
            let scale = p.lambda * n.v;
            let at_opt = generator_value(n.theta_star, n.x, n.vp, n.vpp, mv, &p).abs() / scale;
            let sup = thetas
                .iter()
                .map(|&t| generator_value(t, n.x, n.vp, n.vpp, mv, &p))
                .fold(f64::NEG_INFINITY, f64::max)
                / scale;
            Ok((n.x, at_opt, sup, (mv - n.mv).abs() / scale))
        })
        .collect();
    let mut rep = ResidualReport {
        nodes: 0,
        max_at_optimum: 0.0,
        worst_x_optimum: f64::NAN,
        max_over_theta: f64::NEG_INFINITY,
        worst_x_theta: f64::NAN,
        max_m_gap: 0.0,
    };
    for r in rows {
        let (x, a, s, m) = r?;
        rep.nodes += 1;
        if a > rep.max_at_optimum {
            rep.max_at_optimum = a;
            rep.worst_x_optimum = x;
        }
        if s > rep.max_over_theta {
            rep.max_over_theta = s;
            rep.worst_x_theta = x;
        }
        rep.max_m_gap = rep.max_m_gap.max(m);
    }
    Ok(rep)
}

/// Fraction prescribed by the switching theorem that covers `params`.
pub fn theorem_fraction(phi: f64, params: &ModelParams) -> f64 {
    let (a, b) = (params.a, params.b);
    if phi < -b && params.mu > params.r {
        return -b;
    }
    if phi > a && params.mu < params.r {
        return a;
    }
    if params.mu > params.r {
        if a >= b {
            // long-biased limits: interior below a, a above
            if phi < a { phi } else { a }
        } else {
            let t = 2.0 * a * b / (b - a);
            if phi < a {
                phi
            } else if phi <= t {
                a
            } else {
                -b
            }
        }
    } else if a <= b {
        if phi > -b { phi } else { -b }
    } else {
        let t = 2.0 * a * b / (a - b);
        if phi > -b {
            phi
        } else if phi >= -t {
            -b
        } else {
            a
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub nodes: usize,
    /// Nodes whose `θ*` differs from the theorem's fraction.
    pub mismatches: Vec<(f64, f64, f64)>,
    /// Nodes where `φ` has the wrong sign (`φ > 0` expected when `μ > r`,
    /// `φ < 0` when `μ < r`).
    pub sign_violations: Vec<(f64, f64)>,
    pub threshold: Option<f64>,
}

impl TheoremReport {
    pub fn passes(&self) -> bool {
        self.mismatches.is_empty() && self.sign_violations.is_empty()
    }
}

/// Compare every node's `θ*` with the theorem table evaluated at its `φ`.
/// A node whose `φ` lies within `band` (relative) of a table boundary may
/// carry either neighbouring fraction.
pub fn theorem_consistency(curve: &SolutionCurve, band: f64) -> TheoremReport {
    let p = curve.params;
    let mut rep = TheoremReport {
        nodes: 0,
        mismatches: Vec::new(),
        sign_violations: Vec::new(),
        threshold: switch_threshold(&p),
    };
    let mut bounds = vec![p.a, -p.b];
    if let Some(t) = rep.threshold {
        bounds.push(t);
        bounds.push(-t);
    }
    for n in curve.nodes.iter().filter(|n| n.x > 0.0) {
        if n.phi.is_nan() {
            continue;
        }
        rep.nodes += 1;
        let expected = theorem_fraction(n.phi, &p);
        let close = |u: f64, v: f64| (u - v).abs() <= 1e-12 * u.abs().max(v.abs()).max(1.0);
        let ok = close(expected, n.theta_star)
            || bounds.iter().any(|&bd| {
                (n.phi - bd).abs() <= band * bd.abs()
                    && [theorem_fraction(bd * (1.0 - 2.0 * band), &p), theorem_fraction(bd * (1.0 + 2.0 * band), &p)]
                        .iter()
                        .any(|&t| close(t, n.theta_star))
            });
        if !ok {
            rep.mismatches.push((n.x, n.phi, n.theta_star));
        }
        let sign_ok = if p.mu > p.r { n.phi > 0.0 } else { n.phi < 0.0 };
        if !sign_ok {
            rep.sign_violations.push((n.x, n.phi));
        }
    }
    rep
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessRow {
    pub x: f64,
    pub from: String,
    pub to: String,
    pub vpp_left: f64,
    pub vpp_right: f64,
    pub fd_left: f64,
    pub fd_right: f64,
    /// Relative disagreement of the finite-difference estimates.
    pub mismatch: f64,
}

/// One row per switch point.
pub fn smoothness(curve: &SolutionCurve) -> Vec<SmoothnessRow> {
    curve
        .switch_points
        .iter()
        .map(|s| SmoothnessRow {
            x: s.x,
            from: s.from.tag().into(),
            to: s.to.tag().into(),
            vpp_left: s.vpp_left,
            vpp_right: s.vpp_right,
            fd_left: s.fd_left,
            fd_right: s.fd_right,
            mismatch: s.fd_mismatch(),
        })
        .collect()
}

/// Largest `|J_curve(x) - ∫₀ˣ V(x - z) f(z) dz|` over the nodes with
/// `x ≤ x_hi`, the integral taken by adaptive quadrature of the quintic
/// interpolant.
pub fn j_state_error(curve: &SolutionCurve, law: &ClaimLaw, x_hi: f64) -> Result<f64> {
    let g = curve.value_function()?;
    let nodes = curve.distinct_nodes();
    let errs: Vec<f64> = nodes
        .par_iter()
        .filter(|n| n.x > 0.0 && n.x <= x_hi)
        .map(|n| {
            let xs = g.xs();
            let ix = g.locate(n.x);
            let mut total: f64 = 0.0;
            for k in 0..=ix {
                let hi = if k == ix { n.x } else { xs[k + 1] };
                if hi > xs[k] {
                    let (v, _) = adaptive_gl4(xs[k], hi, 1e-15, 20, &mut |y: f64| {
                        g.eval(y) * law.density(n.x - y)
                    });
                    total += v;
                }
            }
            (n.j - total).abs()
        })
        .collect();
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// `max |V_a(x) - V_b(x)| / |V_b(x)|` on `n + 1` equally spaced points of
/// `[lo, hi]`.
pub fn max_relative_gap(a: &SolutionCurve, b: &SolutionCurve, lo: f64, hi: f64, n: usize) -> Result<f64> {
    let ga = a.value_function()?;
    let gb = b.value_function()?;
    let mut worst: f64 = 0.0;
    for i in 0..=n {
        let x = lo + (hi - lo) * i as f64 / n.max(1) as f64;
        let (va, vb) = (ga.eval(x), gb.eval(x));
        worst = worst.max((va - vb).abs() / vb.abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theorem_tables_for_the_examples() {
        let p1 = ModelParams::example1();
        assert_eq!(theorem_fraction(0.3, &p1), 0.3);
        assert_eq!(theorem_fraction(1.5, &p1), 1.0);
        assert_eq!(theorem_fraction(40.0 / 19.0, &p1), 1.0);
        assert_eq!(theorem_fraction(2.2, &p1), -20.0);
        let p2 = ModelParams::example2();
        assert_eq!(theorem_fraction(-0.3, &p2), -0.3);
        assert_eq!(theorem_fraction(-1.5, &p2), -1.0);
        assert_eq!(theorem_fraction(-2.2, &p2), 20.0);
        let p3 = ModelParams::example3();
        assert_eq!(theorem_fraction(-100.0, &p3), -20.0);
        let wide = ModelParams { a: 5.0, b: 1.0, ..p1 };
        assert_eq!(theorem_fraction(100.0, &wide), 5.0);
    }

    #[test]
    fn theorem_table_agrees_with_regime_classification() {
        use crate::regime::classify;
        for p in [ModelParams::example1(), ModelParams::example2(), ModelParams::example3()] {
            for i in -400..=400 {
                let phi = i as f64 * 0.0731;
                let want = theorem_fraction(phi, &p);
                let got = classify(phi, &p).theta(phi, &p);
                assert_eq!(want, got, "phi {phi}");
            }
        }
    }
}
