//! Policy regimes and the switching tables that pick a regime from `φ`.
//!
//! | case            | interior     | long `a`          | short `-b`        |
//! |-----------------|--------------|-------------------|-------------------|
//! | `μ > r, a ≥ b`  | `φ < a`      | `φ ≥ a`           | never             |
//! | `μ > r, a < b`  | `φ < a`      | `a ≤ φ ≤ T`       | `φ > T`           |
//! | `μ < r, a ≤ b`  | `φ > -b`     | never             | `φ ≤ -b`          |
//! | `μ < r, a > b`  | `φ > -b`     | `φ < -T`          | `-T ≤ φ ≤ -b`     |
//!
//! with `T = 2ab/|b - a|`. For `μ = r` only `θ = 0` and the endpoint of
//! largest magnitude compete, decided by the sign of `V''`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Constant fraction `a`.
    Long,
    /// Constant fraction `-b`.
    Short,
    /// Unconstrained vertex `θ = φ`.
    Interior,
    /// No investment; only reachable when `μ = r`.
    Flat,
}

impl Regime {
    /// Short tag used in CSV output.
    pub fn tag(self) -> &'static str {
        match self {
            Regime::Long => "A",
            Regime::Short => "B",
            Regime::Interior => "INT",
            Regime::Flat => "Z",
        }
    }

    /// Constant fraction of a boundary regime.
    pub fn gamma(self, params: &ModelParams) -> Option<f64> {
        match self {
            Regime::Long => Some(params.a),
            Regime::Short => Some(-params.b),
            Regime::Flat => Some(0.0),
            Regime::Interior => None,
        }
    }

    /// Fraction held in this regime given `φ`.
    pub fn theta(self, phi: f64, params: &ModelParams) -> f64 {
        self.gamma(params).unwrap_or_else(|| params.clamp(phi))
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" => Ok(Regime::Long),
            "B" => Ok(Regime::Short),
            "INT" => Ok(Regime::Interior),
            "Z" => Ok(Regime::Flat),
            other => Err(format!("unknown regime tag {other:?}")),
        }
    }
}

/// `2ab/|b - a|`, undefined when `a = b`.
pub fn switch_threshold(params: &ModelParams) -> Option<f64> {
    let (a, b) = (params.a, params.b);
    if a == b {
        None
    } else {
        Some(2.0 * a * b / (b - a).abs())
    }
}

/// Endpoint of largest magnitude, `a` when `a ≥ b` and `-b` otherwise.
pub fn max_abs_fraction(params: &ModelParams) -> f64 {
    if params.a >= params.b {
        params.a
    } else {
        -params.b
    }
}

/// Regime selected by the switching table for `φ` (requires `μ ≠ r`).
pub fn classify(phi: f64, params: &ModelParams) -> Regime {
    let (a, b) = (params.a, params.b);
    let t = switch_threshold(params);
    if params.mu > params.r {
        if phi < a {
            Regime::Interior
        } else if b > a && phi > t.unwrap_or(f64::INFINITY) {
            Regime::Short
        } else {
            Regime::Long
        }
    } else if phi > -b {
        Regime::Interior
    } else if a > b && phi < -t.unwrap_or(f64::INFINITY) {
        Regime::Long
    } else {
        Regime::Short
    }
}

/// Closed range `[lo, hi]` of `φ` on which `regime` stays selected; open
/// ends are infinite.
pub fn phi_bounds(regime: Regime, params: &ModelParams) -> (f64, f64) {
    let (a, b) = (params.a, params.b);
    let t = switch_threshold(params);
    if params.mu > params.r {
        let top = if b > a { t.unwrap() } else { f64::INFINITY };
        match regime {
            Regime::Interior => (f64::NEG_INFINITY, a),
            Regime::Long => (a, top),
            Regime::Short => (top, f64::INFINITY),
            Regime::Flat => (f64::NAN, f64::NAN),
        }
    } else {
        let bottom = if a > b { -t.unwrap() } else { f64::NEG_INFINITY };
        match regime {
            Regime::Interior => (-b, f64::INFINITY),
            Regime::Short => (bottom, -b),
            Regime::Long => (f64::NEG_INFINITY, bottom),
            Regime::Flat => (f64::NAN, f64::NAN),
        }
    }
}

/// Regime entered when `φ` leaves `regime` through the bound `bound`,
/// moving `upward` or downward.
pub fn next_regime(bound: f64, upward: bool, params: &ModelParams) -> Regime {
    let nudge = 1e-9 * bound.abs().max(1e-300);
    let probe = if upward { bound + nudge } else { bound - nudge };
    classify(probe, params)
}

/// Regime a solution starts in at `x = 0+`: `a` when `μ > r`, `-b` when
/// `μ < r`.
pub fn start_regime(params: &ModelParams) -> Regime {
    if params.mu >= params.r {
        Regime::Long
    } else {
        Regime::Short
    }
}

/// Threshold constants listed next to a policy: `a`, `-b`, `(a - b)/2` and,
/// when defined, `±2ab/|b - a|`.
pub fn threshold_constants(params: &ModelParams) -> Vec<(&'static str, f64)> {
    let mut out = vec![
        ("a", params.a),
        ("-b", -params.b),
        ("(a-b)/2", 0.5 * (params.a - params.b)),
    ];
    if let Some(t) = switch_threshold(params) {
        out.push(("2ab/|b-a|", t));
        out.push(("-2ab/|b-a|", -t));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn example1_threshold() {
        let t = switch_threshold(&ModelParams::example1()).unwrap();
        assert!((t - 40.0 / 19.0).abs() < 1e-15);
        assert!((t - 2.105_263_157_894_737).abs() < 1e-12);
    }

    #[test]
    fn equal_limits_have_no_threshold() {
        let p = ModelParams { a: 2.0, b: 2.0, ..ModelParams::example1() };
        assert!(switch_threshold(&p).is_none());
        assert_eq!(threshold_constants(&p).len(), 3);
        assert_eq!(classify(100.0, &p), Regime::Long);
    }

    #[test]
    fn example_tables() {
        let p1 = ModelParams::example1();
        assert_eq!(classify(0.5, &p1), Regime::Interior);
        assert_eq!(classify(1.0, &p1), Regime::Long);
        assert_eq!(classify(2.0, &p1), Regime::Long);
        assert_eq!(classify(2.2, &p1), Regime::Short);
        let p2 = ModelParams::example2();
        assert_eq!(classify(-0.5, &p2), Regime::Interior);
        assert_eq!(classify(-1.0, &p2), Regime::Short);
        assert_eq!(classify(-2.2, &p2), Regime::Long);
        let p3 = ModelParams::example3();
        assert_eq!(classify(-0.5, &p3), Regime::Interior);
        assert_eq!(classify(-50.0, &p3), Regime::Short);
    }

    #[test]
    fn start_regime_is_compatible_with_limit_of_phi() {
        // near zero φ → 2γ
        for p in [ModelParams::example1(), ModelParams::example2(), ModelParams::example3()] {
            let r = start_regime(&p);
            assert_eq!(classify(2.0 * r.gamma(&p).unwrap(), &p), r);
        }
    }

    #[test]
    fn tag_round_trip() {
        for r in [Regime::Long, Regime::Short, Regime::Interior, Regime::Flat] {
            assert_eq!(r.tag().parse::<Regime>().unwrap(), r);
        }
    }

    proptest! {
        #[test]
        fn classification_agrees_with_bounds(
            mu in -0.1f64..0.1, a in 0.1f64..30.0, b in 0.1f64..30.0, phi in -100.0f64..100.0
        ) {
            let p = ModelParams { mu, a, b, ..ModelParams::example1() };
            prop_assume!(mu != p.r);
            let reg = classify(phi, &p);
            let (lo, hi) = phi_bounds(reg, &p);
            prop_assert!(phi >= lo && phi <= hi, "{:?} [{}, {}] phi {}", reg, lo, hi, phi);
        }

        #[test]
        fn table_fraction_attains_generator_supremum(
            mu in -0.1f64..0.1, a in 0.1f64..30.0, b in 0.1f64..30.0,
            x in 0.05f64..20.0, vp in 0.01f64..5.0, mv in 0.0f64..1.0
        ) {
            use crate::operators::{curvature_inf, generator_l, i_of, phi as phi_of, PointState};
            let p = ModelParams { mu, a, b, ..ModelParams::example1() };
            prop_assume!((mu - p.r).abs() > 1e-4);
            let s = PointState::first_order(x, 1.0, vp, mv);
            prop_assume!(i_of(&s, &p) > 0.0);
            let f = phi_of(&s, &p).unwrap();
            let vpp = curvature_inf(&s, &p, a.min(b) * 1e-6).unwrap();
            let full = PointState { vpp: Some(vpp), ..s };
            let theta = classify(f, &p).theta(f, &p);
            let l = generator_l(theta, &full, &p).unwrap();
            let scale = mv + (p.c + p.r * x) * vp + (mu - p.r).abs() * x * vp * a.max(b);
            prop_assert!(l.abs() <= 1e-12 * scale, "l = {}", l);
        }
    }
}
