//! Solved value curves: nodes, regime segments, switch points, and the CSV
//! representation `x,V,Vp,Vpp,J,phi,theta_star,regime`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::quadrature::GridFunction;
use crate::regime::Regime;

pub const CSV_HEADER: &str = "x,V,Vp,Vpp,J,phi,theta_star,regime";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveNode {
    pub x: f64,
    pub v: f64,
    pub vp: f64,
    pub vpp: f64,
    /// `∫₀ˣ V(x - s) dF(s)`.
    pub j: f64,
    /// `M(V)(x)`, kept separately because `λ(V - J)` cancels at large `x`.
    pub mv: f64,
    /// `NaN` where undefined (`μ = r`).
    pub phi: f64,
    pub theta_star: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentEnd {
    Switch,
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSegment {
    pub lo: f64,
    pub hi: f64,
    pub regime: Regime,
    pub terminal_event: SegmentEnd,
}

/// A regime change with its one-sided curvature estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchPoint {
    pub x: f64,
    pub from: Regime,
    pub to: Regime,
    pub phi: f64,
    /// `V''(x-)` from the outgoing regime's equation.
    pub vpp_left: f64,
    /// `V''(x+)` from the incoming regime's equation.
    pub vpp_right: f64,
    /// Backward second-order difference of `V'` on the outgoing side.
    pub fd_left: f64,
    /// Forward second-order difference of `V'` on the incoming side.
    pub fd_right: f64,
}

impl SwitchPoint {
    /// Relative disagreement of the one-sided finite-difference estimates.
    pub fn fd_mismatch(&self) -> f64 {
        (self.fd_left - self.fd_right).abs() / self.fd_left.abs().max(self.fd_right.abs()).max(1e-300)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Series start plus the `(V, V', V - J)` system.
    Exponential,
    /// Near-zero collocation plus the `w' = Tw` march.
    General,
}

/// Far-field extrapolation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    /// Power-law exponent of `V'`.
    pub q: f64,
    /// Fitted prefactor of `V' ≈ d x^{-q}`.
    pub d: f64,
    /// Amount added to `V(X_max)`.
    pub tail: f64,
    /// `true` when `V'(X_max)·X_max` was already below `1e-12·V`.
    pub negligible: bool,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionCurve {
    pub method: Method,
    pub params: ModelParams,
    pub claim: String,
    pub nodes: Vec<CurveNode>,
    pub segments: Vec<RegimeSegment>,
    pub switch_points: Vec<SwitchPoint>,
    pub v_inf: f64,
    pub tail: TailReport,
    /// Where the near-zero start handed over to the main integration.
    pub x_eps: f64,
    pub series_order: Option<usize>,
    pub warnings: Vec<String>,
}

impl SolutionCurve {
    pub fn x_max(&self) -> f64 {
        self.nodes.last().map(|n| n.x).unwrap_or(0.0)
    }

    /// Ordered regime sequence, e.g. `[A, B, A, INT]`.
    pub fn regime_sequence(&self) -> Vec<Regime> {
        self.segments.iter().map(|s| s.regime).collect()
    }

    /// Nodes with duplicate abscissas (the left copy at a switch) removed.
    pub fn distinct_nodes(&self) -> Vec<CurveNode> {
        let mut out: Vec<CurveNode> = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            match out.last_mut() {
                Some(last) if last.x >= n.x => *last = *n,
                _ => out.push(*n),
            }
        }
        out
    }

    /// Quintic Hermite interpolant of `V` through the nodes.
    pub fn value_function(&self) -> Result<GridFunction> {
        let nodes = self.distinct_nodes();
        GridFunction::new(
            nodes.iter().map(|n| n.x).collect(),
            nodes.iter().map(|n| n.v).collect(),
            nodes.iter().map(|n| n.vp).collect(),
        )?
        .with_curvatures(nodes.iter().map(|n| n.vpp).collect())
    }

    /// `V(x)/V(∞)`, the maximal survival probability.
    pub fn survival(&self, x: f64) -> Result<f64> {
        let g = self.value_function()?;
        let x = x.max(0.0);
        if x >= self.x_max() {
            return Ok(1.0f64.min(self.nodes.last().unwrap().v / self.v_inf));
        }
        Ok(g.eval(x) / self.v_inf)
    }

    /// Vertex `-(μ - r)V'/(σ²xV'')` at the last node.
    pub fn alpha_at_end(&self) -> Option<f64> {
        let n = self.nodes.last()?;
        let p = &self.params;
        if n.vpp == 0.0 {
            return None;
        }
        Some(-p.excess_return() * n.vp / (p.sigma * p.sigma * n.x * n.vpp))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for n in &self.nodes {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                n.x,
                n.v,
                n.vp,
                n.vpp,
                n.j,
                fmt_opt(n.phi),
                n.theta_star,
                n.regime.tag()
            )?;
        }
        Ok(())
    }

    /// Rows of a curve CSV, as written by [`SolutionCurve::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<CsvRow>> {
        let mut rows = Vec::new();
        let mut lines = r.lines().enumerate();
        match lines.next() {
            Some((_, Ok(h))) if h.trim() == CSV_HEADER => {}
            _ => {
                return Err(Error::Config {
                    line: 1,
                    msg: format!("expected header `{CSV_HEADER}`"),
                })
            }
        }
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let bad = |msg: String| Error::Config { line: i + 1, msg };
            if f.len() != 8 {
                return Err(bad(format!("expected 8 fields, found {}", f.len())));
            }
            let num = |s: &str| -> Result<f64> {
                if s.is_empty() {
                    Ok(f64::NAN)
                } else {
                    s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")))
                }
            };
            rows.push(CsvRow {
                x: num(f[0])?,
                v: num(f[1])?,
                vp: num(f[2])?,
                vpp: num(f[3])?,
                j: num(f[4])?,
                phi: num(f[5])?,
                theta_star: f[6].to_string(),
                regime: f[7].parse().map_err(bad)?,
            });
        }
        Ok(rows)
    }
}

/// One parsed CSV row; `theta_star` keeps its text so a re-emitted column
/// is byte-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub x: f64,
    pub v: f64,
    pub vp: f64,
    pub vpp: f64,
    pub j: f64,
    pub phi: f64,
    pub theta_star: String,
    pub regime: Regime,
}

fn fmt_opt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Least-squares fit `V' ≈ d x^{-q}` over the last decade of the given
/// nodes and the power-law tail `d X^{1-q}/(q - 1)`.
pub fn power_law_tail(xs: &[f64], vps: &[f64], v_end: f64, q: f64) -> TailReport {
    let x_end = *xs.last().unwrap_or(&0.0);
    let vp_end = *vps.last().unwrap_or(&0.0);
    if vp_end.abs() * x_end <= 1e-12 * v_end.abs() {
        return TailReport {
            q,
            d: 0.0,
            tail: 0.0,
            negligible: true,
            warning: None,
        };
    }
    if !(q > 1.0) {
        return TailReport {
            q,
            d: f64::NAN,
            tail: 0.0,
            negligible: false,
            warning: Some(format!(
                "tail exponent q = {q} <= 1 gives no bounded power-law tail; \
                 V(X_max) reported as V_inf, try a larger X_max"
            )),
        };
    }
    let lo = x_end / 10.0;
    let (mut num, mut den) = (0.0, 0.0);
    for (&x, &vp) in xs.iter().zip(vps) {
        if x >= lo && x > 0.0 {
            let b = x.powf(-q);
            num += vp * b;
            den += b * b;
        }
    }
    let d = if den > 0.0 { num / den } else { 0.0 };
    TailReport {
        q,
        d,
        tail: d * x_end.powf(1.0 - q) / (q - 1.0),
        negligible: false,
        warning: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_tail() {
        let xs: Vec<f64> = (10..=100).map(|i| i as f64).collect();
        let vps: Vec<f64> = xs.iter().map(|x| 3.0 / (x * x)).collect();
        let t = power_law_tail(&xs, &vps, 1.0, 2.0);
        assert!((t.d - 3.0).abs() < 1e-12);
        assert!((t.tail - 0.03).abs() < 1e-14);
        assert!(t.warning.is_none());
    }

    #[test]
    fn non_integrable_exponent_warns() {
        let t = power_law_tail(&[1.0, 10.0], &[1.0, 0.5], 1.0, 0.8);
        assert!(t.warning.is_some());
        assert_eq!(t.tail, 0.0);
    }

    #[test]
    fn negligible_tail_is_skipped() {
        let t = power_law_tail(&[1.0, 40.0], &[1e-3, 1e-20], 30.0, -3.0);
        assert!(t.negligible);
        assert!(t.warning.is_none());
    }

    #[test]
    fn csv_round_trip_keeps_theta_text() {
        let node = CurveNode {
            x: 0.1,
            v: 1.2,
            vp: 4.0,
            vpp: 3.0,
            j: 0.05,
            mv: 0.1,
            phi: 2.0,
            theta_star: 0.123_456_789_012_345_67,
            regime: Regime::Interior,
        };
        let curve = SolutionCurve {
            method: Method::Exponential,
            params: ModelParams::example1(),
            claim: "Exponential(mean = 1)".into(),
            nodes: vec![node, CurveNode { x: 0.2, phi: f64::NAN, ..node }],
            segments: vec![],
            switch_points: vec![],
            v_inf: 2.0,
            tail: power_law_tail(&[1.0], &[0.0], 1.0, 2.0),
            x_eps: 0.0,
            series_order: None,
            warnings: vec![],
        };
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let rows = SolutionCurve::read_csv(&buf[..]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].theta_star, format!("{}", node.theta_star));
        assert!(rows[1].phi.is_nan());
        assert_eq!(rows[1].regime, Regime::Interior);
    }
}
