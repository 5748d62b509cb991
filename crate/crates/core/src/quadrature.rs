//! Gauss-Legendre rules and piecewise Hermite grid functions.

use crate::error::{Error, Result};

/// 4-point Gauss-Legendre nodes on `[0, 1]`.
pub const GL4_NODES: [f64; 4] = [
    0.069_431_844_202_973_71,
    0.330_009_478_207_571_9,
    0.669_990_521_792_428_1,
    0.930_568_155_797_026_3,
];

/// 4-point Gauss-Legendre weights on `[0, 1]`.
pub const GL4_WEIGHTS: [f64; 4] = [
    0.173_927_422_568_726_9,
    0.326_072_577_431_273_1,
    0.326_072_577_431_273_1,
    0.173_927_422_568_726_9,
];

/// `∫_a^b g` with a single 4-point rule.
#[inline]
pub fn gl4<F: FnMut(f64) -> f64>(a: f64, b: f64, mut g: F) -> f64 {
    let h = b - a;
    let mut s = 0.0;
    for k in 0..4 {
        s += GL4_WEIGHTS[k] * g(a + GL4_NODES[k] * h);
    }
    s * h
}

/// Composite 4-point Gauss-Legendre on `n` equal panels.
pub fn gauss_legendre_panels<F: FnMut(f64) -> f64>(a: f64, b: f64, n: usize, mut g: F) -> f64 {
    let n = n.max(1);
    let h = (b - a) / n as f64;
    (0..n)
        .map(|i| gl4(a + i as f64 * h, a + (i + 1) as f64 * h, &mut g))
        .sum()
}

/// Adaptive bisection on 4-point panels until the one-panel and two-panel
/// values agree within `tol`. Returns the value and the accumulated error
/// estimate.
pub fn adaptive_gl4<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    tol: f64,
    max_depth: usize,
    g: &mut F,
) -> (f64, f64) {
    let whole = gl4(a, b, &mut *g);
    adaptive_rec(a, b, whole, tol, max_depth, g)
}

fn adaptive_rec<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    g: &mut F,
) -> (f64, f64) {
    let m = 0.5 * (a + b);
    let left = gl4(a, m, &mut *g);
    let right = gl4(m, b, &mut *g);
    let err = (left + right - whole).abs();
    if err <= tol || depth == 0 {
        return (left + right, err);
    }
    let (l, el) = adaptive_rec(a, m, left, 0.5 * tol, depth - 1, g);
    let (r, er) = adaptive_rec(m, b, right, 0.5 * tol, depth - 1, g);
    (l + r, el + er)
}

/// Cubic Hermite basis functions at `t ∈ [0, 1]`: `(h00, h01, h10, h11)`.
#[inline]
pub fn hermite3_basis(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let h01 = 3.0 * t2 - 2.0 * t3;
    (1.0 - h01, h01, t3 - 2.0 * t2 + t, t3 - t2)
}

/// `W(y) - W(x1)` on `[x0, x1]` for the cubic Hermite interpolant with
/// increment `dw = W(x1) - W(x0)` and end slopes `w0`, `w1`. Written in
/// terms of the increment so flat functions lose no digits.
#[inline]
pub fn hermite3_offset_from_right(t: f64, h: f64, dw: f64, w0: f64, w1: f64) -> f64 {
    let (_, h01, h10, h11) = hermite3_basis(t);
    dw * (h01 - 1.0) + h * (w0 * h10 + w1 * h11)
}

/// Quintic Hermite interpolation from values, slopes and curvatures at both
/// ends of `[x0, x0 + h]`; returns value and first derivative at `t`.
#[inline]
fn hermite5(t: f64, h: f64, y: [f64; 2], d: [f64; 2], dd: [f64; 2]) -> (f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h00 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h10 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h20 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
    let h01 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let h11 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h21 = 0.5 * (t3 - 2.0 * t4 + t5);
    let g00 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
    let g10 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
    let g20 = 0.5 * (2.0 * t - 9.0 * t2 + 12.0 * t3 - 5.0 * t4);
    let g01 = -g00;
    let g11 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
    let g21 = 0.5 * (3.0 * t2 - 8.0 * t3 + 5.0 * t4);
    let v = y[0] * h00
        + y[1] * h01
        + h * (d[0] * h10 + d[1] * h11)
        + h * h * (dd[0] * h20 + dd[1] * h21);
    let dv = (y[0] * g00 + y[1] * g01) / h
        + d[0] * g10
        + d[1] * g11
        + h * (dd[0] * g20 + dd[1] * g21);
    (v, dv)
}

/// Function tabulated on strictly increasing abscissas with slopes, and
/// optionally curvatures, for piecewise cubic (quintic) Hermite evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    xs: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    curvatures: Option<Vec<f64>>,
}

impl GridFunction {
    pub fn new(xs: Vec<f64>, values: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != values.len() || xs.len() != slopes.len() {
            return Err(Error::Contract(
                "grid function needs at least two nodes and matching lengths".into(),
            ));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Contract("grid abscissas must be strictly increasing".into()));
        }
        if xs.iter().chain(&values).chain(&slopes).any(|v| !v.is_finite()) {
            return Err(Error::Contract("grid function contains non-finite entries".into()));
        }
        Ok(Self {
            xs,
            values,
            slopes,
            curvatures: None,
        })
    }

    /// Build from values alone; slopes come from three-point
    /// non-uniform differences.
    pub fn from_values(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 3 || values.len() != n {
            return Err(Error::Contract(
                "slope estimation needs at least three nodes".into(),
            ));
        }
        let mut slopes = vec![0.0; n];
        for i in 0..n {
            let (a, b, c) = if i == 0 {
                (0, 1, 2)
            } else if i == n - 1 {
                (n - 3, n - 2, n - 1)
            } else {
                (i - 1, i, i + 1)
            };
            slopes[i] = lagrange_derivative(
                [xs[a], xs[b], xs[c]],
                [values[a], values[b], values[c]],
                xs[i],
            );
        }
        Self::new(xs, values, slopes)
    }

    /// Attach second derivatives; evaluation then becomes quintic Hermite.
    pub fn with_curvatures(mut self, curvatures: Vec<f64>) -> Result<Self> {
        if curvatures.len() != self.xs.len() || curvatures.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("curvature table mismatched or non-finite".into()));
        }
        self.curvatures = Some(curvatures);
        Ok(self)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    /// Index `i` of the interval `[x_i, x_{i+1}]` containing `x` (clamped).
    pub fn locate(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    /// Value and slope at `x`; outside the table the end interval is
    /// extended.
    pub fn eval_with_slope(&self, x: f64) -> (f64, f64) {
        let i = self.locate(x);
        self.eval_in(i, x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_slope(x).0
    }

    fn eval_in(&self, i: usize, x: f64) -> (f64, f64) {
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        match &self.curvatures {
            Some(cv) => hermite5(
                t,
                h,
                [self.values[i], self.values[i + 1]],
                [self.slopes[i], self.slopes[i + 1]],
                [cv[i], cv[i + 1]],
            ),
            None => {
                let (h00, h01, h10, h11) = hermite3_basis(t);
                let v = self.values[i] * h00
                    + self.values[i + 1] * h01
                    + h * (self.slopes[i] * h10 + self.slopes[i + 1] * h11);
                let t2 = t * t;
                let dv = (self.values[i + 1] - self.values[i]) / h * (6.0 * t - 6.0 * t2)
                    + self.slopes[i] * (3.0 * t2 - 4.0 * t + 1.0)
                    + self.slopes[i + 1] * (3.0 * t2 - 2.0 * t);
                (v, dv)
            }
        }
    }

    /// `W(x) - W(y)` for `y ≤ x`, accumulated from per-interval increments
    /// and local offsets so that nearly flat tables keep their digits.
    pub fn difference(&self, x: f64, y: f64) -> f64 {
        if y == x {
            return 0.0;
        }
        if y > x {
            return -self.difference(y, x);
        }
        let ix = self.locate(x);
        let iy = self.locate(y);
        if ix == iy {
            return self.offset_in(ix, x) - self.offset_in(ix, y);
        }
        // W(x) - W(x_ix) + sum of whole intervals + W(x_{iy+1}) - W(y)
        let mut s = self.offset_in(ix, x);
        for k in iy + 1..ix {
            s += self.values[k + 1] - self.values[k];
        }
        s + (self.values[iy + 1] - self.values[iy]) - self.offset_in(iy, y)
    }

    /// `W(x) - W(x_i)` on interval `i`.
    pub fn offset_in(&self, i: usize, x: f64) -> f64 {
        let (v, _) = self.eval_in(i, x);
        v - self.values[i]
    }

    /// `W(x_{i+1}) - W(y)` on interval `i`.
    pub fn offset_to_right(&self, i: usize, y: f64) -> f64 {
        match self.curvatures {
            Some(_) => self.values[i + 1] - self.eval_in(i, y).0,
            None => {
                let h = self.xs[i + 1] - self.xs[i];
                -hermite3_offset_from_right(
                    (y - self.xs[i]) / h,
                    h,
                    self.values[i + 1] - self.values[i],
                    self.slopes[i],
                    self.slopes[i + 1],
                )
            }
        }
    }
}

/// Derivative at `x` of the quadratic through three points.
pub fn lagrange_derivative(xs: [f64; 3], ys: [f64; 3], x: f64) -> f64 {
    let [x0, x1, x2] = xs;
    let [y0, y1, y2] = ys;
    y0 * ((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2))
        + y1 * ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2))
        + y2 * ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl4_integrates_degree_seven_exactly() {
        let v = gl4(0.0, 2.0, |x| x.powi(7) - 3.0 * x.powi(4) + 1.0);
        let exact = 2f64.powi(8) / 8.0 - 3.0 * 2f64.powi(5) / 5.0 + 2.0;
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn adaptive_gl4_handles_exponential() {
        let (v, err) = adaptive_gl4(0.0, 30.0, 1e-13, 30, &mut |x: f64| (-x).exp());
        assert!((v - (1.0 - (-30f64).exp())).abs() < 1e-12, "{v} {err}");
    }

    #[test]
    fn hermite_offset_matches_direct_form() {
        let (w0, w1, v0, v1, h) = (0.7, 0.2, 1.3, 1.9, 0.4);
        for &t in &[0.0, 0.25, 0.5, 0.9, 1.0] {
            let (h00, h01, h10, h11) = hermite3_basis(t);
            let direct = v0 * h00 + v1 * h01 + h * (w0 * h10 + w1 * h11) - v1;
            let off = hermite3_offset_from_right(t, h, v1 - v0, w0, w1);
            assert!((direct - off).abs() < 1e-15);
        }
    }

    #[test]
    fn quintic_reproduces_quintic_polynomials() {
        let p = |x: f64| 1.0 + x - 2.0 * x.powi(3) + 0.5 * x.powi(5);
        let dp = |x: f64| 1.0 - 6.0 * x * x + 2.5 * x.powi(4);
        let ddp = |x: f64| -12.0 * x + 10.0 * x.powi(3);
        let xs = vec![0.0, 0.3, 1.1];
        let g = GridFunction::new(
            xs.clone(),
            xs.iter().map(|&x| p(x)).collect(),
            xs.iter().map(|&x| dp(x)).collect(),
        )
        .unwrap()
        .with_curvatures(xs.iter().map(|&x| ddp(x)).collect())
        .unwrap();
        for &x in &[0.05, 0.2, 0.6, 1.0] {
            let (v, d) = g.eval_with_slope(x);
            assert!((v - p(x)).abs() < 1e-13);
            assert!((d - dp(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn difference_is_consistent_with_values() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let g = GridFunction::from_values(xs.clone(), xs.iter().map(|x| x.sin()).collect()).unwrap();
        for &(x, y) in &[(1.55, 0.03), (0.81, 0.79), (1.9, 1.0)] {
            assert!((g.difference(x, y) - (g.eval(x) - g.eval(y))).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_unsorted_abscissas() {
        assert!(GridFunction::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
    }
}
