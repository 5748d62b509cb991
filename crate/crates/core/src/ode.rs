//! Dormand-Prince 5(4) with continuous output and a stepping driver that
//! falls back to three-stage Radau IIA once the problem turns stiff.
//!
//! The system is a trait object so the right-hand side and the accepted-step
//! hook can share mutable state (the general solver appends convolution
//! history there and re-anchors its state).

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Per-component tolerances: `sc_i = atol_i + rtol·max(|y0_i|, |y1_i|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<const N: usize> {
    pub rtol: f64,
    pub atol: [f64; N],
}

impl<const N: usize> Tolerances<N> {
    pub fn uniform(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol: [atol; N],
        }
    }
}

/// Continuous output over one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dense<const N: usize> {
    pub x0: f64,
    pub h: f64,
    r: [[f64; N]; 5],
}

impl<const N: usize> Dense<N> {
    pub fn x1(&self) -> f64 {
        self.x0 + self.h
    }

    pub fn eval(&self, x: f64) -> [f64; N] {
        let t = (x - self.x0) / self.h;
        let t1 = 1.0 - t;
        let mut y = [0.0; N];
        for i in 0..N {
            let r = &self.r;
            y[i] = r[0][i] + t * (r[1][i] + t1 * (r[2][i] + t * (r[3][i] + t1 * r[4][i])));
        }
        y
    }
}

/// One attempted step from `x` to `x + h`.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome<const N: usize> {
    pub y: [f64; N],
    /// Right-hand side at the new point (first stage of the next step).
    pub k_end: [f64; N],
    /// Scaled RMS error estimate; accept when `≤ 1`.
    pub err: f64,
    pub dense: Dense<N>,
    /// Estimate of `h·|λ|` for the dominant eigenvalue.
    pub h_lambda: f64,
}

pub trait OdeSystem<const N: usize> {
    fn rhs(&mut self, x: f64, y: &[f64; N]) -> [f64; N];

    /// Called after each accepted step.
    fn on_step(&mut self, _step: &AcceptedStep<'_, N>) -> Control {
        Control::Continue
    }

    /// Chance to rewrite the state after an accepted step; return `true`
    /// when it changed so the derivative is re-evaluated.
    fn reanchor(&mut self, _x: f64, _y: &mut [f64; N]) -> bool {
        false
    }

    /// `∂f/∂y` at `(x, y)`, row `i` holding the derivatives of `f_i`.
    /// Defaults to forward differences.
    fn jacobian(&mut self, x: f64, y: &[f64; N], f: &[f64; N]) -> [[f64; N]; N] {
        numeric_jacobian(self, x, y, f)
    }
}

/// Forward-difference Jacobian.
pub fn numeric_jacobian<S: OdeSystem<N> + ?Sized, const N: usize>(
    sys: &mut S,
    x: f64,
    y: &[f64; N],
    f: &[f64; N],
) -> [[f64; N]; N] {
    let mut jac = [[0.0; N]; N];
    for j in 0..N {
        let d = 1e-7 * y[j].abs().max(1e-7);
        let mut yp = *y;
        yp[j] += d;
        let fp = sys.rhs(x, &yp);
        for i in 0..N {
            jac[i][j] = (fp[i] - f[i]) / d;
        }
    }
    jac
}

/// View of an accepted step handed to [`OdeSystem::on_step`].
#[derive(Debug, Clone, Copy)]
pub struct AcceptedStep<'a, const N: usize> {
    pub x0: f64,
    pub y0: &'a [f64; N],
    pub k0: &'a [f64; N],
    pub x1: f64,
    pub y1: &'a [f64; N],
    pub k1: &'a [f64; N],
    pub dense: &'a Dense<N>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Control {
    Continue,
    /// Stop at the end of this step.
    Stop,
    /// Redo the step truncated at `x` (inside the step) and stop there.
    StopAt(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
    pub safety: f64,
    pub fac_min: f64,
    pub fac_max: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            h_init: None,
            h_max: f64::INFINITY,
            max_steps: 2_000_000,
            safety: 0.9,
            fac_min: 0.2,
            fac_max: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome<const N: usize> {
    pub x: f64,
    pub y: [f64; N],
    /// Derivative at the final point.
    pub f: [f64; N],
    pub accepted: usize,
    pub rejected: usize,
    /// `true` when an `on_step` hook ended the integration early.
    pub stopped: bool,
    /// Last step size attempted by the controller.
    pub h_next: f64,
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] += h * s;
    }
    out
}

/// A single Dormand-Prince step with the FSAL derivative `k1` at `(x, y)`.
pub fn dopri_step<S: OdeSystem<N> + ?Sized, const N: usize>(
    sys: &mut S,
    x: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
    tol: &Tolerances<N>,
) -> StepOutcome<N> {
    let k2 = sys.rhs(x + C2 * h, &axpy(y, h, &[(A21, k1)]));
    let k3 = sys.rhs(x + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = sys.rhs(x + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = sys.rhs(
        x + C5 * h,
        &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let y6 = axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
    let k6 = sys.rhs(x + h, &y6);
    let y1 = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = sys.rhs(x + h, &y1);

    let mut acc = 0.0;
    let mut r = [[0.0; N]; 5];
    for i in 0..N {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = (tol.atol[i] + tol.rtol * y[i].abs().max(y1[i].abs())).max(1e-300);
        acc += (e / sc) * (e / sc);
        let ydiff = y1[i] - y[i];
        let bspl = h * k1[i] - ydiff;
        r[0][i] = y[i];
        r[1][i] = ydiff;
        r[2][i] = bspl;
        r[3][i] = ydiff - h * k7[i] - bspl;
        r[4][i] = h
            * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    let mut err = (acc / N as f64).sqrt();
    if !err.is_finite() || y1.iter().chain(k7.iter()).any(|v| !v.is_finite()) {
        err = f64::INFINITY;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..N {
        num += (k7[i] - k6[i]).powi(2);
        den += (y1[i] - y6[i]).powi(2);
    }
    let h_lambda = if den > 0.0 { h * (num / den).sqrt() } else { 0.0 };
    StepOutcome {
        y: y1,
        k_end: k7,
        err,
        dense: Dense { x0: x, h, r },
        h_lambda,
    }
}

const SQ6: f64 = 2.449_489_742_783_178;
const RC: [f64; 3] = [(4.0 - SQ6) / 10.0, (4.0 + SQ6) / 10.0, 1.0];
const RA: [[f64; 3]; 3] = [
    [(88.0 - 7.0 * SQ6) / 360.0, (296.0 - 169.0 * SQ6) / 1800.0, (-2.0 + 3.0 * SQ6) / 225.0],
    [(296.0 + 169.0 * SQ6) / 1800.0, (88.0 + 7.0 * SQ6) / 360.0, (-2.0 - 3.0 * SQ6) / 225.0],
    [(16.0 - SQ6) / 36.0, (16.0 + SQ6) / 36.0, 1.0 / 9.0],
];

/// In-place LU with partial pivoting of the row-major `n × n` matrix.
fn lu_factor(a: &mut [f64], n: usize, piv: &mut [usize]) -> bool {
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
            .unwrap();
        if !(a[p * n + k].abs() > 0.0) {
            return false;
        }
        piv[k] = p;
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
        }
        for i in k + 1..n {
            let l = a[i * n + k] / a[k * n + k];
            a[i * n + k] = l;
            for j in k + 1..n {
                a[i * n + j] -= l * a[k * n + j];
            }
        }
    }
    true
}

fn lu_solve(a: &[f64], n: usize, piv: &[usize], b: &mut [f64]) {
    for k in 0..n {
        b.swap(k, piv[k]);
        for i in k + 1..n {
            b[i] -= a[i * n + k] * b[k];
        }
    }
    for k in (0..n).rev() {
        for j in k + 1..n {
            b[k] -= a[k * n + j] * b[j];
        }
        b[k] /= a[k * n + k];
    }
}

/// One Radau IIA step solved by simplified Newton with the Jacobian `jac`
/// taken at the start of the step; `None` when the iteration fails.
pub fn radau_step<S: OdeSystem<N> + ?Sized, const N: usize>(
    sys: &mut S,
    x: f64,
    y: &[f64; N],
    k0: &[f64; N],
    jac: &[[f64; N]; N],
    h: f64,
    tol: &Tolerances<N>,
) -> Option<[f64; N]> {
    let n = 3 * N;
    let mut m = vec![0.0; n * n];
    for s in 0..3 {
        for t in 0..3 {
            for i in 0..N {
                for j in 0..N {
                    let id = if s == t && i == j { 1.0 } else { 0.0 };
                    m[(s * N + i) * n + t * N + j] = id - h * RA[s][t] * jac[i][j];
                }
            }
        }
    }
    let mut piv = vec![0; n];
    if !lu_factor(&mut m, n, &mut piv) {
        return None;
    }
    let mut z = vec![0.0; n];
    for s in 0..3 {
        for i in 0..N {
            z[s * N + i] = RC[s] * h * k0[i];
        }
    }
    let mut prev_norm = f64::INFINITY;
    for _ in 0..12 {
        let mut f = [[0.0; N]; 3];
        for s in 0..3 {
            let mut ys = *y;
            for i in 0..N {
                ys[i] += z[s * N + i];
            }
            f[s] = sys.rhs(x + RC[s] * h, &ys);
        }
        let mut g = vec![0.0; n];
        for s in 0..3 {
            for i in 0..N {
                let mut acc = 0.0;
                for t in 0..3 {
                    acc += RA[s][t] * f[t][i];
                }
                g[s * N + i] = h * acc - z[s * N + i];
            }
        }
        if g.iter().any(|v| !v.is_finite()) {
            return None;
        }
        lu_solve(&m, n, &piv, &mut g);
        let mut acc = 0.0;
        for s in 0..3 {
            for i in 0..N {
                z[s * N + i] += g[s * N + i];
                let sc = (tol.atol[i] + tol.rtol * y[i].abs()).max(1e-300);
                acc += (g[s * N + i] / sc).powi(2);
            }
        }
        let norm = (acc / n as f64).sqrt();
        if norm <= 1e-3 {
            let mut y1 = *y;
            for i in 0..N {
                y1[i] += z[2 * N + i];
            }
            return Some(y1);
        }
        if norm > prev_norm {
            return None;
        }
        prev_norm = norm;
    }
    None
}

/// Radau IIA over `h` and over two halves; the halves are kept and their
/// difference from the single step gives the error.
fn radau_doubled<S: OdeSystem<N> + ?Sized, const N: usize>(
    sys: &mut S,
    x: f64,
    y: &[f64; N],
    k0: &[f64; N],
    h: f64,
    tol: &Tolerances<N>,
) -> StepOutcome<N> {
    let fail = StepOutcome {
        y: *y,
        k_end: *k0,
        err: f64::INFINITY,
        dense: Dense { x0: x, h, r: [[0.0; N]; 5] },
        h_lambda: 0.0,
    };
    let jac = sys.jacobian(x, y, k0);
    let Some(full) = radau_step(sys, x, y, k0, &jac, h, tol) else { return fail };
    let Some(mid) = radau_step(sys, x, y, k0, &jac, 0.5 * h, tol) else { return fail };
    let k_mid = sys.rhs(x + 0.5 * h, &mid);
    let jac_mid = sys.jacobian(x + 0.5 * h, &mid, &k_mid);
    let Some(y1) = radau_step(sys, x + 0.5 * h, &mid, &k_mid, &jac_mid, 0.5 * h, tol) else { return fail };
    let k1 = sys.rhs(x + h, &y1);
    let mut acc = 0.0;
    let mut r = [[0.0; N]; 5];
    for i in 0..N {
        let e = (y1[i] - full[i]) / 31.0;
        let sc = (tol.atol[i] + tol.rtol * y[i].abs().max(y1[i].abs())).max(1e-300);
        acc += (e / sc) * (e / sc);
        let ydiff = y1[i] - y[i];
        let bspl = h * k0[i] - ydiff;
        r[0][i] = y[i];
        r[1][i] = ydiff;
        r[2][i] = bspl;
        r[3][i] = ydiff - h * k1[i] - bspl;
    }
    let mut err = (acc / N as f64).sqrt();
    if !err.is_finite() || y1.iter().chain(k1.iter()).any(|v| !v.is_finite()) {
        err = f64::INFINITY;
    }
    StepOutcome {
        y: y1,
        k_end: k1,
        err,
        dense: Dense { x0: x, h, r },
        h_lambda: 0.0,
    }
}

fn rms<const N: usize>(v: &[f64; N], y: &[f64; N], tol: &Tolerances<N>) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sc = (tol.atol[i] + tol.rtol * y[i].abs()).max(1e-300);
        acc += (v[i] / sc) * (v[i] / sc);
    }
    (acc / N as f64).sqrt()
}

/// Starting step size by the usual two-evaluation heuristic.
pub fn initial_step<S: OdeSystem<N> + ?Sized, const N: usize>(
    sys: &mut S,
    x: f64,
    y: &[f64; N],
    f0: &[f64; N],
    dir_len: f64,
    tol: &Tolerances<N>,
) -> f64 {
    let d0 = rms(y, y, tol);
    let d1 = rms(f0, y, tol);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(dir_len);
    let y1 = axpy(y, h0, &[(1.0, f0)]);
    let f1 = sys.rhs(x + h0, &y1);
    let mut diff = [0.0; N];
    for i in 0..N {
        diff[i] = f1[i] - f0[i];
    }
    let d2 = rms(&diff, y, tol) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    let h = (100.0 * h0).min(h1).min(dir_len);
    if h.is_finite() && h > 0.0 {
        h
    } else {
        1e-6 * dir_len
    }
}

/// Integrate from `x0` to `x_end > x0`.
pub fn integrate<S: OdeSystem<N> + ?Sized, const N: usize>(
    sys: &mut S,
    x0: f64,
    y0: [f64; N],
    x_end: f64,
    tol: &Tolerances<N>,
    opts: &IntegratorOptions,
) -> Result<Outcome<N>> {
    if !(x_end > x0) {
        return Err(Error::Contract(format!(
            "integration interval [{x0}, {x_end}] is empty"
        )));
    }
    let mut x = x0;
    let mut y = y0;
    let mut k = sys.rhs(x, &y);
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::abort(x, "right-hand side is not finite at the initial point"));
    }
    let mut h = opts
        .h_init
        .unwrap_or_else(|| initial_step(sys, x, &y, &k, x_end - x0, tol))
        .min(opts.h_max);
    let mut accepted = 0;
    let mut rejected = 0;
    let mut last_rejected = false;
    let (mut stiff_hits, mut calm_run) = (0, 0);
    let mut stiff = false;
    loop {
        if accepted + rejected >= opts.max_steps {
            return Err(Error::abort(x, format!("step budget of {} exhausted", opts.max_steps)));
        }
        let remaining = x_end - x;
        let last = h >= remaining * (1.0 - 1e-12);
        let h_try = if last { remaining } else { h };
        if h_try <= 1e-14 * x.abs().max(1e-300) || h_try < 1e-300 {
            return Err(Error::StepUnderflow { x, h: h_try });
        }
        let step = if stiff {
            radau_doubled(sys, x, &y, &k, h_try, tol)
        } else {
            dopri_step(sys, x, &y, &k, h_try, tol)
        };
        let expo = if stiff { -1.0 / 6.0 } else { -0.2 };
        if step.err <= 1.0 {
            let x1 = if last { x_end } else { x + h_try };
            let control = sys.on_step(&AcceptedStep {
                x0: x,
                y0: &y,
                k0: &k,
                x1,
                y1: &step.y,
                k1: &step.k_end,
                dense: &step.dense,
            });
            accepted += 1;
            match control {
                Control::StopAt(xs) if xs > x && xs < x1 => {
                    let s = if stiff {
                        radau_doubled(sys, x, &y, &k, xs - x, tol)
                    } else {
                        dopri_step(sys, x, &y, &k, xs - x, tol)
                    };
                    return Ok(Outcome {
                        x: xs,
                        y: s.y,
                        f: s.k_end,
                        accepted,
                        rejected,
                        stopped: true,
                        h_next: h,
                    });
                }
                Control::StopAt(_) | Control::Stop => {
                    return Ok(Outcome {
                        x: x1,
                        y: step.y,
                        f: step.k_end,
                        accepted,
                        rejected,
                        stopped: true,
                        h_next: h,
                    });
                }
                Control::Continue => {}
            }
            x = x1;
            y = step.y;
            k = step.k_end;
            if sys.reanchor(x, &mut y) {
                k = sys.rhs(x, &y);
            }
            if !stiff {
                if step.h_lambda > 3.25 {
                    stiff_hits += 1;
                    calm_run = 0;
                } else {
                    calm_run += 1;
                    if calm_run == 6 {
                        stiff_hits = 0;
                    }
                }
                stiff = stiff_hits >= 15;
            }
            let fac = if step.err == 0.0 {
                opts.fac_max
            } else {
                (opts.safety * step.err.powf(expo)).clamp(opts.fac_min, opts.fac_max)
            };
            let fac = if last_rejected { fac.min(1.0) } else { fac };
            last_rejected = false;
            if last {
                return Ok(Outcome {
                    x,
                    y,
                    f: k,
                    accepted,
                    rejected,
                    stopped: false,
                    h_next: h_try * fac,
                });
            }
            h = (h_try * fac).min(opts.h_max);
        } else {
            rejected += 1;
            last_rejected = true;
            let fac = if step.err.is_finite() {
                (opts.safety * step.err.powf(expo)).clamp(opts.fac_min, 1.0)
            } else {
                0.25
            };
            h = h_try * fac;
        }
    }
}

/// Bisect a sign change of `g` on `[a, b]` (with `g(a)`, `g(b)` of opposite
/// signs or `g(b) = 0`) until the bracket is at most `tol` wide; returns the
/// right end of the final bracket so the root has been reached or passed.
pub fn bisect_root<G: FnMut(f64) -> f64>(mut g: G, mut a: f64, mut b: f64, ga: f64, tol: f64) -> f64 {
    let sa = ga > 0.0;
    let mut iter = 0;
    while b - a > tol && iter < 200 {
        let m = 0.5 * (a + b);
        let gm = g(m);
        if (gm > 0.0) == sa && gm != 0.0 {
            a = m;
        } else {
            b = m;
        }
        iter += 1;
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear;
    impl OdeSystem<2> for Linear {
        fn rhs(&mut self, _x: f64, y: &[f64; 2]) -> [f64; 2] {
            [y[1], -y[0]]
        }
    }

    #[test]
    fn harmonic_oscillator_to_tolerance() {
        let tol = Tolerances::uniform(1e-10, 1e-12);
        let out = integrate(&mut Linear, 0.0, [0.0, 1.0], 10.0, &tol, &IntegratorOptions::default()).unwrap();
        assert!((out.y[0] - 10f64.sin()).abs() < 1e-8, "{:?}", out.y);
        assert!((out.y[1] - 10f64.cos()).abs() < 1e-8);
        assert!(!out.stopped);
    }

    #[test]
    fn single_step_has_fifth_order() {
        // local error of y' = y over h scales like h^6
        struct Growth;
        impl OdeSystem<1> for Growth {
            fn rhs(&mut self, _x: f64, y: &[f64; 1]) -> [f64; 1] {
                [y[0]]
            }
        }
        let tol = Tolerances::uniform(1e-10, 1e-12);
        let e = |h: f64| {
            let s = dopri_step(&mut Growth, 0.0, &[1.0], &[1.0], h, &tol);
            (s.y[0] - h.exp()).abs()
        };
        let ratio = e(0.1) / e(0.05);
        assert!(ratio > 50.0 && ratio < 80.0, "ratio {ratio}");
    }

    #[test]
    fn dense_output_is_accurate_inside_step() {
        let tol = Tolerances::uniform(1e-10, 1e-12);
        let s = dopri_step(&mut Linear, 0.0, &[0.0, 1.0], &[1.0, 0.0], 0.1, &tol);
        for &x in &[0.0, 0.013, 0.05, 0.077, 0.1] {
            let y = s.dense.eval(x);
            assert!((y[0] - f64::sin(x)).abs() < 5e-9, "x = {x}");
        }
    }

    struct StopOnZero {
        events: usize,
    }
    impl OdeSystem<2> for StopOnZero {
        fn rhs(&mut self, _x: f64, y: &[f64; 2]) -> [f64; 2] {
            [y[1], -y[0]]
        }
        fn on_step(&mut self, s: &AcceptedStep<'_, 2>) -> Control {
            if s.y0[0] > 0.0 && s.y1[0] <= 0.0 {
                self.events += 1;
                let d = *s.dense;
                let root = bisect_root(|x| d.eval(x)[0], s.x0, s.x1, s.y0[0], 1e-12);
                return Control::StopAt(root);
            }
            Control::Continue
        }
    }

    #[test]
    fn stop_at_event_lands_on_root() {
        let tol = Tolerances::uniform(1e-10, 1e-12);
        let mut sys = StopOnZero { events: 0 };
        let out = integrate(&mut sys, 0.1, [f64::sin(0.1), f64::cos(0.1)], 10.0, &tol, &IntegratorOptions::default())
            .unwrap();
        assert!(out.stopped);
        assert_eq!(sys.events, 1);
        assert!((out.x - std::f64::consts::PI).abs() < 1e-9, "{}", out.x);
        assert!(out.y[0].abs() < 1e-9);
    }

    struct Relaxation;
    impl OdeSystem<1> for Relaxation {
        fn rhs(&mut self, x: f64, y: &[f64; 1]) -> [f64; 1] {
            [-1e6 * (y[0] - x.cos()) - x.sin()]
        }
    }

    #[test]
    fn stiff_relaxation_switches_to_radau() {
        let tol = Tolerances::uniform(1e-10, 1e-12);
        let opts = IntegratorOptions { max_steps: 20_000, ..IntegratorOptions::default() };
        let out = integrate(&mut Relaxation, 0.0, [1.0], 10.0, &tol, &opts).unwrap();
        assert!((out.y[0] - 10f64.cos()).abs() < 1e-9, "{:?}", out.y);
        assert!(out.accepted < 5_000, "{}", out.accepted);
    }

    #[test]
    fn radau_step_has_fifth_order() {
        struct Growth;
        impl OdeSystem<1> for Growth {
            fn rhs(&mut self, _x: f64, y: &[f64; 1]) -> [f64; 1] {
                [y[0]]
            }
        }
        let tol = Tolerances::uniform(1e-14, 1e-16);
        let e = |h: f64| {
            let y = radau_step(&mut Growth, 0.0, &[1.0], &[1.0], &[[1.0]], h, &tol).unwrap();
            (y[0] - h.exp()).abs()
        };
        let ratio = e(0.2) / e(0.1);
        assert!(ratio > 50.0 && ratio < 80.0, "ratio {ratio}");
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect_root(|x| x * x - 2.0, 0.0, 2.0, -2.0, 1e-13);
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
    }
}
