//! Exogenous model constants, the claim-size law and the per-regime
//! effective drift/volatility.
//!
//! Everything here is immutable once built and cheap to clone; claim laws
//! backed by user closures share them through `Arc`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// Constants of the controlled surplus process
/// `dX = [c + r(1-θ)X + μθX] dt + σθX dB - dS`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Premium rate.
    pub c: f64,
    /// Claim arrival intensity.
    pub lambda: f64,
    /// Risky-asset drift.
    pub mu: f64,
    /// Risk-free rate.
    pub r: f64,
    /// Risky-asset volatility.
    pub sigma: f64,
    /// Largest long fraction.
    pub a: f64,
    /// Largest short fraction (the admissible set is `[-b, a]`).
    pub b: f64,
}

impl ModelParams {
    /// Long-borrowing case with `μ > r`, `a < b`: the policy switches
    /// long, short, long, interior.
    pub fn example1() -> Self {
        Self {
            c: 0.02,
            lambda: 0.09,
            mu: 0.02,
            r: 0.015,
            sigma: 0.1,
            a: 1.0,
            b: 20.0,
        }
    }

    /// `μ < r` with `a > b`.
    pub fn example2() -> Self {
        Self {
            mu: 0.02,
            r: 0.025,
            a: 20.0,
            b: 1.0,
            ..Self::example1()
        }
    }

    /// `μ < r` with `a < b`.
    pub fn example3() -> Self {
        Self {
            mu: 0.01,
            r: 0.015,
            a: 1.0,
            b: 20.0,
            ..Self::example1()
        }
    }

    /// Drift premium of the risky asset, `μ - r`.
    pub fn excess_return(&self) -> f64 {
        self.mu - self.r
    }

    /// Effective drift and volatility of a constant fraction `theta`
    /// (any value, not only the admissible endpoints).
    pub fn effective(&self, theta: f64) -> RegimeConstants {
        RegimeConstants {
            gamma: theta,
            mu_bar: self.r + theta * (self.mu - self.r),
            sigma_bar: theta.abs() * self.sigma,
        }
    }

    pub fn admissible(&self, theta: f64) -> bool {
        theta >= -self.b && theta <= self.a
    }

    pub fn clamp(&self, theta: f64) -> f64 {
        theta.clamp(-self.b, self.a)
    }
}

/// Effective drift `μ̄ = r + γ(μ - r)` and volatility `σ̄ = |γ|σ` of a
/// constant-fraction regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeConstants {
    pub gamma: f64,
    pub mu_bar: f64,
    pub sigma_bar: f64,
}

/// Constants of the boundary regime `gamma`, which must be `a` or `-b`.
pub fn regime_constants(params: &ModelParams, gamma: f64) -> Result<RegimeConstants> {
    if gamma != params.a && gamma != -params.b {
        return Err(Error::Contract(format!(
            "regime fraction {gamma} is neither a = {} nor -b = {}",
            params.a, -params.b
        )));
    }
    Ok(params.effective(gamma))
}

/// `m[aμ + (1-a)r - λ] + c < 0`: for exponential claims this is the sign
/// condition `V_a''(0+) > 0` that makes the long regime convex at the origin.
pub fn check_cond51(params: &ModelParams, mean: f64) -> bool {
    let ModelParams { c, lambda, mu, r, a, .. } = *params;
    mean * (a * mu + (1.0 - a) * r - lambda) + c < 0.0
}

type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Sampler = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;

/// Claim-size law with a continuous density on `(0, ∞)`.
#[derive(Clone)]
pub enum ClaimLaw {
    Exponential { mean: f64 },
    General(GeneralLaw),
}

/// A user-described law: density, distribution function and declared mean.
/// The survival function and sampler are optional; without them
/// `1 - F` and inverse-cdf bisection are used.
#[derive(Clone)]
pub struct GeneralLaw {
    pub name: String,
    pub mean: f64,
    density: Fn1,
    cdf: Fn1,
    survival: Option<Fn1>,
    sampler: Option<Sampler>,
}

impl fmt::Debug for ClaimLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClaimLaw::Exponential { mean } => write!(f, "Exponential(mean = {mean})"),
            ClaimLaw::General(g) => write!(f, "General({}, mean = {})", g.name, g.mean),
        }
    }
}

impl ClaimLaw {
    pub fn exponential(mean: f64) -> Self {
        ClaimLaw::Exponential { mean }
    }

    pub fn general<F, G>(name: impl Into<String>, density: F, cdf: G, mean: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        ClaimLaw::General(GeneralLaw {
            name: name.into(),
            mean,
            density: Arc::new(density),
            cdf: Arc::new(cdf),
            survival: None,
            sampler: None,
        })
    }

    /// Attach an exact survival function `1 - F`, used wherever the tail
    /// matters (the jump operator at large surplus).
    pub fn with_survival<S>(self, survival: S) -> Self
    where
        S: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        match self {
            ClaimLaw::General(mut g) => {
                g.survival = Some(Arc::new(survival));
                ClaimLaw::General(g)
            }
            other => other,
        }
    }

    pub fn with_sampler<S>(self, sampler: S) -> Self
    where
        S: Fn(&mut dyn RngCore) -> f64 + Send + Sync + 'static,
    {
        match self {
            ClaimLaw::General(mut g) => {
                g.sampler = Some(Arc::new(sampler));
                ClaimLaw::General(g)
            }
            other => other,
        }
    }

    /// Finite mixture of exponentials, `Σ wᵢ Exp(meanᵢ)`.
    pub fn exp_mixture(weights: &[f64], means: &[f64]) -> Result<Self> {
        if weights.len() != means.len() || weights.is_empty() {
            return Err(Error::Contract(
                "mixture needs matching, non-empty weight and mean lists".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        let comps: Vec<(f64, f64)> = weights
            .iter()
            .zip(means)
            .map(|(w, m)| (w / total, *m))
            .collect();
        let mean = comps.iter().map(|(w, m)| w * m).sum();
        let name = format!(
            "exp_mixture[{}]",
            comps
                .iter()
                .map(|(w, m)| format!("{w}*Exp({m})"))
                .collect::<Vec<_>>()
                .join("+")
        );
        let (c1, c2, c3, c4) = (comps.clone(), comps.clone(), comps.clone(), comps);
        Ok(ClaimLaw::general(
            name,
            move |s| {
                if s < 0.0 {
                    0.0
                } else {
                    c1.iter().map(|(w, m)| w * (-s / m).exp() / m).sum()
                }
            },
            move |s| {
                if s <= 0.0 {
                    0.0
                } else {
                    c2.iter().map(|(w, m)| w * -(-s / m).exp_m1()).sum()
                }
            },
            mean,
        )
        .with_survival(move |s| {
            if s <= 0.0 {
                1.0
            } else {
                c3.iter().map(|(w, m)| w * (-s / m).exp()).sum()
            }
        })
        .with_sampler(move |rng| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut mean = c4[c4.len() - 1].1;
            for (w, m) in &c4 {
                acc += w;
                if u < acc {
                    mean = *m;
                    break;
                }
            }
            mean * rng.sample::<f64, _>(Exp1)
        }))
    }

    pub fn mean(&self) -> f64 {
        match self {
            ClaimLaw::Exponential { mean } => *mean,
            ClaimLaw::General(g) => g.mean,
        }
    }

    /// Mean of the law when it is exponential.
    pub fn exponential_mean(&self) -> Option<f64> {
        match self {
            ClaimLaw::Exponential { mean } => Some(*mean),
            ClaimLaw::General(_) => None,
        }
    }

    pub fn density(&self, s: f64) -> f64 {
        match self {
            ClaimLaw::Exponential { mean } => {
                if s < 0.0 {
                    0.0
                } else {
                    (-s / mean).exp() / mean
                }
            }
            ClaimLaw::General(g) => (g.density)(s),
        }
    }

    pub fn cdf(&self, s: f64) -> f64 {
        match self {
            ClaimLaw::Exponential { mean } => {
                if s <= 0.0 {
                    0.0
                } else {
                    -(-s / mean).exp_m1()
                }
            }
            ClaimLaw::General(g) => (g.cdf)(s),
        }
    }

    /// `1 - F(s)`, computed without cancellation when the law provides it.
    pub fn survival(&self, s: f64) -> f64 {
        match self {
            ClaimLaw::Exponential { mean } => {
                if s <= 0.0 {
                    1.0
                } else {
                    (-s / mean).exp()
                }
            }
            ClaimLaw::General(g) => match &g.survival {
                Some(sf) => sf(s),
                None => 1.0 - (g.cdf)(s),
            },
        }
    }

    /// `F'(0+)`.
    pub fn density_at_zero(&self) -> f64 {
        self.density(0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ClaimLaw::Exponential { mean } => mean * rng.sample::<f64, _>(Exp1),
            ClaimLaw::General(g) => {
                let mut dyn_rng = DynRng(rng);
                match &g.sampler {
                    Some(s) => s(&mut dyn_rng),
                    None => {
                        let u: f64 = dyn_rng.random();
                        inverse_survival(self, u, g.mean)
                    }
                }
            }
        }
    }

    /// `∫₀^∞ f(s) ds` by Gauss-Legendre panels on the compactified axis.
    pub fn total_mass(&self) -> f64 {
        let scale = self.mean().max(1e-12);
        // s = scale * t / (1 - t)
        quadrature::gauss_legendre_panels(0.0, 1.0, 256, |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let s = scale * t / (1.0 - t);
            let jac = scale / ((1.0 - t) * (1.0 - t));
            self.density(s) * jac
        })
    }
}

/// Adapter so closure samplers can take any `Rng` behind `&mut dyn RngCore`.
struct DynRng<'a, R: ?Sized>(&'a mut R);

impl<R: Rng + ?Sized> RngCore for DynRng<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

fn inverse_survival(law: &ClaimLaw, u: f64, mean: f64) -> f64 {
    // solve S(y) = u by bracketing + bisection
    let target = u.max(f64::MIN_POSITIVE);
    let mut lo = 0.0;
    let mut hi = mean.max(1e-12);
    while law.survival(hi) > target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return hi;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if law.survival(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    /// Whether `m[aμ + (1-a)r - λ] + c < 0`; only defined for exponential claims.
    pub cond51: Option<bool>,
    pub oracle_mode: bool,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.is_ok() {
            Ok(self)
        } else {
            Err(Error::Validation(self.violations))
        }
    }
}

const NORMALIZATION_TOL: f64 = 1e-6;

/// Check every standing assumption on the constants and the claim law.
///
/// `oracle_mode` admits `r = 0`; it exists only so the simulator can be
/// checked against the classical uninvested ruin formula. The HJB solvers
/// refuse such parameter sets on their own.
pub fn validate(params: &ModelParams, law: &ClaimLaw, oracle_mode: bool) -> ValidationReport {
    let mut violations = Vec::new();
    let mut positive = |name: &str, v: f64| {
        if !(v > 0.0) || !v.is_finite() {
            violations.push(format!("{name} must be positive and finite (got {v})"));
        }
    };
    positive("c", params.c);
    positive("lambda", params.lambda);
    positive("sigma", params.sigma);
    positive("a", params.a);
    positive("b", params.b);
    if oracle_mode {
        if !(params.r >= 0.0) || !params.r.is_finite() {
            violations.push(format!("r must be non-negative in oracle mode (got {})", params.r));
        }
    } else if !(params.r > 0.0) || !params.r.is_finite() {
        violations.push(format!(
            "r must be positive (got {}); r = 0 is only allowed in oracle mode",
            params.r
        ));
    }
    if !params.mu.is_finite() {
        violations.push(format!("mu must be finite (got {})", params.mu));
    }

    let mean = law.mean();
    if !(mean > 0.0) || !mean.is_finite() {
        violations.push(format!("claim mean must be positive and finite (got {mean})"));
    } else {
        let mass = law.total_mass();
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            violations.push(format!(
                "claim density integrates to {mass:.9} instead of 1"
            ));
        }
    }

    let cond51 = law.exponential_mean().map(|m| check_cond51(params, m));
    ValidationReport {
        violations,
        cond51,
        oracle_mode,
    }
}
