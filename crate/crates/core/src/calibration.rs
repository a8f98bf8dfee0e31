//! Calibrating noise scales to a target `(ε, δ)`.

use std::f64::consts::{LN_2, PI, SQRT_2};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::samplers::{sample_gaussian_noise, sample_product_noise, NoiseVector, RngStream};
use crate::specfun::{hyp1f1, std_normal_cdf};

/// An `(ε, δ)` guarantee with `ε > 0` and `0 < δ < 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::domain(
                "PrivacyBudget",
                format!("epsilon must be > 0, got {epsilon}"),
            ));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::domain(
                "PrivacyBudget",
                format!("delta must lie in (0, 1), got {delta}"),
            ));
        }
        Ok(PrivacyBudget { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

fn check_m(func: &'static str, m: usize) -> Result<()> {
    if m < 4 {
        return Err(Error::domain(
            func,
            format!("dimension must be ≥ 4, got {m}"),
        ));
    }
    Ok(())
}

fn check_k(func: &'static str, k: f64) -> Result<()> {
    if !(k > 1.0) || !k.is_finite() {
        return Err(Error::domain(func, format!("k must be > 1, got {k}")));
    }
    Ok(())
}

fn check_sensitivity(func: &'static str, s: f64) -> Result<()> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::domain(
            func,
            format!("sensitivity must be > 0, got {s}"),
        ));
    }
    Ok(())
}

/// `t² = 2 k^{4/M} (M/4 + 3/2)^{1+4/M} / e^{1+2/M}`, evaluated in log space.
pub fn theorem1_t_squared(m: usize, k: f64) -> Result<f64> {
    check_m("theorem1_t_squared", m)?;
    check_k("theorem1_t_squared", k)?;
    let mf = m as f64;
    let ln =
        LN_2 + (4.0 / mf) * k.ln() + (1.0 + 4.0 / mf) * (mf / 4.0 + 1.5).ln() - (1.0 + 2.0 / mf);
    Ok(ln.exp())
}

/// δ of the product mechanism at moment order `q = M/2`.
pub fn product_delta(m: usize, k: f64, lambda: f64) -> Result<f64> {
    check_m("product_delta", m)?;
    check_k("product_delta", k)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::domain(
            "product_delta",
            format!("lambda must be >= 0, got {lambda}"),
        ));
    }
    let mf = m as f64;
    let z = 0.5 * lambda * lambda;
    let mut bracket = hyp1f1(mf / 4.0 + 0.5, 0.5, z)?;
    if lambda > 0.0 {
        bracket += SQRT_2 * lambda * hyp1f1(mf / 4.0 + 1.0, 1.5, z)?;
    }
    let geometry = ((mf - 1.0) / ((mf / 2.0 - 1.5) * (mf / 2.0 + 0.75))).sqrt();
    Ok((-z).exp() / (k * PI.sqrt()) * bracket * geometry)
}

/// A calibrated product-noise mechanism.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProductMechanism {
    pub m: usize,
    pub epsilon: f64,
    pub sensitivity: f64,
    pub k: f64,
    pub t: f64,
    pub sigma_m: f64,
    pub lambda: f64,
    pub achieved_delta: f64,
}

impl ProductMechanism {
    /// The least-noise mechanism for a fixed `k`: `σ_M = (Δ/ε)·t`.
    pub fn with_k(m: usize, epsilon: f64, sensitivity: f64, k: f64) -> Result<Self> {
        check_sensitivity("ProductMechanism", sensitivity)?;
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::domain(
                "ProductMechanism",
                format!("epsilon must be > 0, got {epsilon}"),
            ));
        }
        let t = theorem1_t_squared(m, k)?.sqrt();
        let sigma_m = sensitivity / epsilon * t;
        let lambda = sensitivity / sigma_m;
        let achieved_delta = product_delta(m, k, lambda)?;
        Ok(ProductMechanism {
            m,
            epsilon,
            sensitivity,
            k,
            t,
            sigma_m,
            lambda,
            achieved_delta,
        })
    }

    /// `E‖n‖² = σ_M² E[χ₁²] = σ_M²`.
    pub fn expected_sq_magnitude(&self) -> f64 {
        self.sigma_m * self.sigma_m
    }

    pub fn sample(&self, rng: &mut RngStream) -> Result<NoiseVector> {
        sample_product_noise(rng, self.sigma_m, self.m)
    }
}

/// Search parameters for [`calibrate_product`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CalibrationOptions {
    pub k0: f64,
    pub alpha: f64,
    pub max_iter: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            k0: 2.0,
            alpha: 2.0,
            max_iter: 200,
        }
    }
}

/// Grows `k` geometrically from `k0` until the mechanism's δ meets the
/// budget, and returns the first mechanism that does.
pub fn calibrate_product(
    budget: PrivacyBudget,
    m: usize,
    sensitivity: f64,
    opts: CalibrationOptions,
) -> Result<ProductMechanism> {
    check_m("calibrate_product", m)?;
    check_k("calibrate_product", opts.k0)?;
    if !(opts.alpha > 1.0) || !opts.alpha.is_finite() {
        return Err(Error::domain(
            "calibrate_product",
            format!("alpha must be > 1, got {}", opts.alpha),
        ));
    }
    let mut k = opts.k0;
    let mut last_delta = f64::NAN;
    for _ in 0..opts.max_iter {
        let mech = ProductMechanism::with_k(m, budget.epsilon, sensitivity, k)?;
        if mech.achieved_delta <= budget.delta {
            return Ok(mech);
        }
        last_delta = mech.achieved_delta;
        k *= opts.alpha;
        if !k.is_finite() {
            break;
        }
    }
    Err(Error::Calibration {
        iterations: opts.max_iter,
        last_delta,
        target_delta: budget.delta,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GaussianVariant {
    Classic,
    Analytic,
}

/// Isotropic Gaussian mechanism `N(0, σ² I)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GaussianMechanism {
    pub sigma: f64,
    pub variant: GaussianVariant,
    pub sensitivity: f64,
}

impl GaussianMechanism {
    /// `E‖n‖² = σ² m`.
    pub fn expected_sq_magnitude(&self, m: usize) -> f64 {
        self.sigma * self.sigma * m as f64
    }

    pub fn sample(&self, rng: &mut RngStream, m: usize) -> Result<NoiseVector> {
        sample_gaussian_noise(rng, self.sigma, m)
    }
}

/// `σ = (Δ/ε) √(2 ln(1.25/δ))`, valid only for `ε < 1`.
pub fn calibrate_classic_gaussian(
    budget: PrivacyBudget,
    sensitivity: f64,
) -> Result<GaussianMechanism> {
    check_sensitivity("calibrate_classic_gaussian", sensitivity)?;
    if budget.epsilon >= 1.0 {
        return Err(Error::domain(
            "calibrate_classic_gaussian",
            format!(
                "classic Gaussian requires epsilon < 1, got {}",
                budget.epsilon
            ),
        ));
    }
    Ok(GaussianMechanism {
        sigma: sensitivity / budget.epsilon * (2.0 * (1.25 / budget.delta).ln()).sqrt(),
        variant: GaussianVariant::Classic,
        sensitivity,
    })
}

/// Exact δ of the Gaussian mechanism at scale `sigma`.
pub fn analytic_gaussian_delta(epsilon: f64, sensitivity: f64, sigma: f64) -> f64 {
    let a = sensitivity / (2.0 * sigma);
    let b = epsilon * sigma / sensitivity;
    std_normal_cdf(a - b) - epsilon.exp() * std_normal_cdf(-a - b)
}

/// Least σ whose exact Gaussian δ is within budget, by bisection.
pub fn calibrate_analytic_gaussian(
    budget: PrivacyBudget,
    sensitivity: f64,
) -> Result<GaussianMechanism> {
    check_sensitivity("calibrate_analytic_gaussian", sensitivity)?;
    let (eps, target) = (budget.epsilon, budget.delta);
    let f = |s: f64| analytic_gaussian_delta(eps, sensitivity, s);
    let mut hi = sensitivity;
    let mut guard = 0;
    while f(hi) > target {
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(Error::domain(
                "calibrate_analytic_gaussian",
                "could not bracket sigma from above",
            ));
        }
    }
    let mut lo = hi / 2.0;
    guard = 0;
    while f(lo) <= target {
        lo /= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(Error::domain(
                "calibrate_analytic_gaussian",
                "could not bracket sigma from below",
            ));
        }
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(GaussianMechanism {
        sigma: hi,
        variant: GaussianVariant::Analytic,
        sensitivity,
    })
}

/// Ratio of expected squared noise magnitudes, product over classic, at
/// equal `(ε, δ)`: `k^{4/M}(M/4+3/2)^{1+4/M} / (e^{1+2/M} ln(1.25/δ) M)`.
/// Independent of ε, but ε must be in the classic mechanism's range.
pub fn noise_ratio_f(m: usize, budget: PrivacyBudget, k: f64) -> Result<f64> {
    if budget.epsilon >= 1.0 {
        return Err(Error::domain(
            "noise_ratio_f",
            format!(
                "classic Gaussian requires epsilon < 1, got {}",
                budget.epsilon
            ),
        ));
    }
    let t2 = theorem1_t_squared(m, k)?;
    Ok(t2 / (2.0 * (1.25 / budget.delta).ln() * m as f64))
}
