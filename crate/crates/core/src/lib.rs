//! Product-noise differential privacy.
//!
//! The product mechanism perturbs an `M`-dimensional query answer with
//! `n = σ_M · R · h`, where the radius `R ~ χ₁` and the direction `h` is uniform
//! on the unit sphere `𝕊^{M-1}`. Its privacy parameter `δ` comes from a moment
//! bound on the product `W·U` with `W = R + λ` and `U = 1/sin θ`.
//!
//! Modules, bottom-up:
//!
//! * [`specfun`]: log-gamma, gamma ratios, the Kummer series ₁F₁, Φ.
//! * [`samplers`]: reproducible RNG streams and every noise sampler.
//! * [`analytic`]: densities and moments of `W` and `U`, the tail bound and
//!   its approximate form, the q-sweep.
//! * [`calibration`]: σ_M for a target `(ε, δ)` and the Gaussian baselines.
//! * [`accountant`]: Poisson amplification and distribution-free composition.
//! * [`erm`]: output perturbation, approximate-minima perturbation, DPSGD.
//! * [`verify`]: Monte-Carlo checks of the analytic claims.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod analytic;
pub mod calibration;
pub mod erm;
mod error;
pub mod samplers;
pub mod specfun;
pub mod verify;

pub use calibration::{GaussianMechanism, GaussianVariant, PrivacyBudget, ProductMechanism};
pub use error::{Error, Result};
pub use samplers::{NoiseVector, RngStream};
