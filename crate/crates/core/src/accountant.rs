//! Privacy accounting for iterative releases: Poisson-subsampling
//! amplification followed by distribution-independent composition.

use serde::Serialize;

use crate::calibration::PrivacyBudget;
use crate::error::{Error, Result};

/// Default for the free constant `δ̃` of the composition bound.
pub const DEFAULT_DELTA_TILDE: f64 = 1e-6;

/// `(ln(1 + p(e^ε − 1)), p·δ)`.
pub fn amplify_poisson(step: PrivacyBudget, p: f64) -> Result<PrivacyBudget> {
    check_p(p)?;
    let eps = (p * step.epsilon().exp_m1()).ln_1p();
    PrivacyBudget::new(eps, p * step.delta())
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::domain(
            "amplify_poisson",
            format!("p must lie in (0, 1], got {p}"),
        ));
    }
    Ok(())
}

/// `T` identical `(ε, δ)` steps to be composed.
///
/// `step_epsilon` and `step_delta` are the per-step guarantees after any
/// subsampling amplification; `sampling_p` records the probability that
/// produced them (1 when there was none). `step_delta` may be 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CompositionLedger {
    pub step_epsilon: f64,
    pub step_delta: f64,
    pub sampling_p: f64,
    pub steps: u64,
    pub delta_tilde: f64,
}

impl CompositionLedger {
    pub fn new(step_epsilon: f64, step_delta: f64, steps: u64, delta_tilde: f64) -> Result<Self> {
        let ledger = CompositionLedger {
            step_epsilon,
            step_delta,
            sampling_p: 1.0,
            steps,
            delta_tilde,
        };
        ledger.validate()?;
        Ok(ledger)
    }

    /// Amplifies `step` by Poisson sampling at rate `p` and records the
    /// amplified values.
    pub fn subsampled(step: PrivacyBudget, p: f64, steps: u64, delta_tilde: f64) -> Result<Self> {
        let amp = amplify_poisson(step, p)?;
        let ledger = CompositionLedger {
            step_epsilon: amp.epsilon(),
            step_delta: amp.delta(),
            sampling_p: p,
            steps,
            delta_tilde,
        };
        ledger.validate()?;
        Ok(ledger)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::domain("CompositionLedger", msg));
        if !(self.step_epsilon > 0.0) || !self.step_epsilon.is_finite() {
            return bad(format!(
                "step epsilon must be > 0, got {}",
                self.step_epsilon
            ));
        }
        if !(0.0..1.0).contains(&self.step_delta) {
            return bad(format!(
                "step delta must lie in [0, 1), got {}",
                self.step_delta
            ));
        }
        if !(self.sampling_p > 0.0 && self.sampling_p <= 1.0) {
            return bad(format!(
                "sampling p must lie in (0, 1], got {}",
                self.sampling_p
            ));
        }
        if self.steps == 0 {
            return bad("steps must be >= 1".into());
        }
        if !(self.delta_tilde > 0.0 && self.delta_tilde <= 1.0) {
            return bad(format!(
                "delta_tilde must lie in (0, 1], got {}",
                self.delta_tilde
            ));
        }
        Ok(())
    }
}

/// `ε′ = T (e^ε − 1) ε / (e^ε + 1) + √(2 ln(1/δ̃) T ε²)`.
pub fn composed_epsilon(step_epsilon: f64, steps: u64, delta_tilde: f64) -> f64 {
    let t = steps as f64;
    let e = step_epsilon;
    // (e^ε − 1)/(e^ε + 1) = tanh(ε/2)
    t * (0.5 * e).tanh() * e + (2.0 * (1.0 / delta_tilde).ln() * t * e * e).sqrt()
}

/// Composite `(ε′, δ′)` after `T` steps.
///
/// Requires `ε′ < Tε`; otherwise the bound on `δ″` is undefined and a domain
/// error carries the offending values.
pub fn compose(ledger: &CompositionLedger) -> Result<PrivacyBudget> {
    ledger.validate()?;
    let e = ledger.step_epsilon;
    let d = ledger.step_delta;
    let t = ledger.steps as f64;
    let eps_p = composed_epsilon(e, ledger.steps, ledger.delta_tilde);
    let te = t * e;
    if !(eps_p < te) {
        return Err(Error::domain(
            "compose",
            format!(
                "requires eps' < T*eps, got eps'={eps_p}, T*eps={te} (T={}, eps={e})",
                ledger.steps
            ),
        ));
    }
    let c = (eps_p / e).ceil();
    // ln(1 + e^ε) without overflow
    let ln_1pe = if e > 30.0 {
        e + (-e).exp().ln_1p()
    } else {
        e.exp().ln_1p()
    };
    let x = (d.ln() - ln_1pe).exp(); // δ / (1 + e^ε)
    let ln_a = c * (-(e.exp() * x)).ln_1p() + (t - c) * (-x).ln_1p();
    let ln_b = t * (-x).ln_1p();
    let head = -ln_a.exp_m1() - ln_b.exp_m1();
    let ln_dpp = -0.5 * (eps_p + te) + t * ((2.0 * te / (te - eps_p)).ln() - ln_1pe)
        - (eps_p + te) / (2.0 * e) * ((te + eps_p) / (te - eps_p)).ln();
    let delta_p = head + ln_dpp.exp();
    if !(delta_p > 0.0 && delta_p < 1.0) {
        return Err(Error::domain(
            "compose",
            format!("composite delta {delta_p} is outside (0, 1) for eps'={eps_p}"),
        ));
    }
    PrivacyBudget::new(eps_p, delta_p)
}

/// Cumulative `(ε′, δ′)` at the end of each epoch: the step budget is
/// amplified once at rate `p`, then composed over `e · steps_per_epoch`
/// steps for `e = 1..=epochs`.
pub fn dpsgd_budget(
    step: PrivacyBudget,
    p: f64,
    epochs: u64,
    steps_per_epoch: u64,
    delta_tilde: f64,
) -> Result<Vec<PrivacyBudget>> {
    if epochs == 0 || steps_per_epoch == 0 {
        return Err(Error::domain(
            "dpsgd_budget",
            "epochs and steps_per_epoch must be >= 1",
        ));
    }
    (1..=epochs)
        .map(|ep| {
            let ledger = CompositionLedger::subsampled(step, p, ep * steps_per_epoch, delta_tilde)?;
            compose(&ledger)
        })
        .collect()
}
