//! Densities and moments of `W = R + λ` and `U = 1/sin θ`, the moment tail
//! bound on `W·U`, its approximate form, and the search over the moment order.

use std::f64::consts::{PI, SQRT_2};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::specfun::{hyp1f1, ln_gamma_ratio};

/// Inputs of a moment or tail computation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentQuery {
    pub m: usize,
    pub q: f64,
    pub lambda: f64,
}

/// The two factors of the moment tail bound and their product.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailBound {
    pub delta1: f64,
    pub delta2: f64,
    pub bound: f64,
    pub q_used: f64,
    pub t_used: f64,
}

/// Which δ expression a q-search minimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaForm {
    /// `δ₁·δ₂` from the moment tail bound.
    Accurate,
    /// The closed-form upper approximation [`delta_approx`].
    Approximate,
}

/// Result of minimizing δ over the moment order `q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QOptimum {
    pub q: f64,
    pub delta: f64,
    pub lambda: f64,
}

fn check_lambda(func: &'static str, lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::domain(
            func,
            format!("lambda must be >= 0, got {lambda}"),
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

fn check_tail_q(func: &'static str, m: usize, q: f64) -> Result<()> {
    let mf = m as f64;
    if !(q > 1.0 && q < mf - 1.5) {
        return Err(Error::domain(
            func,
            format!("q must satisfy 1 < q < m - 3/2, got q={q}, m={m}"),
        ));
    }
    Ok(())
}

/// Density of `W = R + λ`, `R ~ χ₁`.
pub fn pdf_w(w: f64, lambda: f64) -> f64 {
    if w < lambda {
        return 0.0;
    }
    let d = w - lambda;
    (2.0 / PI).sqrt() * (-0.5 * d * d).exp()
}

/// `ln[(2/√π) Γ(M/2) / Γ((M−1)/2)]`, the normalizer of [`pdf_u`].
fn ln_pdf_u_norm(mf: f64) -> Result<f64> {
    Ok((2.0 / PI.sqrt()).ln() + ln_gamma_ratio(mf / 2.0, (mf - 1.0) / 2.0)?)
}

/// Density of `U = 1/sin θ`, where `θ` is the angle between a uniform
/// direction on `𝕊^{m-1}` and a fixed axis. Zero for `u ≤ 1`.
pub fn pdf_u(u: f64, m: usize) -> Result<f64> {
    if m < 3 {
        return Err(Error::domain("pdf_u", format!("m must be >= 3, got {m}")));
    }
    if u <= 1.0 {
        return Ok(0.0);
    }
    let mf = m as f64;
    let ln = ln_pdf_u_norm(mf)? - 0.5 * ((u - 1.0) * (u + 1.0)).ln() + (1.0 - mf) * u.ln();
    Ok(ln.exp())
}

/// `E[U^q]` in closed form.
///
/// Finite for every `q < m − 1`; the moment-bound argument uses `1 < q`,
/// but smaller orders are accepted (`q = 0` gives 1).
pub fn moment_u_exact(m: usize, q: f64) -> Result<f64> {
    if m < 3 {
        return Err(Error::domain(
            "moment_u_exact",
            format!("m must be >= 3, got {m}"),
        ));
    }
    let mf = m as f64;
    if !q.is_finite() || q >= mf - 1.0 {
        return Err(Error::domain(
            "moment_u_exact",
            format!("q must be < m - 1, got q={q}, m={m}"),
        ));
    }
    let ln = ln_gamma_ratio(mf / 2.0, (mf - 1.0) / 2.0)?
        + ln_gamma_ratio((mf - q - 1.0) / 2.0, (mf - q) / 2.0)?;
    Ok(ln.exp())
}

/// Upper bound on `E[W^q]`.
pub fn moment_w_bound(q: f64, lambda: f64) -> Result<f64> {
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::domain(
            "moment_w_bound",
            format!("q must be >= 0, got {q}"),
        ));
    }
    check_lambda("moment_w_bound", lambda)?;
    let z = 0.5 * lambda * lambda;
    let lead = -0.5 * q * std::f64::consts::LN_2 - z;
    let even =
        (lead + ln_gamma_ratio(q + 1.0, (q + 2.0) / 2.0)?).exp() * hyp1f1((q + 1.0) / 2.0, 0.5, z)?;
    let odd = if lambda > 0.0 {
        (lead + ln_gamma_ratio(q + 1.0, (q + 1.0) / 2.0)?).exp()
            * SQRT_2
            * lambda
            * hyp1f1((q + 2.0) / 2.0, 1.5, z)?
    } else {
        0.0
    };
    Ok(even + odd)
}

/// Least `t²` (exclusive) at which the moment tail bound applies for order
/// `q` and constant `k`: `2 k^{2/q} ((q+3)/2)^{1+2/q} / e^{1+1/q}`.
pub fn tail_threshold_t_squared(q: f64, k: f64) -> Result<f64> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::domain(
            "tail_threshold_t_squared",
            format!("q must be > 0, got {q}"),
        ));
    }
    check_k("tail_threshold_t_squared", k)?;
    let ln = std::f64::consts::LN_2 + (2.0 / q) * k.ln() + (1.0 + 2.0 / q) * ((q + 3.0) / 2.0).ln()
        - (1.0 + 1.0 / q);
    Ok(ln.exp())
}

/// `[₁F₁((q+1)/2; ½; λ²/2) + √2 λ ₁F₁((q+2)/2; 3/2; λ²/2)] e^{−λ²/2}`.
fn kummer_pair(q: f64, lambda: f64) -> Result<f64> {
    let z = 0.5 * lambda * lambda;
    let mut s = hyp1f1((q + 1.0) / 2.0, 0.5, z)?;
    if lambda > 0.0 {
        s += SQRT_2 * lambda * hyp1f1((q + 2.0) / 2.0, 1.5, z)?;
    }
    Ok((-z).exp() * s)
}

/// `(δ₁, δ₂)` without the admissibility check on `t`.
fn tail_factors(m: usize, q: f64, lambda: f64, k: f64) -> Result<(f64, f64)> {
    let mf = m as f64;
    let delta1 = kummer_pair(q, lambda)? / (k * PI.sqrt() * (q + 0.75).sqrt());
    let delta2 = ((mf - 1.0) / (mf - q - 1.5)).sqrt();
    Ok((delta1, delta2))
}

/// Moment tail bound `Pr[W·U ≥ t] ≤ δ₁·δ₂`.
///
/// Requires `1 < q < m − 3/2`, `k > 1`, and strictly
/// `t² > 2 k^{2/q} ((q+3)/2)^{1+2/q} / e^{1+1/q}`.
pub fn tail_bound(m: usize, q: f64, lambda: f64, k: f64, t: f64) -> Result<TailBound> {
    check_tail_q("tail_bound", m, q)?;
    check_lambda("tail_bound", lambda)?;
    check_k("tail_bound", k)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(
            "tail_bound",
            format!("t must be positive, got {t}"),
        ));
    }
    let threshold = tail_threshold_t_squared(q, k)?;
    if !(t * t > threshold) {
        return Err(Error::domain(
            "tail_bound",
            format!(
                "admissibility t^2 > 2 k^(2/q) ((q+3)/2)^(1+2/q) / e^(1+1/q) failed: \
                 t^2 = {} <= {threshold}",
                t * t
            ),
        ));
    }
    let (delta1, delta2) = tail_factors(m, q, lambda, k)?;
    Ok(TailBound {
        delta1,
        delta2,
        bound: delta1 * delta2,
        q_used: q,
        t_used: t,
    })
}

/// Largest `ln k` admissible for `(t, q)`, less a small relative margin so
/// the strict inequality survives rounding.
fn admissible_ln_k(t: f64, q: f64) -> f64 {
    let ln_k_max = 0.5
        * q
        * (2.0 * t.ln() + 1.0 + 1.0 / q
            - std::f64::consts::LN_2
            - (1.0 + 2.0 / q) * ((q + 3.0) / 2.0).ln());
    ln_k_max - 1e-8 * q.max(1.0)
}

/// Tightest tail bound at a given `t` over the orders in `q_grid`.
///
/// For each `q`, `δ₁` falls as `1/k`, so the best `k` is the largest one the
/// admissibility condition allows at `t`. Orders where no `k > 1` is
/// admissible, or outside `(1, m − 3/2)`, are skipped; an error is returned
/// if none remain.
pub fn best_tail_bound(m: usize, lambda: f64, t: f64, q_grid: &[f64]) -> Result<TailBound> {
    check_lambda("best_tail_bound", lambda)?;
    let mf = m as f64;
    let mut best: Option<TailBound> = None;
    for &q in q_grid {
        if !(q > 1.0 && q < mf - 1.5) {
            continue;
        }
        let ln_k = admissible_ln_k(t, q).min(700.0);
        if !(ln_k > 1e-12) {
            continue;
        }
        let tb = tail_bound(m, q, lambda, ln_k.exp(), t)?;
        if best.is_none_or(|b| tb.bound < b.bound) {
            best = Some(tb);
        }
    }
    best.ok_or_else(|| {
        Error::domain(
            "best_tail_bound",
            format!("no admissible (q, k) on the grid for m={m}, t={t}"),
        )
    })
}

/// `n` evenly spaced orders strictly inside `(1, m − 3/2)`.
pub fn default_q_grid(m: usize, n: usize) -> Vec<f64> {
    let lo = 1.0;
    let hi = m as f64 - 1.5;
    (1..=n)
        .map(|i| lo + (hi - lo) * i as f64 / (n + 1) as f64)
        .collect()
}

/// Closed-form upper approximation of the tail bound, valid for `λ² < ½`.
pub fn delta_approx(m: usize, q: f64, lambda: f64, k: f64) -> Result<f64> {
    check_tail_q("delta_approx", m, q)?;
    check_lambda("delta_approx", lambda)?;
    check_k("delta_approx", k)?;
    let l2 = lambda * lambda;
    if l2 >= 0.5 {
        return Err(Error::domain(
            "delta_approx",
            format!("requires lambda^2 < 1/2, got lambda={lambda}"),
        ));
    }
    let mf = m as f64;
    let lead = 2.0 * (-0.5 * l2).exp() * (mf - 1.0).sqrt() / (k * PI.sqrt());
    Ok(lead * (1.0 + l2 * (q + 1.0)) / ((mf - q - 1.5) * (q + 0.75)).sqrt())
}

/// Stationary point of [`delta_approx`] in `q`:
/// `(4M − 2λ²M − 9) / (4λ²M + 8 − λ²)`.
pub fn q_star(m: usize, lambda: f64) -> Result<f64> {
    check_lambda("q_star", lambda)?;
    let mf = m as f64;
    let l2 = lambda * lambda;
    Ok((4.0 * mf - 2.0 * l2 * mf - 9.0) / (4.0 * l2 * mf + 8.0 - l2))
}

/// `Pr[R² ≥ μ] ≤ exp(−(μ − 1 − ln μ)/2)` for `R ~ χ₁`.
pub fn chi1_square_tail_bound(mu: f64) -> Result<f64> {
    if !(mu >= 1.0) || !mu.is_finite() {
        return Err(Error::domain(
            "chi1_square_tail_bound",
            format!("mu must be >= 1, got {mu}"),
        ));
    }
    Ok((-0.5 * (mu - 1.0 - mu.ln())).exp())
}

fn delta_at(form: DeltaForm, m: usize, q: f64, lambda: f64, k: f64) -> Result<f64> {
    match form {
        DeltaForm::Accurate => {
            check_tail_q("tail_factors", m, q)?;
            let (d1, d2) = tail_factors(m, q, lambda, k)?;
            Ok(d1 * d2)
        }
        DeltaForm::Approximate => delta_approx(m, q, lambda, k),
    }
}

/// Minimizes δ over an evenly spaced grid of `n_points` orders on
/// `[2, M − 2]`, taking at each `q` the least admissible scale
/// `t(q)² = 2 k^{2/q} ((q+3)/2)^{1+2/q} / e^{1+1/q}` and `λ = ε / t(q)`.
///
/// This is how the numeric minima for the approximate-δ comparison are
/// produced; the reported minimizer is a grid point.
pub fn scan_q_grid(
    m: usize,
    epsilon: f64,
    k: f64,
    form: DeltaForm,
    n_points: usize,
) -> Result<QOptimum> {
    if m < 5 {
        return Err(Error::domain(
            "scan_q_grid",
            format!("m must be >= 5, got {m}"),
        ));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::domain(
            "scan_q_grid",
            format!("epsilon must be > 0, got {epsilon}"),
        ));
    }
    if n_points < 2 {
        return Err(Error::domain("scan_q_grid", "need at least 2 grid points"));
    }
    let lo = 2.0;
    let hi = m as f64 - 2.0;
    let step = (hi - lo) / (n_points - 1) as f64;
    let mut best: Option<QOptimum> = None;
    for i in 0..n_points {
        let q = lo + step * i as f64;
        let lambda = epsilon / tail_threshold_t_squared(q, k)?.sqrt();
        let delta = delta_at(form, m, q, lambda, k)?;
        if best.is_none_or(|b| delta < b.delta) {
            best = Some(QOptimum { q, delta, lambda });
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// Minimizes δ over real `q ∈ (1, m − 3/2)` with `λ` held fixed, by golden
/// section on `ln δ`.
pub fn minimize_q_fixed_lambda(m: usize, lambda: f64, k: f64, form: DeltaForm) -> Result<QOptimum> {
    check_lambda("minimize_q_fixed_lambda", lambda)?;
    check_k("minimize_q_fixed_lambda", k)?;
    let mf = m as f64;
    if mf - 1.5 <= 1.0 + 1e-9 {
        return Err(Error::domain(
            "minimize_q_fixed_lambda",
            format!("m too small: {m}"),
        ));
    }
    let f = |q: f64| delta_at(form, m, q, lambda, k).map(f64::ln);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let span = mf - 2.5;
    let (mut a, mut b) = (1.0 + 1e-9 * span, mf - 1.5 - 1e-9 * span);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..300 {
        if (b - a) <= 1e-12 * b {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let q = 0.5 * (a + b);
    Ok(QOptimum {
        q,
        delta: delta_at(form, m, q, lambda, k)?,
        lambda,
    })
}
