//! Scalar special functions.
//!
//! Everything here works in log space where the arguments get large: the
//! mechanism formulas take Γ at `M/2` with `M` up to `10¹⁰`, far past the
//! point where Γ itself overflows (`x ≈ 171`).

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};

/// `ln √(2π)`.
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this the argument is shifted up before the Stirling series is used.
const STIRLING_MIN: f64 = 10.0;

/// `B_{2j} / (2j (2j-1))` for `j = 1..=8`.
const STIRLING_COEFFS: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

/// Relative size of the series remainder at which [`hyp1f1`] stops.
pub const HYP1F1_TOL: f64 = 1e-16;
/// Term cap for [`hyp1f1`].
pub const HYP1F1_MAX_TERMS: usize = 100_000;

/// Tail sum `Σ B_{2j}/(2j(2j-1) x^{2j-1})` of the Stirling series, `x ≥ 10`.
fn stirling_correction(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut acc = 0.0;
    for c in STIRLING_COEFFS.iter().rev() {
        acc = acc * inv2 + c;
    }
    acc * inv
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(
            "ln_gamma",
            format!("x must be positive and finite, got {x}"),
        ));
    }
    if x == 1.0 || x == 2.0 {
        return Ok(0.0);
    }
    if x >= STIRLING_MIN {
        return Ok((x - 0.5) * x.ln() - x + LN_SQRT_2PI + stirling_correction(x));
    }
    // Γ(x) = Γ(x + n) / (x (x+1) ... (x+n-1))
    let mut shifted = x;
    let mut prod = 1.0;
    while shifted < STIRLING_MIN {
        prod *= shifted;
        shifted += 1.0;
    }
    let big = (shifted - 0.5) * shifted.ln() - shifted + LN_SQRT_2PI + stirling_correction(shifted);
    Ok(big - prod.ln())
}

/// `ln(Γ(a) / Γ(b))`.
///
/// For large arguments the leading Stirling terms are differenced
/// analytically, so the result keeps full relative precision even when both
/// `ln Γ` values are around `10¹³`.
pub fn ln_gamma_ratio(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::domain(
            "gamma_ratio",
            format!("arguments must be positive and finite, got ({a}, {b})"),
        ));
    }
    if a.min(b) < STIRLING_MIN {
        return Ok(ln_gamma(a)? - ln_gamma(b)?);
    }
    // (a-½)ln a - (b-½)ln b - a + b = (a-½) ln(a/b) + d ln b - d,  d = a - b
    let d = a - b;
    let main = (a - 0.5) * (d / b).ln_1p() + d * b.ln() - d;
    Ok(main + stirling_correction(a) - stirling_correction(b))
}

/// `Γ(a) / Γ(b)` evaluated as `exp(ln Γ(a) - ln Γ(b))`.
pub fn gamma_ratio(a: f64, b: f64) -> Result<f64> {
    ln_gamma_ratio(a, b).map(f64::exp)
}

/// Kummer's confluent hypergeometric function `₁F₁(a; b; z)` by its Taylor
/// series, for `a, b > 0` and `z ≥ 0`.
///
/// Terms follow `t_{k+1} = t_k · (a+k) z / ((b+k)(k+1))`. All terms are
/// positive, so there is no cancellation; the loop stops once the geometric
/// bound on the remaining tail is below [`HYP1F1_TOL`] relative to the sum.
/// Intended for moderate `a·z/b`; there is no asymptotic branch.
pub fn hyp1f1(a: f64, b: f64, z: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && z >= 0.0) || !a.is_finite() || !b.is_finite() || !z.is_finite() {
        return Err(Error::domain(
            "hyp1f1",
            format!("requires a > 0, b > 0, z >= 0; got a={a}, b={b}, z={z}"),
        ));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..HYP1F1_MAX_TERMS {
        let kf = k as f64;
        let ratio = (a + kf) * z / ((b + kf) * (kf + 1.0));
        term *= ratio;
        sum += term;
        if !sum.is_finite() {
            return Err(Error::domain(
                "hyp1f1",
                format!("series overflowed for a={a}, b={b}, z={z}"),
            ));
        }
        let next_ratio = (a + kf + 1.0) * z / ((b + kf + 1.0) * (kf + 2.0));
        if next_ratio < 1.0 && term * next_ratio / (1.0 - next_ratio) <= HYP1F1_TOL * sum {
            return Ok(sum);
        }
    }
    Err(Error::NonConvergence {
        func: "hyp1f1",
        iterations: HYP1F1_MAX_TERMS,
        residual: term / sum,
    })
}

/// Standard normal CDF Φ(x).
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn ln_gamma_known_values() {
        assert_eq!(ln_gamma(1.0).unwrap(), 0.0);
        assert!(rel(ln_gamma(0.5).unwrap(), 0.5 * PI.ln()) < 1e-14);
        assert!(rel(ln_gamma(5.0).unwrap(), 24f64.ln()) < 1e-14);
        // Γ(3/2) = √π/2
        assert!(rel(ln_gamma(1.5).unwrap(), (PI.sqrt() / 2.0).ln()) < 1e-13);
    }

    #[test]
    fn ln_gamma_matches_factorials_across_range() {
        let mut ln_fact = 0.0f64;
        for n in 1..=170u32 {
            // ln Γ(n+1) = ln n!
            ln_fact += (n as f64).ln();
            let got = ln_gamma(n as f64 + 1.0).unwrap();
            if ln_fact > 1.0 {
                assert!(rel(got, ln_fact) < 1e-13, "n={n}: {got} vs {ln_fact}");
            }
        }
    }

    #[test]
    fn ln_gamma_small_and_huge_arguments() {
        // Γ(x) ~ 1/x - γ near zero
        let x: f64 = 1e-3;
        let expect = (1.0 / x - 0.577_215_664_901_532_9 + 0.989_055_995_327_973 * x).ln();
        assert!(rel(ln_gamma(x).unwrap(), expect) < 1e-7);
        let big = ln_gamma(1e12).unwrap();
        let stirling = (1e12 - 0.5) * 1e12f64.ln() - 1e12 + LN_SQRT_2PI;
        assert!(rel(big, stirling) < 1e-15);
    }

    #[test]
    fn ln_gamma_rejects_nonpositive() {
        assert!(matches!(ln_gamma(0.0), Err(Error::Domain { .. })));
        assert!(matches!(ln_gamma(-1.5), Err(Error::Domain { .. })));
        assert!(ln_gamma(f64::NAN).is_err());
    }

    #[test]
    fn gamma_ratio_examples() {
        assert!(rel(gamma_ratio(1.0, 0.5).unwrap(), 1.0 / PI.sqrt()) < 1e-14);
        assert!(rel(gamma_ratio(2.0, 1.5).unwrap(), 2.0 / PI.sqrt()) < 1e-14);
        let r = gamma_ratio(11.0, 10.5).unwrap();
        assert!(r > 10.25f64.sqrt() && r < 10.5f64.sqrt());
        assert!(gamma_ratio(0.0, 1.0).is_err());
    }

    #[test]
    fn gamma_ratio_large_arguments_stay_finite_and_accurate() {
        // Γ(x + 1/2)/Γ(x) = √x (1 - 1/(8x) + 1/(128x²) + ...)
        for &x in &[1e4, 1e8, 1e12] {
            let r = gamma_ratio(x + 0.5, x).unwrap();
            let expect = x.sqrt() * (1.0 - 1.0 / (8.0 * x) + 1.0 / (128.0 * x * x));
            assert!(rel(r, expect) < 1e-13, "x={x}: {r} vs {expect}");
        }
        // shift by one is exact: Γ(x+1)/Γ(x) = x
        assert!(rel(gamma_ratio(1e9 + 1.0, 1e9).unwrap(), 1e9) < 1e-13);
    }

    #[test]
    fn hyp1f1_closed_forms() {
        assert!(rel(hyp1f1(1.0, 1.0, 1.0).unwrap(), std::f64::consts::E) < 1e-14);
        assert_eq!(hyp1f1(3.5, 0.5, 0.0).unwrap(), 1.0);
        // ₁F₁(1; 2; z) = (e^z - 1)/z
        let z: f64 = 2.0;
        assert!(rel(hyp1f1(1.0, 2.0, z).unwrap(), z.exp_m1() / z) < 1e-14);
    }

    #[test]
    fn hyp1f1_large_a_small_z() {
        // the calibration regime: a ~ M/4, z ~ 1/M; reference from 40-digit arithmetic
        let v = hyp1f1(2.5e9, 0.5, 1e-12).unwrap();
        assert!(rel(v, 1.005_004_168_055_805_3) < 1e-14);
    }

    #[test]
    fn hyp1f1_domain_and_cap() {
        assert!(hyp1f1(-1.0, 1.0, 1.0).is_err());
        assert!(hyp1f1(1.0, 0.0, 1.0).is_err());
        assert!(hyp1f1(1.0, 1.0, -0.1).is_err());
        // a z / b this large needs far more than the term cap allows
        assert!(hyp1f1(1.0, 1.0, 1e6).is_err());
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!(1.0 - std_normal_cdf(10.0) < 1e-20);
        assert!(std_normal_cdf(-10.0) < 1e-20 && std_normal_cdf(-10.0) > 0.0);
        assert!((std_normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((std_normal_cdf(-1.0) + std_normal_cdf(1.0) - 1.0).abs() < 1e-15);
    }
}
