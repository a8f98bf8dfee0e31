//! Monte-Carlo checks of the analytic claims.
//!
//! Every estimator splits its samples into fixed chunks; chunk `i` draws from
//! `rng.substream(i)` and partial results are combined in chunk order, so a
//! report depends only on `(seed, stream_id, n_samples)`, never on the
//! thread count.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{
    best_tail_bound, chi1_square_tail_bound, default_q_grid, moment_u_exact, moment_w_bound,
    tail_bound, tail_threshold_t_squared,
};
use crate::calibration::{
    calibrate_analytic_gaussian, calibrate_classic_gaussian, calibrate_product, noise_ratio_f,
    CalibrationOptions, PrivacyBudget, ProductMechanism,
};
use crate::error::{Error, Result};
use crate::samplers::{fill_sphere, sample_product_noise, RngStream};
use crate::specfun::std_normal_cdf;

/// Samples per parallel work item.
pub const CHUNK: u64 = 1 << 16;

/// Standard-error multiple allowed by stochastic verdicts.
pub const SE_SLACK: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// Outcome of one check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McReport {
    pub description: String,
    pub estimate: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub bound_or_target: f64,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl McReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// `estimate ≤ bound + 3·SE`.
    fn upper(description: String, estimate: f64, std_error: f64, n: u64, bound: f64) -> Self {
        McReport {
            description,
            estimate,
            std_error,
            n_samples: n,
            bound_or_target: bound,
            verdict: Verdict::from_bool(estimate <= bound + SE_SLACK * std_error),
            warning: None,
        }
    }

    /// `|estimate − target| ≤ 3·SE`.
    fn close(description: String, estimate: f64, std_error: f64, n: u64, target: f64) -> Self {
        McReport {
            description,
            estimate,
            std_error,
            n_samples: n,
            bound_or_target: target,
            verdict: Verdict::from_bool((estimate - target).abs() <= SE_SLACK * std_error),
            warning: None,
        }
    }

    /// `|estimate/target − 1| ≤ tol`.
    fn relative(
        description: String,
        estimate: f64,
        std_error: f64,
        n: u64,
        target: f64,
        tol: f64,
    ) -> Self {
        McReport {
            description,
            estimate,
            std_error,
            n_samples: n,
            bound_or_target: target,
            verdict: Verdict::from_bool((estimate / target - 1.0).abs() <= tol),
            warning: None,
        }
    }

    fn exact(description: String, value: f64, target: f64, ok: bool) -> Self {
        McReport {
            description,
            estimate: value,
            std_error: 0.0,
            n_samples: 0,
            bound_or_target: target,
            verdict: Verdict::from_bool(ok),
            warning: None,
        }
    }
}

/// Runs `f(rng, len)` over fixed-size chunks in parallel and returns the
/// per-chunk results in chunk order.
pub fn par_chunks<T, F>(n: u64, rng: &RngStream, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RngStream, u64) -> T + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(n - c * CHUNK);
            let mut r = rng.substream(c);
            f(&mut r, len)
        })
        .collect()
}

/// Draws `n` values of `f` and concatenates them in a fixed order.
pub fn par_samples<F>(n: u64, rng: &RngStream, f: F) -> Vec<f64>
where
    F: Fn(&mut RngStream, &mut Vec<f64>) -> f64 + Sync,
{
    par_chunks(n, rng, |r, len| {
        let mut buf = Vec::new();
        (0..len).map(|_| f(r, &mut buf)).collect::<Vec<f64>>()
    })
    .concat()
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample skewness and (non-excess) kurtosis.
pub fn skew_kurtosis(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    (m3 / m2.powf(1.5), m4 / (m2 * m2))
}

/// Binomial proportion and its standard error.
fn proportion(hits: u64, n: u64) -> (f64, f64) {
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Kolmogorov–Smirnov distance between the empirical distribution of `xs`
/// and `cdf`. Sorts `xs` in place.
pub fn ks_statistic(xs: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// CDF of `χ₁`: `erf(x/√2)`.
pub fn chi1_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        2.0 * std_normal_cdf(x) - 1.0
    }
}

/// CDF of `U = 1/sin θ` on `𝕊^{m−1}`: `cos²θ ~ Beta(½, (m−1)/2)`, so
/// `F_U(u) = I_{1−1/u²}(½, (m−1)/2)`.
pub fn u_cdf(u: f64, m: usize) -> f64 {
    if u <= 1.0 {
        return 0.0;
    }
    let x = 1.0 - 1.0 / (u * u);
    statrs::function::beta::beta_reg(0.5, (m as f64 - 1.0) / 2.0, x)
}

/// `1/sin θ` for `θ` the angle between a fresh sphere sample and `e₁`.
fn draw_u(rng: &mut RngStream, buf: &mut Vec<f64>, m: usize) -> f64 {
    buf.resize(m, 0.0);
    fill_sphere(rng, buf);
    let c = buf[0];
    1.0 / ((1.0 - c) * (1.0 + c)).sqrt()
}

/// Empirical `Pr[PLRV ≥ ε]` for the worst-case neighbor `v = Δ·e₁`,
/// against the mechanism's δ.
pub fn mc_plrv_tail(
    mech: &ProductMechanism,
    epsilon: f64,
    n_samples: u64,
    rng: &RngStream,
) -> McReport {
    let mut r = mc_plrv_tail_shifted(mech, epsilon, 1.0, n_samples, rng);
    r.description = format!(
        "plrv tail m={} eps={epsilon} k={} sigma_m={:.6e}",
        mech.m, mech.k, mech.sigma_m
    );
    r
}

/// As [`mc_plrv_tail`] with `v = shift·Δ·e₁`; `shift = 0` compares a
/// dataset with itself.
pub fn mc_plrv_tail_shifted(
    mech: &ProductMechanism,
    epsilon: f64,
    shift: f64,
    n_samples: u64,
    rng: &RngStream,
) -> McReport {
    let m = mech.m;
    let sigma = mech.sigma_m;
    let v1 = shift * mech.sensitivity;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let hits: u64 = par_chunks(n_samples, rng, |r, len| {
        let mut n = vec![0.0; m];
        let mut count = 0u64;
        for _ in 0..len {
            let rad = sigma * r.standard_normal().abs();
            fill_sphere(r, &mut n);
            n.iter_mut().for_each(|x| *x *= rad);
            // s = f(x) + n with f(x) = 0 and f(x') = -v
            let d_x: f64 = n.iter().map(|x| x * x).sum();
            let d_xp: f64 = d_x - n[0] * n[0] + (n[0] + v1).powi(2);
            if (d_xp - d_x) * inv >= epsilon {
                count += 1;
            }
        }
        count
    })
    .into_iter()
    .sum();
    let (p, se) = proportion(hits, n_samples);
    McReport::upper(
        format!("plrv tail m={m} eps={epsilon} shift={shift}"),
        p,
        se,
        n_samples,
        mech.achieved_delta,
    )
}

/// Pointwise audit: on every sample, the circumcircle bound
/// `λ(R + λ)/sin θ` dominates the exact PLRV, and `‖n+v‖/sin θ ≥ ‖n+v‖`.
/// The estimate is the violation count.
pub fn plrv_geometry_audit(mech: &ProductMechanism, n_samples: u64, rng: &RngStream) -> McReport {
    let m = mech.m;
    let sigma = mech.sigma_m;
    let delta = mech.sensitivity;
    let lambda = mech.lambda;
    let violations: u64 = par_chunks(n_samples, rng, |r, len| {
        let mut h = vec![0.0; m];
        let mut bad = 0u64;
        for _ in 0..len {
            let rad = r.standard_normal().abs();
            fill_sphere(r, &mut h);
            let n0 = sigma * rad * h[0];
            let nn = sigma * sigma * rad * rad;
            let plrv = ((nn - n0 * n0 + (n0 + delta).powi(2)) - nn) / (2.0 * sigma * sigma);
            let sin = ((1.0 - h[0]) * (1.0 + h[0])).sqrt();
            let bound = lambda * (rad + lambda) / sin;
            let side = (nn + 2.0 * n0 * delta + delta * delta).sqrt();
            if plrv > bound * (1.0 + 1e-12) || side / sin < side * (1.0 - 1e-12) {
                bad += 1;
            }
        }
        bad
    })
    .into_iter()
    .sum();
    McReport::exact(
        format!("circumcircle bound dominates exact plrv, m={m}"),
        violations as f64,
        0.0,
        violations == 0,
    )
    .with_samples(n_samples)
}

impl McReport {
    fn with_samples(mut self, n: u64) -> Self {
        self.n_samples = n;
        self
    }

    fn with_warning(mut self, w: Option<String>) -> Self {
        self.warning = w;
        self
    }
}

/// Empirical `Pr[W·U ≥ t]` against the tightest moment tail bound over an
/// evenly spaced q grid. Where no `(q, k)` is admissible the trivial bound 1
/// is used.
pub fn mc_product_tail(m: usize, lambda: f64, t: f64, n_samples: u64, rng: &RngStream) -> McReport {
    let hits: u64 = par_chunks(n_samples, rng, |r, len| {
        let mut buf = Vec::new();
        (0..len)
            .filter(|_| {
                let w = r.standard_normal().abs() + lambda;
                w * draw_u(r, &mut buf, m) >= t
            })
            .count() as u64
    })
    .into_iter()
    .sum();
    let (p, se) = proportion(hits, n_samples);
    let (bound, warning) = match best_tail_bound(m, lambda, t, &default_q_grid(m, 200)) {
        Ok(tb) => (tb.bound.min(1.0), None),
        Err(e) => (1.0, Some(e.to_string())),
    };
    McReport::upper(
        format!("product tail m={m} lambda={lambda} t={t}"),
        p,
        se,
        n_samples,
        bound,
    )
    .with_warning(warning)
}

/// Monte-Carlo `E[U^q]` against the closed form.
pub fn mc_moment_u(m: usize, q: f64, n_samples: u64, rng: &RngStream) -> Result<McReport> {
    let target = moment_u_exact(m, q)?;
    let xs = par_samples(n_samples, rng, |r, buf| draw_u(r, buf, m).powf(q));
    let (mean, se) = mean_se(&xs);
    let warning = (q > m as f64 - 2.0)
        .then(|| format!("q={q} > m-2: the estimator's variance may be infinite"));
    Ok(
        McReport::close(format!("E[U^q] m={m} q={q}"), mean, se, n_samples, target)
            .with_warning(warning),
    )
}

/// Monte-Carlo `E[(R+λ)^q]` against the analytic upper bound.
pub fn mc_moment_w(q: f64, lambda: f64, n_samples: u64, rng: &RngStream) -> Result<McReport> {
    let bound = moment_w_bound(q, lambda)?;
    let xs = par_samples(n_samples, rng, |r, _| {
        (r.standard_normal().abs() + lambda).powf(q)
    });
    let (mean, se) = mean_se(&xs);
    Ok(McReport::upper(
        format!("E[W^q] bound q={q} lambda={lambda}"),
        mean,
        se,
        n_samples,
        bound,
    ))
}

/// Expected squared noise magnitudes of the three mechanisms at one
/// `(M, ε, δ)`, sensitivity 1, product noise at fixed `k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MagnitudeRow {
    pub m: usize,
    pub epsilon: f64,
    pub e_sq_product: f64,
    pub e_sq_classic: f64,
    pub e_sq_analytic: f64,
    pub f_ratio: f64,
}

pub fn magnitude_comparison(m: usize, budget: PrivacyBudget, k: f64) -> Result<MagnitudeRow> {
    let product = ProductMechanism::with_k(m, budget.epsilon(), 1.0, k)?;
    let classic = calibrate_classic_gaussian(budget, 1.0)?;
    let analytic = calibrate_analytic_gaussian(budget, 1.0)?;
    Ok(MagnitudeRow {
        m,
        epsilon: budget.epsilon(),
        e_sq_product: product.expected_sq_magnitude(),
        e_sq_classic: classic.expected_sq_magnitude(m),
        e_sq_analytic: analytic.expected_sq_magnitude(m),
        f_ratio: noise_ratio_f(m, budget, k)?,
    })
}

/// One point of the tail soundness grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailGridPoint {
    pub m: usize,
    pub q: f64,
    pub lambda: f64,
    pub k: f64,
    /// `t²` as a multiple of the admissibility threshold.
    pub t_factor: f64,
}

/// The 3×3×3×2×2 grid: `m ∈ {20, 50, 100}`, `q ∈ {¼, ½, ¾}·m`,
/// `λ ∈ {0, 0.05, 0.2}`, `k ∈ {2, 50}`, `t² ∈ {1.01, 1.5}` × threshold.
pub fn tail_grid() -> Vec<TailGridPoint> {
    let mut out = Vec::with_capacity(108);
    for m in [20usize, 50, 100] {
        for qf in [0.25, 0.5, 0.75] {
            for lambda in [0.0, 0.05, 0.2] {
                for k in [2.0, 50.0] {
                    for t_factor in [1.01, 1.5] {
                        out.push(TailGridPoint {
                            m,
                            q: qf * m as f64,
                            lambda,
                            k,
                            t_factor,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Empirical `Pr[W·U ≥ t] ≤ δ₁δ₂ + 3·SE` at every grid point. Samples of
/// `(R, U)` are shared across all points with the same `m`; the stream for
/// dimension `m` is `rng.substream(m)`.
pub fn tail_soundness_grid(
    points: &[TailGridPoint],
    n_samples: u64,
    rng: &RngStream,
) -> Result<Vec<McReport>> {
    let mut dims: Vec<usize> = points.iter().map(|p| p.m).collect();
    dims.sort_unstable();
    dims.dedup();
    let mut reports = vec![None; points.len()];
    for m in dims {
        let idx: Vec<usize> = (0..points.len()).filter(|&i| points[i].m == m).collect();
        let mut bounds = Vec::with_capacity(idx.len());
        let mut ts = Vec::with_capacity(idx.len());
        for &i in &idx {
            let p = points[i];
            let t = (p.t_factor * tail_threshold_t_squared(p.q, p.k)?).sqrt();
            bounds.push(tail_bound(m, p.q, p.lambda, p.k, t)?);
            ts.push(t);
        }
        let stream = rng.substream(m as u64);
        let counts = par_chunks(n_samples, &stream, |r, len| {
            let mut buf = Vec::new();
            let mut c = vec![0u64; idx.len()];
            for _ in 0..len {
                let rad = r.standard_normal().abs();
                let u = draw_u(r, &mut buf, m);
                for (j, &i) in idx.iter().enumerate() {
                    if (rad + points[i].lambda) * u >= ts[j] {
                        c[j] += 1;
                    }
                }
            }
            c
        });
        for (j, &i) in idx.iter().enumerate() {
            let hits: u64 = counts.iter().map(|c| c[j]).sum();
            let (p, se) = proportion(hits, n_samples);
            let pt = points[i];
            reports[i] = Some(McReport::upper(
                format!(
                    "tail soundness m={m} q={} lambda={} k={} t2={}x threshold",
                    pt.q, pt.lambda, pt.k, pt.t_factor
                ),
                p,
                se,
                n_samples,
                bounds[j].bound,
            ));
        }
    }
    Ok(reports
        .into_iter()
        .map(|r| r.expect("every point visited"))
        .collect())
}

/// Draws of `R²` for `R ~ χ₁`.
pub fn chi1_square_samples(n_samples: u64, rng: &RngStream) -> Vec<f64> {
    par_samples(n_samples, rng, |r, _| {
        let z = r.standard_normal();
        z * z
    })
}

/// Draws of `‖n‖²/σ²` for the product (`χ²₁`) and classic (`χ²_M`) noise.
fn sq_magnitudes(m: usize, product: bool, n_samples: u64, rng: &RngStream) -> Vec<f64> {
    par_samples(n_samples, rng, move |r, _| {
        if product {
            let z = r.standard_normal();
            z * z
        } else {
            (0..m)
                .map(|_| {
                    let z = r.standard_normal();
                    z * z
                })
                .sum()
        }
    })
}

/// Which report group to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Moments,
    Tails,
    Plrv,
    Geometry,
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moments" => Ok(Suite::Moments),
            "tails" => Ok(Suite::Tails),
            "plrv" => Ok(Suite::Plrv),
            "geometry" => Ok(Suite::Geometry),
            other => Err(Error::domain(
                "suite",
                format!("unknown suite {other:?}; expected moments, tails, plrv or geometry"),
            )),
        }
    }
}

impl Suite {
    pub fn name(&self) -> &'static str {
        match self {
            Suite::Moments => "moments",
            Suite::Tails => "tails",
            Suite::Plrv => "plrv",
            Suite::Geometry => "geometry",
        }
    }
}

/// Runs every check of `suite`. Check `i` uses `RngStream::new(seed, i)`.
pub fn run_suite(suite: Suite, n_samples: u64, seed: u64) -> Result<Vec<McReport>> {
    if n_samples < 2 {
        return Err(Error::domain("run_suite", "need at least 2 samples"));
    }
    let rng = |i: u64| RngStream::new(seed, i);
    let mut out = Vec::new();
    match suite {
        Suite::Moments => {
            for (i, &(m, q)) in [(50usize, 3.0), (20, 5.0), (100, 10.0), (10, 1.5)]
                .iter()
                .enumerate()
            {
                out.push(mc_moment_u(m, q, n_samples, &rng(i as u64))?);
            }
            let mut i = 10;
            for q in [1.0, 2.0, 5.0] {
                for lambda in [0.0, 0.1, 0.5] {
                    out.push(mc_moment_w(q, lambda, n_samples, &rng(i))?);
                    i += 1;
                }
            }
            let r = par_samples(n_samples, &rng(30), |r, _| r.standard_normal().abs());
            let (mean, se) = mean_se(&r);
            out.push(McReport::close(
                "E[R] for R ~ chi_1".into(),
                mean,
                se,
                n_samples,
                (2.0 / PI).sqrt(),
            ));
            let r2 = chi1_square_samples(n_samples, &rng(31));
            let (mean, se) = mean_se(&r2);
            out.push(McReport::close(
                "E[R^2] for R ~ chi_1".into(),
                mean,
                se,
                n_samples,
                1.0,
            ));
            let h2 = par_samples(n_samples, &rng(32), |r, buf| {
                buf.resize(10, 0.0);
                fill_sphere(r, buf);
                buf[0] * buf[0]
            });
            let (mean, se) = mean_se(&h2);
            out.push(McReport::close(
                "E[h_1^2] on S^9".into(),
                mean,
                se,
                n_samples,
                0.1,
            ));
        }
        Suite::Tails => {
            out.extend(tail_soundness_grid(&tail_grid(), n_samples, &rng(0))?);
            let grid = default_q_grid(100, 200);
            let t_mid = solve_t_for_bound(100, 0.05, 0.05, &grid)?;
            for (j, t) in [t_mid, 1.2 * t_mid, 1.5 * t_mid].into_iter().enumerate() {
                out.push(mc_product_tail(100, 0.05, t, n_samples, &rng(1 + j as u64)));
            }
            let r2 = chi1_square_samples(n_samples, &rng(10));
            let hits = r2.iter().filter(|&&x| x >= 9.0).count() as u64;
            let (p, se) = proportion(hits, n_samples);
            out.push(McReport::upper(
                "Pr[R^2 >= 9] chi-square tail bound".into(),
                p,
                se,
                n_samples,
                chi1_square_tail_bound(9.0)?,
            ));
        }
        Suite::Plrv => {
            let mech = plrv_test_mechanism()?;
            out.push(mc_plrv_tail(&mech, mech.epsilon, n_samples, &rng(0)));
            out.push(mc_plrv_tail_shifted(
                &mech,
                mech.epsilon,
                0.0,
                n_samples,
                &rng(1),
            ));
            out.push(plrv_geometry_audit(&mech, n_samples.min(100_000), &rng(2)));
        }
        Suite::Geometry => {
            let prod = sq_magnitudes(100, true, n_samples, &rng(0));
            let classic = sq_magnitudes(100, false, n_samples, &rng(1));
            let (sp, kp) = skew_kurtosis(&prod);
            let (sc, kc) = skew_kurtosis(&classic);
            out.push(
                McReport::exact(
                    format!("skewness of |n|^2 product ({sp:.4}) > classic ({sc:.4}), M=100"),
                    sp,
                    sc,
                    sp > sc,
                )
                .with_samples(n_samples),
            );
            out.push(
                McReport::exact(
                    format!("kurtosis of |n|^2 product ({kp:.4}) > classic ({kc:.4}), M=100"),
                    kp,
                    kc,
                    kp > kc,
                )
                .with_samples(n_samples),
            );
            out.push(chi1_skewness_report(&prod, n_samples));
            out.push(chi1_kurtosis_report(&prod, n_samples));

            let sq = par_samples(n_samples, &rng(2), |r, _| {
                sample_product_noise(r, 2.0, 5).map_or(f64::NAN, |n| n.norm_sq())
            });
            let (mean, se) = mean_se(&sq);
            out.push(McReport::close(
                "E|n|^2 = sigma_m^2, sigma_m=2, m=5".into(),
                mean,
                se,
                n_samples,
                4.0,
            ));

            let mut radii = par_samples(n_samples, &rng(3), |r, _| {
                sample_product_noise(r, 3.0, 100).map_or(f64::NAN, |n| n.norm() / 3.0)
            });
            let d = ks_statistic(&mut radii, chi1_cdf);
            out.push(
                McReport::exact(
                    "KS of |n|/sigma_m vs chi_1, m=100".into(),
                    d,
                    0.005,
                    d < 0.005,
                )
                .with_samples(n_samples),
            );

            for (j, m) in [3usize, 20].into_iter().enumerate() {
                let mut us = par_samples(n_samples, &rng(4 + j as u64), |r, buf| draw_u(r, buf, m));
                let d = ks_statistic(&mut us, |u| u_cdf(u, m));
                out.push(
                    McReport::exact(
                        format!("KS of 1/sin(theta) vs f_U, m={m}"),
                        d,
                        0.005,
                        d < 0.005,
                    )
                    .with_samples(n_samples),
                );
            }

            out.push(radius_direction_correlation(10, n_samples, &rng(6)));

            let budget = PrivacyBudget::new(0.5, 1e-5)?;
            let row = magnitude_comparison(14, budget, 1e5)?;
            out.push(McReport::exact(
                "E|n|^2 product < classic at M=14, delta=1e-5, k=1e5".into(),
                row.e_sq_product,
                row.e_sq_classic,
                row.e_sq_product < row.e_sq_classic,
            ));
        }
    }
    Ok(out)
}

/// The mechanism used by the PLRV suite: `M = 20`, `Δ = 1`, calibrated to
/// `(ε, δ) = (2, 0.02)` so the predicted δ is large enough to observe.
pub fn plrv_test_mechanism() -> Result<ProductMechanism> {
    calibrate_product(
        PrivacyBudget::new(2.0, 0.02)?,
        20,
        1.0,
        CalibrationOptions::default(),
    )
}

/// Skewness of `R²` within 5% of `√8`.
pub fn chi1_skewness_report(r2: &[f64], n: u64) -> McReport {
    let (s, _) = skew_kurtosis(r2);
    McReport::relative(
        "skewness of R^2 within 5% of sqrt(8)".into(),
        s,
        0.0,
        n,
        8f64.sqrt(),
        0.05,
    )
}

/// Kurtosis of `R²` within 15% of 15.
pub fn chi1_kurtosis_report(r2: &[f64], n: u64) -> McReport {
    let (_, k) = skew_kurtosis(r2);
    McReport::relative(
        "kurtosis of R^2 within 15% of 15".into(),
        k,
        0.0,
        n,
        15.0,
        0.15,
    )
}

/// Sample correlation between `‖n‖` and the first direction component of
/// product noise, tested against 0.
pub fn radius_direction_correlation(m: usize, n_samples: u64, rng: &RngStream) -> McReport {
    let pairs: Vec<(f64, f64)> = par_chunks(n_samples, rng, |r, len| {
        let mut h = vec![0.0; m];
        (0..len)
            .map(|_| {
                let rad = r.standard_normal().abs();
                fill_sphere(r, &mut h);
                (rad, h[0])
            })
            .collect::<Vec<_>>()
    })
    .concat();
    let n = pairs.len() as f64;
    let (ma, mb) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p.0 / n, b + p.1 / n));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &(a, b) in &pairs {
        sab += (a - ma) * (b - mb);
        saa += (a - ma).powi(2);
        sbb += (b - mb).powi(2);
    }
    let corr = sab / (saa * sbb).sqrt();
    McReport::close(
        format!("corr(|n|, h_1) = 0, m={m}"),
        corr,
        1.0 / n.sqrt(),
        n_samples,
        0.0,
    )
}

/// Smallest `t` (to 1e-6 relative) whose best tail bound is at most `target`.
pub fn solve_t_for_bound(m: usize, lambda: f64, target: f64, q_grid: &[f64]) -> Result<f64> {
    let bound = |t: f64| {
        best_tail_bound(m, lambda, t, q_grid)
            .map(|b| b.bound)
            .unwrap_or(f64::INFINITY)
    };
    let mut hi = 1.0;
    while bound(hi) > target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::domain(
                "solve_t_for_bound",
                "bound never reaches target",
            ));
        }
    }
    let mut lo = hi / 2.0;
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if bound(mid) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
