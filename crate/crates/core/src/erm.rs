//! Private empirical risk minimization: output perturbation, approximate
//! minima perturbation (AMP), and noisy clipped SGD.
//!
//! The regularized objective is `L(ω; D) = (1/n) Σ ℓ(ω; dᵢ) + Λ/(2n) ‖ω‖²`.
//! Every private routine draws its noise from `rng.substream(NOISE_STREAM)`
//! and, for SGD, its batches from `rng.substream(BATCH_STREAM)`, so running
//! with [`NoiseMode::Zero`] replays the exact non-private computation.

use std::path::Path;

use serde::Serialize;

use crate::accountant::{dpsgd_budget, DEFAULT_DELTA_TILDE};
use crate::calibration::{
    calibrate_analytic_gaussian, calibrate_classic_gaussian, calibrate_product, CalibrationOptions,
    GaussianMechanism, PrivacyBudget, ProductMechanism,
};
use crate::error::{Error, Result};
use crate::samplers::RngStream;

/// Substream index used for noise draws.
pub const NOISE_STREAM: u64 = 1;
/// Substream index used for Poisson batch selection.
pub const BATCH_STREAM: u64 = 2;

/// Default Huber smoothing width.
pub const DEFAULT_HUBER_H: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    /// `ln(1 + e^{−z})`.
    Logistic,
    /// Smoothed hinge: `1 − z` above `h`, 0 below `−h`, quadratic between.
    HuberSvm { h: f64 },
}

impl Loss {
    /// Lipschitz constant in `ω` for rows with `‖x‖ ≤ 1`.
    pub fn lipschitz(&self) -> f64 {
        1.0
    }

    /// Smoothness constant in `ω` for rows with `‖x‖ ≤ 1`.
    pub fn smoothness(&self) -> f64 {
        match *self {
            Loss::Logistic => 0.25,
            Loss::HuberSvm { h } => 1.0 / (2.0 * h),
        }
    }

    /// `(ℓ(z), ℓ′(z))` with `z = y⟨ω, x⟩`.
    pub fn value_deriv(&self, z: f64) -> (f64, f64) {
        match *self {
            Loss::Logistic => {
                let v = if z > 0.0 {
                    (-z).exp().ln_1p()
                } else {
                    -z + z.exp().ln_1p()
                };
                let d = if z > 0.0 {
                    let e = (-z).exp();
                    -e / (1.0 + e)
                } else {
                    -1.0 / (1.0 + z.exp())
                };
                (v, d)
            }
            Loss::HuberSvm { h } => {
                let u = 1.0 - z;
                if u > h {
                    (u, -1.0)
                } else if u < -h {
                    (0.0, 0.0)
                } else {
                    ((u + h) * (u + h) / (4.0 * h), -(u + h) / (2.0 * h))
                }
            }
        }
    }
}

/// Loss, regularization, and optimizer settings shared by all algorithms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErmSpec {
    pub loss: Loss,
    /// Λ.
    pub reg_lambda: f64,
    pub lipschitz_l: f64,
    pub smooth_beta: f64,
    /// Rank bound on the loss Hessian, capped at the dimension when used.
    pub hessian_rank_r: usize,
    /// AMP stopping threshold; `None` means `L/(10n)`.
    pub grad_bound_gamma: Option<f64>,
    pub clip_c: f64,
    pub learning_rate: f64,
    pub epochs: u64,
    /// Poisson batch sampling probability.
    pub batch_p: f64,
    pub delta_tilde: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl ErmSpec {
    pub fn new(loss: Loss, reg_lambda: f64) -> Self {
        ErmSpec {
            loss,
            reg_lambda,
            lipschitz_l: loss.lipschitz(),
            smooth_beta: loss.smoothness(),
            hessian_rank_r: 2,
            grad_bound_gamma: None,
            clip_c: 1.0,
            learning_rate: 0.5,
            epochs: 10,
            batch_p: 0.01,
            delta_tilde: DEFAULT_DELTA_TILDE,
            tol: 1e-8,
            max_iter: 100_000,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::domain("ErmSpec", msg));
        if let Loss::HuberSvm { h } = self.loss {
            if !(h > 0.0) {
                return bad(format!("huber h must be > 0, got {h}"));
            }
        }
        if !(self.reg_lambda >= 0.0) {
            return bad(format!("reg_lambda must be >= 0, got {}", self.reg_lambda));
        }
        if !(self.lipschitz_l > 0.0) || !(self.smooth_beta > 0.0) {
            return bad("lipschitz_l and smooth_beta must be > 0".into());
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be > 0, got {}", self.tol));
        }
        Ok(())
    }

    fn gamma(&self, n: usize) -> f64 {
        self.grad_bound_gamma
            .unwrap_or(self.lipschitz_l / (10.0 * n as f64))
    }
}

/// Labeled rows with `‖xᵢ‖ ≤ 1` and labels in `{−1, +1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<f64>,
    m: usize,
}

impl Dataset {
    /// Builds a dataset, scaling rows with norm above 1 down to norm 1.
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::domain("Dataset", "no rows"));
        }
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        let m = rows[0].len();
        if m == 0 {
            return Err(Error::domain("Dataset", "rows have no features"));
        }
        let mut features = Vec::with_capacity(rows.len() * m);
        for row in rows {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: row.len(),
                });
            }
            let norm = dot(&row, &row).sqrt();
            let s = norm.max(1.0);
            features.extend(row.iter().map(|x| x / s));
        }
        if let Some(y) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::domain(
                "Dataset",
                format!("label {y} is not -1 or +1"),
            ));
        }
        Ok(Dataset {
            features,
            labels,
            m,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.m..(i + 1) * self.m]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    /// Copy with row `i` replaced.
    pub fn with_row_replaced(&self, i: usize, row: &[f64], label: f64) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = (0..self.n()).map(|j| self.row(j).to_vec()).collect();
        let mut labels = self.labels.clone();
        rows[i] = row.to_vec();
        labels[i] = label;
        Dataset::from_rows(rows, labels)
    }

    /// Fraction of rows with `sign⟨ω, x⟩ = y`, predicting +1 on ties.
    pub fn accuracy(&self, w: &ModelVector) -> f64 {
        let hits = (0..self.n())
            .filter(|&i| {
                let pred = if dot(&w.weights, self.row(i)) >= 0.0 {
                    1.0
                } else {
                    -1.0
                };
                pred == self.labels[i]
            })
            .count();
        hits as f64 / self.n() as f64
    }

    /// Accuracy of always predicting the more frequent label.
    pub fn majority_baseline(&self) -> f64 {
        let pos = self.labels.iter().filter(|&&y| y > 0.0).count();
        pos.max(self.n() - pos) as f64 / self.n() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ModelVector {
    pub weights: Vec<f64>,
}

impl ModelVector {
    pub fn zeros(m: usize) -> Self {
        ModelVector {
            weights: vec![0.0; m],
        }
    }

    pub fn norm(&self) -> f64 {
        dot(&self.weights, &self.weights).sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Loss and gradient in `ω` at one example.
pub fn loss_value_grad(
    spec: &ErmSpec,
    w: &ModelVector,
    x: &[f64],
    y: f64,
) -> Result<(f64, Vec<f64>)> {
    if w.weights.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: w.weights.len(),
            got: x.len(),
        });
    }
    let (v, d) = spec.loss.value_deriv(y * dot(&w.weights, x));
    Ok((v, x.iter().map(|xi| d * y * xi).collect()))
}

/// Value and gradient of the regularized objective plus an optional linear
/// term `bᵀω`.
fn objective_grad(
    spec: &ErmSpec,
    data: &Dataset,
    w: &[f64],
    linear: Option<&[f64]>,
) -> (f64, Vec<f64>) {
    let n = data.n() as f64;
    let mut grad = vec![0.0; data.m()];
    let mut loss = 0.0;
    for i in 0..data.n() {
        let x = data.row(i);
        let y = data.label(i);
        let (v, d) = spec.loss.value_deriv(y * dot(w, x));
        loss += v;
        let c = d * y;
        grad.iter_mut().zip(x).for_each(|(g, xi)| *g += c * xi);
    }
    let reg = spec.reg_lambda / n;
    let mut value = loss / n + 0.5 * reg * dot(w, w);
    for (g, wi) in grad.iter_mut().zip(w) {
        *g = *g / n + reg * wi;
    }
    if let Some(b) = linear {
        value += dot(b, w);
        grad.iter_mut().zip(b).for_each(|(g, bi)| *g += bi);
    }
    (value, grad)
}

/// The regularized objective `L(ω; D)`.
pub fn objective(spec: &ErmSpec, data: &Dataset, w: &ModelVector) -> f64 {
    objective_grad(spec, data, &w.weights, None).0
}

/// Full-batch gradient descent from 0 until the gradient norm is at most `tol`.
fn descend(
    spec: &ErmSpec,
    data: &Dataset,
    linear: Option<&[f64]>,
    tol: f64,
) -> Result<ModelVector> {
    spec.validate()?;
    let step = 1.0 / (spec.smooth_beta + spec.reg_lambda / data.n() as f64);
    let mut w = vec![0.0; data.m()];
    let mut gnorm = f64::INFINITY;
    for _ in 0..spec.max_iter {
        let (_, g) = objective_grad(spec, data, &w, linear);
        gnorm = norm(&g);
        if gnorm <= tol {
            return Ok(ModelVector { weights: w });
        }
        w.iter_mut().zip(&g).for_each(|(wi, gi)| *wi -= step * gi);
    }
    Err(Error::NonConvergence {
        func: "solve_erm",
        iterations: spec.max_iter,
        residual: gnorm,
    })
}

/// Non-private minimizer of `L(ω; D)` to gradient norm `tol`.
pub fn solve_erm(spec: &ErmSpec, data: &Dataset, tol: f64) -> Result<ModelVector> {
    descend(spec, data, None, tol)
}

/// Whether noise is actually drawn. `Zero` injects exact zeros and is how
/// the private algorithms are checked against their non-private forms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseMode {
    Sampled,
    Zero,
}

/// Noise family used by a private algorithm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mechanism {
    /// Product noise, calibrated by growing `k` from `k0`.
    Product {
        k0: f64,
    },
    ClassicGaussian,
    AnalyticGaussian,
}

impl Mechanism {
    pub fn name(&self) -> &'static str {
        match self {
            Mechanism::Product { .. } => "product",
            Mechanism::ClassicGaussian => "classic",
            Mechanism::AnalyticGaussian => "analytic",
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Calibrated {
    Product(ProductMechanism),
    Gaussian(GaussianMechanism),
}

impl Calibrated {
    fn new(mech: Mechanism, budget: PrivacyBudget, m: usize, sensitivity: f64) -> Result<Self> {
        Ok(match mech {
            Mechanism::Product { k0 } => {
                let opts = CalibrationOptions {
                    k0,
                    ..Default::default()
                };
                Calibrated::Product(calibrate_product(budget, m, sensitivity, opts)?)
            }
            Mechanism::ClassicGaussian => {
                Calibrated::Gaussian(calibrate_classic_gaussian(budget, sensitivity)?)
            }
            Mechanism::AnalyticGaussian => {
                Calibrated::Gaussian(calibrate_analytic_gaussian(budget, sensitivity)?)
            }
        })
    }

    fn sigma(&self) -> f64 {
        match self {
            Calibrated::Product(p) => p.sigma_m,
            Calibrated::Gaussian(g) => g.sigma,
        }
    }

    fn achieved_delta(&self, budget: PrivacyBudget) -> f64 {
        match self {
            Calibrated::Product(p) => p.achieved_delta,
            Calibrated::Gaussian(_) => budget.delta(),
        }
    }

    fn expected_sq(&self, m: usize) -> f64 {
        match self {
            Calibrated::Product(p) => p.expected_sq_magnitude(),
            Calibrated::Gaussian(g) => g.expected_sq_magnitude(m),
        }
    }

    fn draw(&self, rng: &mut RngStream, mode: NoiseMode, m: usize) -> Result<Vec<f64>> {
        if mode == NoiseMode::Zero {
            return Ok(vec![0.0; m]);
        }
        Ok(match self {
            Calibrated::Product(p) => p.sample(rng)?.into_vec(),
            Calibrated::Gaussian(g) => g.sample(rng, m)?.into_vec(),
        })
    }
}

/// A released model with its privacy accounting.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrivateModel {
    pub weights: ModelVector,
    pub achieved_epsilon: f64,
    pub achieved_delta: f64,
    pub mechanism: &'static str,
    /// Noise scale of each noise injection stage.
    pub noise_scales: Vec<f64>,
    /// `E‖n‖²` summed over stages (per step for SGD).
    pub expected_sq_noise: f64,
    /// Cumulative budget after each epoch (SGD only).
    pub per_epoch_budgets: Option<Vec<PrivacyBudget>>,
}

fn add_into(w: &mut [f64], n: &[f64]) {
    w.iter_mut().zip(n).for_each(|(a, b)| *a += b);
}

fn require_strong_convexity(spec: &ErmSpec, func: &'static str) -> Result<()> {
    if !(spec.reg_lambda > 0.0) {
        return Err(Error::domain(func, "reg_lambda must be > 0"));
    }
    Ok(())
}

/// Solve non-privately, then add noise calibrated to sensitivity `2L/Λ`.
pub fn output_perturbation(
    spec: &ErmSpec,
    data: &Dataset,
    budget: PrivacyBudget,
    mechanism: Mechanism,
    rng: &RngStream,
    mode: NoiseMode,
) -> Result<PrivateModel> {
    require_strong_convexity(spec, "output_perturbation")?;
    let m = data.m();
    let cal = Calibrated::new(
        mechanism,
        budget,
        m,
        2.0 * spec.lipschitz_l / spec.reg_lambda,
    )?;
    let mut w = solve_erm(spec, data, spec.tol)?;
    let noise = cal.draw(&mut rng.substream(NOISE_STREAM), mode, m)?;
    add_into(&mut w.weights, &noise);
    Ok(PrivateModel {
        weights: w,
        achieved_epsilon: budget.epsilon(),
        achieved_delta: cal.achieved_delta(budget),
        mechanism: mechanism.name(),
        noise_scales: vec![cal.sigma()],
        expected_sq_noise: cal.expected_sq(m),
        per_epoch_budgets: None,
    })
}

/// Epsilon split used by AMP: `(ε₁, ε₂, ε₃)`.
pub fn amp_epsilon_split(epsilon: f64) -> (f64, f64, f64) {
    let e1 = epsilon / 2.0;
    (e1, e1, (e1 / 2.0).max(e1 - 0.99))
}

/// Least Λ AMP accepts: `r β / (ε₁ − ε₃)`.
pub fn amp_reg_floor(spec: &ErmSpec, m: usize, epsilon: f64) -> f64 {
    let (e1, _, e3) = amp_epsilon_split(epsilon);
    spec.hessian_rank_r.min(m) as f64 * spec.smooth_beta / (e1 - e3)
}

/// Non-private counterpart of AMP: gradient descent stopped at `‖∇L‖ ≤ γ`.
pub fn minimize_to_gamma(spec: &ErmSpec, data: &Dataset) -> Result<ModelVector> {
    descend(spec, data, None, spec.gamma(data.n()))
}

/// Approximate minima perturbation.
///
/// Adds a random linear term `n₁ᵀω` (sensitivity `2L/n`, budget `ε₃`),
/// minimizes to gradient norm `γ`, then perturbs the output (sensitivity
/// `nγ/Λ`, budget `ε₂`). Each stage gets `δ/2`; the reported δ is the sum
/// of what the two stages achieve.
pub fn amp_objective_perturbation(
    spec: &ErmSpec,
    data: &Dataset,
    budget: PrivacyBudget,
    mechanism: Mechanism,
    rng: &RngStream,
    mode: NoiseMode,
) -> Result<PrivateModel> {
    require_strong_convexity(spec, "amp_objective_perturbation")?;
    let (n, m) = (data.n() as f64, data.m());
    let (_, e2, e3) = amp_epsilon_split(budget.epsilon());
    let floor = amp_reg_floor(spec, m, budget.epsilon());
    if spec.reg_lambda < floor {
        return Err(Error::domain(
            "amp_objective_perturbation",
            format!(
                "reg_lambda {} is below the floor r*beta/(eps1 - eps3) = {floor}",
                spec.reg_lambda
            ),
        ));
    }
    let gamma = spec.gamma(data.n());
    let half = budget.delta() / 2.0;
    let b1 = PrivacyBudget::new(e3, half)?;
    let b2 = PrivacyBudget::new(e2, half)?;
    let cal1 = Calibrated::new(mechanism, b1, m, 2.0 * spec.lipschitz_l / n)?;
    let cal2 = Calibrated::new(mechanism, b2, m, n * gamma / spec.reg_lambda)?;

    let mut noise_rng = rng.substream(NOISE_STREAM);
    let n1 = cal1.draw(&mut noise_rng, mode, m)?;
    let mut w = descend(spec, data, Some(&n1), gamma)?;
    let n2 = cal2.draw(&mut noise_rng, mode, m)?;
    add_into(&mut w.weights, &n2);
    Ok(PrivateModel {
        weights: w,
        achieved_epsilon: budget.epsilon(),
        achieved_delta: cal1.achieved_delta(b1) + cal2.achieved_delta(b2),
        mechanism: mechanism.name(),
        noise_scales: vec![cal1.sigma(), cal2.sigma()],
        expected_sq_noise: cal1.expected_sq(m) + cal2.expected_sq(m),
        per_epoch_budgets: None,
    })
}

/// Scales `g` to norm at most `c`.
pub fn clip_gradient(g: &mut [f64], c: f64) {
    let s = (norm(g) / c).max(1.0);
    if s > 1.0 {
        g.iter_mut().for_each(|x| *x /= s);
    }
}

/// `round(1/p)` steps per epoch.
pub fn steps_per_epoch(p: f64) -> u64 {
    ((1.0 / p).round() as u64).max(1)
}

fn check_sgd(spec: &ErmSpec) -> Result<()> {
    spec.validate()?;
    if !(spec.clip_c > 0.0) {
        return Err(Error::domain(
            "dpsgd",
            format!("clip_c must be > 0, got {}", spec.clip_c),
        ));
    }
    if !(spec.batch_p > 0.0 && spec.batch_p <= 1.0) {
        return Err(Error::domain(
            "dpsgd",
            format!("batch_p must lie in (0, 1], got {}", spec.batch_p),
        ));
    }
    if !(spec.learning_rate > 0.0) || spec.epochs == 0 {
        return Err(Error::domain(
            "dpsgd",
            "learning_rate and epochs must be positive",
        ));
    }
    Ok(())
}

/// Poisson-batched SGD with per-example clipping. `noise` is called once per
/// non-empty batch and its output is added to the clipped gradient sum.
fn sgd_loop(
    spec: &ErmSpec,
    data: &Dataset,
    rng: &RngStream,
    mut noise: impl FnMut() -> Result<Vec<f64>>,
) -> Result<ModelVector> {
    let (n, m) = (data.n(), data.m());
    let reg = spec.reg_lambda / n as f64;
    let total = spec.epochs * steps_per_epoch(spec.batch_p);
    let mut batch_rng = rng.substream(BATCH_STREAM);
    let mut w = vec![0.0; m];
    let mut g = vec![0.0; m];
    let mut acc = vec![0.0; m];
    for _ in 0..total {
        acc.iter_mut().for_each(|a| *a = 0.0);
        let mut size = 0usize;
        for i in 0..n {
            if !batch_rng.bernoulli(spec.batch_p) {
                continue;
            }
            size += 1;
            let x = data.row(i);
            let y = data.label(i);
            let (_, d) = spec.loss.value_deriv(y * dot(&w, x));
            for ((gj, xj), wj) in g.iter_mut().zip(x).zip(&w) {
                *gj = d * y * xj + reg * wj;
            }
            clip_gradient(&mut g, spec.clip_c);
            add_into(&mut acc, &g);
        }
        if size == 0 {
            continue;
        }
        add_into(&mut acc, &noise()?);
        let scale = spec.learning_rate / size as f64;
        w.iter_mut()
            .zip(&acc)
            .for_each(|(wi, ai)| *wi -= scale * ai);
    }
    Ok(ModelVector { weights: w })
}

/// Non-private counterpart of [`dpsgd`]: the same batches and clipping,
/// no noise.
pub fn clipped_sgd(spec: &ErmSpec, data: &Dataset, rng: &RngStream) -> Result<ModelVector> {
    check_sgd(spec)?;
    let m = data.m();
    sgd_loop(spec, data, rng, || Ok(vec![0.0; m]))
}

/// Noisy clipped SGD. Each step is private at `step_budget` against
/// sensitivity `2C`; the cumulative budget per epoch comes from Poisson
/// amplification and composition.
pub fn dpsgd(
    spec: &ErmSpec,
    data: &Dataset,
    step_budget: PrivacyBudget,
    mechanism: Mechanism,
    rng: &RngStream,
    mode: NoiseMode,
) -> Result<PrivateModel> {
    check_sgd(spec)?;
    let m = data.m();
    let cal = Calibrated::new(mechanism, step_budget, m, 2.0 * spec.clip_c)?;
    let achieved_step = PrivacyBudget::new(step_budget.epsilon(), cal.achieved_delta(step_budget))?;
    let budgets = dpsgd_budget(
        achieved_step,
        spec.batch_p,
        spec.epochs,
        steps_per_epoch(spec.batch_p),
        spec.delta_tilde,
    )?;
    let mut noise_rng = rng.substream(NOISE_STREAM);
    let w = sgd_loop(spec, data, rng, || cal.draw(&mut noise_rng, mode, m))?;
    let last = *budgets.last().expect("at least one epoch");
    Ok(PrivateModel {
        weights: w,
        achieved_epsilon: last.epsilon(),
        achieved_delta: last.delta(),
        mechanism: mechanism.name(),
        noise_scales: vec![cal.sigma()],
        expected_sq_noise: cal.expected_sq(m),
        per_epoch_budgets: Some(budgets),
    })
}

fn parse_label(s: &str, line: usize) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("label {s:?} is not a number"),
    })?;
    if v == 1.0 {
        Ok(1.0)
    } else if v == -1.0 || v == 0.0 {
        Ok(-1.0)
    } else {
        Err(Error::Parse {
            line,
            msg: format!("label {s} is not in {{-1, +1}} or {{0, 1}}"),
        })
    }
}

/// Reads `label,f1,...,fM` CSV. Labels 0/1 are mapped to −1/+1; rows with
/// norm above 1 are scaled to norm 1.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path.as_ref())
        .map_err(|e| Error::Io(e.to_string()))?;
    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        msg: e.to_string(),
    })?;
    let width = header.len();
    if width < 2 || header.get(0).map(str::trim) != Some("label") {
        return Err(Error::Parse {
            line: 1,
            msg: "header must be label,f1,...,fM".into(),
        });
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                msg: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        labels.push(parse_label(&rec[0], line)?);
        let row = rec
            .iter()
            .skip(1)
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line,
                        msg: format!("feature {f:?} is not a finite number"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "no data rows".into(),
        });
    }
    Dataset::from_rows(rows, labels)
}

/// Two Gaussian clusters at `±margin·e₁` with identity covariance, equal
/// class probabilities, rows scaled to unit norm.
pub fn synth_dataset(rng: &mut RngStream, n: usize, m: usize, margin: f64) -> Result<Dataset> {
    if n < 2 || m < 2 {
        return Err(Error::domain(
            "synth_dataset",
            format!("need n >= 2 and m >= 2, got n={n}, m={m}"),
        ));
    }
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
        let mut row: Vec<f64> = (0..m).map(|_| rng.standard_normal()).collect();
        row[0] += margin * y;
        let nr = norm(&row);
        if nr > 0.0 {
            row.iter_mut().for_each(|x| *x /= nr);
        }
        rows.push(row);
        labels.push(y);
    }
    Dataset::from_rows(rows, labels)
}
