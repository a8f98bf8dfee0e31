//! `prodnoise` command-line tool: calibration, noise-magnitude sweeps,
//! Monte-Carlo verification suites, accounting, and private ERM runs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use prodnoise::accountant::{dpsgd_budget, DEFAULT_DELTA_TILDE};
use prodnoise::calibration::{calibrate_product, CalibrationOptions};
use prodnoise::erm::{
    amp_objective_perturbation, dpsgd, ingest_csv, output_perturbation, synth_dataset, Dataset,
    ErmSpec, Loss, Mechanism, NoiseMode, PrivateModel, DEFAULT_HUBER_H,
};
use prodnoise::verify::{magnitude_comparison, run_suite, McReport, Suite};
use prodnoise::{PrivacyBudget, RngStream};

const TOOL: &str = "prodnoise";
const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(
    name = "prodnoise",
    version,
    about = "Product-noise differential privacy toolkit"
)]
struct Cli {
    /// RNG seed for stochastic subcommands.
    #[arg(long, global = true, env = "PRODUCT_DP_SEED", default_value_t = 42)]
    seed: u64,

    /// Write output here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Calibrate product noise to a target (epsilon, delta).
    Calibrate(CalibrateArgs),
    /// Expected squared noise magnitudes of product, classic and analytic Gaussian noise.
    Compare(CompareArgs),
    /// Run a Monte-Carlo verification suite; exit 1 if any check fails.
    Verify(VerifyArgs),
    /// Cumulative DPSGD budget per epoch.
    Account(AccountArgs),
    /// Train a private linear classifier.
    Erm(ErmArgs),
}

#[derive(Args, Debug, Serialize)]
struct CalibrateArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    sensitivity: f64,
    #[arg(long, default_value_t = 2.0)]
    k0: f64,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Serialize)]
struct CompareArgs {
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    #[arg(long, default_value_t = 1e5)]
    k: f64,
    /// `start:end[:step]` or a single dimension, inclusive.
    #[arg(long, default_value = "14:100")]
    dim_range: String,
    /// `start:end:step` or a single value; every epsilon must lie in (0, 1).
    #[arg(long, default_value = "0.1:0.9:0.1")]
    epsilon_range: String,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    #[arg(long, value_parser = parse_suite)]
    #[serde(serialize_with = "ser_suite")]
    suite: Suite,
    /// Samples per check; accepts scientific notation such as `1e6`.
    #[arg(long, default_value = "1000000", value_parser = parse_count)]
    samples: u64,
}

#[derive(Args, Debug, Serialize)]
struct AccountArgs {
    #[arg(long)]
    step_epsilon: f64,
    #[arg(long)]
    step_delta: f64,
    /// Poisson sampling probability.
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 50)]
    epochs: u64,
    /// Defaults to round(1/p).
    #[arg(long)]
    steps_per_epoch: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_DELTA_TILDE)]
    delta_tilde: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Algorithm {
    Output,
    Amp,
    Dpsgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MechanismArg {
    Product,
    Classic,
    Analytic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum LossArg {
    Logistic,
    Huber,
}

#[derive(Args, Debug, Serialize)]
struct ErmArgs {
    #[arg(long, value_enum)]
    algorithm: Algorithm,
    #[arg(long, value_enum, default_value_t = MechanismArg::Product)]
    mechanism: MechanismArg,
    #[arg(long, value_enum, default_value_t = LossArg::Logistic)]
    loss: LossArg,
    #[arg(long, default_value_t = DEFAULT_HUBER_H)]
    huber_h: f64,
    /// CSV path with header `label,f1,...,fM`, or `synth`.
    #[arg(long, default_value = "synth")]
    dataset: String,
    /// Held-out CSV; for `synth` a test set is generated.
    #[arg(long)]
    test_dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    synth_n: usize,
    #[arg(long, default_value_t = 20)]
    synth_m: usize,
    #[arg(long, default_value_t = 3.0)]
    margin: f64,
    /// Total epsilon (per-step epsilon for dpsgd).
    #[arg(long)]
    epsilon: f64,
    /// Defaults to 1/n².
    #[arg(long)]
    delta: Option<f64>,
    /// Starting k for product-noise calibration.
    #[arg(long, default_value_t = 2.0)]
    k: f64,
    /// Regularization Λ; defaults to 0.1·n.
    #[arg(long)]
    reg_lambda: Option<f64>,
    #[arg(long, default_value_t = 2)]
    hessian_rank: usize,
    /// AMP gradient-norm threshold; defaults to L/(10n).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    clip: f64,
    #[arg(long, default_value_t = 0.5)]
    learning_rate: f64,
    #[arg(long, default_value_t = 10)]
    epochs: u64,
    #[arg(long, default_value_t = 0.01)]
    batch_p: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA_TILDE)]
    delta_tilde: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: prodnoise::Error| e.to_string())
}

fn ser_suite<S: serde::Serializer>(s: &Suite, ser: S) -> Result<S::Ok, S::Error> {
    ser.serialize_str(s.name())
}

fn parse_count(s: &str) -> Result<u64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if !(v >= 1.0) || v.fract() != 0.0 || v > 1e15 {
        return Err(format!("{s:?} is not a positive integer count"));
    }
    Ok(v as u64)
}

/// Failure of a subcommand, mapped to an exit code.
enum Failure {
    /// Bad flags or a failed precondition.
    Usage(String),
    /// A verification check did not pass.
    Verification,
}

impl From<prodnoise::Error> for Failure {
    fn from(e: prodnoise::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

#[derive(Serialize)]
struct Header<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    config: &'a C,
}

impl<'a, C: Serialize> Header<'a, C> {
    fn new(command: &'static str, seed: u64, config: &'a C) -> Self {
        Header {
            tool: TOOL,
            version: VERSION,
            command,
            seed,
            config,
        }
    }
}

impl<C: Serialize> Clone for Header<'_, C> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<C: Serialize> Copy for Header<'_, C> {}

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    #[serde(flatten)]
    header: Header<'a, C>,
    #[serde(flatten)]
    result: R,
}

fn write_json_line(out: &mut dyn Write, value: &impl Serialize) -> Result<(), Failure> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

#[derive(Serialize)]
struct CalibrateOut {
    sigma_m: f64,
    t: f64,
    k: f64,
    lambda: f64,
    achieved_delta: f64,
    expected_sq_magnitude: f64,
}

fn cmd_calibrate(a: &CalibrateArgs, seed: u64, out: &mut dyn Write) -> Result<(), Failure> {
    let budget = PrivacyBudget::new(a.epsilon, a.delta)?;
    let opts = CalibrationOptions {
        k0: a.k0,
        alpha: a.alpha,
        max_iter: a.max_iter,
    };
    let mech = calibrate_product(budget, a.dim, a.sensitivity, opts)?;
    let result = CalibrateOut {
        sigma_m: mech.sigma_m,
        t: mech.t,
        k: mech.k,
        lambda: mech.lambda,
        achieved_delta: mech.achieved_delta,
        expected_sq_magnitude: mech.expected_sq_magnitude(),
    };
    write_json_line(
        out,
        &Envelope {
            header: Header::new("calibrate", seed, a),
            result,
        },
    )
}

/// Parses `start[:end[:step]]`, inclusive of `end` when it lies on the grid.
fn parse_range(s: &str, default_step: f64) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Usage(format!("invalid range {s:?}; expected start[:end[:step]]"));
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let (start, end, step) = match parts[..] {
        [a] => (a, a, default_step),
        [a, b] => (a, b, default_step),
        [a, b, c] => (a, b, c),
        _ => return Err(bad()),
    };
    if !(start.is_finite() && end.is_finite() && step > 0.0) || end < start {
        return Err(bad());
    }
    let count = ((end - start) / step + 1e-9).floor() as u64 + 1;
    if count > 1_000_000 {
        return Err(Failure::Usage(format!("range {s:?} has too many points")));
    }
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

fn cmd_compare(a: &CompareArgs, seed: u64, out: &mut dyn Write) -> Result<(), Failure> {
    let dims = parse_range(&a.dim_range, 1.0)?;
    let eps = parse_range(&a.epsilon_range, 0.1)?;
    if let Some(d) = dims.iter().find(|d| d.fract() != 0.0 || **d < 4.0) {
        return Err(Failure::Usage(format!(
            "dimension {d} is not an integer ≥ 4"
        )));
    }
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        return Err(Failure::Usage(format!("epsilon {e} must lie in (0, 1)")));
    }
    let mut rows = Vec::with_capacity(dims.len() * eps.len());
    for &m in &dims {
        for &e in &eps {
            rows.push(magnitude_comparison(
                m as usize,
                PrivacyBudget::new(e, a.delta)?,
                a.k,
            )?);
        }
    }
    match a.format {
        Format::Json => {
            write_json_line(out, &Header::new("compare", seed, a))?;
            for r in &rows {
                write_json_line(out, r)?;
            }
        }
        Format::Csv => {
            let meta = serde_json::to_string(&Header::new("compare", seed, a))?;
            writeln!(out, "# {meta}")?;
            let mut w = csv::Writer::from_writer(out);
            w.write_record([
                "M",
                "epsilon",
                "E_sq_product",
                "E_sq_classic",
                "E_sq_analytic",
                "f_ratio",
            ])?;
            for r in &rows {
                w.write_record([
                    r.m.to_string(),
                    r.epsilon.to_string(),
                    r.e_sq_product.to_string(),
                    r.e_sq_classic.to_string(),
                    r.e_sq_analytic.to_string(),
                    r.f_ratio.to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct CheckLine<'a> {
    check: usize,
    #[serde(flatten)]
    report: &'a McReport,
}

fn cmd_verify(a: &VerifyArgs, seed: u64, out: &mut dyn Write) -> Result<(), Failure> {
    let reports = run_suite(a.suite, a.samples, seed)?;
    let header = Header::new("verify", seed, a);
    for (i, r) in reports.iter().enumerate() {
        write_json_line(
            out,
            &Envelope {
                header,
                result: CheckLine {
                    check: i,
                    report: r,
                },
            },
        )?;
    }
    if reports.iter().all(McReport::passed) {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

#[derive(Serialize)]
struct AccountOut {
    steps_per_epoch: u64,
    per_epoch_budgets: Vec<PrivacyBudget>,
}

fn cmd_account(a: &AccountArgs, seed: u64, out: &mut dyn Write) -> Result<(), Failure> {
    let step = PrivacyBudget::new(a.step_epsilon, a.step_delta)?;
    if !(a.p > 0.0 && a.p <= 1.0) {
        return Err(Failure::Usage(format!("p must lie in (0, 1], got {}", a.p)));
    }
    let spe = a
        .steps_per_epoch
        .unwrap_or_else(|| prodnoise::erm::steps_per_epoch(a.p));
    let budgets = dpsgd_budget(step, a.p, a.epochs, spe, a.delta_tilde)?;
    write_json_line(
        out,
        &Envelope {
            header: Header::new("account", seed, a),
            result: AccountOut {
                steps_per_epoch: spe,
                per_epoch_budgets: budgets,
            },
        },
    )
}

#[derive(Serialize)]
struct ErmOut {
    n_train: usize,
    n_test: Option<usize>,
    m: usize,
    reg_lambda: f64,
    #[serde(flatten)]
    model: PrivateModel,
    achieved_budget: PrivacyBudget,
    train_acc: f64,
    test_acc: Option<f64>,
    majority_baseline: Option<f64>,
}

fn load_data(a: &ErmArgs, seed: u64) -> Result<(Dataset, Option<Dataset>), Failure> {
    if a.dataset == "synth" {
        let mut train_rng = RngStream::new(seed, 3);
        let mut test_rng = RngStream::new(seed, 4);
        let train = synth_dataset(&mut train_rng, a.synth_n, a.synth_m, a.margin)?;
        let test = match &a.test_dataset {
            Some(p) => ingest_csv(p)?,
            None => synth_dataset(&mut test_rng, (a.synth_n / 4).max(2), a.synth_m, a.margin)?,
        };
        return Ok((train, Some(test)));
    }
    let train = ingest_csv(&a.dataset)?;
    let test = a.test_dataset.as_ref().map(ingest_csv).transpose()?;
    if let Some(t) = &test {
        if t.m() != train.m() {
            return Err(Failure::Usage(format!(
                "test dataset has {} features, training dataset has {}",
                t.m(),
                train.m()
            )));
        }
    }
    Ok((train, test))
}

fn cmd_erm(a: &ErmArgs, seed: u64, out: &mut dyn Write) -> Result<(), Failure> {
    let (train, test) = load_data(a, seed)?;
    let n = train.n();
    let loss = match a.loss {
        LossArg::Logistic => Loss::Logistic,
        LossArg::Huber => Loss::HuberSvm { h: a.huber_h },
    };
    let reg_lambda = a.reg_lambda.unwrap_or(0.1 * n as f64);
    let mut spec = ErmSpec::new(loss, reg_lambda);
    spec.hessian_rank_r = a.hessian_rank;
    spec.grad_bound_gamma = a.gamma;
    spec.clip_c = a.clip;
    spec.learning_rate = a.learning_rate;
    spec.epochs = a.epochs;
    spec.batch_p = a.batch_p;
    spec.delta_tilde = a.delta_tilde;
    spec.tol = a.tol;

    let delta = a.delta.unwrap_or(1.0 / (n as f64 * n as f64));
    let budget = PrivacyBudget::new(a.epsilon, delta)?;
    let mechanism = match a.mechanism {
        MechanismArg::Product => Mechanism::Product { k0: a.k },
        MechanismArg::Classic => Mechanism::ClassicGaussian,
        MechanismArg::Analytic => Mechanism::AnalyticGaussian,
    };
    let rng = RngStream::new(seed, 0);
    let model = match a.algorithm {
        Algorithm::Output => {
            output_perturbation(&spec, &train, budget, mechanism, &rng, NoiseMode::Sampled)?
        }
        Algorithm::Amp => {
            amp_objective_perturbation(&spec, &train, budget, mechanism, &rng, NoiseMode::Sampled)?
        }
        Algorithm::Dpsgd => dpsgd(&spec, &train, budget, mechanism, &rng, NoiseMode::Sampled)?,
    };
    let result = ErmOut {
        n_train: n,
        n_test: test.as_ref().map(Dataset::n),
        m: train.m(),
        reg_lambda,
        achieved_budget: PrivacyBudget::new(model.achieved_epsilon, model.achieved_delta)?,
        train_acc: train.accuracy(&model.weights),
        test_acc: test.as_ref().map(|t| t.accuracy(&model.weights)),
        majority_baseline: test.as_ref().map(Dataset::majority_baseline),
        model,
    };
    write_json_line(
        out,
        &Envelope {
            header: Header::new("erm", seed, a),
            result,
        },
    )
}

fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let seed = cli.seed;
    match &cli.command {
        Command::Calibrate(a) => cmd_calibrate(a, seed, out),
        Command::Compare(a) => cmd_compare(a, seed, out),
        Command::Verify(a) => cmd_verify(a, seed, out),
        Command::Account(a) => cmd_account(a, seed, out),
        Command::Erm(a) => cmd_erm(a, seed, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let sink: Result<Box<dyn Write>, io::Error> = match &cli.output {
        Some(p) => File::create(p).map(|f| Box::new(BufWriter::new(f)) as Box<dyn Write>),
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    };
    let mut out = match sink {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let status = run(&cli, &mut *out);
    if let Err(e) = out.flush() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match status {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
