//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::f64::consts::{E, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use prodnoise::accountant::{
    amplify_poisson, compose, composed_epsilon, dpsgd_budget, CompositionLedger,
};
use prodnoise::analytic::{
    moment_u_exact, pdf_u, scan_q_grid, tail_threshold_t_squared, DeltaForm,
};
use prodnoise::calibration::{
    calibrate_product, noise_ratio_f, theorem1_t_squared, CalibrationOptions,
};
use prodnoise::erm::{
    amp_objective_perturbation, clipped_sgd, dpsgd, minimize_to_gamma, output_perturbation,
    solve_erm, synth_dataset, Dataset, ErmSpec, Loss, Mechanism, NoiseMode,
};
use prodnoise::samplers::sample_product_noise;
use prodnoise::specfun::{gamma_ratio, hyp1f1, ln_gamma};
use prodnoise::verify::{
    chi1_kurtosis_report, chi1_skewness_report, chi1_square_samples, mc_moment_u, mc_plrv_tail,
    mean_se, par_samples, plrv_geometry_audit, plrv_test_mechanism, tail_grid, tail_soundness_grid,
};
use prodnoise::{PrivacyBudget, RngStream};

use common::{integrate, lanczos_gamma, moment_u_by_angle, rel_err, t_squared_direct};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn noise_ratio_crossover() -> Outcome {
    let mut worst: f64 = 0.0;
    for m in 14..=100usize {
        let b = PrivacyBudget::new(0.5, 1e-5).map_err(s)?;
        let f = noise_ratio_f(m, b, 1e5).map_err(s)?;
        let oracle = t_squared_direct(m as f64, 1e5) / (2.0 * (1.25f64 / 1e-5).ln() * m as f64);
        ensure(
            rel_err(f, oracle) < 1e-12,
            format!("M={m}: f={f} vs direct {oracle}"),
        )?;
        ensure(f < 1.0, format!("f({m}) = {f} >= 1"))?;
        worst = worst.max(f);
    }
    Ok(format!("max f(M) over M in [14, 100] = {worst:.4}"))
}

fn noise_ratio_limit() -> Outcome {
    let mut notes = Vec::new();
    for delta in [1e-5, 1e-6] {
        let b = PrivacyBudget::new(0.5, delta).map_err(s)?;
        let f = noise_ratio_f(100_000_000, b, 1e5).map_err(s)?;
        let scaled = f * 4.0 * E * (1.25f64 / delta).ln();
        ensure(
            (scaled - 1.0).abs() < 1e-3,
            format!("delta={delta}: f*4e*ln(1.25/delta) = {scaled}"),
        )?;
        notes.push(format!("delta={delta}: {scaled:.6}"));
    }
    let limit = 1.0 / (4.0 * E * (1.25f64 / 1e-5).ln());
    ensure(
        rel_err(limit, 1.0 / 127.6) < 0.01,
        format!("limit {limit} vs 1/127.6"),
    )?;
    notes.push(format!("limit at 1e-5 = 1/{:.2}", 1.0 / limit));
    Ok(notes.join(", "))
}

fn q_scan_minima() -> Outcome {
    let cases = [
        (1_000_000usize, 1.144e-6, 500_500.0, 2.318e-6, 499_499.0),
        (100_000_000, 1.144e-7, 50_050_050.0, 2.318e-7, 49_949_950.0),
    ];
    let mut notes = Vec::new();
    for (m, d_acc, q_acc, d_apx, q_apx) in cases {
        let acc = scan_q_grid(m, 0.1, 1000.0, DeltaForm::Accurate, 1000).map_err(s)?;
        let apx = scan_q_grid(m, 0.1, 1000.0, DeltaForm::Approximate, 1000).map_err(s)?;
        ensure(
            rel_err(acc.delta, d_acc) < 0.01,
            format!("M={m} accurate delta {:e}", acc.delta),
        )?;
        ensure(
            rel_err(apx.delta, d_apx) < 0.01,
            format!("M={m} approximate delta {:e}", apx.delta),
        )?;
        ensure(
            (acc.q - q_acc).abs() <= 2.0,
            format!("M={m} accurate argmin {}", acc.q),
        )?;
        ensure(
            (apx.q - q_apx).abs() <= 2.0,
            format!("M={m} approximate argmin {}", apx.q),
        )?;
        notes.push(format!(
            "M={m}: {:.4e} at q={:.2}, {:.4e} at q={:.2}",
            acc.delta, acc.q, apx.delta, apx.q
        ));
    }
    Ok(notes.join("; "))
}

fn moment_oracle() -> Outcome {
    let exact = moment_u_exact(50, 3.0).map_err(s)?;
    let angle = moment_u_by_angle(50, 3.0);
    ensure(
        rel_err(exact, angle) < 1e-10,
        format!("closed form {exact} vs angle quadrature {angle}"),
    )?;
    let mc = mc_moment_u(50, 3.0, 1_000_000, &RngStream::new(404, 0)).map_err(s)?;
    ensure(
        rel_err(mc.estimate, exact) < 0.02,
        format!("MC {} vs {exact}", mc.estimate),
    )?;

    let m4 = moment_u_exact(4, 2.0).map_err(s)?;
    ensure(
        (m4 - 2.0).abs() < 1e-10,
        format!("moment_u_exact(4, 2) = {m4}"),
    )?;
    // u = cosh s removes the endpoint singularity at u = 1 and the slow tail.
    let quad = integrate(
        |t: f64| {
            let u = t.cosh();
            u * u * pdf_u(u, 4).unwrap_or(f64::NAN) * t.sinh()
        },
        0.0,
        60.0,
        600,
    );
    ensure(
        rel_err(quad, 2.0) < 1e-3,
        format!("quadrature of pdf_u gives {quad}"),
    )?;
    Ok(format!(
        "E[U^3] m=50: exact {exact:.6}, MC {:.6}; E[U^2] m=4: {m4}, quadrature {quad:.8}",
        mc.estimate
    ))
}

fn tail_soundness() -> Outcome {
    let grid = tail_grid();
    ensure(grid.len() == 108, format!("grid has {} points", grid.len()))?;
    for p in &grid {
        let thr = tail_threshold_t_squared(p.q, p.k).map_err(s)?;
        ensure(p.t_factor * thr > thr, "grid point not strictly admissible")?;
    }
    let reports = tail_soundness_grid(&grid, 1_000_000, &RngStream::new(505, 0)).map_err(s)?;
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.description.as_str())
        .collect();
    ensure(failed.is_empty(), format!("failed: {failed:?}"))?;
    let tightest = reports
        .iter()
        .map(|r| r.estimate / r.bound_or_target)
        .fold(0.0, f64::max);
    Ok(format!(
        "108/108 points within bound; max empirical/bound = {tightest:.3}"
    ))
}

fn plrv_property() -> Outcome {
    let mech = plrv_test_mechanism().map_err(s)?;
    ensure(
        (1e-3..=5e-2).contains(&mech.achieved_delta),
        format!(
            "predicted delta {} outside [1e-3, 5e-2]",
            mech.achieved_delta
        ),
    )?;
    let tail = mc_plrv_tail(&mech, mech.epsilon, 10_000_000, &RngStream::new(606, 0));
    ensure(
        tail.passed(),
        format!(
            "Pr[PLRV >= eps] = {} > {} + 3SE",
            tail.estimate, tail.bound_or_target
        ),
    )?;
    let audit = plrv_geometry_audit(&mech, 100_000, &RngStream::new(606, 1));
    ensure(
        audit.passed() && audit.n_samples == 100_000,
        format!("{} violations", audit.estimate),
    )?;
    Ok(format!(
        "M=20 eps={} k={}: empirical {:.3e} (SE {:.1e}) <= predicted {:.3e}; 0/100000 bound violations",
        mech.epsilon, mech.k, tail.estimate, tail.std_error, mech.achieved_delta
    ))
}

fn special_functions() -> Outcome {
    for a in [0.5, 1.0, 3.7, 25.0, 250.5] {
        for z in [1e-6, 0.01, 0.3, 1.0, 4.0] {
            let v = hyp1f1(a, a, z).map_err(s)?;
            ensure(
                rel_err(v, z.exp()) < 1e-12,
                format!("1F1({a};{a};{z}) = {v}"),
            )?;
        }
        for b in [0.5, 1.5, 7.0] {
            ensure(
                hyp1f1(a, b, 0.0).map_err(s)? == 1.0,
                format!("1F1({a};{b};0) != 1"),
            )?;
        }
    }
    for n in [0.5, 1.0, 2.0, 5.0, 10.0, 100.0, 1e4] {
        let r = gamma_ratio(n + 1.0, n + 0.5).map_err(s)?;
        ensure(
            (n + 0.25f64).sqrt() < r && r < (n + 0.5f64).sqrt(),
            format!("gamma ratio bracket fails at n={n}"),
        )?;
    }
    for z in [0.75, 1.5, 3.0, 10.0] {
        let lhs = ln_gamma(2.0 * z).map_err(s)?;
        let rhs = -0.5 * PI.ln()
            + (2.0 * z - 1.0) * 2f64.ln()
            + ln_gamma(z).map_err(s)?
            + ln_gamma(z + 0.5).map_err(s)?;
        ensure(
            (lhs - rhs).exp_m1().abs() <= 1e-10,
            format!("duplication fails at z={z}"),
        )?;
    }
    for x in [1.5, 2.0, 5.0, 50.0] {
        let g = ln_gamma(x).map_err(s)?;
        ensure(
            rel_err(g.exp(), lanczos_gamma(x)) < 1e-12,
            format!("ln_gamma({x}) disagrees with Lanczos"),
        )?;
        ensure(
            g < (x - 0.5) * x.ln() - (x - 1.0),
            format!("gamma upper bound fails at x={x}"),
        )?;
    }
    // The hypergeometric bound holds for a <= c (then (a)_k/(c)_k <= a/c and
    // e^x - 1 < 2x); it fails for a >> c and x near 1.
    let mut points = 0;
    for c in [0.5, 1.0, 2.0, 5.0, 10.0] {
        for r in [0.1, 0.25, 0.5, 0.75, 1.0] {
            let a = r * c;
            for x in [0.05, 0.25, 0.5, 0.75, 0.95] {
                let v = hyp1f1(a, c, x).map_err(s)?;
                ensure(v < 1.0 + 2.0 * x * a / c, format!("1F1({a};{c};{x}) = {v}"))?;
                points += 1;
            }
        }
    }
    // Where the bound is applied: a = M/4 + 1/2 (and M/4 + 1), c = 1/2 (3/2),
    // x = lambda^2/2 at the calibrated lambda.
    for m in [100usize, 10_000, 1_000_000] {
        let lambda = 0.1 / theorem1_t_squared(m, 1000.0).map_err(s)?.sqrt();
        let x = lambda * lambda / 2.0;
        let mf = m as f64;
        for (a, c) in [(mf / 4.0 + 0.5, 0.5), (mf / 4.0 + 1.0, 1.5)] {
            let v = hyp1f1(a, c, x).map_err(s)?;
            ensure(
                v < 1.0 + 2.0 * x * a / c,
                format!("1F1({a};{c};{x}) = {v} at M={m}"),
            )?;
        }
    }
    Ok(format!("identities to 1e-12, gamma inequalities, hypergeometric bound on {points} grid points plus 6 operating points"))
}

fn chi_shape() -> Outcome {
    let r2 = chi1_square_samples(1_000_000, &RngStream::new(808, 0));
    let skew = chi1_skewness_report(&r2, 1_000_000);
    let kurt = chi1_kurtosis_report(&r2, 1_000_000);
    ensure(skew.passed(), format!("skewness {}", skew.estimate))?;
    ensure(kurt.passed(), format!("kurtosis {}", kurt.estimate))?;
    let mech = calibrate_product(
        PrivacyBudget::new(1.0, 1e-5).map_err(s)?,
        20,
        1.0,
        CalibrationOptions::default(),
    )
    .map_err(s)?;
    let sq = par_samples(1_000_000, &RngStream::new(808, 1), |r, _| {
        sample_product_noise(r, mech.sigma_m, mech.m).map_or(f64::NAN, |n| n.norm_sq())
    });
    let (mean, se) = mean_se(&sq);
    let target = mech.expected_sq_magnitude();
    ensure(
        (mean - target).abs() <= 3.0 * se,
        format!("E|n|^2 {mean} vs {target} (SE {se})"),
    )?;
    Ok(format!(
        "skewness {:.4} (sqrt 8 = 2.8284), kurtosis {:.3} (15), E|n|^2 {mean:.4} vs sigma_m^2 {target:.4}",
        skew.estimate, kurt.estimate
    ))
}

fn accountant() -> Outcome {
    let b = PrivacyBudget::new(1.0, 1e-5).map_err(s)?;
    let same = amplify_poisson(b, 1.0).map_err(s)?;
    ensure(
        (same.epsilon() - 1.0).abs() <= 1e-15 && (same.delta() - 1e-5).abs() <= 1e-15,
        "amplification at p = 1 is not the identity",
    )?;
    let dt: f64 = 0.9;
    let hand = ((E - 1.0) / (E + 1.0)) * 1.0 + (2.0 * (1.0 / dt).ln()).sqrt();
    let out = compose(&CompositionLedger::new(1.0, 1e-5, 1, dt).map_err(s)?).map_err(s)?;
    ensure(
        (out.epsilon() - hand).abs() < 1e-12,
        format!("eps' {} vs hand {hand}", out.epsilon()),
    )?;
    let hand2 = (E - 1.0) / (E + 1.0) + 1.0;
    ensure(
        (composed_epsilon(1.0, 1, (-0.5f64).exp()) - hand2).abs() < 1e-12,
        "eps' at delta_tilde = e^-1/2",
    )?;

    let p: f64 = 256.0 / 60_000.0;
    let seq = dpsgd_budget(
        PrivacyBudget::new(0.5, 1e-7).map_err(s)?,
        p,
        50,
        (1.0 / p).round() as u64,
        1e-6,
    )
    .map_err(s)?;
    ensure(seq.len() == 50, "expected 50 epochs")?;
    ensure(
        seq.windows(2).all(|w| w[1].epsilon() > w[0].epsilon()),
        "cumulative eps' not increasing",
    )?;
    Ok(format!(
        "T=1 eps' = {:.12}; 50 epochs from eps'={:.4} to {:.4}",
        out.epsilon(),
        seq[0].epsilon(),
        seq[49].epsilon()
    ))
}

fn erm_suite() -> Outcome {
    let mut rng = RngStream::new(1010, 0);
    let train = synth_dataset(&mut rng, 2000, 20, 3.0).map_err(s)?;
    let test = synth_dataset(&mut RngStream::new(1010, 1), 500, 20, 3.0).map_err(s)?;
    let n = train.n() as f64;
    let budget = PrivacyBudget::new(0.1, 1.0 / (n * n)).map_err(s)?;
    let spec = ErmSpec::new(Loss::Logistic, 0.1 * n);
    let product = Mechanism::Product { k0: 2.0 };

    // Zero-noise reductions.
    let small = synth_dataset(&mut RngStream::new(1010, 2), 300, 8, 2.0).map_err(s)?;
    let mut sgd = spec;
    sgd.reg_lambda = 1.0;
    sgd.epochs = 2;
    for mech in [
        product,
        Mechanism::AnalyticGaussian,
        Mechanism::ClassicGaussian,
    ] {
        let r = RngStream::new(7, 0);
        let out =
            output_perturbation(&spec, &small, budget, mech, &r, NoiseMode::Zero).map_err(s)?;
        ensure(
            out.weights == solve_erm(&spec, &small, spec.tol).map_err(s)?,
            "output perturbation != solve_erm",
        )?;
        let amp = amp_objective_perturbation(&spec, &small, budget, mech, &r, NoiseMode::Zero)
            .map_err(s)?;
        ensure(
            amp.weights == minimize_to_gamma(&spec, &small).map_err(s)?,
            "AMP != minimize_to_gamma",
        )?;
        let step = PrivacyBudget::new(0.5, 1e-6).map_err(s)?;
        let d = dpsgd(&sgd, &small, step, mech, &r, NoiseMode::Zero).map_err(s)?;
        ensure(
            d.weights == clipped_sgd(&sgd, &small, &r).map_err(s)?,
            "DPSGD != clipped SGD",
        )?;
    }

    // Neighbor sensitivity.
    let base = synth_dataset(&mut RngStream::new(1010, 3), 100, 10, 2.0).map_err(s)?;
    let mut worst: f64 = 0.0;
    for (j, loss) in [Loss::Logistic, Loss::HuberSvm { h: 0.1 }]
        .into_iter()
        .enumerate()
    {
        let sp = ErmSpec::new(loss, 1.0);
        let w = solve_erm(&sp, &base, sp.tol).map_err(s)?;
        let bound = 2.0 * sp.lipschitz_l / sp.reg_lambda + 2.0 * sp.tol;
        let mut prng = RngStream::new(1010, 4 + j as u64);
        for _ in 0..10 {
            let i = (prng.uniform() * base.n() as f64) as usize;
            let row: Vec<f64> = (0..base.m())
                .map(|_| prng.standard_normal() / 4.0)
                .collect();
            let label = if prng.bernoulli(0.5) { 1.0 } else { -1.0 };
            let nb = base.with_row_replaced(i, &row, label).map_err(s)?;
            let w2 = solve_erm(&sp, &nb, sp.tol).map_err(s)?;
            let diff = w
                .weights
                .iter()
                .zip(&w2.weights)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            ensure(diff <= bound, format!("|w - w'| = {diff} > {bound}"))?;
            worst = worst.max(diff / bound);
        }
    }

    // Noise magnitude and utility.
    let r = RngStream::new(1010, 10);
    let p =
        output_perturbation(&spec, &train, budget, product, &r, NoiseMode::Sampled).map_err(s)?;
    let c = output_perturbation(
        &spec,
        &train,
        budget,
        Mechanism::ClassicGaussian,
        &r,
        NoiseMode::Sampled,
    )
    .map_err(s)?;
    ensure(
        p.achieved_delta <= budget.delta(),
        "product delta above target",
    )?;
    ensure(
        p.expected_sq_noise < c.expected_sq_noise,
        format!(
            "E|n|^2 product {} >= classic {}",
            p.expected_sq_noise, c.expected_sq_noise
        ),
    )?;
    let mut acc = 0.0;
    for trial in 0..10u64 {
        let m = output_perturbation(
            &spec,
            &train,
            budget,
            product,
            &RngStream::new(2020, trial),
            NoiseMode::Sampled,
        )
        .map_err(s)?;
        acc += test.accuracy(&m.weights) / 10.0;
    }
    let baseline = Dataset::majority_baseline(&test);
    ensure(
        acc >= baseline,
        format!("mean test accuracy {acc} < baseline {baseline}"),
    )?;
    Ok(format!(
        "zero-noise reductions exact; max |w-w'|/bound = {worst:.3}; E|n|^2 product {:.3} < classic {:.3}; accuracy {acc:.4} vs baseline {baseline:.4}",
        p.expected_sq_noise, c.expected_sq_noise
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (
            "noise ratio below 1 for M in [14, 100]",
            noise_ratio_crossover,
        ),
        ("noise ratio limit at M = 1e8", noise_ratio_limit),
        ("moment-order scan minima at M = 1e6, 1e8", q_scan_minima),
        ("U moment closed form vs MC and quadrature", moment_oracle),
        ("tail bound soundness on 108-point grid", tail_soundness),
        ("end-to-end PLRV tail and pointwise bound", plrv_property),
        (
            "special-function identities and inequalities",
            special_functions,
        ),
        ("chi_1 shape statistics and E|n|^2", chi_shape),
        ("accountant identities and monotonicity", accountant),
        ("ERM reductions, sensitivity, magnitude, utility", erm_suite),
    ];
    let mut all = true;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|m| m.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2}: {name} ({secs:.2}s): {detail}", i + 1),
            Err(detail) => {
                all = false;
                println!("FAIL criterion {:>2}: {name} ({secs:.2}s): {detail}", i + 1)
            }
        }
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
