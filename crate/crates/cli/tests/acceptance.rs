//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measured values (visible with `--nocapture`).
//!
//! Run with: cargo test -p uplift-cli --test acceptance -- --nocapture

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;
use std::time::{Duration, Instant};
use uplift_cli::{commands, config::ExperimentConfig, BenchmarkReport};
use uplift_core::data::{generate_parametric, SyntheticSpec};
use uplift_core::losses::{CompositeSpec, LossTargets, LossVariant};
use uplift_core::metrics::{self, QiniCurve};
use uplift_core::model::{self, Architecture, Parameters};
use uplift_core::numerics::{finite_difference_gradient, relative_error, Matrix, Vector};
use uplift_core::training;

// ---------------------------------------------------------------------------
// 1. Gradient suite
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_gradient_suite() {
    let start = Instant::now();
    let p = 5;
    let arch = Architecture::new(p + 1, vec![8, 8, 4], 2, 0.01).unwrap();
    let combos = [
        (LossVariant::TransformedOutcome, 0.0),
        (LossVariant::TransformedOutcome, 0.3),
        (LossVariant::TransformedOutcome, 1.0),
        (LossVariant::IndirectEstimation, 0.0),
        (LossVariant::IndirectEstimation, 0.3),
        (LossVariant::IndirectEstimation, 1.0),
    ];
    let mut draws = 0;
    let mut worst: f64 = 0.0;
    for (variant, alpha) in combos {
        for draw in 0..4 {
            let seed = 1000 + draws as u64 * 13 + draw;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = Parameters::init(&arch, seed);
            let n = 16;
            let x = Matrix::from_vec(
                n,
                p,
                (0..n * p).map(|_| rng.gen_range(-1.5..1.5)).collect(),
            )
            .unwrap();
            let t = Vector::from_vec((0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect());
            let y = Vector::from_vec((0..n).map(|_| f64::from(rng.gen_bool(0.4))).collect());
            let z = Vector::from_vec(
                (0..n)
                    .map(|i| 2.0 * t.get(i) * y.get(i) - 2.0 * (1.0 - t.get(i)) * y.get(i))
                    .collect(),
            );
            let targets = LossTargets {
                treatment: &t,
                outcome: &y,
                transformed: Some(&z),
                propensity: 0.5,
            };
            let spec = CompositeSpec::new(variant, alpha).unwrap();
            let (grad, _) = model::backward(&params, &arch, &x, &targets, &spec).unwrap();
            let fd = finite_difference_gradient(
                |theta| {
                    let probe = Parameters::from_flat(&arch, theta)?;
                    model::batch_loss(&probe, &arch, &x, &targets, &spec)
                },
                &params.flatten(),
                1e-5,
            )
            .unwrap();
            for (a, f) in grad.flatten().iter().zip(&fd) {
                if a.abs() > 1e-8 {
                    let err = relative_error(*a, *f);
                    worst = worst.max(err);
                    assert!(
                        err < 1e-5,
                        "gradient mismatch: analytic {a}, finite difference {f}, rel err {err}"
                    );
                }
            }
            draws += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(draws >= 20, "only {draws} draws");
    assert!(
        elapsed < Duration::from_secs(60),
        "gradient suite took {elapsed:?}"
    );
    println!(
        "acceptance criterion 1 (gradient suite): PASS, {draws} draws, worst rel err {worst:.2e}, {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// 2. Metric oracles
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_metric_oracles() {
    // Hand-enumerated four-row example.
    let u = Vector::from_vec(vec![0.9, 0.8, 0.2, 0.1]);
    let t = Vector::from_vec(vec![1.0, 0.0, 1.0, 0.0]);
    let y = Vector::from_vec(vec![1.0, 0.0, 0.0, 1.0]);
    let curve = metrics::qini_curve(&u, &t, &y, 2, false).unwrap();
    assert!(curve.f_values[0].abs() < 1e-12);
    assert!((curve.f_values[1] - 0.5).abs() < 1e-12);
    assert!(curve.f_values[2].abs() < 1e-12);
    let qini = metrics::qini_coefficient(&curve);
    assert!((qini - 0.25).abs() < 1e-12);
    let kendall = metrics::kendall_uplift(&u, &t, &y, 2).unwrap();
    assert!((kendall.rho - 1.0).abs() < 1e-12);

    // Trapezoid coefficient against a fine-grid Riemann oracle on smooth
    // synthetic curves.
    let curves: Vec<(Box<dyn Fn(f64) -> f64>, &str)> = vec![
        (Box::new(|phi: f64| phi * (1.0 - phi) + 0.3 * phi), "parabola"),
        (Box::new(|phi: f64| -0.5 * phi * (1.0 - phi) + 0.1 * phi), "negative parabola"),
        (
            Box::new(|phi: f64| 0.2 * (std::f64::consts::PI * phi).sin() + 0.05 * phi),
            "sine arc",
        ),
    ];
    let mut worst: f64 = 0.0;
    for (f, name) in curves {
        let k = 100;
        let grid: Vec<f64> = (0..=k).map(|i| i as f64 / k as f64).collect();
        let samples: Vec<f64> = grid.iter().map(|&phi| f(phi)).collect();
        let sampled = QiniCurve::new(grid, samples, Vec::new()).unwrap();
        let trapezoid = metrics::qini_coefficient(&sampled);

        let fine = 10_000;
        let f1 = f(1.0);
        let riemann: f64 = (0..fine)
            .map(|i| {
                let phi = (i as f64 + 0.5) / fine as f64;
                (f(phi) - phi * f1) / fine as f64
            })
            .sum();
        let err = (trapezoid - riemann).abs();
        worst = worst.max(err);
        assert!(err < 1e-3, "{name}: trapezoid {trapezoid} vs Riemann {riemann}");
    }
    println!(
        "acceptance criterion 2 (metric oracles): PASS, hand values exact, Riemann gap {worst:.2e}"
    );
}

// ---------------------------------------------------------------------------
// 3. Null calibration
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_null_calibration() {
    let start = Instant::now();
    let spec = SyntheticSpec::with_default_coefficients(5_000, 10, 202).unwrap();
    let (ds, _) = generate_parametric(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let scores: Vec<f64> = (0..ds.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let observed = metrics::evaluate(
        &Vector::from_vec(scores.clone()),
        ds.treatment(),
        ds.outcome(),
        metrics::DEFAULT_QINI_GRID,
        metrics::DEFAULT_KENDALL_BINS,
        false,
    )
    .unwrap();

    let permutations = 200;
    let mut qinis = Vec::with_capacity(permutations);
    let mut rhos = Vec::with_capacity(permutations);
    let mut permuted = scores;
    for _ in 0..permutations {
        // Fisher-Yates with the dedicated stream.
        for i in (1..permuted.len()).rev() {
            let j = rng.gen_range(0..=i);
            permuted.swap(i, j);
        }
        let report = metrics::evaluate(
            &Vector::from_vec(permuted.clone()),
            ds.treatment(),
            ds.outcome(),
            metrics::DEFAULT_QINI_GRID,
            metrics::DEFAULT_KENDALL_BINS,
            false,
        )
        .unwrap();
        qinis.push(report.qini);
        rhos.push(report.kendall);
    }
    let sd = |values: &[f64]| {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64)
            .sqrt()
    };
    let sd_q = sd(&qinis);
    let sd_rho = sd(&rhos);
    let mean_rho = rhos.iter().sum::<f64>() / rhos.len() as f64;
    assert!(
        observed.qini.abs() < 4.0 * sd_q,
        "random-score qini {} exceeds 4 permutation SE {}",
        observed.qini,
        4.0 * sd_q
    );
    assert!(
        observed.kendall.abs() < 4.0 * sd_rho && mean_rho.abs() < 4.0 * sd_rho,
        "random-score kendall {} / mean {} exceeds band {}",
        observed.kendall,
        mean_rho,
        4.0 * sd_rho
    );
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "null calibration took {elapsed:?}");
    println!(
        "acceptance criterion 3 (null calibration): PASS, |qini| {:.5} < {:.5}, mean rho {:.4} within {:.4}, {elapsed:?}",
        observed.qini.abs(),
        4.0 * sd_q,
        mean_rho,
        4.0 * sd_rho
    );
}

// ---------------------------------------------------------------------------
// 4. Transformed-outcome unbiasedness
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_transformed_outcome_unbiasedness() {
    let spec = SyntheticSpec::with_default_coefficients(100, 6, 404).unwrap();
    let x = [0.7, -0.4, 1.3, 0.0, -1.1, 0.5];
    let truth = spec.true_uplift(&x);
    let redraws = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut zs = Vec::with_capacity(redraws);
    for _ in 0..redraws {
        let t = f64::from(rng.gen_bool(0.5));
        let y = f64::from(rng.gen_bool(spec.conditional_mean(&x, t)));
        zs.push(t * y / 0.5 - (1.0 - t) * y / 0.5);
    }
    let mean = zs.iter().sum::<f64>() / redraws as f64;
    let var = zs.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / (redraws - 1) as f64;
    let se = (var / redraws as f64).sqrt();
    assert!(
        (mean - truth).abs() < 3.0 * se,
        "mean Z {mean} vs true uplift {truth}, 3se {}",
        3.0 * se
    );
    println!(
        "acceptance criterion 4 (transformed-outcome unbiasedness): PASS, |bias| {:.5} < {:.5}",
        (mean - truth).abs(),
        3.0 * se
    );
}

// ---------------------------------------------------------------------------
// 5 and 6. Synthetic benchmark and oracle dominance (shared runs)
// ---------------------------------------------------------------------------

fn acceptance_benchmark_config(out: &std::path::Path) -> ExperimentConfig {
    let mut config = ExperimentConfig::default();
    for (key, value) in [
        ("synthetic", "parametric"),
        ("n", "10000"),
        ("p", "100"),
        ("runs", "10"),
        ("seed", "42"),
        ("hidden", "64,32,16"),
        ("linear_prefix", "2"),
        ("epochs", "100"),
        ("batch_size", "256"),
        ("learning_rate", "0.1"),
        ("alpha", "0.3"),
        ("train_fraction", "0.6"),
        ("workers", "0"),
    ] {
        config.set(key, value).unwrap();
    }
    config.out = out.to_path_buf();
    config
}

fn shared_benchmark() -> &'static (BenchmarkReport, Duration) {
    static BENCH: OnceLock<(BenchmarkReport, Duration)> = OnceLock::new();
    BENCH.get_or_init(|| {
        let dir = std::env::temp_dir().join("uplift-acceptance-benchmark");
        std::fs::create_dir_all(&dir).unwrap();
        let config = acceptance_benchmark_config(&dir);
        let start = Instant::now();
        let report = commands::cmd_benchmark(&config).expect("benchmark completes");
        (report, start.elapsed())
    })
}

fn valid_mean(report: &BenchmarkReport, model: &str) -> (f64, f64, f64) {
    let row = report
        .aggregate
        .iter()
        .find(|r| r.model == model && r.split == "valid")
        .unwrap_or_else(|| panic!("no validation aggregate for {model}"));
    (row.qini_mean, row.qini_two_se, row.kendall_mean)
}

#[test]
fn criterion_5_synthetic_benchmark() {
    let (report, elapsed) = shared_benchmark();
    assert!(
        *elapsed <= Duration::from_secs(30 * 60),
        "benchmark took {elapsed:?}, over the 30 minute budget"
    );
    assert!(report.failures.is_empty(), "failures: {:?}", report.failures);
    let (ie_qini, ie_two_se, ie_kendall) = valid_mean(report, "smite-ie");
    let (to_qini, _, _) = valid_mean(report, "smite-to");
    assert!(
        ie_qini - ie_two_se > 0.0,
        "IE validation qini interval [{}, {}] does not exclude 0",
        ie_qini - ie_two_se,
        ie_qini + ie_two_se
    );
    assert!(ie_kendall >= 0.6, "IE mean kendall {ie_kendall} below 0.6");
    assert!(
        ie_qini >= to_qini,
        "IE validation qini {ie_qini} below TO {to_qini}"
    );
    println!(
        "acceptance criterion 5 (synthetic benchmark): PASS, IE qini {ie_qini:.4} +/- {ie_two_se:.4}, \
         IE kendall {ie_kendall:.3}, TO qini {to_qini:.4}, runtime {elapsed:?}"
    );
}

#[test]
fn criterion_6_oracle_dominance() {
    let (report, _) = shared_benchmark();
    let (oracle_qini, _, _) = valid_mean(report, "oracle");
    for model in ["smite-to", "smite-ie", "two-model", "interaction"] {
        let (qini, _, _) = valid_mean(report, model);
        assert!(
            oracle_qini >= qini,
            "oracle validation qini {oracle_qini} below {model} {qini}"
        );
    }
    println!(
        "acceptance criterion 6 (oracle dominance): PASS, oracle validation qini {oracle_qini:.4}"
    );
}

// ---------------------------------------------------------------------------
// 7. Tuning protocol
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_tuning_protocol() {
    // Planted fold values reproduce the selection rule by hand: 0.1 has a
    // tight positive interval, 0.2 has the higher mean but its interval
    // crosses zero.
    let stats = training::summarize_grid(&[(0.1, vec![0.3, 0.3]), (0.2, vec![0.5, -0.1])]);
    assert!((stats[0].ci_lower - 0.3).abs() < 1e-12);
    assert!(stats[1].ci_lower < 0.0 && stats[1].ci_upper > 0.0);
    let result = training::select_by_ci("alpha", stats).unwrap();
    assert_eq!(result.selected, 0.1);
    assert!(!result.fallback);

    // All-zero folds never win over a positive band.
    let stats = training::summarize_grid(&[(0.5, vec![0.0, 0.0, 0.0]), (0.7, vec![0.2, 0.3])]);
    let result = training::select_by_ci("alpha", stats).unwrap();
    assert_eq!(result.selected, 0.7);

    // Fallback to the greatest lower bound when nothing clears zero.
    let stats = training::summarize_grid(&[(0.1, vec![0.5, -0.5]), (0.2, vec![0.1, -0.05])]);
    let result = training::select_by_ci("alpha", stats).unwrap();
    assert!(result.fallback);
    assert_eq!(result.selected, 0.2);

    // The alpha grid is the eleven-point 0..1 ladder.
    let grid = training::alpha_grid();
    assert_eq!(grid.len(), 11);
    for (i, alpha) in grid.iter().enumerate() {
        assert!((alpha - i as f64 / 10.0).abs() < 1e-12);
    }
    println!("acceptance criterion 7 (tuning protocol): PASS, selection rule and 11-point grid exact");
}

// ---------------------------------------------------------------------------
// 8. Reproducibility
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::default();
    for (key, value) in [
        ("synthetic", "parametric"),
        ("n", "600"),
        ("p", "4"),
        ("runs", "3"),
        ("seed", "77"),
        ("hidden", "8,4"),
        ("linear_prefix", "1"),
        ("epochs", "3"),
        ("batch_size", "64"),
        ("learning_rate", "0.05"),
        ("alpha", "0.5"),
        ("train_fraction", "0.6"),
        ("workers", "1"),
    ] {
        config.set(key, value).unwrap();
    }
    config.out = dir.path().join("a");
    commands::cmd_benchmark(&config).unwrap();

    // Rebuild the experiment purely from the configuration embedded in
    // the artifact, as a fresh consumer would.
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(config.out.join("aggregate.json")).unwrap(),
    )
    .unwrap();
    let mut replay = ExperimentConfig::default();
    for (key, value) in json["config"].as_object().unwrap() {
        replay.set(key, value.as_str().unwrap()).unwrap();
    }
    replay.out = dir.path().join("b");
    replay.workers = 1;
    commands::cmd_benchmark(&replay).unwrap();

    for name in ["per_run.csv", "aggregate.csv", "aggregate.json"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} is not bit-identical across replays");
    }

    // Models re-trained from the same configuration and reloaded from
    // disk give identical predictions.
    let spec = SyntheticSpec::with_default_coefficients(400, 3, 55).unwrap();
    let (ds, _) = generate_parametric(&spec).unwrap();
    let folds = uplift_core::data::shuffle_folds(&ds, 0.6, 1, 9).unwrap();
    let (tr, va) = &folds[0];
    let train_ds = ds.subset(tr).unwrap();
    let valid_ds = ds.subset(va).unwrap();
    let arch = Architecture::new(4, vec![6, 4], 1, 0.01).unwrap();
    let tc = training::TrainConfig {
        variant: LossVariant::IndirectEstimation,
        alpha: 0.4,
        learning_rate: 0.05,
        epochs: 2,
        batch_size: 64,
        seed: 12,
        arch,
    };
    let first = training::train(&tc, &train_ds, &valid_ds).unwrap();
    let second = training::train(&tc, &train_ds, &valid_ds).unwrap();
    let probe = first.predict_uplift(ds.features()).unwrap();
    assert_eq!(probe.data(), second.predict_uplift(ds.features()).unwrap().data());
    let model_path = dir.path().join("model.txt");
    training::save_model(&first, &model_path).unwrap();
    let loaded = training::load_model(&model_path).unwrap();
    assert_eq!(probe.data(), loaded.predict_uplift(ds.features()).unwrap().data());
    println!("acceptance criterion 8 (reproducibility): PASS, replayed reports bit-identical, predictions identical");
}
