//! The four commands: simulate, tune, benchmark, evaluate.
//!
//! Every artifact embeds the fully resolved configuration and seed; runs
//! are fanned out over a bounded worker pool but merged by index, so the
//! outputs are identical whatever the pool size.

use crate::config::ExperimentConfig;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use uplift_core::baselines::{fit_interaction, fit_two_model, FitOptions};
use uplift_core::data::{self, SplitPlan, UpliftDataset};
use uplift_core::losses::LossVariant;
use uplift_core::metrics::{self, QiniCurve};
use uplift_core::numerics::Vector;
use uplift_core::persist;
use uplift_core::training::{self, TuneResult};
use uplift_core::{Error, Result};

/// Exit-code mapping: 1 usage/config, 2 data, 3 numeric divergence.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        Error::Diverged { .. } | Error::Numeric(_) => 3,
        _ => 2,
    }
}

/// Exit code for a tune run whose selection fell back to the greatest
/// confidence lower bound.
pub const EXIT_TUNE_FALLBACK: i32 = 4;

fn ensure_out_dir(config: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&config.out)?;
    Ok(())
}

fn install_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let threads = if workers == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        workers
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(job))
}

// ---------------------------------------------------------------------------
// Data plumbing shared by the commands
// ---------------------------------------------------------------------------

/// Loads the configured dataset: a CSV path, or the parametric generator.
/// Returns the true per-row uplift when it is known.
fn load_or_generate(config: &ExperimentConfig) -> Result<(UpliftDataset, Option<Vector>)> {
    if let Some(path) = &config.dataset {
        let path = config.require_path("dataset", &Some(path.clone()))?;
        let ds = data::load_csv(
            &path,
            &config.outcome_col,
            &config.treatment_col,
            config.propensity,
        )?;
        let truth = match &config.truth {
            Some(tpath) => {
                let tpath = config.require_path("truth", &Some(tpath.clone()))?;
                Some(load_truth(&tpath, ds.n())?)
            }
            None => None,
        };
        return Ok((ds, truth));
    }
    match config.synthetic.as_deref() {
        Some("parametric") | None => {
            let spec = data::SyntheticSpec::with_default_coefficients(
                config.n,
                config.p,
                config.seed,
            )?;
            let (ds, truth) = data::generate_parametric(&spec)?;
            Ok((ds, Some(truth)))
        }
        Some("bootstrap") => {
            let source_path = config.require_path("source", &config.source)?;
            let model_path = config.require_path("generator_model", &config.generator_model)?;
            let source = data::load_csv(
                &source_path,
                &config.outcome_col,
                &config.treatment_col,
                config.propensity,
            )?;
            let model = persist::load_any(&model_path)?;
            let ds = data::generate_bootstrap(&source, &model, config.seed)?;
            Ok((ds, None))
        }
        Some(other) => Err(Error::Config(format!(
            "key 'synthetic': expected 'parametric' or 'bootstrap', got '{other}'"
        ))),
    }
}

fn write_truth_csv(truth: &Vector, path: &Path, comments: &[String]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for line in comments {
        writeln!(file, "# {line}")?;
    }
    writeln!(file, "row_index,true_uplift")?;
    for i in 0..truth.len() {
        writeln!(file, "{},{}", i, truth.get(i))?;
    }
    Ok(())
}

fn load_truth(path: &Path, expected_n: usize) -> Result<Vector> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("row_index") {
            continue;
        }
        let Some((_, value)) = line.split_once(',') else {
            return Err(Error::Parse {
                path: display,
                row: lineno + 1,
                column: "true_uplift".into(),
                message: format!("expected 'row_index,true_uplift', got '{raw}'"),
            });
        };
        let v: f64 = value.trim().parse().map_err(|_| Error::Parse {
            path: display.clone(),
            row: lineno + 1,
            column: "true_uplift".into(),
            message: format!("'{value}' is not a number"),
        })?;
        values.push(v);
    }
    if values.len() != expected_n {
        return Err(Error::Shape(format!(
            "truth file has {} rows, dataset has {expected_n}",
            values.len()
        )));
    }
    Ok(Vector::from_vec(values))
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn cmd_simulate(config: &ExperimentConfig) -> Result<()> {
    config.validate_common()?;
    ensure_out_dir(config)?;
    let comments = config.comment_lines();
    match config.synthetic.as_deref() {
        Some("parametric") | None => {
            let spec = data::SyntheticSpec::with_default_coefficients(
                config.n,
                config.p,
                config.seed,
            )?;
            let (ds, truth) = data::generate_parametric(&spec)?;
            data::write_csv(&ds, &config.out.join("dataset.csv"), &comments)?;
            write_truth_csv(&truth, &config.out.join("truth.csv"), &comments)?;
            println!(
                "simulated parametric dataset: n={} p={} ate={:.6} seed={}",
                ds.n(),
                ds.p(),
                ds.empirical_ate()?,
                config.seed
            );
        }
        Some("bootstrap") => {
            let (ds, _) = load_or_generate(&ExperimentConfig {
                synthetic: Some("bootstrap".into()),
                ..config.clone()
            })?;
            data::write_csv(&ds, &config.out.join("dataset.csv"), &comments)?;
            println!(
                "simulated bootstrap dataset: n={} p={} ate={:.6} seed={}",
                ds.n(),
                ds.p(),
                ds.empirical_ate()?,
                config.seed
            );
        }
        Some(other) => {
            return Err(Error::Config(format!(
                "key 'synthetic': expected 'parametric' or 'bootstrap', got '{other}'"
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// tune
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct TuneSummary<'a> {
    config: BTreeMap<String, String>,
    alpha: &'a TuneResult,
    learning_rate: &'a TuneResult,
    fallback: bool,
}

pub struct TuneOutcome {
    pub alpha: TuneResult,
    pub learning_rate: TuneResult,
    pub fallback: bool,
}

pub fn cmd_tune(config: &ExperimentConfig) -> Result<TuneOutcome> {
    config.validate_common()?;
    if config.folds < 2 {
        return Err(Error::Config(format!(
            "tuning needs at least two folds, got {}",
            config.folds
        )));
    }
    ensure_out_dir(config)?;
    let (ds, _) = load_or_generate(config)?;
    let plan = SplitPlan::new(
        config.holdout_fraction,
        config.train_fraction,
        config.folds,
        config.seed,
    )?;
    // The holdout stays unseen through the whole protocol.
    let parts = data::split(&ds, &plan)?;
    let mut in_holdout = vec![false; ds.n()];
    for &i in &parts.holdout {
        in_holdout[i] = true;
    }
    let tuning_rows: Vec<usize> = (0..ds.n()).filter(|&i| !in_holdout[i]).collect();
    let tuning_ds = ds.subset(&tuning_rows)?;

    let variant = config.loss_variant()?;
    let base = config.train_config(variant, config.alpha, ds.p(), config.seed)?;

    let (alpha_result, rate_result) = install_pool(config.workers, || -> Result<_> {
        let alpha_result = training::tune_alpha(&tuning_ds, &plan, &base)?;
        let mut tuned = base.clone();
        tuned.alpha = alpha_result.selected;
        let rate_result = training::tune_learning_rate(&tuning_ds, &plan, &tuned)?;
        Ok((alpha_result, rate_result))
    })??;

    let comments = config.comment_lines();
    alpha_result.write_csv(&config.out.join("alpha_folds.csv"), &comments)?;
    rate_result.write_csv(&config.out.join("learning_rate_folds.csv"), &comments)?;
    let fallback = alpha_result.fallback || rate_result.fallback;
    let summary = TuneSummary {
        config: config.resolved(),
        alpha: &alpha_result,
        learning_rate: &rate_result,
        fallback,
    };
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
    std::fs::write(config.out.join("tune_summary.json"), json)?;
    println!(
        "selected alpha={} (fallback={}) learning_rate={} (fallback={})",
        alpha_result.selected, alpha_result.fallback, rate_result.selected, rate_result.fallback
    );
    Ok(TuneOutcome {
        alpha: alpha_result,
        learning_rate: rate_result,
        fallback,
    })
}

// ---------------------------------------------------------------------------
// benchmark
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub model: String,
    pub split: String,
    pub qini: f64,
    pub kendall: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunFailure {
    pub run: usize,
    pub seed: u64,
    pub model: String,
    pub error: String,
    pub diverged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub model: String,
    pub split: String,
    pub qini_mean: f64,
    pub qini_two_se: f64,
    pub kendall_mean: f64,
    pub kendall_two_se: f64,
    pub runs: usize,
    /// False when fewer than the configured number of runs succeeded.
    pub complete: bool,
}

#[derive(Debug, Serialize)]
pub struct BenchmarkReport {
    pub config: BTreeMap<String, String>,
    pub runs: usize,
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    pub aggregate: Vec<AggregateRow>,
    /// Run index with the best validation Qini, per model.
    pub best_runs: BTreeMap<String, usize>,
    /// Validation Qini curve of each model's best run.
    #[serde(skip)]
    pub best_curves: BTreeMap<String, QiniCurve>,
}

struct RunOutput {
    records: Vec<RunRecord>,
    failures: Vec<RunFailure>,
    /// (model, validation qini, validation curve)
    curves: Vec<(String, f64, QiniCurve)>,
}

struct EvalContext<'a> {
    config: &'a ExperimentConfig,
    ds: &'a UpliftDataset,
    truth: Option<&'a Vector>,
    holdout: Option<&'a [usize]>,
}

/// Scores one model on every configured split. Returns the records and
/// the validation curve together, so a failure anywhere leaves no
/// partial rows behind.
fn eval_scorer(
    ctx: &EvalContext,
    run: usize,
    seed: u64,
    model: &str,
    score: &dyn Fn(&UpliftDataset, &[usize]) -> Result<Vector>,
    train_idx: &[usize],
    valid_idx: &[usize],
) -> Result<(Vec<RunRecord>, (String, f64, QiniCurve))> {
    let mut records = Vec::new();
    let mut valid_curve = None;
    let mut splits: Vec<(&str, &[usize])> = vec![("train", train_idx), ("valid", valid_idx)];
    if let Some(holdout) = ctx.holdout {
        splits.push(("holdout", holdout));
    }
    for (split_name, idx) in splits {
        let part = ctx.ds.subset(idx)?;
        let predicted = score(&part, idx)?;
        let curve = metrics::qini_curve(
            &predicted,
            part.treatment(),
            part.outcome(),
            ctx.config.qini_grid,
            ctx.config.qini_literal,
        )?;
        let qini = metrics::qini_coefficient(&curve);
        let kendall =
            metrics::kendall_uplift(&predicted, part.treatment(), part.outcome(), ctx.config.kendall_bins)?;
        records.push(RunRecord {
            run,
            seed,
            model: model.to_string(),
            split: split_name.to_string(),
            qini,
            kendall: kendall.rho,
        });
        if split_name == "valid" {
            valid_curve = Some((model.to_string(), qini, curve));
        }
    }
    let curve = valid_curve.expect("valid split is always evaluated");
    Ok((records, curve))
}

fn run_one(ctx: &EvalContext, run: usize, train_idx: &[usize], valid_idx: &[usize]) -> RunOutput {
    let config = ctx.config;
    let seed = config.seed.wrapping_add(run as u64);
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut curves = Vec::new();

    let parts = ctx
        .ds
        .subset(train_idx)
        .and_then(|tr| Ok((tr, ctx.ds.subset(valid_idx)?)));
    let (train_ds, valid_ds) = match parts {
        Ok(parts) => parts,
        Err(e) => {
            failures.push(RunFailure {
                run,
                seed,
                model: "all".into(),
                diverged: false,
                error: e.to_string(),
            });
            return RunOutput {
                records,
                failures,
                curves,
            };
        }
    };

    type Scorer = Box<dyn Fn(&UpliftDataset, &[usize]) -> Result<Vector>>;
    let mut record_model = |model: &str, score: Result<Scorer>| match score.and_then(|score_fn| {
        eval_scorer(ctx, run, seed, model, score_fn.as_ref(), train_idx, valid_idx)
    }) {
        Ok((rows, curve)) => {
            records.extend(rows);
            curves.push(curve);
        }
        Err(e) => failures.push(RunFailure {
            run,
            seed,
            model: model.to_string(),
            diverged: matches!(e, Error::Diverged { .. } | Error::Numeric(_)),
            error: e.to_string(),
        }),
    };

    // The twin networks.
    for (name, variant, alpha) in [
        (
            "smite-to",
            LossVariant::TransformedOutcome,
            config.alpha_to.unwrap_or(config.alpha),
        ),
        (
            "smite-ie",
            LossVariant::IndirectEstimation,
            config.alpha_ie.unwrap_or(config.alpha),
        ),
    ] {
        let score = config
            .train_config(variant, alpha, ctx.ds.p(), seed)
            .and_then(|tc| training::train(&tc, &train_ds, &valid_ds))
            .map(|tm| {
                Box::new(move |part: &UpliftDataset, _: &[usize]| tm.predict_uplift(part.features()))
                    as Scorer
            });
        record_model(name, score);
    }

    // Classical baselines.
    let two = fit_two_model(&train_ds, &FitOptions::default()).map(|m| {
        Box::new(move |part: &UpliftDataset, _: &[usize]| m.predict_uplift(part.features())) as Scorer
    });
    record_model("two-model", two);
    let inter = fit_interaction(&train_ds, &FitOptions::default()).map(|m| {
        Box::new(move |part: &UpliftDataset, _: &[usize]| m.predict_uplift(part.features())) as Scorer
    });
    record_model("interaction", inter);

    // The oracle scores by the known true uplift of the original rows.
    if let Some(truth) = ctx.truth {
        let truth = truth.clone();
        let score: Result<Scorer> = Ok(Box::new(move |_: &UpliftDataset, idx: &[usize]| {
            Ok(Vector::from_vec(idx.iter().map(|&i| truth.get(i)).collect()))
        }));
        record_model("oracle", score);
    }

    RunOutput {
        records,
        failures,
        curves,
    }
}

pub fn run_benchmark(config: &ExperimentConfig) -> Result<BenchmarkReport> {
    config.validate_common()?;
    if config.runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let (ds, truth) = load_or_generate(config)?;
    ds.require_both_arms("benchmark")?;

    // One split plan drives the whole benchmark: the optional holdout is
    // carved once, then each run is an independent train/valid shuffle.
    let (holdout, folds) = if config.use_holdout {
        let plan = SplitPlan::new(
            config.holdout_fraction,
            config.train_fraction,
            config.runs,
            config.seed,
        )?;
        let parts = data::split(&ds, &plan)?;
        (Some(parts.holdout), parts.folds)
    } else {
        (
            None,
            data::shuffle_folds(&ds, config.train_fraction, config.runs, config.seed)?,
        )
    };

    let ctx = EvalContext {
        config,
        ds: &ds,
        truth: truth.as_ref(),
        holdout: holdout.as_deref(),
    };

    let outputs: Vec<RunOutput> = install_pool(config.workers, || {
        folds
            .par_iter()
            .enumerate()
            .map(|(run, (train_idx, valid_idx))| run_one(&ctx, run, train_idx, valid_idx))
            .collect()
    })?;

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut best: BTreeMap<String, (usize, f64, QiniCurve)> = BTreeMap::new();
    for (run, output) in outputs.into_iter().enumerate() {
        records.extend(output.records);
        failures.extend(output.failures);
        for (model, qini, curve) in output.curves {
            let better = best
                .get(&model)
                .map(|(_, best_q, _)| qini > *best_q)
                .unwrap_or(true);
            if better {
                best.insert(model, (run, qini, curve));
            }
        }
    }

    if records.is_empty() {
        let first = failures
            .first()
            .map(|f| f.error.clone())
            .unwrap_or_else(|| "no runs executed".into());
        if !failures.is_empty() && failures.iter().all(|f| f.diverged) {
            return Err(Error::Diverged {
                epoch: 0,
                learning_rate: config.learning_rate,
                message: format!("every benchmark run diverged; first failure: {first}"),
            });
        }
        return Err(Error::Aggregation(format!(
            "no model completed any run; first failure: {first}"
        )));
    }

    // Aggregate per model and split.
    let mut aggregate = Vec::new();
    let mut keys: Vec<(String, String)> = records
        .iter()
        .map(|r| (r.model.clone(), r.split.clone()))
        .collect();
    keys.sort();
    keys.dedup();
    for (model, split) in keys {
        let qini: Vec<f64> = records
            .iter()
            .filter(|r| r.model == model && r.split == split)
            .map(|r| r.qini)
            .collect();
        let kendall: Vec<f64> = records
            .iter()
            .filter(|r| r.model == model && r.split == split)
            .map(|r| r.kendall)
            .collect();
        if qini.len() < 2 {
            continue;
        }
        let q = metrics::summarize(&qini)?;
        let k = metrics::summarize(&kendall)?;
        aggregate.push(AggregateRow {
            model: model.clone(),
            split: split.clone(),
            qini_mean: q.mean,
            qini_two_se: q.two_se,
            kendall_mean: k.mean,
            kendall_two_se: k.two_se,
            runs: qini.len(),
            complete: qini.len() == config.runs,
        });
    }

    let best_runs: BTreeMap<String, usize> = best
        .iter()
        .map(|(model, (run, _, _))| (model.clone(), *run))
        .collect();
    let best_curves: BTreeMap<String, QiniCurve> = best
        .into_iter()
        .map(|(model, (_, _, curve))| (model, curve))
        .collect();
    Ok(BenchmarkReport {
        config: config.resolved(),
        runs: config.runs,
        records,
        failures,
        aggregate,
        best_runs,
        best_curves,
    })
}

pub fn cmd_benchmark(config: &ExperimentConfig) -> Result<BenchmarkReport> {
    ensure_out_dir(config)?;
    let report = run_benchmark(config)?;
    write_benchmark_artifacts(config, &report)?;
    print_benchmark_table(&report);
    Ok(report)
}

pub fn write_benchmark_artifacts(
    config: &ExperimentConfig,
    report: &BenchmarkReport,
) -> Result<()> {
    let comments = config.comment_lines();

    let per_run = config.out.join("per_run.csv");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&per_run)?);
    for line in &comments {
        writeln!(file, "# {line}")?;
    }
    writeln!(file, "run,seed,model,split,qini,kendall")?;
    for r in &report.records {
        writeln!(
            file,
            "{},{},{},{},{},{}",
            r.run, r.seed, r.model, r.split, r.qini, r.kendall
        )?;
    }
    drop(file);

    let agg_path = config.out.join("aggregate.csv");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&agg_path)?);
    for line in &comments {
        writeln!(file, "# {line}")?;
    }
    writeln!(file, "model,split,metric,mean,two_se,runs")?;
    for row in &report.aggregate {
        writeln!(
            file,
            "{},{},qini,{},{},{}",
            row.model, row.split, row.qini_mean, row.qini_two_se, row.runs
        )?;
        writeln!(
            file,
            "{},{},kendall,{},{},{}",
            row.model, row.split, row.kendall_mean, row.kendall_two_se, row.runs
        )?;
    }
    drop(file);

    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
    std::fs::write(config.out.join("aggregate.json"), json)?;

    for (model, curve) in &report.best_curves {
        curve.write_csv(
            &config.out.join(format!("qini_curve_{model}.csv")),
            &comments,
        )?;
    }
    Ok(())
}

fn print_benchmark_table(report: &BenchmarkReport) {
    println!(
        "{:<14} {:<8} {:>8} {:>22} {:>22}",
        "model", "split", "runs", "qini (mean +/- 2se)", "kendall (mean +/- 2se)"
    );
    for row in &report.aggregate {
        println!(
            "{:<14} {:<8} {:>8} {:>12.4} +/- {:<6.4} {:>12.3} +/- {:<6.3}",
            row.model,
            row.split,
            row.runs,
            row.qini_mean,
            row.qini_two_se,
            row.kendall_mean,
            row.kendall_two_se
        );
    }
    if !report.failures.is_empty() {
        println!("{} run failures recorded in aggregate.json", report.failures.len());
    }
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct EvaluationReport {
    pub config: BTreeMap<String, String>,
    pub model_path: String,
    pub data_path: String,
    pub model_kind: String,
    pub qini: f64,
    pub kendall: f64,
    pub qini_interpolated_points: usize,
    pub kendall_effective_bins: usize,
}

pub fn cmd_evaluate(
    config: &ExperimentConfig,
    model_path: &Path,
    data_path: &Path,
) -> Result<EvaluationReport> {
    config.validate_common()?;
    config.require_path("model", &Some(model_path.to_path_buf()))?;
    config.require_path("data", &Some(data_path.to_path_buf()))?;
    ensure_out_dir(config)?;
    let model = persist::load_any(model_path)?;
    let ds = data::load_csv(
        data_path,
        &config.outcome_col,
        &config.treatment_col,
        config.propensity,
    )?;
    ds.require_both_arms("evaluation")?;
    let predicted = model.predict_uplift(ds.features())?;
    let curve = metrics::qini_curve(
        &predicted,
        ds.treatment(),
        ds.outcome(),
        config.qini_grid,
        config.qini_literal,
    )?;
    let kendall = metrics::kendall_uplift(&predicted, ds.treatment(), ds.outcome(), config.kendall_bins)?;
    let report = EvaluationReport {
        config: config.resolved(),
        model_path: model_path.display().to_string(),
        data_path: data_path.display().to_string(),
        model_kind: model.kind().to_string(),
        qini: metrics::qini_coefficient(&curve),
        kendall: kendall.rho,
        qini_interpolated_points: curve.interpolated.len(),
        kendall_effective_bins: kendall.effective_bins,
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
    std::fs::write(config.out.join("evaluation.json"), json)?;
    curve.write_csv(&config.out.join("qini_curve.csv"), &config.comment_lines())?;
    println!(
        "{}: qini={:.6} kendall={:.4}",
        report.model_kind, report.qini, report.kendall
    );
    Ok(report)
}
