//! Flat key-value experiment configuration with flag overrides.
//!
//! The file format is one `key = value` pair per line; '#' starts a
//! comment. Command-line flags win over file values. Every artifact the
//! commands write embeds the fully resolved configuration, which is
//! sufficient to reproduce the artifact exactly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use uplift_core::losses::LossVariant;
use uplift_core::model::Architecture;
use uplift_core::training::TrainConfig;
use uplift_core::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub out: PathBuf,
    pub seed: u64,
    /// Worker pool size for run/fold fan-out; 0 means available parallelism.
    pub workers: usize,
    pub runs: usize,

    pub dataset: Option<PathBuf>,
    pub outcome_col: String,
    pub treatment_col: String,
    pub propensity: Option<f64>,
    /// "parametric" or "bootstrap"; absent when a dataset path is given.
    pub synthetic: Option<String>,
    pub n: usize,
    pub p: usize,
    pub truth: Option<PathBuf>,
    pub source: Option<PathBuf>,
    pub generator_model: Option<PathBuf>,

    pub use_holdout: bool,
    pub holdout_fraction: f64,
    pub train_fraction: f64,
    pub folds: usize,

    pub variant: String,
    pub alpha: f64,
    pub alpha_to: Option<f64>,
    pub alpha_ie: Option<f64>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub linear_prefix: usize,
    pub leaky_slope: f64,

    pub qini_grid: usize,
    pub kendall_bins: usize,
    pub qini_literal: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            out: PathBuf::from("out"),
            seed: 42,
            workers: 0,
            runs: 30,
            dataset: None,
            outcome_col: "outcome".into(),
            treatment_col: "treatment".into(),
            propensity: None,
            synthetic: None,
            n: 10_000,
            p: 100,
            truth: None,
            source: None,
            generator_model: None,
            use_holdout: false,
            holdout_fraction: 0.30,
            train_fraction: 0.60,
            folds: 10,
            variant: "ie".into(),
            alpha: 0.5,
            alpha_to: None,
            alpha_ie: None,
            learning_rate: uplift_core::training::DEFAULT_LEARNING_RATE,
            epochs: uplift_core::training::DEFAULT_EPOCHS,
            batch_size: uplift_core::training::DEFAULT_BATCH_SIZE,
            hidden: vec![200, 200, 300, 100, 50, 10],
            linear_prefix: 2,
            leaky_slope: 0.01,
            qini_grid: uplift_core::metrics::DEFAULT_QINI_GRID,
            kendall_bins: uplift_core::metrics::DEFAULT_KENDALL_BINS,
            qini_literal: false,
        }
    }
}

fn parse_bool(value: &str, key: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!(
            "key '{key}': expected a boolean, got '{other}'"
        ))),
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{value}'")))
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {} of {}: expected 'key = value', got '{raw}'",
                    lineno + 1,
                    path.display()
                )));
            };
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    /// Applies one key. Unknown keys are a usage error naming the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "out" => self.out = PathBuf::from(value),
            "seed" => self.seed = parse_num(value, key)?,
            "workers" => self.workers = parse_num(value, key)?,
            "runs" => self.runs = parse_num(value, key)?,
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "outcome_col" => self.outcome_col = value.to_string(),
            "treatment_col" => self.treatment_col = value.to_string(),
            "propensity" => self.propensity = Some(parse_num(value, key)?),
            "synthetic" => self.synthetic = Some(value.to_string()),
            "n" => self.n = parse_num(value, key)?,
            "p" => self.p = parse_num(value, key)?,
            "truth" => self.truth = Some(PathBuf::from(value)),
            "source" => self.source = Some(PathBuf::from(value)),
            "generator_model" => self.generator_model = Some(PathBuf::from(value)),
            "use_holdout" => self.use_holdout = parse_bool(value, key)?,
            "holdout_fraction" => self.holdout_fraction = parse_num(value, key)?,
            "train_fraction" => self.train_fraction = parse_num(value, key)?,
            "folds" => self.folds = parse_num(value, key)?,
            "variant" => self.variant = value.to_string(),
            "alpha" => self.alpha = parse_num(value, key)?,
            "alpha_to" => self.alpha_to = Some(parse_num(value, key)?),
            "alpha_ie" => self.alpha_ie = Some(parse_num(value, key)?),
            "learning_rate" => self.learning_rate = parse_num(value, key)?,
            "epochs" => self.epochs = parse_num(value, key)?,
            "batch_size" => self.batch_size = parse_num(value, key)?,
            "hidden" => {
                self.hidden = value
                    .split(',')
                    .map(|tok| parse_num(tok.trim(), key))
                    .collect::<Result<_>>()?;
            }
            "linear_prefix" => self.linear_prefix = parse_num(value, key)?,
            "leaky_slope" => self.leaky_slope = parse_num(value, key)?,
            "qini_grid" => self.qini_grid = parse_num(value, key)?,
            "kendall_bins" => self.kendall_bins = parse_num(value, key)?,
            "qini_literal" => self.qini_literal = parse_bool(value, key)?,
            other => {
                return Err(Error::Config(format!("unknown configuration key '{other}'")));
            }
        }
        Ok(())
    }

    /// Fully resolved key-value view, alphabetical; embedded into every
    /// artifact so it can be reproduced exactly. The output directory and
    /// the worker count are execution context, not experiment identity,
    /// and are left out: re-running the embedded configuration anywhere,
    /// with any pool size, reproduces the artifact byte for byte.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            map.insert(k.to_string(), v);
        };
        put("seed", self.seed.to_string());
        put("runs", self.runs.to_string());
        if let Some(ds) = &self.dataset {
            put("dataset", ds.display().to_string());
        }
        put("outcome_col", self.outcome_col.clone());
        put("treatment_col", self.treatment_col.clone());
        if let Some(e) = self.propensity {
            put("propensity", e.to_string());
        }
        if let Some(s) = &self.synthetic {
            put("synthetic", s.clone());
            put("n", self.n.to_string());
            put("p", self.p.to_string());
        }
        if let Some(t) = &self.truth {
            put("truth", t.display().to_string());
        }
        if let Some(s) = &self.source {
            put("source", s.display().to_string());
        }
        if let Some(g) = &self.generator_model {
            put("generator_model", g.display().to_string());
        }
        put("use_holdout", self.use_holdout.to_string());
        put("holdout_fraction", self.holdout_fraction.to_string());
        put("train_fraction", self.train_fraction.to_string());
        put("folds", self.folds.to_string());
        put("variant", self.variant.clone());
        put("alpha", self.alpha.to_string());
        if let Some(a) = self.alpha_to {
            put("alpha_to", a.to_string());
        }
        if let Some(a) = self.alpha_ie {
            put("alpha_ie", a.to_string());
        }
        put("learning_rate", self.learning_rate.to_string());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put(
            "hidden",
            self.hidden
                .iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        put("linear_prefix", self.linear_prefix.to_string());
        put("leaky_slope", self.leaky_slope.to_string());
        put("qini_grid", self.qini_grid.to_string());
        put("kendall_bins", self.kendall_bins.to_string());
        put("qini_literal", self.qini_literal.to_string());
        map
    }

    /// '#'-prefixable comment lines carrying the resolved configuration.
    pub fn comment_lines(&self) -> Vec<String> {
        self.resolved()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}"))
            .collect()
    }

    pub fn loss_variant(&self) -> Result<LossVariant> {
        LossVariant::parse(&self.variant)
    }

    pub fn architecture(&self, num_features: usize) -> Result<Architecture> {
        Architecture::new(
            num_features + 1,
            self.hidden.clone(),
            self.linear_prefix,
            self.leaky_slope,
        )
    }

    pub fn train_config(
        &self,
        variant: LossVariant,
        alpha: f64,
        num_features: usize,
        seed: u64,
    ) -> Result<TrainConfig> {
        let config = TrainConfig {
            variant,
            alpha,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            arch: self.architecture(num_features)?,
        };
        config.validate()?;
        Ok(config)
    }

    /// Numeric-range validation shared by every command.
    pub fn validate_common(&self) -> Result<()> {
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config(format!(
                "holdout_fraction must lie in (0,1), got {}",
                self.holdout_fraction
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0,1), got {}",
                self.train_fraction
            )));
        }
        if self.qini_grid == 0 {
            return Err(Error::Config("qini_grid must be positive".into()));
        }
        if self.kendall_bins < 2 {
            return Err(Error::Config("kendall_bins must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha must lie in [0,1], got {}",
                self.alpha
            )));
        }
        if let Some(e) = self.propensity {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::Config(format!(
                    "propensity must lie in (0,1), got {e}"
                )));
            }
        }
        self.loss_variant()?;
        Ok(())
    }

    pub fn require_path(&self, what: &str, path: &Option<PathBuf>) -> Result<PathBuf> {
        let Some(path) = path else {
            return Err(Error::Config(format!("missing required key '{what}'")));
        };
        if !path.exists() {
            return Err(Error::Config(format!(
                "{what} path does not exist: {}",
                path.display()
            )));
        }
        Ok(path.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_parsing_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.conf");
        std::fs::write(
            &path,
            "# experiment\nseed = 7\nhidden = 16, 8\nqini_literal = true\n\nruns=3\n",
        )
        .unwrap();
        let mut config = ExperimentConfig::from_file(&path).unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.hidden, vec![16, 8]);
        assert!(config.qini_literal);
        assert_eq!(config.runs, 3);
        // Flags win.
        config.set("seed", "9").unwrap();
        assert_eq!(config.seed, 9);
    }

    #[test]
    fn unknown_key_names_the_offender() {
        let mut config = ExperimentConfig::default();
        let err = config.set("learning_rte", "0.1").unwrap_err();
        assert!(err.to_string().contains("learning_rte"));
    }

    #[test]
    fn resolved_view_is_deterministic() {
        let config = ExperimentConfig::default();
        assert_eq!(config.comment_lines(), config.comment_lines());
    }
}
