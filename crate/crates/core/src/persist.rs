//! Versioned textual model files.
//!
//! One format family covers the twin network and both baselines, tagged
//! by a `kind` line. Every float is written with 17 significant digits,
//! which round-trips f64 exactly, so a loaded model reproduces the
//! forward outputs of the saved one bit for bit.

use crate::baselines::{InteractionBaseline, LogisticModel, TwoModelBaseline};
use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::losses::LossVariant;
use crate::model::{Architecture, Layer, Parameters};
use crate::numerics::{Matrix, Vector};
use crate::training::{TrainConfig, TrainedModel};
use std::fmt::Write as _;
use std::path::Path;

const FORMAT_HEADER: &str = "uplift-model v1";

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_floats(values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 24);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{}", fmt_f64(*v));
    }
    out
}

/// Any model the file format can hold.
#[derive(Debug, Clone)]
pub enum SavedModel {
    Twin(TrainedModel),
    TwoModel(TwoModelBaseline),
    Interaction(InteractionBaseline),
}

impl SavedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SavedModel::Twin(_) => "twin",
            SavedModel::TwoModel(_) => "two-model",
            SavedModel::Interaction(_) => "interaction",
        }
    }

    pub fn predict_uplift(&self, features: &Matrix) -> Result<Vector> {
        match self {
            SavedModel::Twin(m) => m.predict_uplift(features),
            SavedModel::TwoModel(m) => m.predict_uplift(features),
            SavedModel::Interaction(m) => m.predict_uplift(features),
        }
    }

    pub fn conditional_means(&self, features: &Matrix) -> Result<(Vector, Vector)> {
        use crate::data::ConditionalMeanModel;
        match self {
            SavedModel::Twin(m) => m.conditional_means(features),
            SavedModel::TwoModel(m) => m.conditional_means(features),
            SavedModel::Interaction(m) => m.conditional_means(features),
        }
    }
}

impl crate::data::ConditionalMeanModel for SavedModel {
    fn conditional_means(&self, features: &Matrix) -> Result<(Vector, Vector)> {
        SavedModel::conditional_means(self, features)
    }
}

// ---------------------------------------------------------------------------
// Writing
// ---------------------------------------------------------------------------

fn standardizer_lines(out: &mut String, s: &Standardizer) {
    let _ = writeln!(out, "means {}", fmt_floats(&s.means));
    let _ = writeln!(out, "stds {}", fmt_floats(&s.stds));
}

pub fn save_twin(tm: &TrainedModel, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{FORMAT_HEADER}");
    let _ = writeln!(out, "kind twin");
    let c = &tm.config;
    let _ = writeln!(
        out,
        "config variant={} alpha={} learning_rate={} epochs={} batch_size={} seed={}",
        c.variant.tag(),
        fmt_f64(c.alpha),
        fmt_f64(c.learning_rate),
        c.epochs,
        c.batch_size,
        c.seed
    );
    let hidden: Vec<String> = tm.arch.hidden_widths.iter().map(|w| w.to_string()).collect();
    let _ = writeln!(
        out,
        "arch input_dim={} hidden={} linear_prefix={} slope={}",
        tm.arch.input_dim,
        hidden.join(","),
        tm.arch.linear_prefix,
        fmt_f64(tm.arch.leaky_slope)
    );
    let _ = writeln!(out, "best_epoch {}", tm.best_epoch);
    let _ = writeln!(out, "validation_qini {}", fmt_f64(tm.validation_qini));
    standardizer_lines(&mut out, &tm.standardizer);
    for (i, layer) in tm.params.layers.iter().enumerate() {
        let _ = writeln!(
            out,
            "layer {i} {} {}",
            layer.weights.rows(),
            layer.weights.cols()
        );
        let _ = writeln!(out, "weights {}", fmt_floats(layer.weights.data()));
        let _ = writeln!(out, "bias {}", fmt_floats(layer.bias.data()));
    }
    let _ = writeln!(out, "end");
    std::fs::write(path, out)?;
    Ok(())
}

fn logistic_lines(out: &mut String, name: &str, model: &LogisticModel) {
    let _ = writeln!(out, "model {name}");
    let _ = writeln!(out, "intercept {}", fmt_f64(model.intercept));
    let _ = writeln!(out, "coefficients {}", fmt_floats(model.coefficients.data()));
}

pub fn save_two_model(m: &TwoModelBaseline, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{FORMAT_HEADER}");
    let _ = writeln!(out, "kind two-model");
    let _ = writeln!(out, "features {}", m.standardizer.means.len());
    standardizer_lines(&mut out, &m.standardizer);
    logistic_lines(&mut out, "treated", &m.treated);
    logistic_lines(&mut out, "control", &m.control);
    let _ = writeln!(out, "end");
    std::fs::write(path, out)?;
    Ok(())
}

pub fn save_interaction(m: &InteractionBaseline, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{FORMAT_HEADER}");
    let _ = writeln!(out, "kind interaction");
    let _ = writeln!(out, "features {}", m.standardizer.means.len());
    standardizer_lines(&mut out, &m.standardizer);
    logistic_lines(&mut out, "interaction", &m.model);
    let _ = writeln!(out, "end");
    std::fs::write(path, out)?;
    Ok(())
}

pub fn save(model: &SavedModel, path: &Path) -> Result<()> {
    match model {
        SavedModel::Twin(m) => save_twin(m, path),
        SavedModel::TwoModel(m) => save_two_model(m, path),
        SavedModel::Interaction(m) => save_interaction(m, path),
    }
}

// ---------------------------------------------------------------------------
// Reading
// ---------------------------------------------------------------------------

struct Lines<'a> {
    lines: std::str::Lines<'a>,
    number: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            lines: text.lines(),
            number: 0,
        }
    }

    fn next(&mut self, expect: &str) -> Result<&'a str> {
        self.number += 1;
        self.lines.next().ok_or_else(|| {
            Error::ModelFile(format!(
                "unexpected end of file while reading {expect} (line {})",
                self.number
            ))
        })
    }

    fn tagged(&mut self, tag: &str) -> Result<&'a str> {
        let line = self.next(tag)?;
        line.strip_prefix(tag)
            .and_then(|rest| rest.strip_prefix(' ').or(Some(rest).filter(|r| r.is_empty())))
            .ok_or_else(|| {
                Error::ModelFile(format!(
                    "expected '{tag}' on line {}, found '{line}'",
                    self.number
                ))
            })
    }
}

fn parse_floats(text: &str, expect: usize, what: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::ModelFile(format!("{what}: '{tok}' is not a number")))
        })
        .collect::<Result<_>>()?;
    if values.len() != expect {
        return Err(Error::ModelFile(format!(
            "{what}: expected {expect} values, got {}",
            values.len()
        )));
    }
    Ok(values)
}

fn parse_usize(tok: &str, what: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| Error::ModelFile(format!("{what}: '{tok}' is not a count")))
}

fn parse_f64(tok: &str, what: &str) -> Result<f64> {
    tok.parse()
        .map_err(|_| Error::ModelFile(format!("{what}: '{tok}' is not a number")))
}

fn parse_kv<'a>(line: &'a str, key: &str, what: &str) -> Result<&'a str> {
    line.split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| Error::ModelFile(format!("{what}: missing '{key}='")))
}

fn read_standardizer(lines: &mut Lines, p: usize) -> Result<Standardizer> {
    let means = parse_floats(lines.tagged("means")?, p, "standardizer means")?;
    let stds = parse_floats(lines.tagged("stds")?, p, "standardizer stds")?;
    Ok(Standardizer { means, stds })
}

fn read_logistic(lines: &mut Lines, name: &str, expect_coeffs: usize) -> Result<LogisticModel> {
    let tag = lines.tagged("model")?;
    if tag != name {
        return Err(Error::ModelFile(format!(
            "expected model block '{name}', found '{tag}'"
        )));
    }
    let intercept = parse_f64(lines.tagged("intercept")?, "intercept")?;
    let coefficients = parse_floats(
        lines.tagged("coefficients")?,
        expect_coeffs,
        &format!("{name} coefficients"),
    )?;
    Ok(LogisticModel {
        coefficients: Vector::from_vec(coefficients),
        intercept,
    })
}

fn read_twin(lines: &mut Lines) -> Result<TrainedModel> {
    let config_line = lines.tagged("config")?;
    let variant = LossVariant::parse(parse_kv(config_line, "variant", "config")?)?;
    let alpha = parse_f64(parse_kv(config_line, "alpha", "config")?, "alpha")?;
    let learning_rate = parse_f64(
        parse_kv(config_line, "learning_rate", "config")?,
        "learning_rate",
    )?;
    let epochs = parse_usize(parse_kv(config_line, "epochs", "config")?, "epochs")?;
    let batch_size = parse_usize(parse_kv(config_line, "batch_size", "config")?, "batch_size")?;
    let seed = parse_kv(config_line, "seed", "config")?
        .parse::<u64>()
        .map_err(|_| Error::ModelFile("config: seed is not an integer".into()))?;

    let arch_line = lines.tagged("arch")?;
    let input_dim = parse_usize(parse_kv(arch_line, "input_dim", "arch")?, "input_dim")?;
    let hidden: Vec<usize> = parse_kv(arch_line, "hidden", "arch")?
        .split(',')
        .map(|tok| parse_usize(tok, "hidden widths"))
        .collect::<Result<_>>()?;
    let linear_prefix = parse_usize(parse_kv(arch_line, "linear_prefix", "arch")?, "linear_prefix")?;
    let slope = parse_f64(parse_kv(arch_line, "slope", "arch")?, "slope")?;
    let arch = Architecture::new(input_dim, hidden, linear_prefix, slope)?;

    let best_epoch = parse_usize(lines.tagged("best_epoch")?, "best_epoch")?;
    let validation_qini = parse_f64(lines.tagged("validation_qini")?, "validation_qini")?;
    let standardizer = read_standardizer(lines, arch.num_features())?;

    let dims = arch.layer_dims();
    let mut layers = Vec::with_capacity(dims.len());
    for (i, (fan_in, fan_out)) in dims.into_iter().enumerate() {
        let header = lines.tagged("layer")?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::ModelFile(format!(
                "layer {i}: malformed dimension line '{header}'"
            )));
        }
        let idx = parse_usize(toks[0], "layer index")?;
        let rows = parse_usize(toks[1], "layer rows")?;
        let cols = parse_usize(toks[2], "layer cols")?;
        if idx != i || rows != fan_in || cols != fan_out {
            return Err(Error::ModelFile(format!(
                "layer {i}: expected dimensions {fan_in}x{fan_out}, file declares layer {idx} as {rows}x{cols}"
            )));
        }
        let weights = parse_floats(
            lines.tagged("weights")?,
            fan_in * fan_out,
            &format!("layer {i} weights"),
        )?;
        let bias = parse_floats(lines.tagged("bias")?, fan_out, &format!("layer {i} bias"))?;
        layers.push(Layer {
            weights: Matrix::from_vec(fan_in, fan_out, weights)?,
            bias: Vector::from_vec(bias),
        });
    }
    lines.tagged("end")?;

    let config = TrainConfig {
        variant,
        alpha,
        learning_rate,
        epochs,
        batch_size,
        seed,
        arch: arch.clone(),
    };
    let params = Parameters { layers };
    if !params.matches(&arch) {
        return Err(Error::ModelFile("layer shapes do not chain".into()));
    }
    Ok(TrainedModel {
        params,
        arch,
        standardizer,
        config,
        best_epoch,
        validation_qini,
        epoch_log: Vec::new(),
    })
}

pub fn load_any(path: &Path) -> Result<SavedModel> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = Lines::new(&text);
    let header = lines.next("format header")?;
    if header != FORMAT_HEADER {
        return Err(Error::ModelFile(format!(
            "unsupported format version '{header}', expected '{FORMAT_HEADER}'"
        )));
    }
    let kind = lines.tagged("kind")?;
    match kind {
        "twin" => Ok(SavedModel::Twin(read_twin(&mut lines)?)),
        "two-model" => {
            let p = parse_usize(lines.tagged("features")?, "features")?;
            let standardizer = read_standardizer(&mut lines, p)?;
            let treated = read_logistic(&mut lines, "treated", p)?;
            let control = read_logistic(&mut lines, "control", p)?;
            lines.tagged("end")?;
            Ok(SavedModel::TwoModel(TwoModelBaseline {
                treated,
                control,
                standardizer,
            }))
        }
        "interaction" => {
            let p = parse_usize(lines.tagged("features")?, "features")?;
            let standardizer = read_standardizer(&mut lines, p)?;
            let model = read_logistic(&mut lines, "interaction", 2 * p + 1)?;
            lines.tagged("end")?;
            Ok(SavedModel::Interaction(InteractionBaseline {
                model,
                standardizer,
            }))
        }
        other => Err(Error::ModelFile(format!("unknown model kind '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{fit_interaction, fit_two_model, FitOptions};
    use crate::data::{generate_parametric, split, SplitPlan, SyntheticSpec};
    use crate::losses::LossVariant;
    use crate::training::{train, TrainConfig};
    use tempfile::tempdir;

    fn trained_fixture() -> (TrainedModel, crate::data::UpliftDataset) {
        let spec = SyntheticSpec::with_default_coefficients(300, 3, 21).unwrap();
        let (ds, _) = generate_parametric(&spec).unwrap();
        let plan = SplitPlan::new(0.4, 0.6, 1, 5).unwrap();
        let parts = split(&ds, &plan).unwrap();
        let (tr, va) = &parts.folds[0];
        let arch = Architecture::new(4, vec![6, 4], 1, 0.01).unwrap();
        let config = TrainConfig {
            variant: LossVariant::TransformedOutcome,
            alpha: 0.4,
            learning_rate: 0.05,
            epochs: 2,
            batch_size: 64,
            seed: 3,
            arch,
        };
        let tm = train(&config, &ds.subset(tr).unwrap(), &ds.subset(va).unwrap()).unwrap();
        (tm, ds)
    }

    #[test]
    fn twin_round_trip_reproduces_predictions_exactly() {
        let (tm, ds) = trained_fixture();
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.txt");
        save_twin(&tm, &path).unwrap();
        let loaded = match load_any(&path).unwrap() {
            SavedModel::Twin(m) => m,
            _ => panic!("wrong kind"),
        };
        assert_eq!(loaded.params, tm.params);
        assert_eq!(loaded.best_epoch, tm.best_epoch);
        let before = tm.predict_uplift(ds.features()).unwrap();
        let after = loaded.predict_uplift(ds.features()).unwrap();
        assert_eq!(before.data(), after.data());
    }

    #[test]
    fn corrupted_dimension_line_names_the_layer() {
        let (tm, _) = trained_fixture();
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.txt");
        save_twin(&tm, &path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("layer 1 6 4", "layer 1 6 5");
        std::fs::write(&path, text).unwrap();
        let err = load_any(&path).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.txt");
        std::fs::write(&path, "uplift-model v9\nkind twin\n").unwrap();
        let err = load_any(&path).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn truncated_file_is_reported() {
        let (tm, _) = trained_fixture();
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.txt");
        save_twin(&tm, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cut: String = text.lines().take(8).collect::<Vec<_>>().join("\n");
        std::fs::write(&path, cut).unwrap();
        assert!(matches!(load_any(&path), Err(Error::ModelFile(_))));
    }

    #[test]
    fn twin_loader_rejects_other_kinds() {
        let spec = SyntheticSpec::with_default_coefficients(100, 2, 44).unwrap();
        let (ds, _) = generate_parametric(&spec).unwrap();
        let fitted = fit_interaction(&ds, &FitOptions::default()).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("inter.txt");
        save_interaction(&fitted, &path).unwrap();
        let err = crate::training::load_model(&path).unwrap_err();
        assert!(err.to_string().contains("interaction"), "{err}");
    }

    #[test]
    fn baseline_round_trips() {
        let spec = SyntheticSpec::with_default_coefficients(200, 3, 33).unwrap();
        let (ds, _) = generate_parametric(&spec).unwrap();
        let dir = tempdir().unwrap();

        let two = fit_two_model(&ds, &FitOptions::default()).unwrap();
        let path = dir.path().join("two.txt");
        save_two_model(&two, &path).unwrap();
        let loaded = load_any(&path).unwrap();
        assert_eq!(loaded.kind(), "two-model");
        assert_eq!(
            loaded.predict_uplift(ds.features()).unwrap().data(),
            two.predict_uplift(ds.features()).unwrap().data()
        );

        let inter = fit_interaction(&ds, &FitOptions::default()).unwrap();
        let path = dir.path().join("inter.txt");
        save_interaction(&inter, &path).unwrap();
        let loaded = load_any(&path).unwrap();
        assert_eq!(loaded.kind(), "interaction");
        assert_eq!(
            loaded.predict_uplift(ds.features()).unwrap().data(),
            inter.predict_uplift(ds.features()).unwrap().data()
        );
    }
}
