//! Python bindings: datasets, the twin network, the classical baselines,
//! and the rank-based evaluation metrics.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use std::path::PathBuf;
use uplift_core::baselines::FitOptions;
use uplift_core::data as core_data;
use uplift_core::losses::LossVariant;
use uplift_core::metrics as core_metrics;
use uplift_core::model::Architecture;
use uplift_core::numerics::{Matrix, Vector};
use uplift_core::persist;
use uplift_core::training::{self, TrainConfig};

fn to_py(err: uplift_core::Error) -> PyErr {
    use uplift_core::Error as E;
    match err {
        E::Io(e) => PyIOError::new_err(e.to_string()),
        E::Numeric(_) | E::Diverged { .. } => PyRuntimeError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(to_py)
}

/// An immutable randomized-trial dataset: covariates, binary treatment,
/// binary outcome, constant propensity.
#[pyclass(from_py_object)]
#[derive(Clone)]
struct Dataset {
    inner: core_data::UpliftDataset,
}

#[pymethods]
impl Dataset {
    /// Builds a dataset from plain lists.
    #[staticmethod]
    #[pyo3(signature = (features, treatment, outcome, propensity=None))]
    fn from_arrays(
        features: Vec<Vec<f64>>,
        treatment: Vec<f64>,
        outcome: Vec<f64>,
        propensity: Option<f64>,
    ) -> PyResult<Self> {
        let n = treatment.len();
        let e = match propensity {
            Some(e) => e,
            None => treatment.iter().filter(|&&t| t == 1.0).count() as f64 / n.max(1) as f64,
        };
        let matrix = matrix_from_rows(features)?;
        let names = (1..=matrix.cols()).map(|j| format!("x{j}")).collect();
        let inner = core_data::UpliftDataset::new(
            matrix,
            Vector::from_vec(treatment),
            Vector::from_vec(outcome),
            e,
            names,
        )
        .map_err(to_py)?;
        Ok(Dataset { inner })
    }

    /// Loads a header-first CSV; '#' lines are skipped.
    #[staticmethod]
    #[pyo3(signature = (path, outcome_col="outcome", treatment_col="treatment", propensity=None))]
    fn load_csv(
        path: PathBuf,
        outcome_col: &str,
        treatment_col: &str,
        propensity: Option<f64>,
    ) -> PyResult<Self> {
        let inner =
            core_data::load_csv(&path, outcome_col, treatment_col, propensity).map_err(to_py)?;
        Ok(Dataset { inner })
    }

    /// Draws a parametric synthetic trial; returns (dataset, true_uplift).
    #[staticmethod]
    fn simulate(n: usize, p: usize, seed: u64) -> PyResult<(Self, Vec<f64>)> {
        let spec = core_data::SyntheticSpec::with_default_coefficients(n, p, seed).map_err(to_py)?;
        let (inner, truth) = core_data::generate_parametric(&spec).map_err(to_py)?;
        Ok((Dataset { inner }, truth.data().to_vec()))
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        core_data::write_csv(&self.inner, &path, &[]).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn propensity(&self) -> f64 {
        self.inner.propensity()
    }

    fn ate(&self) -> PyResult<f64> {
        self.inner.empirical_ate().map_err(to_py)
    }

    fn treatment(&self) -> Vec<f64> {
        self.inner.treatment().data().to_vec()
    }

    fn outcome(&self) -> Vec<f64> {
        self.inner.outcome().data().to_vec()
    }

    fn features(&self) -> Vec<Vec<f64>> {
        (0..self.inner.n())
            .map(|i| self.inner.features().row(i).to_vec())
            .collect()
    }

    /// The transformed outcome Z = T*Y/e - (1-T)*Y/(1-e).
    fn transformed_outcome(&self) -> Vec<f64> {
        core_data::transform_outcome(&self.inner).data().to_vec()
    }

    /// Down-samples the majority arm to a balanced design.
    fn downsample_to_balanced(&self, seed: u64) -> PyResult<Self> {
        Ok(Dataset {
            inner: core_data::downsample_to_balanced(&self.inner, seed).map_err(to_py)?,
        })
    }

    fn subset(&self, indices: Vec<usize>) -> PyResult<Self> {
        Ok(Dataset {
            inner: self.inner.subset(&indices).map_err(to_py)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, p={}, propensity={})",
            self.inner.n(),
            self.inner.p(),
            self.inner.propensity()
        )
    }
}

/// The shared-weight twin network after training.
#[pyclass]
struct TwinModel {
    inner: training::TrainedModel,
}

#[pymethods]
impl TwinModel {
    /// Trains with minibatch SGD and best-on-validation selection.
    /// `variant` is "to", "ie", or "to-l1".
    #[staticmethod]
    #[pyo3(signature = (
        train, valid, variant="ie", alpha=0.5, learning_rate=0.03, epochs=200,
        batch_size=256, seed=0, hidden=vec![200, 200, 300, 100, 50, 10],
        linear_prefix=2, leaky_slope=0.01
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        train: &Dataset,
        valid: &Dataset,
        variant: &str,
        alpha: f64,
        learning_rate: f64,
        epochs: usize,
        batch_size: usize,
        seed: u64,
        hidden: Vec<usize>,
        linear_prefix: usize,
        leaky_slope: f64,
    ) -> PyResult<Self> {
        let variant = LossVariant::parse(variant).map_err(to_py)?;
        let arch = Architecture::new(train.inner.p() + 1, hidden, linear_prefix, leaky_slope)
            .map_err(to_py)?;
        let config = TrainConfig {
            variant,
            alpha,
            learning_rate,
            epochs,
            batch_size,
            seed,
            arch,
        };
        let inner = training::train(&config, &train.inner, &valid.inner).map_err(to_py)?;
        Ok(TwinModel { inner })
    }

    fn predict_uplift(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = matrix_from_rows(features)?;
        Ok(self.inner.predict_uplift(&x).map_err(to_py)?.data().to_vec())
    }

    /// (mu0, mu1) per row.
    fn conditional_means(&self, features: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        use uplift_core::data::ConditionalMeanModel;
        let x = matrix_from_rows(features)?;
        let (m0, m1) = self.inner.conditional_means(&x).map_err(to_py)?;
        Ok((m0.data().to_vec(), m1.data().to_vec()))
    }

    #[getter]
    fn best_epoch(&self) -> usize {
        self.inner.best_epoch
    }

    #[getter]
    fn validation_qini(&self) -> f64 {
        self.inner.validation_qini
    }

    /// Validation Qini per epoch.
    fn epoch_log(&self) -> Vec<f64> {
        self.inner.epoch_log.clone()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        training::save_model(&self.inner, &path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(TwinModel {
            inner: training::load_model(&path).map_err(to_py)?,
        })
    }
}

/// Any saved model: a twin network or one of the logistic baselines.
#[pyclass]
struct Model {
    inner: persist::SavedModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Model {
            inner: persist::load_any(&path).map_err(to_py)?,
        })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind()
    }

    fn predict_uplift(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = matrix_from_rows(features)?;
        Ok(self.inner.predict_uplift(&x).map_err(to_py)?.data().to_vec())
    }

    fn conditional_means(&self, features: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let x = matrix_from_rows(features)?;
        let (m0, m1) = self.inner.conditional_means(&x).map_err(to_py)?;
        Ok((m0.data().to_vec(), m1.data().to_vec()))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        persist::save(&self.inner, &path).map_err(to_py)
    }
}

/// Fits one logistic response model per arm.
#[pyfunction]
fn fit_two_model(ds: &Dataset) -> PyResult<Model> {
    let fitted =
        uplift_core::baselines::fit_two_model(&ds.inner, &FitOptions::default()).map_err(to_py)?;
    Ok(Model {
        inner: persist::SavedModel::TwoModel(fitted),
    })
}

/// Fits a single logistic model on [X, T, X*T].
#[pyfunction]
fn fit_interaction(ds: &Dataset) -> PyResult<Model> {
    let fitted =
        uplift_core::baselines::fit_interaction(&ds.inner, &FitOptions::default()).map_err(to_py)?;
    Ok(Model {
        inner: persist::SavedModel::Interaction(fitted),
    })
}

/// Bootstrap replicate with outcomes redrawn from the model's
/// conditional means.
#[pyfunction]
fn generate_bootstrap(source: &Dataset, model: &Model, seed: u64) -> PyResult<Dataset> {
    Ok(Dataset {
        inner: core_data::generate_bootstrap(&source.inner, &model.inner, seed).map_err(to_py)?,
    })
}

fn vectors(
    scores: Vec<f64>,
    treatment: Vec<f64>,
    outcome: Vec<f64>,
) -> (Vector, Vector, Vector) {
    (
        Vector::from_vec(scores),
        Vector::from_vec(treatment),
        Vector::from_vec(outcome),
    )
}

/// Qini curve points (phi, f, q) on a uniform grid.
#[pyfunction]
#[pyo3(signature = (scores, treatment, outcome, grid=100, literal=false))]
fn qini_curve(
    scores: Vec<f64>,
    treatment: Vec<f64>,
    outcome: Vec<f64>,
    grid: usize,
    literal: bool,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (s, t, y) = vectors(scores, treatment, outcome);
    let curve = core_metrics::qini_curve(&s, &t, &y, grid, literal).map_err(to_py)?;
    Ok((curve.grid, curve.f_values, curve.q_values))
}

/// Trapezoid-rule Qini coefficient.
#[pyfunction]
#[pyo3(signature = (scores, treatment, outcome, grid=100, literal=false))]
fn qini_coefficient(
    scores: Vec<f64>,
    treatment: Vec<f64>,
    outcome: Vec<f64>,
    grid: usize,
    literal: bool,
) -> PyResult<f64> {
    let (s, t, y) = vectors(scores, treatment, outcome);
    let curve = core_metrics::qini_curve(&s, &t, &y, grid, literal).map_err(to_py)?;
    Ok(core_metrics::qini_coefficient(&curve))
}

/// Kendall uplift rank correlation over quantile bins.
#[pyfunction]
#[pyo3(signature = (scores, treatment, outcome, bins=10))]
fn kendall_uplift(
    scores: Vec<f64>,
    treatment: Vec<f64>,
    outcome: Vec<f64>,
    bins: usize,
) -> PyResult<f64> {
    let (s, t, y) = vectors(scores, treatment, outcome);
    Ok(core_metrics::kendall_uplift(&s, &t, &y, bins)
        .map_err(to_py)?
        .rho)
}

#[pymodule]
fn uplift_rs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<TwinModel>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(fit_two_model, m)?)?;
    m.add_function(wrap_pyfunction!(fit_interaction, m)?)?;
    m.add_function(wrap_pyfunction!(generate_bootstrap, m)?)?;
    m.add_function(wrap_pyfunction!(qini_curve, m)?)?;
    m.add_function(wrap_pyfunction!(qini_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(kendall_uplift, m)?)?;
    Ok(())
}
