//! Classical uplift baselines: separate logistic fits per arm, and a
//! single logistic fit with treatment interaction terms. Both are convex
//! problems solved by full-batch gradient descent.

use crate::data::{ConditionalMeanModel, Standardizer, UpliftDataset};
use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Matrix, Vector};

/// Logistic regression coefficients with a separate intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub coefficients: Vector,
    pub intercept: f64,
}

impl LogisticModel {
    /// sigmoid(design . coefficients + intercept) per row.
    pub fn predict_proba(&self, design: &Matrix) -> Result<Vector> {
        if design.cols() != self.coefficients.len() {
            return Err(Error::Shape(format!(
                "model has {} coefficients, design has {} columns",
                self.coefficients.len(),
                design.cols()
            )));
        }
        Ok(Vector::from_vec(
            (0..design.rows())
                .map(|i| {
                    let eta: f64 = design
                        .row(i)
                        .iter()
                        .zip(self.coefficients.iter())
                        .map(|(&x, &w)| x * w)
                        .sum::<f64>()
                        + self.intercept;
                    sigmoid(eta)
                })
                .collect(),
        ))
    }
}

/// Full-batch gradient descent settings. The penalty is (l2/2)*|w|^2 on
/// the coefficients; the intercept is not penalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub learning_rate: f64,
    pub iterations: usize,
    pub l2: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            learning_rate: 0.1,
            iterations: 2000,
            l2: 1e-4,
        }
    }
}

/// Mean BCE plus the ridge penalty; the objective the descent minimizes.
pub fn logistic_objective(
    model: &LogisticModel,
    design: &Matrix,
    y: &Vector,
    l2: f64,
) -> Result<f64> {
    let p = model.predict_proba(design)?;
    let eps = crate::losses::PROB_EPS;
    let clamped = p.clamp(eps, 1.0 - eps);
    let bce = crate::losses::bce_loss(&clamped, y)?;
    let penalty: f64 = model.coefficients.iter().map(|w| w * w).sum::<f64>() * l2 / 2.0;
    Ok(bce + penalty)
}

/// Analytic gradient of [`logistic_objective`]: (design^T (p - y)) / n on
/// the coefficients plus l2*w, and mean(p - y) on the intercept.
pub fn logistic_gradient(
    model: &LogisticModel,
    design: &Matrix,
    y: &Vector,
    l2: f64,
) -> Result<(Vector, f64)> {
    let p = model.predict_proba(design)?;
    let n = design.rows() as f64;
    let mut grad = vec![0.0; design.cols()];
    let mut grad_intercept = 0.0;
    for i in 0..design.rows() {
        let r = p.get(i) - y.get(i);
        grad_intercept += r;
        for (g, &x) in grad.iter_mut().zip(design.row(i)) {
            *g += r * x;
        }
    }
    for (g, &w) in grad.iter_mut().zip(model.coefficients.iter()) {
        *g = *g / n + l2 * w;
    }
    Ok((Vector::from_vec(grad), grad_intercept / n))
}

/// Fits a logistic regression from a zero start. Deterministic: the
/// problem is convex and no randomness is involved.
pub fn fit_logistic(design: &Matrix, y: &Vector, opts: &FitOptions) -> Result<LogisticModel> {
    if design.rows() != y.len() {
        return Err(Error::Shape(format!(
            "design has {} rows, outcome has {}",
            design.rows(),
            y.len()
        )));
    }
    let mut model = LogisticModel {
        coefficients: Vector::zeros(design.cols()),
        intercept: 0.0,
    };
    for iter in 0..opts.iterations {
        let (grad, grad_intercept) = logistic_gradient(&model, design, y, opts.l2)?;
        if !grad.is_finite() || !grad_intercept.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite logistic gradient at iteration {iter}"
            )));
        }
        for (w, &g) in model.coefficients.data_mut().iter_mut().zip(grad.iter()) {
            *w -= opts.learning_rate * g;
        }
        model.intercept -= opts.learning_rate * grad_intercept;
    }
    Ok(model)
}

/// Two independent response models, one per arm; uplift is their
/// difference.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoModelBaseline {
    pub treated: LogisticModel,
    pub control: LogisticModel,
    pub standardizer: Standardizer,
}

impl TwoModelBaseline {
    pub fn predict_uplift(&self, features: &Matrix) -> Result<Vector> {
        let x = self.standardizer.transform(features)?;
        let m1 = self.treated.predict_proba(&x)?;
        let m0 = self.control.predict_proba(&x)?;
        m1.sub(&m0)
    }
}

impl ConditionalMeanModel for TwoModelBaseline {
    fn conditional_means(&self, features: &Matrix) -> Result<(Vector, Vector)> {
        let x = self.standardizer.transform(features)?;
        Ok((self.control.predict_proba(&x)?, self.treated.predict_proba(&x)?))
    }
}

/// Splits the dataset by arm and fits an independent logistic model on
/// each side.
pub fn fit_two_model(ds: &UpliftDataset, opts: &FitOptions) -> Result<TwoModelBaseline> {
    ds.require_both_arms("two-model fit")?;
    let standardizer = Standardizer::fit(ds.features());
    let x = standardizer.transform(ds.features())?;
    let arm_rows = |flag: f64| -> Result<(Matrix, Vector)> {
        let idx: Vec<usize> = (0..ds.n()).filter(|&i| ds.treatment().get(i) == flag).collect();
        let mut data = Vec::with_capacity(idx.len() * ds.p());
        let mut y = Vec::with_capacity(idx.len());
        for &i in &idx {
            data.extend_from_slice(x.row(i));
            y.push(ds.outcome().get(i));
        }
        Ok((Matrix::from_vec(idx.len(), ds.p(), data)?, Vector::from_vec(y)))
    };
    let (x1, y1) = arm_rows(1.0)?;
    let (x0, y0) = arm_rows(0.0)?;
    Ok(TwoModelBaseline {
        treated: fit_logistic(&x1, &y1, opts)?,
        control: fit_logistic(&x0, &y0, opts)?,
        standardizer,
    })
}

/// One logistic model on the design [X, T, X*T]. The treatment head is
/// evaluated at T=1 and T=0; the difference is the uplift.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionBaseline {
    pub model: LogisticModel,
    pub standardizer: Standardizer,
}

/// [x, t, x*t] per row.
pub fn interaction_design(x: &Matrix, t: &Vector) -> Result<Matrix> {
    if x.rows() != t.len() {
        return Err(Error::Shape(format!(
            "features have {} rows, treatment has {}",
            x.rows(),
            t.len()
        )));
    }
    let p = x.cols();
    let cols = 2 * p + 1;
    let mut data = Vec::with_capacity(x.rows() * cols);
    for i in 0..x.rows() {
        let ti = t.get(i);
        data.extend_from_slice(x.row(i));
        data.push(ti);
        data.extend(x.row(i).iter().map(|&v| v * ti));
    }
    Matrix::from_vec(x.rows(), cols, data)
}

impl InteractionBaseline {
    fn means(&self, features: &Matrix) -> Result<(Vector, Vector)> {
        let x = self.standardizer.transform(features)?;
        let n = x.rows();
        let ones = Vector::from_vec(vec![1.0; n]);
        let zeros = Vector::zeros(n);
        let m1 = self.model.predict_proba(&interaction_design(&x, &ones)?)?;
        let m0 = self.model.predict_proba(&interaction_design(&x, &zeros)?)?;
        Ok((m0, m1))
    }

    pub fn predict_uplift(&self, features: &Matrix) -> Result<Vector> {
        let (m0, m1) = self.means(features)?;
        m1.sub(&m0)
    }
}

impl ConditionalMeanModel for InteractionBaseline {
    fn conditional_means(&self, features: &Matrix) -> Result<(Vector, Vector)> {
        self.means(features)
    }
}

pub fn fit_interaction(ds: &UpliftDataset, opts: &FitOptions) -> Result<InteractionBaseline> {
    ds.require_both_arms("interaction fit")?;
    let standardizer = Standardizer::fit(ds.features());
    let x = standardizer.transform(ds.features())?;
    let design = interaction_design(&x, ds.treatment())?;
    Ok(InteractionBaseline {
        model: fit_logistic(&design, ds.outcome(), opts)?,
        standardizer,
    })
}
