//! RCT dataset representation, CSV ingestion, the transformed outcome,
//! deterministic splitting, and the synthetic generators used by the
//! benchmark suite.

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Matrix, Vector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::Write;
use std::path::Path;

/// Probability floor reused when a generator's conditional means sit on
/// the boundary of [0,1].
use crate::losses::PROB_EPS;

/// Immutable table of covariates, binary treatment flags, binary
/// outcomes, and the constant propensity of the design.
#[derive(Debug, Clone)]
pub struct UpliftDataset {
    features: Matrix,
    treatment: Vector,
    outcome: Vector,
    propensity: f64,
    feature_names: Vec<String>,
}

impl UpliftDataset {
    pub fn new(
        features: Matrix,
        treatment: Vector,
        outcome: Vector,
        propensity: f64,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.rows();
        if n == 0 {
            return Err(Error::Config("dataset must contain at least one row".into()));
        }
        if treatment.len() != n || outcome.len() != n {
            return Err(Error::Shape(format!(
                "features have {n} rows but treatment has {} and outcome has {}",
                treatment.len(),
                outcome.len()
            )));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::Shape(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.cols()
            )));
        }
        if treatment.iter().any(|&t| t != 0.0 && t != 1.0) {
            return Err(Error::Config("treatment must contain only 0 or 1".into()));
        }
        if outcome.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::Config("outcome must contain only 0 or 1".into()));
        }
        if !(propensity > 0.0 && propensity < 1.0) {
            return Err(Error::Config(format!(
                "propensity must lie strictly inside (0,1), got {propensity}"
            )));
        }
        if !features.is_finite() {
            return Err(Error::Numeric("features contain non-finite values".into()));
        }
        Ok(UpliftDataset {
            features,
            treatment,
            outcome,
            propensity,
            feature_names,
        })
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn p(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn treatment(&self) -> &Vector {
        &self.treatment
    }

    pub fn outcome(&self) -> &Vector {
        &self.outcome
    }

    pub fn propensity(&self) -> f64 {
        self.propensity
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn num_treated(&self) -> usize {
        self.treatment.iter().filter(|&&t| t == 1.0).count()
    }

    pub fn has_both_arms(&self) -> bool {
        let treated = self.num_treated();
        treated > 0 && treated < self.n()
    }

    /// Datasets used for training or metrics need at least one row per arm.
    pub fn require_both_arms(&self, context: &str) -> Result<()> {
        if !self.has_both_arms() {
            return Err(Error::Stratification(format!(
                "{context} needs at least one treated and one control row \
                 ({} treated of {})",
                self.num_treated(),
                self.n()
            )));
        }
        Ok(())
    }

    /// Treated response rate minus control response rate.
    pub fn empirical_ate(&self) -> Result<f64> {
        self.require_both_arms("empirical ATE")?;
        let (mut ty, mut cy, mut nt, mut nc) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..self.n() {
            if self.treatment.get(i) == 1.0 {
                nt += 1.0;
                ty += self.outcome.get(i);
            } else {
                nc += 1.0;
                cy += self.outcome.get(i);
            }
        }
        Ok(ty / nt - cy / nc)
    }

    /// Extracts the given rows, keeping the design propensity.
    pub fn subset(&self, indices: &[usize]) -> Result<UpliftDataset> {
        if indices.is_empty() {
            return Err(Error::Config("subset must select at least one row".into()));
        }
        let p = self.p();
        let mut data = Vec::with_capacity(indices.len() * p);
        let mut t = Vec::with_capacity(indices.len());
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n() {
                return Err(Error::Shape(format!(
                    "row index {i} out of range for {} rows",
                    self.n()
                )));
            }
            data.extend_from_slice(self.features.row(i));
            t.push(self.treatment.get(i));
            y.push(self.outcome.get(i));
        }
        UpliftDataset::new(
            Matrix::from_vec(indices.len(), p, data)?,
            Vector::from_vec(t),
            Vector::from_vec(y),
            self.propensity,
            self.feature_names.clone(),
        )
    }
}

/// Any fitted model that exposes conditional means, used as the outcome
/// generator for bootstrap replicates.
pub trait ConditionalMeanModel {
    /// Returns (m0, m1) per row.
    fn conditional_means(&self, features: &Matrix) -> Result<(Vector, Vector)>;
}

/// The transformed outcome: z_i = t_i y_i / e - (1-t_i) y_i / (1-e). Its
/// conditional expectation equals the uplift under randomization.
pub fn transform_outcome(ds: &UpliftDataset) -> Vector {
    let e = ds.propensity();
    Vector::from_vec(
        (0..ds.n())
            .map(|i| {
                let t = ds.treatment().get(i);
                let y = ds.outcome().get(i);
                t * y / e - (1.0 - t) * y / (1.0 - e)
            })
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

fn parse_binary(field: &str, path: &str, row: usize, column: &str) -> Result<f64> {
    match field.trim() {
        "0" => Ok(0.0),
        "1" => Ok(1.0),
        other => Err(Error::Parse {
            path: path.to_string(),
            row,
            column: column.to_string(),
            message: format!("expected literal 0 or 1, got '{other}'"),
        }),
    }
}

/// Loads a UTF-8, comma-separated file with a header row. Lines starting
/// with '#' are metadata comments and are skipped. Every non-designated
/// column is a feature; no missing values are permitted.
pub fn load_csv(
    path: &Path,
    outcome_col: &str,
    treatment_col: &str,
    propensity: Option<f64>,
) -> Result<UpliftDataset> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: display.clone(),
            row: 0,
            column: String::new(),
            message: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: display.clone(),
            row: 1,
            column: String::new(),
            message: e.to_string(),
        })?
        .clone();
    let col_index = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: display.clone(),
            row: 1,
            column: name.to_string(),
            message: "column not found in header".to_string(),
        })
    };
    let y_idx = col_index(outcome_col)?;
    let t_idx = col_index(treatment_col)?;
    if y_idx == t_idx {
        return Err(Error::Config(format!(
            "outcome and treatment columns must differ, both are '{outcome_col}'"
        )));
    }
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != y_idx && *i != t_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut treatment = Vec::new();
    let mut outcome = Vec::new();
    for (rec_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: display.clone(),
            row: rec_idx + 2,
            column: String::new(),
            message: e.to_string(),
        })?;
        let row_no = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(rec_idx + 2);
        if record.len() != headers.len() {
            return Err(Error::Parse {
                path: display.clone(),
                row: row_no,
                column: String::new(),
                message: format!("expected {} fields, got {}", headers.len(), record.len()),
            });
        }
        let mut feats = Vec::with_capacity(feature_names.len());
        for (i, field) in record.iter().enumerate() {
            if i == y_idx {
                outcome.push(parse_binary(field, &display, row_no, outcome_col)?);
            } else if i == t_idx {
                treatment.push(parse_binary(field, &display, row_no, treatment_col)?);
            } else {
                let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
                    path: display.clone(),
                    row: row_no,
                    column: headers[i].to_string(),
                    message: format!("'{field}' is not a number"),
                })?;
                if !value.is_finite() {
                    return Err(Error::Parse {
                        path: display.clone(),
                        row: row_no,
                        column: headers[i].to_string(),
                        message: format!("non-finite value '{field}'"),
                    });
                }
                feats.push(value);
            }
        }
        rows.push(feats);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: display,
            row: 1,
            column: String::new(),
            message: "file contains no data rows".to_string(),
        });
    }
    let n = rows.len();
    let e = match propensity {
        Some(e) => e,
        None => treatment.iter().filter(|&&t| t == 1.0).count() as f64 / n as f64,
    };
    if !(e > 0.0 && e < 1.0) {
        return Err(Error::Stratification(format!(
            "estimated propensity {e} is degenerate; the file needs both treated \
             and control rows (or pass an explicit propensity)"
        )));
    }
    UpliftDataset::new(
        Matrix::from_rows(&rows)?,
        Vector::from_vec(treatment),
        Vector::from_vec(outcome),
        e,
        feature_names,
    )
}

/// Writes the dataset with a header row, optionally preceded by '#'
/// metadata comments. Floats use the shortest exact representation, so a
/// write-then-load round trip reproduces every value bit for bit.
pub fn write_csv(ds: &UpliftDataset, path: &Path, comments: &[String]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for line in comments {
        writeln!(file, "# {line}")?;
    }
    let mut header: Vec<&str> = ds.feature_names().iter().map(|s| s.as_str()).collect();
    header.push("treatment");
    header.push("outcome");
    writeln!(file, "{}", header.join(","))?;
    for i in 0..ds.n() {
        let mut fields: Vec<String> = ds.features().row(i).iter().map(|v| v.to_string()).collect();
        fields.push((ds.treatment().get(i) as i64).to_string());
        fields.push((ds.outcome().get(i) as i64).to_string());
        writeln!(file, "{}", fields.join(","))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

/// Holdout-then-repeated-shuffle plan: the holdout is drawn once and
/// never reused; the remainder is shuffled `k` times into train/valid
/// pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub holdout_fraction: f64,
    pub train_fraction: f64,
    pub k: usize,
    pub seed: u64,
}

impl SplitPlan {
    pub fn new(holdout_fraction: f64, train_fraction: f64, k: usize, seed: u64) -> Result<Self> {
        if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
            return Err(Error::Config(format!(
                "holdout fraction must lie in (0,1), got {holdout_fraction}"
            )));
        }
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction must lie in (0,1), got {train_fraction}"
            )));
        }
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        Ok(SplitPlan {
            holdout_fraction,
            train_fraction,
            k,
            seed,
        })
    }
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            holdout_fraction: 0.30,
            train_fraction: 0.60,
            k: 10,
            seed: 0,
        }
    }
}

/// Row-index view of a split; materialize parts with
/// [`UpliftDataset::subset`].
#[derive(Debug, Clone, PartialEq)]
pub struct SplitIndices {
    pub holdout: Vec<usize>,
    pub folds: Vec<(Vec<usize>, Vec<usize>)>,
}

fn check_part(ds: &UpliftDataset, indices: &[usize], what: &str) -> Result<()> {
    let treated = indices
        .iter()
        .filter(|&&i| ds.treatment().get(i) == 1.0)
        .count();
    if indices.is_empty() || treated == 0 || treated == indices.len() {
        return Err(Error::Stratification(format!(
            "{what} has {treated} treated rows out of {}; every part needs both arms",
            indices.len()
        )));
    }
    Ok(())
}

fn shuffle_folds_of(
    ds: &UpliftDataset,
    pool: &[usize],
    train_fraction: f64,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let train_len = ((pool.len() as f64) * train_fraction).round() as usize;
    if train_len == 0 || train_len >= pool.len() {
        return Err(Error::Config(format!(
            "train fraction {train_fraction} leaves no usable split of {} rows",
            pool.len()
        )));
    }
    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let mut shuffled = pool.to_vec();
        shuffled.shuffle(rng);
        let train = shuffled[..train_len].to_vec();
        let valid = shuffled[train_len..].to_vec();
        check_part(ds, &train, &format!("fold {fold} train part"))?;
        check_part(ds, &valid, &format!("fold {fold} validation part"))?;
        folds.push((train, valid));
    }
    Ok(folds)
}

/// k independent train/valid shuffles over the whole dataset, without a
/// holdout. Used by the tuning protocol, whose caller has already set the
/// holdout aside.
pub fn shuffle_folds(
    ds: &UpliftDataset,
    train_fraction: f64,
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0,1), got {train_fraction}"
        )));
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<usize> = (0..ds.n()).collect();
    shuffle_folds_of(ds, &pool, train_fraction, k, &mut rng)
}

/// Draws the holdout once with the plan seed, then k independent
/// train/valid shuffles of the remainder. Deterministic given the plan.
pub fn split(ds: &UpliftDataset, plan: &SplitPlan) -> Result<SplitIndices> {
    let n = ds.n();
    let holdout_len = ((n as f64) * plan.holdout_fraction).round() as usize;
    if holdout_len == 0 || holdout_len >= n {
        return Err(Error::Config(format!(
            "holdout fraction {} leaves no usable split of {n} rows",
            plan.holdout_fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let holdout = order[..holdout_len].to_vec();
    let remainder = order[holdout_len..].to_vec();
    check_part(ds, &holdout, "holdout")?;
    check_part(ds, &remainder, "remainder")?;
    let folds = shuffle_folds_of(ds, &remainder, plan.train_fraction, plan.k, &mut rng)?;
    Ok(SplitIndices { holdout, folds })
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

/// Per-feature zero-mean unit-variance scaling, fitted on a training part
/// only and reapplied elsewhere. Stored alongside trained models.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &Matrix) -> Standardizer {
        let (n, p) = (features.rows(), features.cols());
        let mut means = vec![0.0; p];
        for i in 0..n {
            for (m, &v) in means.iter_mut().zip(features.row(i)) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n as f64;
        }
        let mut vars = vec![0.0; p];
        for i in 0..n {
            for ((var, &m), &v) in vars.iter_mut().zip(&means).zip(features.row(i)) {
                let d = v - m;
                *var += d * d;
            }
        }
        let stds = vars
            .iter()
            .map(|&v| {
                let s = (v / n as f64).sqrt();
                if s < 1e-12 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Standardizer { means, stds }
    }

    pub fn transform(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.means.len() {
            return Err(Error::Shape(format!(
                "standardizer fitted on {} features, got {}",
                self.means.len(),
                features.cols()
            )));
        }
        let (n, p) = (features.rows(), features.cols());
        let mut data = Vec::with_capacity(n * p);
        for i in 0..n {
            for ((&v, &m), &s) in features.row(i).iter().zip(&self.means).zip(&self.stds) {
                data.push((v - m) / s);
            }
        }
        Matrix::from_vec(n, p, data)
    }
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stream.wrapping_add(1))
}

/// Parametric generative law: Gaussian covariates, logistic link, sparse
/// treatment-interaction coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub baseline_intercept: f64,
    pub baseline_coeffs: Vector,
    pub uplift_intercept: f64,
    pub uplift_coeffs: Vector,
    pub sparsity: f64,
}

impl SyntheticSpec {
    /// Default coefficient law: baseline coefficients iid N(0, 1/sqrt(p))
    /// in standard deviation, ceil(sparsity*p) interaction entries of
    /// magnitude 0.5 with random signs, baseline intercept placed so the
    /// control response rate is near 10%, uplift intercept 0.05.
    pub fn with_default_coefficients(n: usize, p: usize, seed: u64) -> Result<SyntheticSpec> {
        if n < 2 || p < 1 {
            return Err(Error::Config(format!(
                "synthetic spec needs n >= 2 and p >= 1, got n={n}, p={p}"
            )));
        }
        let sparsity = 0.1;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
        let sd = 1.0 / (p as f64).sqrt();
        let beta: Vec<f64> = (0..p)
            .map(|_| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let nonzero = ((sparsity * p as f64).ceil() as usize).clamp(1, p);
        let mut positions: Vec<usize> = (0..p).collect();
        positions.shuffle(&mut rng);
        let mut gamma = vec![0.0; p];
        for &j in positions.iter().take(nonzero) {
            gamma[j] = if rng.gen_bool(0.5) { 0.5 } else { -0.5 };
        }
        // Mean of sigmoid(b0 + S) with S ~ N(0, var) is approximately
        // sigmoid(b0 / sqrt(1 + pi*var/8)); invert at a 10% base rate.
        let var: f64 = beta.iter().map(|b| b * b).sum();
        let base_rate: f64 = 0.10;
        let logit = (base_rate / (1.0 - base_rate)).ln();
        let baseline_intercept = logit * (1.0 + std::f64::consts::PI * var / 8.0).sqrt();
        Ok(SyntheticSpec {
            n,
            p,
            seed,
            baseline_intercept,
            baseline_coeffs: Vector::from_vec(beta),
            uplift_intercept: 0.05,
            uplift_coeffs: Vector::from_vec(gamma),
            sparsity,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p < 1 {
            return Err(Error::Config(format!(
                "synthetic spec needs n >= 2 and p >= 1, got n={}, p={}",
                self.n, self.p
            )));
        }
        if self.baseline_coeffs.len() != self.p || self.uplift_coeffs.len() != self.p {
            return Err(Error::Shape(format!(
                "coefficient vectors must have length p={}, got {} and {}",
                self.p,
                self.baseline_coeffs.len(),
                self.uplift_coeffs.len()
            )));
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return Err(Error::Config(format!(
                "sparsity must lie in [0,1], got {}",
                self.sparsity
            )));
        }
        Ok(())
    }

    /// Pr(Y=1 | T=t, X=x) under the generative law.
    pub fn conditional_mean(&self, x: &[f64], t: f64) -> f64 {
        let mut eta = self.baseline_intercept;
        for (j, &v) in x.iter().enumerate() {
            eta += v * self.baseline_coeffs.get(j);
        }
        if t == 1.0 {
            eta += self.uplift_intercept;
            for (j, &v) in x.iter().enumerate() {
                eta += v * self.uplift_coeffs.get(j);
            }
        }
        sigmoid(eta)
    }

    pub fn true_uplift(&self, x: &[f64]) -> f64 {
        self.conditional_mean(x, 1.0) - self.conditional_mean(x, 0.0)
    }
}

/// Draws a fully synthetic RCT: X iid standard normal, T Bernoulli(1/2)
/// independent of X, Y Bernoulli through the logistic law. Returns the
/// dataset and the true per-row uplift.
pub fn generate_parametric(spec: &SyntheticSpec) -> Result<(UpliftDataset, Vector)> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 2));
    let mut data = Vec::with_capacity(n * p);
    for _ in 0..n * p {
        data.push(<StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
    }
    let features = Matrix::from_vec(n, p, data)?;
    let mut treatment = Vec::with_capacity(n);
    let mut outcome = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for i in 0..n {
        let t = f64::from(rng.gen_bool(0.5));
        let prob = spec.conditional_mean(features.row(i), t);
        let y = f64::from(rng.gen_bool(prob));
        treatment.push(t);
        outcome.push(y);
        truth.push(spec.true_uplift(features.row(i)));
    }
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    let ds = UpliftDataset::new(
        features,
        Vector::from_vec(treatment),
        Vector::from_vec(outcome),
        0.5,
        names,
    )?;
    Ok((ds, Vector::from_vec(truth)))
}

/// Resamples rows with replacement and redraws each outcome from the
/// fitted model's conditional mean at the row's treatment arm. Covariates
/// and treatment flags are kept.
pub fn generate_bootstrap(
    source: &UpliftDataset,
    fitted: &dyn ConditionalMeanModel,
    seed: u64,
) -> Result<UpliftDataset> {
    let (m0, m1) = fitted.conditional_means(source.features())?;
    if m0.len() != source.n() || m1.len() != source.n() {
        return Err(Error::Shape(format!(
            "generator produced {} and {} means for {} rows",
            m0.len(),
            m1.len(),
            source.n()
        )));
    }
    for i in 0..source.n() {
        for m in [m0.get(i), m1.get(i)] {
            if !m.is_finite() || !(0.0..=1.0).contains(&m) {
                return Err(Error::Generation(format!(
                    "conditional mean {m} at row {i} lies outside [0,1]"
                )));
            }
        }
    }
    let m0 = m0.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let m1 = m1.clamp(PROB_EPS, 1.0 - PROB_EPS);

    let n = source.n();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
    let p = source.p();
    let mut data = Vec::with_capacity(n * p);
    let mut treatment = Vec::with_capacity(n);
    let mut outcome = Vec::with_capacity(n);
    for _ in 0..n {
        let i = rng.gen_range(0..n);
        data.extend_from_slice(source.features().row(i));
        let t = source.treatment().get(i);
        let mean = if t == 1.0 { m1.get(i) } else { m0.get(i) };
        treatment.push(t);
        outcome.push(f64::from(rng.gen_bool(mean)));
    }
    UpliftDataset::new(
        Matrix::from_vec(n, p, data)?,
        Vector::from_vec(treatment),
        Vector::from_vec(outcome),
        source.propensity(),
        source.feature_names().to_vec(),
    )
}

/// Down-samples the majority arm so both arms have equal counts, which
/// restores the balanced design the indirect loss requires.
pub fn downsample_to_balanced(ds: &UpliftDataset, seed: u64) -> Result<UpliftDataset> {
    ds.require_both_arms("downsampling")?;
    let treated: Vec<usize> = (0..ds.n()).filter(|&i| ds.treatment().get(i) == 1.0).collect();
    let control: Vec<usize> = (0..ds.n()).filter(|&i| ds.treatment().get(i) == 0.0).collect();
    let keep = treated.len().min(control.len());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 4));
    let sample = |rows: &[usize], rng: &mut ChaCha8Rng| -> Vec<usize> {
        if rows.len() == keep {
            rows.to_vec()
        } else {
            let mut shuffled = rows.to_vec();
            shuffled.shuffle(rng);
            let mut taken = shuffled[..keep].to_vec();
            taken.sort_unstable();
            taken
        }
    };
    let mut indices = sample(&treated, &mut rng);
    indices.extend(sample(&control, &mut rng));
    indices.sort_unstable();
    let mut subset = ds.subset(&indices)?;
    subset.propensity = 0.5;
    Ok(subset)
}
