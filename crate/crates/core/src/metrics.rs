//! Uplift evaluation: the Qini curve, the Qini coefficient, the Kendall
//! uplift rank correlation, and cross-run aggregation.
//!
//! All three depend on the predicted uplifts only through their ranks, so
//! any strictly monotone rescoring leaves them unchanged.

use crate::error::{Error, Result};
use crate::numerics::Vector;
use std::io::Write;
use std::path::Path;

pub const DEFAULT_QINI_GRID: usize = 100;
pub const DEFAULT_KENDALL_BINS: usize = 10;

/// Incremental-response curve over the targeted fraction phi, with the
/// centered values Q(phi) = f(phi) - phi * f(1).
#[derive(Debug, Clone, PartialEq)]
pub struct QiniCurve {
    pub grid: Vec<f64>,
    pub f_values: Vec<f64>,
    pub q_values: Vec<f64>,
    /// Grid indices where no control rows were available and f was
    /// linearly interpolated from the neighbors.
    pub interpolated: Vec<usize>,
}

impl QiniCurve {
    pub fn new(grid: Vec<f64>, f_values: Vec<f64>, interpolated: Vec<usize>) -> Result<Self> {
        if grid.len() != f_values.len() || grid.len() < 2 {
            return Err(Error::Shape(format!(
                "curve needs matching grid and values with at least two points, got {} and {}",
                grid.len(),
                f_values.len()
            )));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("grid must be strictly increasing".into()));
        }
        if grid[0] != 0.0 || *grid.last().unwrap() != 1.0 {
            return Err(Error::Config("grid must run from 0 to 1".into()));
        }
        if f_values[0] != 0.0 {
            return Err(Error::Config("f(0) must be 0".into()));
        }
        let f1 = *f_values.last().unwrap();
        let q_values = grid
            .iter()
            .zip(&f_values)
            .map(|(&phi, &f)| f - phi * f1)
            .collect();
        Ok(QiniCurve {
            grid,
            f_values,
            q_values,
            interpolated,
        })
    }

    /// f(1), the average treatment effect.
    pub fn ate(&self) -> f64 {
        *self.f_values.last().unwrap()
    }

    /// Writes columns phi, f, q; optional '#' metadata lines first.
    pub fn write_csv(&self, path: &Path, comments: &[String]) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        for line in comments {
            writeln!(file, "# {line}")?;
        }
        writeln!(file, "phi,f,q")?;
        for i in 0..self.grid.len() {
            writeln!(
                file,
                "{},{},{}",
                self.grid[i], self.f_values[i], self.q_values[i]
            )?;
        }
        Ok(())
    }
}

fn check_metric_inputs(predicted: &Vector, t: &Vector, y: &Vector) -> Result<()> {
    if predicted.len() != t.len() || predicted.len() != y.len() {
        return Err(Error::Shape(format!(
            "metric inputs must have equal lengths, got {}, {}, {}",
            predicted.len(),
            t.len(),
            y.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Config("metrics need at least one row".into()));
    }
    if !predicted.is_finite() {
        return Err(Error::Numeric("predicted uplifts contain non-finite values".into()));
    }
    let treated = t.iter().filter(|&&v| v == 1.0).count();
    if treated == 0 || treated == t.len() {
        return Err(Error::Stratification(format!(
            "metrics need both arms, got {treated} treated of {}",
            t.len()
        )));
    }
    Ok(())
}

/// Rows sorted by predicted uplift descending; stable, so ties keep their
/// original order.
fn descending_order(predicted: &Vector) -> Vec<usize> {
    let mut order: Vec<usize> = (0..predicted.len()).collect();
    order.sort_by(|&a, &b| {
        predicted
            .get(b)
            .partial_cmp(&predicted.get(a))
            .expect("finite predictions")
    });
    order
}

/// Builds the Qini curve on a uniform grid of `grid_size`+1 points.
///
/// The default formula scales the control positives in the targeted
/// prefix by the prefix's treated/control ratio, which makes f(1) equal
/// the average treatment effect. `literal` drops that ratio and divides
/// the control positives by the control count alone.
pub fn qini_curve(
    predicted: &Vector,
    t: &Vector,
    y: &Vector,
    grid_size: usize,
    literal: bool,
) -> Result<QiniCurve> {
    check_metric_inputs(predicted, t, y)?;
    if grid_size == 0 {
        return Err(Error::Config("qini grid must have at least one bin".into()));
    }
    let n = predicted.len();
    let order = descending_order(predicted);

    // Prefix counts over the sorted order.
    let mut cum_yt = vec![0.0; n + 1];
    let mut cum_yc = vec![0.0; n + 1];
    let mut cum_t = vec![0.0; n + 1];
    for (rank, &i) in order.iter().enumerate() {
        let (ti, yi) = (t.get(i), y.get(i));
        cum_yt[rank + 1] = cum_yt[rank] + yi * ti;
        cum_yc[rank + 1] = cum_yc[rank] + yi * (1.0 - ti);
        cum_t[rank + 1] = cum_t[rank] + ti;
    }
    let n_t = cum_t[n];

    let mut grid = Vec::with_capacity(grid_size + 1);
    let mut f_values = vec![0.0; grid_size + 1];
    let mut missing = vec![false; grid_size + 1];
    for k in 0..=grid_size {
        grid.push(k as f64 / grid_size as f64);
        // ceil(k*n/grid_size) in exact integer arithmetic.
        let m = (k * n).div_ceil(grid_size);
        if m == 0 {
            continue;
        }
        let treated = cum_t[m];
        let controls = m as f64 - treated;
        if controls == 0.0 {
            missing[k] = true;
            continue;
        }
        let scale = if literal { 1.0 } else { treated };
        f_values[k] = (cum_yt[m] - cum_yc[m] * scale / controls) / n_t;
    }

    // Linear interpolation of grid points whose prefix had no control
    // rows. phi = 0 is defined as 0 and phi = 1 covers both arms.
    let mut interpolated = Vec::new();
    for k in 1..grid_size {
        if !missing[k] {
            continue;
        }
        let left = (0..k).rev().find(|&j| !missing[j]).expect("f(0) is defined");
        let right = (k + 1..=grid_size)
            .find(|&j| !missing[j])
            .expect("f(1) covers both arms");
        let w = (grid[k] - grid[left]) / (grid[right] - grid[left]);
        f_values[k] = f_values[left] + w * (f_values[right] - f_values[left]);
        interpolated.push(k);
    }
    QiniCurve::new(grid, f_values, interpolated)
}

/// Trapezoid-rule area between the curve and the random-targeting
/// diagonal. Can be negative.
pub fn qini_coefficient(curve: &QiniCurve) -> f64 {
    let mut area = 0.0;
    for k in 0..curve.grid.len() - 1 {
        area += (curve.grid[k + 1] - curve.grid[k]) * (curve.q_values[k + 1] + curve.q_values[k]);
    }
    0.5 * area
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Kendall uplift rank correlation with its binning diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct KendallEstimate {
    pub rho: f64,
    pub requested_bins: usize,
    /// Bins actually used after merging those that lacked an arm.
    pub effective_bins: usize,
}

impl KendallEstimate {
    pub fn merged(&self) -> bool {
        self.effective_bins < self.requested_bins
    }
}

struct Bin {
    pred_sum: f64,
    count: f64,
    treated: f64,
    treated_pos: f64,
    control_pos: f64,
}

impl Bin {
    fn merge(&mut self, other: &Bin) {
        self.pred_sum += other.pred_sum;
        self.count += other.count;
        self.treated += other.treated;
        self.treated_pos += other.treated_pos;
        self.control_pos += other.control_pos;
    }

    fn valid(&self) -> bool {
        self.treated > 0.0 && self.treated < self.count
    }

    fn observed_uplift(&self) -> f64 {
        self.treated_pos / self.treated - self.control_pos / (self.count - self.treated)
    }

    fn predicted_mean(&self) -> f64 {
        self.pred_sum / self.count
    }
}

/// Sign agreement between per-bin average predicted uplifts and per-bin
/// observed uplifts over quantile bins of the predictions. A bin missing
/// an arm is merged with its neighbor toward the median and the count of
/// bins is reduced.
pub fn kendall_uplift(
    predicted: &Vector,
    t: &Vector,
    y: &Vector,
    bins: usize,
) -> Result<KendallEstimate> {
    check_metric_inputs(predicted, t, y)?;
    if bins < 2 {
        return Err(Error::Config(format!(
            "kendall needs at least two bins, got {bins}"
        )));
    }
    let n = predicted.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        predicted
            .get(a)
            .partial_cmp(&predicted.get(b))
            .expect("finite predictions")
    });

    // Quantile boundaries; tied values are pushed into the lower bin.
    let mut bounds = Vec::with_capacity(bins + 1);
    bounds.push(0);
    for k in 1..bins {
        let mut b = k * n / bins;
        while b > 0 && b < n && predicted.get(order[b]) == predicted.get(order[b - 1]) {
            b += 1;
        }
        bounds.push(b.min(n));
    }
    bounds.push(n);

    let mut groups: Vec<Bin> = Vec::new();
    for w in bounds.windows(2) {
        let mut bin = Bin {
            pred_sum: 0.0,
            count: 0.0,
            treated: 0.0,
            treated_pos: 0.0,
            control_pos: 0.0,
        };
        for &i in &order[w[0]..w[1]] {
            bin.pred_sum += predicted.get(i);
            bin.count += 1.0;
            let (ti, yi) = (t.get(i), y.get(i));
            bin.treated += ti;
            bin.treated_pos += ti * yi;
            bin.control_pos += (1.0 - ti) * yi;
        }
        if bin.count > 0.0 {
            groups.push(bin);
        }
    }

    // Merge invalid bins toward the median until every bin has both arms.
    loop {
        let Some(idx) = groups.iter().position(|b| !b.valid()) else {
            break;
        };
        if groups.len() <= 1 {
            return Err(Error::Stratification(
                "cannot form a bin containing both arms".into(),
            ));
        }
        let toward_right = idx < groups.len() / 2;
        if toward_right && idx + 1 < groups.len() {
            let removed = groups.remove(idx);
            groups[idx].merge(&removed);
        } else if idx > 0 {
            let removed = groups.remove(idx);
            groups[idx - 1].merge(&removed);
        } else {
            let removed = groups.remove(1);
            groups[0].merge(&removed);
        }
    }
    let k = groups.len();
    if k < 2 {
        return Err(Error::Stratification(
            "fewer than two bins with both arms; cannot rank".into(),
        ));
    }

    let pred_means: Vec<f64> = groups.iter().map(Bin::predicted_mean).collect();
    let obs: Vec<f64> = groups.iter().map(Bin::observed_uplift).collect();
    let mut total = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            total += sign(pred_means[i] - pred_means[j]) * sign(obs[i] - obs[j]);
        }
    }
    let rho = 2.0 * total / (k as f64 * (k - 1) as f64);
    Ok(KendallEstimate {
        rho,
        requested_bins: bins,
        effective_bins: k,
    })
}

/// One run's metric values plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub qini: f64,
    pub kendall: f64,
    pub qini_interpolated_points: usize,
    pub kendall_effective_bins: usize,
    pub kendall_requested_bins: usize,
}

/// Scores one model on one split: Qini coefficient and Kendall rank
/// correlation with the given grid and bin counts.
pub fn evaluate(
    predicted: &Vector,
    t: &Vector,
    y: &Vector,
    qini_grid: usize,
    kendall_bins: usize,
    literal: bool,
) -> Result<EvalReport> {
    let curve = qini_curve(predicted, t, y, qini_grid, literal)?;
    let kendall = kendall_uplift(predicted, t, y, kendall_bins)?;
    Ok(EvalReport {
        qini: qini_coefficient(&curve),
        kendall: kendall.rho,
        qini_interpolated_points: curve.interpolated.len(),
        kendall_effective_bins: kendall.effective_bins,
        kendall_requested_bins: kendall.requested_bins,
    })
}

/// Mean and twice the standard error of a set of run values.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub two_se: f64,
}

pub fn summarize(values: &[f64]) -> Result<SummaryStat> {
    if values.len() < 2 {
        return Err(Error::Aggregation(format!(
            "need at least two runs, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    Ok(SummaryStat {
        mean,
        two_se: 2.0 * se,
    })
}

/// Cross-run aggregate: mean +/- 2 standard errors per metric.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub runs: usize,
    pub qini: SummaryStat,
    pub kendall: SummaryStat,
}

pub fn aggregate(reports: &[EvalReport]) -> Result<AggregateReport> {
    let qini: Vec<f64> = reports.iter().map(|r| r.qini).collect();
    let kendall: Vec<f64> = reports.iter().map(|r| r.kendall).collect();
    Ok(AggregateReport {
        runs: reports.len(),
        qini: summarize(&qini)?,
        kendall: summarize(&kendall)?,
    })
}
