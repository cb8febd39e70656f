//! Dense f64 matrices and vectors, plus the finite-difference gradient
//! oracle used to verify the analytic backward passes.
//!
//! Everything is 64-bit: the losses take logs of probabilities near 0
//! and 1, and gradient checks at 1e-5 relative tolerance are not stable
//! in single precision.

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} requires {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n * p);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {p}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: n, cols: p, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Standard matrix product.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        // i-k-j order keeps both b and out access sequential.
        for i in 0..self.rows {
            let a_row = &self.data[i * self.cols..(i + 1) * self.cols];
            let out_row = &mut out[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Matrix {
            rows: self.rows,
            cols: other.cols,
            data: out,
        })
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// self^T * other without materializing the transpose.
    pub fn transpose_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply transpose of {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = vec![0.0; self.cols * other.cols];
        for k in 0..self.rows {
            let a_row = &self.data[k * self.cols..(k + 1) * self.cols];
            let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
            for (i, &a) in a_row.iter().enumerate() {
                let out_row = &mut out[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Matrix {
            rows: self.cols,
            cols: other.cols,
            data: out,
        })
    }

    /// self * other^T without materializing the transpose.
    pub fn matmul_transpose(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by transpose of {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = vec![0.0; self.rows * other.rows];
        for i in 0..self.rows {
            let a_row = &self.data[i * self.cols..(i + 1) * self.cols];
            for j in 0..other.rows {
                let b_row = &other.data[j * other.cols..(j + 1) * other.cols];
                out[i * other.rows + j] =
                    a_row.iter().zip(b_row).map(|(&a, &b)| a * b).sum();
            }
        }
        Ok(Matrix {
            rows: self.rows,
            cols: other.rows,
            data: out,
        })
    }

    /// Column sums as a vector.
    pub fn column_sums(&self) -> Vector {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, &v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        Vector::from_vec(out)
    }

    fn check_same_shape(&self, other: &Matrix, op: &str) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "{op} requires equal shapes, got {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    /// Entrywise (Hadamard) product.
    pub fn mul(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "mul")?;
        Ok(self.zip_map(other, |a, b| a * b))
    }

    fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sigmoid(&self) -> Matrix {
        self.map(sigmoid)
    }

    pub fn leaky_relu(&self, slope: f64) -> Matrix {
        self.map(|v| leaky_relu(v, slope))
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Matrix {
        self.map(|v| v.clamp(lo, hi))
    }

    /// Entrywise natural log; errors on non-positive entries rather than
    /// silently producing -inf.
    pub fn ln(&self) -> Result<Matrix> {
        if let Some(v) = self.data.iter().find(|v| **v <= 0.0) {
            return Err(Error::Numeric(format!("log of non-positive value {v}")));
        }
        Ok(self.map(f64::ln))
    }

    /// Adds `v` to every row (bias broadcast).
    pub fn add_row(&self, v: &Vector) -> Result<Matrix> {
        if v.len() != self.cols {
            return Err(Error::Shape(format!(
                "cannot add length-{} vector to rows of width {}",
                v.len(),
                self.cols
            )));
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            let row = &mut out.data[i * self.cols..(i + 1) * self.cols];
            for (o, &b) in row.iter_mut().zip(v.data()) {
                *o += b;
            }
        }
        Ok(out)
    }

    /// Appends a constant column, e.g. the pinned treatment slot.
    pub fn append_constant_column(&self, value: f64) -> Matrix {
        let cols = self.cols + 1;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.push(value);
        }
        Matrix {
            rows: self.rows,
            cols,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Dense f64 vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector {
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize) -> f64 {
        self.data[i]
    }

    pub fn set(&mut self, i: usize, v: f64) {
        self.data[i] = v;
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    fn check_same_len(&self, other: &Vector, op: &str) -> Result<()> {
        if self.data.len() != other.data.len() {
            return Err(Error::Shape(format!(
                "{op} requires equal lengths, got {} and {}",
                self.data.len(),
                other.data.len()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        self.check_same_len(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        self.check_same_len(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn mul(&self, other: &Vector) -> Result<Vector> {
        self.check_same_len(other, "mul")?;
        Ok(self.zip_map(other, |a, b| a * b))
    }

    fn zip_map(&self, other: &Vector, f: impl Fn(f64, f64) -> f64) -> Vector {
        Vector {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector {
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sigmoid(&self) -> Vector {
        self.map(sigmoid)
    }

    pub fn leaky_relu(&self, slope: f64) -> Vector {
        self.map(|v| leaky_relu(v, slope))
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Vector {
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector { data }
    }
}

/// Numerically stable logistic function. Output is strictly inside (0,1)
/// for every finite input; the f64 rounding to the endpoints beyond
/// |x| ~ 37 is pulled back to the nearest representable interior value.
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    if s >= 1.0 {
        1.0 - f64::EPSILON / 2.0
    } else if s <= 0.0 {
        f64::MIN_POSITIVE
    } else {
        s
    }
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

pub fn leaky_relu_derivative(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        slope
    }
}

/// Central-difference gradient of `loss` at `theta`.
///
/// This is the verification oracle for every analytic gradient in the
/// crate; it must stay independent of the backward passes it checks.
pub fn finite_difference_gradient<F>(mut loss: F, theta: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {h}")));
    }
    let mut probe = theta.to_vec();
    let mut grad = vec![0.0; theta.len()];
    for i in 0..theta.len() {
        probe[i] = theta[i] + h;
        let up = loss(&probe)?;
        probe[i] = theta[i] - h;
        let down = loss(&probe)?;
        probe[i] = theta[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at probe of coordinate {i}"
            )));
        }
        grad[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Relative error with an absolute floor, the usual gradient-check metric.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-12)
}
