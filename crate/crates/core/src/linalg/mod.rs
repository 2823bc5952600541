//! Dense vectors and matrices in `f64`, plus the decompositions the rest of
//! the crate relies on.
//!
//! Everything here is a pure function of its inputs. Embeddings that arrive as
//! `f32` are widened on load.

mod pca;
pub(crate) mod random;
mod svd;

pub use pca::pca_project;
pub use random::{gaussian_matrix, random_orthogonal};
pub use svd::{svd, Svd, MAX_SWEEPS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|‖v‖ − 1|` for vectors flagged as unit length.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

/// A finite, non-empty embedding vector.
///
/// `unit` records that the producing operation normalized the vector; it is
/// cleared by anything that could change the norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    #[serde(skip)]
    unit: bool,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("embedding vector must have d >= 1".into()));
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!(
                "embedding coordinate {i} is not finite"
            )));
        }
        Ok(Self {
            values,
            unit: false,
        })
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&x| f64::from(x)).collect())
    }

    pub fn zeros(d: usize) -> Self {
        assert!(d >= 1, "dimension must be positive");
        Self {
            values: vec![0.0; d],
            unit: false,
        }
    }

    /// Wraps values the caller has already checked. Used on hot paths where
    /// every coordinate is produced by finite arithmetic on finite inputs.
    pub(crate) fn from_raw(values: Vec<f64>, unit: bool) -> Self {
        debug_assert!(!values.is_empty());
        Self { values, unit }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn is_unit(&self) -> bool {
        self.unit
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn scaled(&self, factor: f64) -> EmbeddingVector {
        Self::from_raw(self.values.iter().map(|x| x * factor).collect(), false)
    }

    pub fn sub(&self, other: &EmbeddingVector) -> Result<EmbeddingVector> {
        check_dims(self, other)?;
        Ok(Self::from_raw(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
            false,
        ))
    }
}

fn check_dims(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::dim(a.dim(), b.dim()));
    }
    Ok(())
}

pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot_slices(a, a).sqrt()
}

pub fn dot(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    check_dims(a, b)?;
    Ok(dot_slices(&a.values, &b.values))
}

/// Returns `v / ‖v‖` with the unit flag set.
pub fn normalize(v: &EmbeddingVector) -> Result<EmbeddingVector> {
    let n = v.norm();
    if n == 0.0 {
        return Err(Error::DegenerateVector);
    }
    Ok(EmbeddingVector::from_raw(
        v.values.iter().map(|x| x / n).collect(),
        true,
    ))
}

/// Row-major dense matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Input(format!(
                "matrix shape {rows}x{cols} must be positive"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::dim(rows * cols, data.len()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("matrix has non-finite entries".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix shape must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m.data[i * values.len() + i] = *v;
        }
        m
    }

    /// Builds a matrix whose rows are the given vectors.
    pub fn from_rows(rows: &[EmbeddingVector]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Input("cannot build a matrix from zero rows".into()))?;
        let cols = first.dim();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.dim() != cols {
                return Err(Error::dim(cols, r.dim()));
            }
            data.extend_from_slice(r.as_slice());
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dim(self.cols, other.rows));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · v` for a raw slice; `v.len()` must equal `cols`.
    pub(crate) fn mul_slice(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|r| dot_slices(self.row(r), v)).collect()
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::Input(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `‖MᵀM − I‖_F`, the orthogonality defect of the columns.
    pub fn orthogonality_defect(&self) -> f64 {
        let gram = self
            .transpose()
            .matmul(self)
            .expect("transpose shapes always agree");
        gram.sub(&Matrix::identity(self.cols))
            .expect("gram matrix is square")
            .frobenius_norm()
    }
}

pub fn apply_matrix(m: &Matrix, v: &EmbeddingVector) -> Result<EmbeddingVector> {
    if m.cols != v.dim() {
        return Err(Error::dim(m.cols, v.dim()));
    }
    Ok(EmbeddingVector::from_raw(m.mul_slice(v.as_slice()), false))
}
