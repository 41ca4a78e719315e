use std::fmt;

use crate::error::{MeraError, Result};

/// Dense row-major matrix of finite `f64` values.
///
/// Every residue-level representation in the engine is carried by this type:
/// sequence embeddings, text embeddings, expert outputs, parameters.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Name used throughout the public surface for residue-level blocks.
pub type EmbeddingMatrix = Matrix;

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 {
            return Err(MeraError::Dimension(
                "matrix must have at least one column".into(),
            ));
        }
        if data.len() != rows * cols {
            return Err(MeraError::Dimension(format!(
                "data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(MeraError::Evaluation(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds without the finiteness scan. Callers guarantee the invariant.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert!(cols >= 1 && data.len() == rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(cols >= 1, "matrix must have at least one column");
        Matrix::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(cols >= 1 && value.is_finite());
        Matrix::from_raw(rows, cols, vec![value; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn scalar(value: f64) -> Self {
        Matrix::filled(1, 1, value)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(MeraError::Dimension("ragged rows".into()));
        }
        Matrix::new(rows.len(), cols, rows.iter().flatten().copied().collect())
    }

    pub fn row_vector(values: &[f64]) -> Result<Self> {
        Matrix::new(1, values.len(), values.to_vec())
    }

    pub fn column_vector(values: &[f64]) -> Result<Self> {
        Matrix::new(values.len(), 1, values.to_vec())
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub(crate) fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_matrix(&self, r: usize) -> Matrix {
        Matrix::from_raw(1, self.cols, self.row(r).to_vec())
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    /// The single value of a 1x1 matrix.
    pub fn as_scalar(&self) -> Option<f64> {
        (self.rows == 1 && self.cols == 1).then(|| self.data[0])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(MeraError::Dimension(format!(
                "matmul of {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Matrix::from_raw(n, m, out))
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_transposed(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(MeraError::Dimension(format!(
                "matmul of {}x{} by transpose of {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Vec::with_capacity(self.rows * other.rows);
        for a in self.iter_rows() {
            for b in other.iter_rows() {
                out.push(dot(a, b));
            }
        }
        Ok(Matrix::from_raw(self.rows, other.rows, out))
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        assert!(self.rows > 0, "transpose of a matrix with zero rows");
        Matrix::from_raw(self.cols, self.rows, out)
    }

    fn check_same_shape(&self, other: &Matrix, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(MeraError::Dimension(format!(
                "{what} of {}x{} and {}x{}",
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

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "hadamard product")?;
        Ok(self.zip_map(other, |a, b| a * b))
    }

    /// Adds a `1 x cols` row to every row.
    pub fn add_row_broadcast(&self, bias: &Matrix) -> Result<Matrix> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(MeraError::Dimension(format!(
                "bias {}x{} cannot broadcast over {}x{}",
                bias.rows, bias.cols, self.rows, self.cols
            )));
        }
        let mut out = self.data.clone();
        for row in out.chunks_exact_mut(self.cols) {
            for (o, b) in row.iter_mut().zip(&bias.data) {
                *o += b;
            }
        }
        Ok(Matrix::from_raw(self.rows, self.cols, out))
    }

    pub fn scale(&self, k: f64) -> Matrix {
        self.map(|v| v * k)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub(crate) fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        Matrix::from_raw(
            self.rows,
            self.cols,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Column-wise arithmetic mean as a `1 x cols` row.
    pub fn column_mean(&self) -> Result<Matrix> {
        if self.rows == 0 {
            return Err(MeraError::EmptyInput(
                "column mean of a matrix with zero rows".into(),
            ));
        }
        let mut acc = vec![0.0; self.cols];
        for row in self.iter_rows() {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let n = self.rows as f64;
        Ok(Matrix::from_raw(
            1,
            self.cols,
            acc.into_iter().map(|v| v / n).collect(),
        ))
    }

    pub fn select_rows(&self, indices: &[usize]) -> Result<Matrix> {
        let mut out = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(MeraError::Dimension(format!(
                    "row index {i} out of range for {} rows",
                    self.rows
                )));
            }
            out.extend_from_slice(self.row(i));
        }
        Ok(Matrix::from_raw(indices.len(), self.cols, out))
    }

    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Matrix> {
        if len == 0 || start + len > self.cols {
            return Err(MeraError::Dimension(format!(
                "column slice {start}..{} of {} columns",
                start + len,
                self.cols
            )));
        }
        let mut out = Vec::with_capacity(self.rows * len);
        for row in self.iter_rows() {
            out.extend_from_slice(&row[start..start + len]);
        }
        Ok(Matrix::from_raw(self.rows, len, out))
    }

    pub fn concat_cols(parts: &[&Matrix]) -> Result<Matrix> {
        let first = parts
            .first()
            .ok_or_else(|| MeraError::EmptyInput("column concatenation of nothing".into()))?;
        let rows = first.rows;
        if let Some(bad) = parts.iter().find(|p| p.rows != rows) {
            return Err(MeraError::Dimension(format!(
                "concatenating {} rows with {} rows",
                rows, bad.rows
            )));
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                out.extend_from_slice(p.row(r));
            }
        }
        Ok(Matrix::from_raw(rows, cols, out))
    }

    pub fn concat_rows(parts: &[&Matrix]) -> Result<Matrix> {
        let first = parts
            .first()
            .ok_or_else(|| MeraError::EmptyInput("row concatenation of nothing".into()))?;
        let cols = first.cols;
        if let Some(bad) = parts.iter().find(|p| p.cols != cols) {
            return Err(MeraError::Dimension(format!(
                "stacking {} columns with {} columns",
                cols, bad.cols
            )));
        }
        let data = parts
            .iter()
            .flat_map(|p| p.data.iter().copied())
            .collect::<Vec<_>>();
        Ok(Matrix::from_raw(data.len() / cols, cols, data))
    }

    /// Row-wise softmax of `x / temperature`, max-subtracted.
    pub fn softmax_rows(&self, temperature: f64) -> Result<Matrix> {
        check_temperature(temperature)?;
        let mut out = self.data.clone();
        for row in out.chunks_exact_mut(self.cols) {
            softmax_in_place(row, temperature);
        }
        Ok(Matrix::from_raw(self.rows, self.cols, out))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Rounds every entry through `f32`, the precision of on-disk formats.
    pub fn round_to_f32(&self) -> Matrix {
        self.map(|v| v as f32 as f64)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for row in self.iter_rows().take(8) {
            writeln!(f, "  {:?}", row)?;
        }
        if self.rows > 8 {
            writeln!(f, "  ... {} more rows", self.rows - 8)?;
        }
        write!(f, "]")
    }
}

pub(crate) fn check_temperature(temperature: f64) -> Result<()> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(MeraError::Parameter(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    Ok(())
}

pub(crate) fn softmax_in_place(row: &mut [f64], temperature: f64) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = ((*v - max) / temperature).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Softmax of a slice at the given temperature.
pub fn softmax(values: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    if values.is_empty() {
        return Err(MeraError::EmptyInput("softmax of an empty slice".into()));
    }
    let mut out = values.to_vec();
    softmax_in_place(&mut out, temperature);
    Ok(out)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Logistic function, stable for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
