use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix with at least one row and one column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::contract(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::new",
                format!("{rows}x{cols}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::shape(
                    "Matrix::from_rows",
                    format!("row 0 has {cols} columns"),
                    format!("row {i} has {}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Self::new(n, cols, data)
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, T::zero())
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn scalar(x: T) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![x],
        }
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::shape(op, self.shape_str(), other.shape_str()));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::shape("matmul", self.shape_str(), other.shape_str()));
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == T::zero() {
                    continue;
                }
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            rows: n,
            cols: m,
            data: out,
        })
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.data[i * self.cols + j]);
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// Elementwise `max(0, x)`.
    pub fn relu(&self) -> Self {
        self.map(|x| if x > T::zero() { x } else { T::zero() })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|x| x * c)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Column vector (`rows x 1`) of row sums.
    pub fn row_sums(&self) -> Self {
        let data = (0..self.rows).map(|i| self.row(i).iter().copied().sum()).collect();
        Self {
            rows: self.rows,
            cols: 1,
            data,
        }
    }

    /// Row vector (`1 x cols`) of column means.
    pub fn col_means(&self) -> Self {
        let n = T::from_usize(self.rows).expect("row count representable");
        let mut data = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for (acc, &x) in data.iter_mut().zip(self.row(i)) {
                *acc += x;
            }
        }
        for x in &mut data {
            *x /= n;
        }
        Self {
            rows: 1,
            cols: self.cols,
            data,
        }
    }

    /// Row vector of column maxima together with the winning row of each
    /// column (lowest row index on ties).
    pub fn col_max(&self) -> (Self, Vec<usize>) {
        let mut best = self.row(0).to_vec();
        let mut arg = vec![0; self.cols];
        for i in 1..self.rows {
            for (j, &x) in self.row(i).iter().enumerate() {
                if x > best[j] {
                    best[j] = x;
                    arg[j] = i;
                }
            }
        }
        (
            Self {
                rows: 1,
                cols: self.cols,
                data: best,
            },
            arg,
        )
    }

    /// Adds the `1 x cols` row `bias` to every row.
    pub fn add_row_bias(&self, bias: &Self) -> Result<Self> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(Error::shape("add_row_bias", self.shape_str(), bias.shape_str()));
        }
        let mut out = self.clone();
        for row in out.data.chunks_mut(self.cols) {
            for (x, &b) in row.iter_mut().zip(&bias.data) {
                *x += b;
            }
        }
        Ok(out)
    }
}

impl<T: Scalar> fmt::Display for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(|x| format!("{x}")).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Dense vector with at least one entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vector<T> {
    data: Vec<T>,
}

impl<T: Scalar> Vector<T> {
    pub fn new(data: Vec<T>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::contract("vector length must be positive"));
        }
        Ok(Self { data })
    }

    pub fn filled(len: usize, value: T) -> Self {
        assert!(len > 0, "vector length must be positive");
        Self { data: vec![value; len] }
    }

    pub fn zeros(len: usize) -> Self {
        Self::filled(len, T::zero())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, i: usize) -> T {
        self.data[i]
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Index of the largest entry; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &x) in self.data.iter().enumerate().skip(1) {
            if x > self.data[best] {
                best = i;
            }
        }
        best
    }

    pub fn to_column(&self) -> Matrix<T> {
        Matrix {
            rows: self.data.len(),
            cols: 1,
            data: self.data.clone(),
        }
    }

    /// Flattens a single-row or single-column matrix.
    pub fn from_matrix(m: Matrix<T>) -> Result<Self> {
        if m.rows != 1 && m.cols != 1 {
            return Err(Error::shape("Vector::from_matrix", m.shape_str(), "1xn or nx1"));
        }
        Ok(Self { data: m.data })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

/// `activation(weights · x + bias)`.
pub fn dense_layer<T: Scalar>(
    x: &Vector<T>,
    weights: &Matrix<T>,
    bias: &Vector<T>,
    activation: Activation,
) -> Result<Vector<T>> {
    if weights.cols() != x.len() {
        return Err(Error::shape(
            "dense_layer",
            weights.shape_str(),
            format!("input of length {}", x.len()),
        ));
    }
    if bias.len() != weights.rows() {
        return Err(Error::shape(
            "dense_layer",
            weights.shape_str(),
            format!("bias of length {}", bias.len()),
        ));
    }
    let z = weights.matmul(&x.to_column())?.add(&bias.to_column())?;
    let z = match activation {
        Activation::Relu => z.relu(),
        Activation::Identity => z,
    };
    Vector::from_matrix(z)
}

/// `-log softmax(logits)[label]`, with the largest logit factored out.
pub fn cross_entropy_value<T: Scalar>(logits: &[T], label: usize) -> T {
    let argmax = (1..logits.len()).fold(0, |b, i| if logits[i] > logits[b] { i } else { b });
    let top = logits[argmax];
    let rest: T = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != argmax)
        .map(|(_, &x)| (x - top).exp())
        .sum();
    (top - logits[label]) + rest.ln_1p()
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let top = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&x| (x - top).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}
