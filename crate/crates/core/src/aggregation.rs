//! Multi-view aggregation: attention over pairwise view similarity, plus the
//! mean and max pooling baselines.
//!
//! With per-view features `f` (one row per view) and a learned `d x d`
//! matrix `W`:
//!
//! ```text
//! S = (f W)(f W)^T
//! N = relu(S) / sum(relu(S))
//! A = row sums of N
//! R = sum_j A_j f_j
//! ```
//!
//! When `sum(relu(S))` is at most [`DEGENERATE_EPS`] the weights fall back to
//! uniform and no gradient reaches `W` through them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Matrix, NodeId, Tape, Vector};
use crate::scalar::Scalar;

pub const DEGENERATE_EPS: f64 = 1e-12;

/// Per-view feature vectors, one row per view.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix<T>(Matrix<T>);

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(values: Matrix<T>) -> Self {
        Self(values)
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        Matrix::from_rows(rows).map(Self)
    }

    pub fn n_views(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn view(&self, i: usize) -> &[T] {
        self.0.row(i)
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }
}

impl<T> From<Matrix<T>> for FeatureMatrix<T> {
    fn from(m: Matrix<T>) -> Self {
        Self(m)
    }
}

/// Per-view importance weights; nonnegative and summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionWeights<T>(Vector<T>);

impl<T: Scalar> AttentionWeights<T> {
    pub fn uniform(n: usize) -> Self {
        let w = T::one() / T::from_usize(n).expect("view count representable");
        Self(Vector::filled(n, w))
    }

    pub fn values(&self) -> &[T] {
        self.0.data()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn vector(&self) -> &Vector<T> {
        &self.0
    }

    /// Weights scaled to percent.
    pub fn percentages(&self) -> Vec<T> {
        let hundred = T::of(100.0);
        self.values().iter().map(|&a| a * hundred).collect()
    }

    /// View indices ordered by decreasing weight, ties by lower index first.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let v = self.values();
        idx.sort_by(|&a, &b| {
            v[b].partial_cmp(&v[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        idx
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationKind {
    Mean,
    Max,
    Attention,
}

impl AggregationKind {
    pub const ALL: [AggregationKind; 3] = [Self::Mean, Self::Max, Self::Attention];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::Max => "max",
            Self::Attention => "attention",
        }
    }
}

impl fmt::Display for AggregationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for AggregationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            "attention" => Ok(Self::Attention),
            other => Err(Error::Config(format!(
                "unknown pooling kind {other:?} (expected mean, max or attention)"
            ))),
        }
    }
}

/// Outcome of normalizing a similarity matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum Normalized<T> {
    Matrix(Matrix<T>),
    /// Every similarity was non-positive; carries the view count.
    Degenerate(usize),
}

fn check_square_w<T: Scalar>(f: &FeatureMatrix<T>, w: &Matrix<T>) -> Result<()> {
    let d = f.dim();
    if w.shape() != (d, d) {
        return Err(Error::shape(
            "similarity",
            format!("features {}x{d}", f.n_views()),
            format!("W {}", w.shape_str()),
        ));
    }
    Ok(())
}

/// `S = (f W)(f W)^T`.
pub fn similarity<T: Scalar>(f: &FeatureMatrix<T>, w: &Matrix<T>) -> Result<Matrix<T>> {
    check_square_w(f, w)?;
    let p = f.matrix().matmul(w)?;
    p.matmul(&p.transpose())
}

pub fn normalize_similarity<T: Scalar>(s: &Matrix<T>) -> Result<Normalized<T>> {
    if s.rows() != s.cols() {
        return Err(Error::shape("normalize_similarity", s.shape_str(), "square"));
    }
    let r = s.relu();
    let total = r.sum();
    if total <= T::of(DEGENERATE_EPS) {
        return Ok(Normalized::Degenerate(s.rows()));
    }
    Ok(Normalized::Matrix(r.map(|x| x / total)))
}

pub fn attention_scores<T: Scalar>(n: &Normalized<T>) -> AttentionWeights<T> {
    match n {
        Normalized::Matrix(m) => AttentionWeights(Vector::from_matrix(m.row_sums()).expect("row sums form a column")),
        Normalized::Degenerate(views) => AttentionWeights::uniform(*views),
    }
}

/// `R_k = sum_j A_j f[j][k]`.
pub fn aggregate<T: Scalar>(f: &FeatureMatrix<T>, a: &AttentionWeights<T>) -> Result<Vector<T>> {
    if a.len() != f.n_views() {
        return Err(Error::shape(
            "aggregate",
            format!("{} views", f.n_views()),
            format!("{} attention weights", a.len()),
        ));
    }
    let row = Matrix::new(1, a.len(), a.values().to_vec())?;
    Vector::from_matrix(row.matmul(f.matrix())?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pooled<T> {
    pub representation: Vector<T>,
    pub attention: Option<AttentionWeights<T>>,
}

pub fn pool<T: Scalar>(f: &FeatureMatrix<T>, kind: AggregationKind, w: Option<&Matrix<T>>) -> Result<Pooled<T>> {
    match kind {
        AggregationKind::Mean => Ok(Pooled {
            representation: Vector::from_matrix(f.matrix().col_means())?,
            attention: None,
        }),
        AggregationKind::Max => Ok(Pooled {
            representation: Vector::from_matrix(f.matrix().col_max().0)?,
            attention: None,
        }),
        AggregationKind::Attention => {
            let w = w.ok_or_else(|| Error::Config("attention pooling requires W".into()))?;
            let s = similarity(f, w)?;
            let a = attention_scores(&normalize_similarity(&s)?);
            Ok(Pooled {
                representation: aggregate(f, &a)?,
                attention: Some(a),
            })
        }
    }
}

/// Extra parameters attention pooling adds over mean/max pooling.
pub fn attention_parameter_count(dim: usize) -> usize {
    dim * dim
}

/// Records pooling of the `n x d` node `f` on `tape`; returns the `d x 1`
/// representation node and, for attention, the realized weights.
pub fn pool_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    f: NodeId,
    kind: AggregationKind,
    w: Option<NodeId>,
) -> Result<(NodeId, Option<AttentionWeights<T>>)> {
    match kind {
        AggregationKind::Mean => {
            let row = tape.col_means(f)?;
            Ok((tape.transpose(row)?, None))
        }
        AggregationKind::Max => {
            let row = tape.col_max(f)?;
            Ok((tape.transpose(row)?, None))
        }
        AggregationKind::Attention => {
            let w = w.ok_or_else(|| Error::Config("attention pooling requires W".into()))?;
            let fm = FeatureMatrix(tape.value(f).clone());
            check_square_w(&fm, tape.value(w))?;
            let p = tape.matmul(f, w)?;
            let pt = tape.transpose(p)?;
            let s = tape.matmul(p, pt)?;
            let r = tape.relu(s)?;
            let total = tape.sum(r)?;
            let a = if tape.value(total).get(0, 0) <= T::of(DEGENERATE_EPS) {
                let uniform = AttentionWeights::<T>::uniform(fm.n_views());
                tape.leaf(uniform.vector().to_column())
            } else {
                let n = tape.div_scalar(r, total)?;
                tape.row_sums(n)?
            };
            let weights = AttentionWeights(Vector::from_matrix(tape.value(a).clone())?);
            let at = tape.transpose(a)?;
            let row = tape.matmul(at, f)?;
            Ok((tape.transpose(row)?, Some(weights)))
        }
    }
}
