//! Reverse-mode differentiation over whole matrices.
//!
//! Every node is appended after its inputs, so node order is a topological
//! order and the backward sweep simply walks the node list from the end.

use crate::error::{Error, Result};
use crate::numcore::matrix::{cross_entropy_value, softmax};
use crate::numcore::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Relu(NodeId),
    Add(NodeId, NodeId),
    AddRowBias(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Scale(NodeId, T),
    /// Divides every entry of the first input by the 1x1 second input.
    DivScalar(NodeId, NodeId),
    Sum(NodeId),
    RowSums(NodeId),
    ColMeans(NodeId),
    ColMax(NodeId),
    CrossEntropy(NodeId, usize),
}

impl<T> Op<T> {
    #[cfg(test)]
    fn inputs(&self) -> Vec<NodeId> {
        match *self {
            Op::Leaf => vec![],
            Op::Transpose(a)
            | Op::Relu(a)
            | Op::Scale(a, _)
            | Op::Sum(a)
            | Op::RowSums(a)
            | Op::ColMeans(a)
            | Op::ColMax(a)
            | Op::CrossEntropy(a, _) => vec![a],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddRowBias(a, b) | Op::Hadamard(a, b) | Op::DivScalar(a, b) => {
                vec![a, b]
            }
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op<T>,
    value: Matrix<T>,
}

/// Record of primitive operations and their values.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradient of a scalar loss with respect to every node on a tape.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Scalar> Gradients<T> {
    /// `None` when the loss does not depend on the node.
    pub fn get(&self, id: NodeId) -> Option<&Matrix<T>> {
        self.grads[id.0].as_ref()
    }

    /// Gradient of the node, zeros if the loss does not depend on it.
    pub fn wrt(&self, id: NodeId) -> Matrix<T> {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[id.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix<T> {
        &self.nodes[id.0].value
    }

    pub fn leaf(&mut self, value: Matrix<T>) -> NodeId {
        self.nodes.push(Node { op: Op::Leaf, value });
        NodeId(self.nodes.len() - 1)
    }

    fn eval<'a>(op: &Op<T>, value_of: impl Fn(NodeId) -> &'a Matrix<T>) -> Result<Matrix<T>>
    where
        T: 'a,
    {
        let v = |id: &NodeId| value_of(*id);
        Ok(match op {
            Op::Leaf => unreachable!("leaves carry their own value"),
            Op::MatMul(a, b) => v(a).matmul(v(b))?,
            Op::Transpose(a) => v(a).transpose(),
            Op::Relu(a) => v(a).relu(),
            Op::Add(a, b) => v(a).add(v(b))?,
            Op::AddRowBias(a, b) => v(a).add_row_bias(v(b))?,
            Op::Hadamard(a, b) => v(a).hadamard(v(b))?,
            Op::Scale(a, c) => v(a).scale(*c),
            Op::DivScalar(a, s) => {
                let s = v(s);
                if s.shape() != (1, 1) {
                    return Err(Error::shape("div_scalar", v(a).shape_str(), s.shape_str()));
                }
                let d = s.get(0, 0);
                v(a).map(|x| x / d)
            }
            Op::Sum(a) => Matrix::scalar(v(a).sum()),
            Op::RowSums(a) => v(a).row_sums(),
            Op::ColMeans(a) => v(a).col_means(),
            Op::ColMax(a) => v(a).col_max().0,
            Op::CrossEntropy(a, label) => {
                let logits = v(a);
                if logits.rows() != 1 && logits.cols() != 1 {
                    return Err(Error::shape("cross_entropy", logits.shape_str(), "vector"));
                }
                if *label >= logits.len() {
                    return Err(Error::contract(format!(
                        "label {label} out of range for {} classes",
                        logits.len()
                    )));
                }
                Matrix::scalar(cross_entropy_value(logits.data(), *label))
            }
        })
    }

    fn push(&mut self, op: Op<T>) -> Result<NodeId> {
        let value = Self::eval(&op, |id| &self.nodes[id.0].value)?;
        self.nodes.push(Node { op, value });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Transpose(a))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Relu(a))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b))
    }

    pub fn add_row_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        self.push(Op::AddRowBias(a, bias))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Hadamard(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> Result<NodeId> {
        self.push(Op::Scale(a, c))
    }

    pub fn div_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        self.push(Op::DivScalar(a, s))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sum(a))
    }

    pub fn row_sums(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::RowSums(a))
    }

    pub fn col_means(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::ColMeans(a))
    }

    pub fn col_max(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::ColMax(a))
    }

    /// `-log softmax(logits)[label]` for a row or column of logits.
    pub fn cross_entropy(&mut self, logits: NodeId, label: usize) -> Result<NodeId> {
        self.push(Op::CrossEntropy(logits, label))
    }

    /// Smallest `|x|` over every input entry of a recorded ReLU, or `None`
    /// when the tape has no ReLU. Finite differences are unreliable when
    /// this is tiny.
    pub fn relu_margin(&self) -> Option<T> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => self.nodes[a.0].value.data().iter().map(|x| x.abs()).reduce(T::min),
                _ => None,
            })
            .reduce(T::min)
    }

    /// Recomputes every non-leaf value from the recorded leaves.
    pub fn replay(&self) -> Result<Vec<Matrix<T>>> {
        let mut values: Vec<Matrix<T>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let value = match node.op {
                Op::Leaf => node.value.clone(),
                ref op => Self::eval(op, |id| &values[id.0])?,
            };
            values.push(value);
        }
        Ok(values)
    }

    /// Gradient of the scalar node `loss` with respect to every node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        let loss_value = self.value(loss);
        if loss_value.shape() != (1, 1) {
            return Err(Error::contract(format!(
                "backward needs a scalar loss node, got {}",
                loss_value.shape_str()
            )));
        }
        let mut grads: Vec<Option<Matrix<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(T::one()));

        fn accumulate<T: Scalar>(slot: &mut Option<Matrix<T>>, g: Matrix<T>) {
            match slot {
                Some(acc) => {
                    for (a, &x) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += x;
                    }
                }
                None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].clone() else { continue };
            let node = &self.nodes[idx];
            let val = |id: NodeId| &self.nodes[id.0].value;
            match node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul(&val(b).transpose())?;
                    let gb = val(a).transpose().matmul(&g)?;
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Transpose(a) => accumulate(&mut grads[a.0], g.transpose()),
                Op::Relu(a) => {
                    let mask = val(a).map(|x| if x > T::zero() { T::one() } else { T::zero() });
                    accumulate(&mut grads[a.0], g.hadamard(&mask)?);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], g.clone());
                    accumulate(&mut grads[b.0], g);
                }
                Op::AddRowBias(a, b) => {
                    let cols = g.cols();
                    let mut gb = Matrix::zeros(1, cols);
                    for i in 0..g.rows() {
                        for (acc, &x) in gb.data_mut().iter_mut().zip(g.row(i)) {
                            *acc += x;
                        }
                    }
                    accumulate(&mut grads[a.0], g);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Hadamard(a, b) => {
                    let ga = g.hadamard(val(b))?;
                    let gb = g.hadamard(val(a))?;
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Scale(a, c) => accumulate(&mut grads[a.0], g.scale(c)),
                Op::DivScalar(a, s) => {
                    let d = val(s).get(0, 0);
                    let ga = g.map(|x| x / d);
                    let dot: T = g.data().iter().zip(val(a).data()).map(|(&x, &y)| x * y).sum();
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[s.0], Matrix::scalar(-dot / (d * d)));
                }
                Op::Sum(a) => {
                    let (r, c) = val(a).shape();
                    accumulate(&mut grads[a.0], Matrix::filled(r, c, g.get(0, 0)));
                }
                Op::RowSums(a) => {
                    let (r, c) = val(a).shape();
                    let mut ga = Matrix::zeros(r, c);
                    for i in 0..r {
                        for j in 0..c {
                            ga.set(i, j, g.get(i, 0));
                        }
                    }
                    accumulate(&mut grads[a.0], ga);
                }
                Op::ColMeans(a) => {
                    let (r, c) = val(a).shape();
                    let n = T::from_usize(r).expect("row count representable");
                    let mut ga = Matrix::zeros(r, c);
                    for i in 0..r {
                        for j in 0..c {
                            ga.set(i, j, g.get(0, j) / n);
                        }
                    }
                    accumulate(&mut grads[a.0], ga);
                }
                Op::ColMax(a) => {
                    let (r, c) = val(a).shape();
                    let (_, arg) = val(a).col_max();
                    let mut ga = Matrix::zeros(r, c);
                    for (j, &i) in arg.iter().enumerate() {
                        ga.set(i, j, g.get(0, j));
                    }
                    accumulate(&mut grads[a.0], ga);
                }
                Op::CrossEntropy(a, label) => {
                    let logits = val(a);
                    let upstream = g.get(0, 0);
                    let mut probs = softmax(logits.data());
                    probs[label] -= T::one();
                    let (r, c) = logits.shape();
                    let ga = Matrix::new(r, c, probs.into_iter().map(|p| p * upstream).collect())?;
                    accumulate(&mut grads[a.0], ga);
                }
            }
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }
}
