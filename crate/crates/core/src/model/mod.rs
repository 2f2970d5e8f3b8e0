//! The trainable pipeline: feature source, aggregation block and two
//! classification heads (foul type, offence severity).

mod adam;
mod checkpoint;
mod loss;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{attention_parameter_count, pool_on_tape, AggregationKind, AttentionWeights};
use crate::data::{MultiViewSample, FOUL_CLASSES, OFFENCE_CLASSES};
use crate::error::{Error, Result};
use crate::numcore::{softmax, Matrix, NodeId, Tape, Vector};
use crate::scalar::Scalar;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
pub use loss::{cross_entropy, multitask_loss};
pub use train::{evaluate, lr_at_epoch, lr_for, train, DecayUnit, EpochRecord, Evaluation, TrainConfig, TrainOutcome};

/// Stand-in for the video encoder: maps each raw view row to a feature row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderSpec {
    /// Inputs already are features.
    Identity,
    Linear {
        in_dim: usize,
    },
    Mlp {
        in_dim: usize,
        hidden: usize,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WInit {
    /// i.i.d. uniform on `[-1/sqrt(d), 1/sqrt(d)]`.
    #[default]
    Uniform,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderSpec,
    /// Width `d` of the per-view features fed to aggregation.
    pub feature_dim: usize,
    /// Hidden width of each head; `None` means `feature_dim`.
    #[serde(default)]
    pub head_hidden: Option<usize>,
    pub aggregation: AggregationKind,
    #[serde(default)]
    pub w_init: WInit,
}

impl ModelConfig {
    pub fn new(feature_dim: usize, aggregation: AggregationKind) -> Self {
        Self {
            encoder: EncoderSpec::Identity,
            feature_dim,
            head_hidden: None,
            aggregation,
            w_init: WInit::Uniform,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self.encoder {
            EncoderSpec::Identity => self.feature_dim,
            EncoderSpec::Linear { in_dim } | EncoderSpec::Mlp { in_dim, .. } => in_dim,
        }
    }

    pub fn head_hidden_dim(&self) -> usize {
        self.head_hidden.unwrap_or(self.feature_dim)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = match self.encoder {
            EncoderSpec::Identity => true,
            EncoderSpec::Linear { in_dim } => in_dim > 0,
            EncoderSpec::Mlp { in_dim, hidden } => in_dim > 0 && hidden > 0,
        };
        if !positive || self.feature_dim == 0 || self.head_hidden_dim() == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        Ok(())
    }

    /// `(name, rows, cols, fan_in)` for every parameter, in storage order.
    /// Biases report a fan-in of zero and start at zero.
    fn layout(&self) -> Vec<(String, usize, usize, usize)> {
        let d = self.feature_dim;
        let hc = self.head_hidden_dim();
        let mut out = Vec::new();
        match self.encoder {
            EncoderSpec::Identity => {}
            EncoderSpec::Linear { in_dim } => {
                out.push(("encoder.w".into(), in_dim, d, in_dim));
                out.push(("encoder.b".into(), 1, d, 0));
            }
            EncoderSpec::Mlp { in_dim, hidden } => {
                out.push(("encoder.w1".into(), in_dim, hidden, in_dim));
                out.push(("encoder.b1".into(), 1, hidden, 0));
                out.push(("encoder.w2".into(), hidden, d, hidden));
                out.push(("encoder.b2".into(), 1, d, 0));
            }
        }
        if self.aggregation == AggregationKind::Attention {
            out.push(("attention.w".into(), d, d, d));
        }
        for (head, k) in [("foul", FOUL_CLASSES), ("off", OFFENCE_CLASSES)] {
            out.push((format!("{head}.w1"), hc, d, d));
            out.push((format!("{head}.b1"), hc, 1, 0));
            out.push((format!("{head}.w2"), k, hc, hc));
            out.push((format!("{head}.b2"), k, 1, 0));
        }
        out
    }
}

/// Output of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<T> {
    pub foul_logits: Vector<T>,
    pub off_logits: Vector<T>,
    pub foul_class: usize,
    pub off_class: usize,
    pub attention: Option<AttentionWeights<T>>,
}

impl<T: Scalar> Prediction<T> {
    pub fn from_logits(foul_logits: Vector<T>, off_logits: Vector<T>, attention: Option<AttentionWeights<T>>) -> Self {
        Self {
            foul_class: foul_logits.argmax(),
            off_class: off_logits.argmax(),
            foul_logits,
            off_logits,
            attention,
        }
    }

    pub fn foul_confidences(&self) -> Vec<T> {
        softmax(self.foul_logits.data())
    }

    pub fn off_confidences(&self) -> Vec<T> {
        softmax(self.off_logits.data())
    }
}

/// Loss, per-parameter gradients and prediction for one sample.
pub type SampleGradient<T> = (T, Vec<Matrix<T>>, Prediction<T>);

/// Mean loss and gradient over a minibatch, plus per-sample predictions.
#[derive(Clone, Debug)]
pub struct BatchGradient<T> {
    pub loss: T,
    pub grads: Vec<Matrix<T>>,
    pub predictions: Vec<Prediction<T>>,
}

struct Recorded<T> {
    foul: NodeId,
    off: NodeId,
    attention: Option<AttentionWeights<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarsModel<T> {
    config: ModelConfig,
    names: Vec<String>,
    values: Vec<Matrix<T>>,
}

impl<T: Scalar> VarsModel<T> {
    /// Fresh parameters drawn from a generator seeded with `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut values = Vec::new();
        for (name, rows, cols, fan_in) in config.layout() {
            let value = if name == "attention.w" && config.w_init == WInit::Identity {
                Matrix::identity(rows)
            } else if fan_in == 0 {
                Matrix::zeros(rows, cols)
            } else {
                let bound = 1.0 / (fan_in as f64).sqrt();
                let data = (0..rows * cols)
                    .map(|_| T::of(rng.random_range(-bound..=bound)))
                    .collect();
                Matrix::new(rows, cols, data)?
            };
            names.push(name);
            values.push(value);
        }
        Ok(Self { config, names, values })
    }

    /// Rebuilds a model from stored parameters, checking names and shapes.
    pub fn from_parameters(config: ModelConfig, params: Vec<(String, Matrix<T>)>) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        if layout.len() != params.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, found {}",
                layout.len(),
                params.len()
            )));
        }
        let mut names = Vec::new();
        let mut values = Vec::new();
        for ((name, rows, cols, _), (got_name, value)) in layout.into_iter().zip(params) {
            if name != got_name || value.shape() != (rows, cols) {
                return Err(Error::Config(format!(
                    "parameter {got_name} {}x{} does not match expected {name} {rows}x{cols}",
                    value.rows(),
                    value.cols()
                )));
            }
            names.push(name);
            values.push(value);
        }
        Ok(Self { config, names, values })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn aggregation(&self) -> AggregationKind {
        self.config.aggregation
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Matrix<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix<T>] {
        &mut self.values
    }

    pub fn param(&self, name: &str) -> Option<&Matrix<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Matrix<T>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(move |i| &mut self.values[i])
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// Parameters attention pooling adds over mean/max pooling (`d^2` or 0).
    pub fn attention_overhead(&self) -> usize {
        match self.config.aggregation {
            AggregationKind::Attention => attention_parameter_count(self.config.feature_dim),
            _ => 0,
        }
    }

    /// `(name, rows, cols)` of every parameter tensor.
    pub fn census(&self) -> Vec<(String, usize, usize)> {
        self.names
            .iter()
            .zip(&self.values)
            .map(|(n, v)| (n.clone(), v.rows(), v.cols()))
            .collect()
    }

    fn id(&self, params: &[NodeId], name: &str) -> NodeId {
        let i = self.names.iter().position(|n| n == name).expect("parameter in layout");
        params[i]
    }

    fn param_leaves(&self, tape: &mut Tape<T>) -> Vec<NodeId> {
        self.values.iter().map(|v| tape.leaf(v.clone())).collect()
    }

    fn record(&self, tape: &mut Tape<T>, params: &[NodeId], views: &Matrix<T>) -> Result<Recorded<T>> {
        if views.cols() != self.config.input_dim() {
            return Err(Error::shape(
                "forward",
                format!("views {}x{}", views.rows(), views.cols()),
                format!("encoder input width {}", self.config.input_dim()),
            ));
        }
        let x = tape.leaf(views.clone());
        let f = match self.config.encoder {
            EncoderSpec::Identity => x,
            EncoderSpec::Linear { .. } => {
                let z = tape.matmul(x, self.id(params, "encoder.w"))?;
                tape.add_row_bias(z, self.id(params, "encoder.b"))?
            }
            EncoderSpec::Mlp { .. } => {
                let z = tape.matmul(x, self.id(params, "encoder.w1"))?;
                let z = tape.add_row_bias(z, self.id(params, "encoder.b1"))?;
                let h = tape.relu(z)?;
                let z = tape.matmul(h, self.id(params, "encoder.w2"))?;
                tape.add_row_bias(z, self.id(params, "encoder.b2"))?
            }
        };
        let w = (self.config.aggregation == AggregationKind::Attention).then(|| self.id(params, "attention.w"));
        let (r, attention) = pool_on_tape(tape, f, self.config.aggregation, w)?;
        let mut head = |prefix: &str| -> Result<NodeId> {
            let z = tape.matmul(self.id(params, &format!("{prefix}.w1")), r)?;
            let z = tape.add(z, self.id(params, &format!("{prefix}.b1")))?;
            let h = tape.relu(z)?;
            let z = tape.matmul(self.id(params, &format!("{prefix}.w2")), h)?;
            tape.add(z, self.id(params, &format!("{prefix}.b2")))
        };
        let foul = head("foul")?;
        let off = head("off")?;
        Ok(Recorded { foul, off, attention })
    }

    fn prediction(tape: &Tape<T>, rec: Recorded<T>) -> Result<Prediction<T>> {
        Ok(Prediction::from_logits(
            Vector::from_matrix(tape.value(rec.foul).clone())?,
            Vector::from_matrix(tape.value(rec.off).clone())?,
            rec.attention,
        ))
    }

    /// Runs one action's views (raw inputs for a trainable encoder) through the model.
    pub fn forward(&self, views: &Matrix<T>) -> Result<Prediction<T>> {
        let mut tape = Tape::new();
        let params = self.param_leaves(&mut tape);
        let rec = self.record(&mut tape, &params, views)?;
        Self::prediction(&tape, rec)
    }

    /// Distance of the closest ReLU input to its kink for these views.
    pub fn relu_margin(&self, views: &Matrix<T>) -> Result<Option<T>> {
        let mut tape = Tape::new();
        let params = self.param_leaves(&mut tape);
        self.record(&mut tape, &params, views)?;
        Ok(tape.relu_margin())
    }

    /// Summed foul and offence cross-entropy for one labelled sample.
    pub fn loss(&self, sample: &MultiViewSample<T>) -> Result<T> {
        let pred = self.forward(&sample.views)?;
        multitask_loss(&pred, sample.foul, sample.off)
    }

    /// Loss, gradient with respect to every parameter (storage order) and prediction.
    pub fn loss_and_gradients(&self, sample: &MultiViewSample<T>) -> Result<SampleGradient<T>> {
        let mut tape = Tape::new();
        let params = self.param_leaves(&mut tape);
        let rec = self.record(&mut tape, &params, &sample.views)?;
        let foul = tape.cross_entropy(rec.foul, sample.foul)?;
        let off = tape.cross_entropy(rec.off, sample.off)?;
        let loss = tape.add(foul, off)?;
        let grads = tape.backward(loss)?;
        let value = tape.value(loss).get(0, 0);
        let param_grads = params.iter().map(|&p| grads.wrt(p)).collect();
        Ok((value, param_grads, Self::prediction(&tape, rec)?))
    }

    /// Mean loss and gradient over `batch`. Per-sample results are reduced in
    /// batch order, so `parallel` does not change a single bit of the output.
    pub fn batch_gradient(&self, batch: &[&MultiViewSample<T>], parallel: bool) -> Result<BatchGradient<T>> {
        if batch.is_empty() {
            return Err(Error::contract("empty minibatch"));
        }
        let per_sample: Vec<Result<SampleGradient<T>>> = if parallel {
            batch.par_iter().map(|s| self.loss_and_gradients(s)).collect()
        } else {
            batch.iter().map(|s| self.loss_and_gradients(s)).collect()
        };
        let mut loss = T::zero();
        let mut grads: Vec<Matrix<T>> = self.values.iter().map(|v| Matrix::zeros(v.rows(), v.cols())).collect();
        let mut predictions = Vec::with_capacity(batch.len());
        for item in per_sample {
            let (l, g, p) = item?;
            loss += l;
            for (acc, gi) in grads.iter_mut().zip(&g) {
                for (a, &x) in acc.data_mut().iter_mut().zip(gi.data()) {
                    *a += x;
                }
            }
            predictions.push(p);
        }
        let inv = T::one() / T::from_usize(batch.len()).expect("batch size representable");
        Ok(BatchGradient {
            loss: loss * inv,
            grads: grads.into_iter().map(|g| g.scale(inv)).collect(),
            predictions,
        })
    }
}
