//! Experiment protocols: pooling comparison, training-set-size sweep,
//! per-action attention inspection and rater agreement analysis. Every
//! protocol is deterministic given its seeds; independent runs may execute
//! on the rayon pool and are merged by index.

mod agree;
mod compare;
mod inspect;
mod manifest;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationKind;
use crate::data::{generate_synthetic, DataSplit, MultiViewSample, SyntheticSpec};
use crate::error::{Error, Result};
use crate::model::{
    evaluate, train, EncoderSpec, Evaluation, ModelConfig, TrainConfig, TrainOutcome, VarsModel, WInit,
};

pub use agree::{run_agreement, AgreementReport, GroupAgreement, RaterScore};
pub use compare::{run_comparison, ComparisonRow, ComparisonTable, SeedScores};
pub use inspect::{attention_hit_rate, inspect_action, InspectReport, TaskReadout};
pub use manifest::Manifest;
pub use sweep::{random_baseline, run_sweep, SweepPoint, SweepResult};

/// Model shape shared by every run of an experiment; the input width comes
/// from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub encoder: EncoderSpec,
    /// Feature width for a trainable encoder; ignored for `identity`.
    pub feature_dim: Option<usize>,
    pub head_hidden: Option<usize>,
    pub aggregation: AggregationKind,
    pub w_init: WInit,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            encoder: EncoderSpec::Identity,
            feature_dim: None,
            head_hidden: None,
            aggregation: AggregationKind::Attention,
            w_init: WInit::Uniform,
        }
    }
}

impl ModelSettings {
    /// Concrete configuration for data whose views are `input_dim` wide.
    pub fn config_for(&self, input_dim: usize, aggregation: AggregationKind) -> Result<ModelConfig> {
        let encoder = match self.encoder {
            EncoderSpec::Identity => EncoderSpec::Identity,
            EncoderSpec::Linear { .. } => EncoderSpec::Linear { in_dim: input_dim },
            EncoderSpec::Mlp { hidden, .. } => EncoderSpec::Mlp {
                in_dim: input_dim,
                hidden,
            },
        };
        let feature_dim = match encoder {
            EncoderSpec::Identity => input_dim,
            _ => self
                .feature_dim
                .ok_or_else(|| Error::Config("a trainable encoder needs model.feature_dim".into()))?,
        };
        let cfg = ModelConfig {
            encoder,
            feature_dim,
            head_hidden: self.head_hidden,
            aggregation,
            w_init: self.w_init,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn encoder_tag(&self) -> &'static str {
        match self.encoder {
            EncoderSpec::Identity => "identity",
            EncoderSpec::Linear { .. } => "linear",
            EncoderSpec::Mlp { .. } => "mlp",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    pub fractions: Vec<f64>,
    pub repeats: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            fractions: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            repeats: 10,
        }
    }
}

/// Split sizes used when generating a synthetic benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            train: 600,
            val: 200,
            test: 200,
        }
    }
}

/// Everything an experiment needs besides its data; the structured config
/// file deserializes into this.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Seeds for `compare`; one trained model per seed and pooling kind.
    pub seeds: Vec<u64>,
    pub poolings: Vec<AggregationKind>,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub sweep: SweepSettings,
    pub synthetic: SyntheticSpec,
    pub split: SplitSizes,
    /// Run independent trainings concurrently.
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            seeds: vec![0, 1, 2, 3, 4],
            poolings: AggregationKind::ALL.to_vec(),
            model: ModelSettings::default(),
            train: TrainConfig::default(),
            sweep: SweepSettings::default(),
            synthetic: SyntheticSpec::default(),
            split: SplitSizes::default(),
            parallel: false,
        }
    }
}

impl ExperimentConfig {
    /// Recipe for the desk-scale synthetic benchmark. `TrainConfig::default()`
    /// suits a pretrained video encoder and barely moves a freshly
    /// initialised model in a handful of epochs.
    pub fn synthetic_benchmark() -> Self {
        Self {
            train: TrainConfig {
                lr0: 1e-2,
                decay_factor: 0.3,
                decay_every: 10,
                batch_size: 6,
                max_epochs: 25,
                ..TrainConfig::default()
            },
            ..Self::default()
        }
    }
}

/// Seed for the shuffle stream, kept apart from the initialisation stream.
pub fn shuffle_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

/// Result of one train-then-test run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub outcome: TrainOutcome<f64>,
    pub test: Evaluation,
}

/// Initialises a model from `seed`, trains it on `train_set` (selecting on
/// `val_set`) and evaluates it on `test_set`.
pub fn train_and_evaluate(
    train_set: &[MultiViewSample<f64>],
    val_set: &[MultiViewSample<f64>],
    test_set: &[MultiViewSample<f64>],
    aggregation: AggregationKind,
    seed: u64,
    cfg: &ExperimentConfig,
) -> Result<RunResult> {
    let input_dim = train_set
        .first()
        .map(|s| s.dim())
        .ok_or_else(|| Error::contract("training set is empty"))?;
    let model_cfg = cfg.model.config_for(input_dim, aggregation)?;
    let model = VarsModel::new(model_cfg, seed)?;
    let train_cfg = TrainConfig {
        seed: shuffle_seed(seed),
        ..cfg.train.clone()
    };
    let outcome = train(model, train_set, val_set, &train_cfg)?;
    let test = evaluate(&outcome.model, test_set)?;
    Ok(RunResult { outcome, test })
}

/// Convenience wrapper over a [`DataSplit`].
pub fn train_and_evaluate_split(
    split: &DataSplit<f64>,
    aggregation: AggregationKind,
    seed: u64,
    cfg: &ExperimentConfig,
) -> Result<RunResult> {
    train_and_evaluate(&split.train, &split.val, &split.test, aggregation, seed, cfg)
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub(crate) fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// A generated dataset partitioned by [`SplitSizes`], keeping the planted
/// informative-view masks aligned with the test samples.
#[derive(Clone, Debug)]
pub struct SyntheticBenchmark {
    pub split: DataSplit<f64>,
    pub test_informative: Vec<Vec<bool>>,
}

/// Generates `split.train + split.val + split.test` samples from
/// `cfg.synthetic` (its `n_samples` is replaced by that total) and splits
/// them in order.
pub fn synthetic_benchmark(cfg: &ExperimentConfig) -> Result<SyntheticBenchmark> {
    let total = cfg.split.train + cfg.split.val + cfg.split.test;
    let spec = SyntheticSpec {
        n_samples: total,
        ..cfg.synthetic.clone()
    };
    let ds = generate_synthetic(&spec)?;
    let head = cfg.split.train + cfg.split.val;
    let test_informative = ds.informative[head..].to_vec();
    let split = DataSplit::from_ordered(ds.samples, cfg.split.train, cfg.split.val)?;
    Ok(SyntheticBenchmark {
        split,
        test_informative,
    })
}
