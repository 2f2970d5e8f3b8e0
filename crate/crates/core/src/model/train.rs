//! Minibatch Adam training with a step-decay learning rate and
//! best-validation checkpoint selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, multitask_loss, AdamConfig, AdamState, VarsModel};
use crate::data::{MultiViewSample, FOUL_CLASSES, OFFENCE_CLASSES};
use crate::error::{Error, Result};
use crate::metrics::{ConfusionMatrix, MetricsReport};
use crate::scalar::Scalar;

/// What one decay period of the learning-rate schedule counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayUnit {
    #[default]
    Epoch,
    Step,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub decay_unit: DecayUnit,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    pub adam: AdamConfig,
    /// Evaluate per-sample gradients of a minibatch on the rayon pool.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 5e-5,
            decay_factor: 0.3,
            decay_every: 3,
            decay_unit: DecayUnit::Epoch,
            batch_size: 6,
            max_epochs: 7,
            seed: 0,
            adam: AdamConfig::default(),
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lr0.is_finite() || self.lr0 <= 0.0 {
            return Err(Error::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config(format!(
                "decay_factor must be in (0, 1], got {}",
                self.decay_factor
            )));
        }
        if self.batch_size == 0 || self.decay_every == 0 {
            return Err(Error::Config("batch_size and decay_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// `lr0 * decay_factor ^ floor(epoch / decay_every)`.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> f64 {
    let periods = (epoch / cfg.decay_every.max(1)) as i32;
    cfg.lr0 * cfg.decay_factor.powi(periods)
}

/// Learning rate for the optimizer step `step` taken during `epoch`.
pub fn lr_for(cfg: &TrainConfig, epoch: usize, step: usize) -> f64 {
    match cfg.decay_unit {
        DecayUnit::Epoch => lr_at_epoch(cfg, epoch),
        DecayUnit::Step => lr_at_epoch(cfg, step),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate of the epoch's first step.
    pub lr: f64,
    pub train_loss: f64,
    /// Running accuracies over the epoch, measured before each update.
    pub train_foul_accuracy: f64,
    pub train_off_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_foul_accuracy: Option<f64>,
    pub val_off_accuracy: Option<f64>,
    pub val_foul_balanced_accuracy: Option<f64>,
    pub val_off_balanced_accuracy: Option<f64>,
}

impl EpochRecord {
    /// Model-selection metric: validation offence accuracy, or the training
    /// one when there is no validation set.
    pub fn selection_metric(&self) -> f64 {
        self.val_off_accuracy.unwrap_or(self.train_off_accuracy)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: VarsModel<T>,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were returned; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub foul: MetricsReport,
    pub off: MetricsReport,
}

pub fn evaluate<T: Scalar>(model: &VarsModel<T>, samples: &[MultiViewSample<T>]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::contract("cannot evaluate on an empty dataset"));
    }
    let mut foul = ConfusionMatrix::new(FOUL_CLASSES);
    let mut off = ConfusionMatrix::new(OFFENCE_CLASSES);
    let mut loss = 0.0;
    for s in samples {
        let pred = model.forward(&s.views)?;
        loss += multitask_loss(&pred, s.foul, s.off)?.as_f64();
        foul.record(s.foul, pred.foul_class)?;
        off.record(s.off, pred.off_class)?;
    }
    Ok(Evaluation {
        loss: loss / samples.len() as f64,
        foul: foul.report()?,
        off: off.report()?,
    })
}

pub fn train<T: Scalar>(
    mut model: VarsModel<T>,
    train_set: &[MultiViewSample<T>],
    val_set: &[MultiViewSample<T>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::contract("training set is empty"));
    }
    let mut history = Vec::with_capacity(cfg.max_epochs);
    if cfg.max_epochs == 0 {
        return Ok(TrainOutcome {
            model,
            history,
            best_epoch: None,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(model.values());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(f64, usize, VarsModel<T>)> = None;
    let mut step = 0usize;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let lr_first = lr_for(cfg, epoch, step);
        let mut loss_sum = 0.0;
        let mut foul_hits = 0usize;
        let mut off_hits = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&MultiViewSample<T>> = chunk.iter().map(|&i| &train_set[i]).collect();
            let bg = model.batch_gradient(&batch, cfg.parallel)?;
            loss_sum += bg.loss.as_f64() * batch.len() as f64;
            for (s, p) in batch.iter().zip(&bg.predictions) {
                foul_hits += usize::from(p.foul_class == s.foul);
                off_hits += usize::from(p.off_class == s.off);
            }
            let lr = T::of(lr_for(cfg, epoch, step));
            adam_step(model.values_mut(), &bg.grads, &mut state, lr, &cfg.adam)?;
            step += 1;
        }

        let n = train_set.len() as f64;
        let val = if val_set.is_empty() {
            None
        } else {
            Some(evaluate(&model, val_set)?)
        };
        let record = EpochRecord {
            epoch,
            lr: lr_first,
            train_loss: loss_sum / n,
            train_foul_accuracy: foul_hits as f64 / n,
            train_off_accuracy: off_hits as f64 / n,
            val_loss: val.as_ref().map(|v| v.loss),
            val_foul_accuracy: val.as_ref().map(|v| v.foul.accuracy),
            val_off_accuracy: val.as_ref().map(|v| v.off.accuracy),
            val_foul_balanced_accuracy: val.as_ref().map(|v| v.foul.balanced_accuracy),
            val_off_balanced_accuracy: val.as_ref().map(|v| v.off.balanced_accuracy),
        };
        log::debug!(
            "epoch {epoch}: lr {lr_first:.3e} train loss {:.4} val off acc {:?}",
            record.train_loss,
            record.val_off_accuracy
        );
        let metric = record.selection_metric();
        if best.as_ref().is_none_or(|(m, _, _)| metric > *m) {
            best = Some((metric, epoch, model.clone()));
        }
        history.push(record);
    }

    let (_, best_epoch, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: Some(best_epoch),
    })
}
