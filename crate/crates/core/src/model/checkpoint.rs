//! Checkpoint files: JSON with a format tag and version, the model and
//! training configuration, every parameter tensor as shape plus row-major
//! values, and the training history.
//!
//! ```json
//! {
//!   "format": "vars-checkpoint",
//!   "version": 1,
//!   "model": { "encoder": {"kind": "identity"}, "feature_dim": 16, ... },
//!   "train": { "lr0": 5e-5, ... },
//!   "params": [ {"name": "attention.w", "shape": [16, 16], "values": [...]}, ... ],
//!   "history": [ {"epoch": 0, "lr": 5e-5, ...}, ... ],
//!   "best_epoch": 3
//! }
//! ```
//!
//! Values are written in shortest round-trip decimal form, so loading a saved
//! `f64` model reproduces it bit for bit.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EpochRecord, ModelConfig, TrainConfig, VarsModel};
use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT: &str = "vars-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
    pub params: Vec<ParamRecord>,
    #[serde(default)]
    pub history: Vec<EpochRecord>,
    #[serde(default)]
    pub best_epoch: Option<usize>,
}

impl Checkpoint {
    pub fn new<T: Scalar>(
        model: &VarsModel<T>,
        train: Option<&TrainConfig>,
        history: &[EpochRecord],
        best_epoch: Option<usize>,
    ) -> Self {
        let params = model
            .names()
            .iter()
            .zip(model.values())
            .map(|(name, v)| ParamRecord {
                name: name.clone(),
                shape: [v.rows(), v.cols()],
                values: v.data().iter().map(|x| x.as_f64()).collect(),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: model.config().clone(),
            train: train.cloned(),
            params,
            history: history.to_vec(),
            best_epoch,
        }
    }

    pub fn to_model<T: Scalar>(&self) -> Result<VarsModel<T>> {
        let params = self
            .params
            .iter()
            .map(|p| {
                let data = p.values.iter().map(|&x| T::of(x)).collect();
                Ok((p.name.clone(), Matrix::new(p.shape[0], p.shape[1], data)?))
            })
            .collect::<Result<Vec<_>>>()?;
        VarsModel::from_parameters(self.model.clone(), params)
    }
}

pub fn write_checkpoint<W: Write>(writer: W, checkpoint: &Checkpoint) -> Result<()> {
    serde_json::to_writer_pretty(writer, checkpoint)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(reader: R) -> Result<Checkpoint> {
    let ckpt: Checkpoint = serde_json::from_reader(reader)?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(Error::Config(format!(
            "not a checkpoint file (format {:?})",
            ckpt.format
        )));
    }
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Config(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            ckpt.version
        )));
    }
    Ok(ckpt)
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, checkpoint)?;
    buf.push(b'\n');
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(fs::File::open(path)?)
}
