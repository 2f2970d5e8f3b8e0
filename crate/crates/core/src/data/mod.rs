//! Samples, label taxonomies, dataset files, subsampling and synthetic data.

mod io;
mod subsample;
mod synthetic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::scalar::Scalar;

pub use io::{dataset_hash, load_dataset, load_split, read_dataset, save_dataset, save_split, write_dataset};
pub use subsample::subsample;
pub use synthetic::{generate_synthetic, SyntheticDataset, SyntheticSpec};

pub const FOUL_TYPES: [&str; 8] = [
    "Standing tackling",
    "Tackling",
    "High leg",
    "Pushing",
    "Holding",
    "Elbowing",
    "Challenge",
    "Dive/Simulation",
];

pub const SEVERITIES: [&str; 4] = [
    "No offence",
    "Offence + No card",
    "Offence + Yellow card",
    "Offence + Red card",
];

pub const FOUL_CLASSES: usize = FOUL_TYPES.len();
pub const OFFENCE_CLASSES: usize = SEVERITIES.len();

/// The two classification tasks; codes are indices into their label lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    FoulType,
    OffenceSeverity,
}

impl Task {
    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Task::FoulType => &FOUL_TYPES,
            Task::OffenceSeverity => &SEVERITIES,
        }
    }

    pub fn n_classes(self) -> usize {
        self.labels().len()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::FoulType => "foul_type",
            Task::OffenceSeverity => "offence_severity",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "foul_type" | "foul" => Ok(Task::FoulType),
            "offence_severity" | "off" | "offence" => Ok(Task::OffenceSeverity),
            other => Err(Error::Config(format!(
                "unknown task {other:?} (expected foul_type or offence_severity)"
            ))),
        }
    }
}

/// One action: its per-view features and both labels.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiViewSample<T> {
    pub action_id: String,
    /// One row per view.
    pub views: Matrix<T>,
    pub foul: usize,
    pub off: usize,
}

impl<T: Scalar> MultiViewSample<T> {
    pub fn n_views(&self) -> usize {
        self.views.rows()
    }

    pub fn dim(&self) -> usize {
        self.views.cols()
    }

    pub fn cast<U: Scalar>(&self) -> MultiViewSample<U> {
        let data = self.views.data().iter().map(|&x| U::of(x.as_f64())).collect();
        MultiViewSample {
            action_id: self.action_id.clone(),
            views: Matrix::new(self.views.rows(), self.views.cols(), data).expect("same shape"),
            foul: self.foul,
            off: self.off,
        }
    }
}

/// Train/validation/test partition sharing one feature space.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSplit<T> {
    pub train: Vec<MultiViewSample<T>>,
    pub val: Vec<MultiViewSample<T>>,
    pub test: Vec<MultiViewSample<T>>,
}

impl<T: Scalar> DataSplit<T> {
    /// Splits in order: the first `n_train` samples, the next `n_val`, the rest.
    pub fn from_ordered(mut samples: Vec<MultiViewSample<T>>, n_train: usize, n_val: usize) -> Result<Self> {
        if n_train + n_val > samples.len() {
            return Err(Error::contract(format!(
                "cannot take {n_train} train + {n_val} val samples from {}",
                samples.len()
            )));
        }
        let test = samples.split_off(n_train + n_val);
        let val = samples.split_off(n_train);
        Ok(Self {
            train: samples,
            val,
            test,
        })
    }
}
