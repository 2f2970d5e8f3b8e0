//! Accuracy, balanced accuracy and confusion matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `k x k` counts; rows are ground truth, columns are predictions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn from_counts(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::shape(
                "ConfusionMatrix",
                format!("{k} rows"),
                "non-square counts",
            ));
        }
        Ok(Self {
            k,
            counts: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_pairs(k: usize, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::shape(
                "ConfusionMatrix::from_pairs",
                format!("{} labels", truth.len()),
                format!("{} predictions", predicted.len()),
            ));
        }
        let mut cm = Self::new(k);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.record(t, p)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.k || predicted >= self.k {
            return Err(Error::contract(format!(
                "class pair ({truth}, {predicted}) out of range for {} classes",
                self.k
            )));
        }
        self.counts[truth * self.k + predicted] += 1;
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    /// Number of samples whose ground truth is `class`.
    pub fn positives(&self, class: usize) -> u64 {
        self.counts[class * self.k..(class + 1) * self.k].iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k.max(1)).map(|r| r.to_vec()).collect()
    }

    /// Recall per class; `None` for classes absent from the ground truth.
    pub fn per_class_recall(&self) -> Vec<Option<f64>> {
        (0..self.k)
            .map(|i| match self.positives(i) {
                0 => None,
                p => Some(self.get(i, i) as f64 / p as f64),
            })
            .collect()
    }

    pub fn accuracy(&self) -> Result<f64> {
        match self.total() {
            0 => Err(Error::contract("accuracy of an empty confusion matrix")),
            n => Ok(self.trace() as f64 / n as f64),
        }
    }

    /// Mean recall over the classes present in the ground truth.
    pub fn balanced_accuracy(&self) -> Result<f64> {
        let recalls: Vec<f64> = self.per_class_recall().into_iter().flatten().collect();
        if recalls.is_empty() {
            return Err(Error::contract("balanced accuracy needs at least one nonempty class"));
        }
        Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
    }

    pub fn report(&self) -> Result<MetricsReport> {
        Ok(MetricsReport {
            accuracy: self.accuracy()?,
            balanced_accuracy: self.balanced_accuracy()?,
            per_class_recall: self.per_class_recall(),
            confusion: self.rows(),
            n_samples: self.total(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    /// `null` for classes with no ground-truth samples.
    pub per_class_recall: Vec<Option<f64>>,
    pub confusion: Vec<Vec<u64>>,
    pub n_samples: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(rows: &[&[u64]]) -> ConfusionMatrix {
        ConfusionMatrix::from_counts(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(cm(&[&[4, 0], &[0, 7]]).accuracy().unwrap(), 1.0);
        assert_eq!(cm(&[&[0, 3], &[5, 0]]).accuracy().unwrap(), 0.0);
        assert_eq!(cm(&[&[3, 1], &[2, 2]]).accuracy().unwrap(), 0.625);
    }

    #[test]
    fn balanced_accuracy_examples() {
        assert_eq!(
            cm(&[&[4, 0, 0], &[0, 1, 0], &[0, 0, 9]]).balanced_accuracy().unwrap(),
            1.0
        );
        assert_eq!(cm(&[&[5, 0], &[5, 0]]).balanced_accuracy().unwrap(), 0.5);
        assert_eq!(cm(&[&[3, 1], &[2, 2]]).balanced_accuracy().unwrap(), 0.625);
    }

    #[test]
    fn absent_classes_are_excluded() {
        let m = cm(&[&[2, 0, 0], &[0, 0, 0], &[1, 0, 1]]);
        assert_eq!(m.per_class_recall(), vec![Some(1.0), None, Some(0.5)]);
        assert_eq!(m.balanced_accuracy().unwrap(), 0.75);
    }

    #[test]
    fn empty_matrix_is_a_contract_error() {
        let m = ConfusionMatrix::new(4);
        assert!(matches!(m.accuracy(), Err(Error::Contract(_))));
        assert!(matches!(m.balanced_accuracy(), Err(Error::Contract(_))));
    }

    #[test]
    fn report_json_keys() {
        let r = cm(&[&[3, 1], &[2, 2]]).report().unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in ["accuracy", "balanced_accuracy", "per_class_recall", "confusion"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(r.n_samples, 8);
    }

    #[test]
    fn from_pairs_counts() {
        let m = ConfusionMatrix::from_pairs(3, &[0, 1, 2, 2], &[0, 2, 2, 1]).unwrap();
        assert_eq!(m.total(), 4);
        assert_eq!(m.positives(2), 2);
        assert!(ConfusionMatrix::from_pairs(3, &[3], &[0]).is_err());
    }
}
