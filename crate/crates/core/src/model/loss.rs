use super::Prediction;
use crate::error::{Error, Result};
use crate::numcore::{cross_entropy_value, Vector};
use crate::scalar::Scalar;

/// `-log softmax(logits)[label]`.
pub fn cross_entropy<T: Scalar>(logits: &Vector<T>, label: usize) -> Result<T> {
    if label >= logits.len() {
        return Err(Error::contract(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    Ok(cross_entropy_value(logits.data(), label))
}

/// Unweighted sum of the foul-type and offence-severity losses.
pub fn multitask_loss<T: Scalar>(pred: &Prediction<T>, foul: usize, off: usize) -> Result<T> {
    Ok(cross_entropy(&pred.foul_logits, foul)? + cross_entropy(&pred.off_logits, off)?)
}
