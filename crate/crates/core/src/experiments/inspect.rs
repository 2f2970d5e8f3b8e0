use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationKind;
use crate::data::{MultiViewSample, FOUL_TYPES, SEVERITIES};
use crate::error::{Error, Result};
use crate::model::VarsModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskReadout {
    pub predicted: usize,
    pub predicted_label: String,
    pub confidence: f64,
    pub confidences: Vec<f64>,
    pub ground_truth: usize,
    pub ground_truth_label: String,
}

/// Per-view attention in percent plus both predictions for one action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InspectReport {
    pub action_id: String,
    pub view_percentages: Vec<f64>,
    /// View indices from most to least attended.
    pub view_ranking: Vec<usize>,
    pub foul: TaskReadout,
    pub offence: TaskReadout,
}

fn readout(confidences: Vec<f64>, predicted: usize, truth: usize, labels: &[&str]) -> TaskReadout {
    TaskReadout {
        predicted,
        predicted_label: labels[predicted].to_string(),
        confidence: confidences[predicted],
        confidences,
        ground_truth: truth,
        ground_truth_label: labels[truth].to_string(),
    }
}

pub fn inspect_action(model: &VarsModel<f64>, sample: &MultiViewSample<f64>) -> Result<InspectReport> {
    if model.aggregation() != AggregationKind::Attention {
        return Err(Error::Config(format!(
            "inspect needs an attention model, this one uses {} pooling",
            model.aggregation()
        )));
    }
    let pred = model.forward(&sample.views)?;
    let attention = pred
        .attention
        .clone()
        .ok_or_else(|| Error::contract("attention model produced no weights"))?;
    Ok(InspectReport {
        action_id: sample.action_id.clone(),
        view_percentages: attention.percentages(),
        view_ranking: attention.ranking(),
        foul: readout(pred.foul_confidences(), pred.foul_class, sample.foul, &FOUL_TYPES),
        offence: readout(pred.off_confidences(), pred.off_class, sample.off, &SEVERITIES),
    })
}

/// Fraction of samples whose informative views are exactly the top-ranked
/// views by attention (as many top ranks as there are informative views).
pub fn attention_hit_rate(
    model: &VarsModel<f64>,
    samples: &[MultiViewSample<f64>],
    informative: &[Vec<bool>],
) -> Result<f64> {
    if samples.is_empty() || samples.len() != informative.len() {
        return Err(Error::contract("need one informative mask per sample"));
    }
    let mut hits = 0usize;
    for (s, mask) in samples.iter().zip(informative) {
        let report = inspect_action(model, s)?;
        let k = mask.iter().filter(|&&m| m).count();
        hits += usize::from(report.view_ranking[..k].iter().all(|&v| mask[v]));
    }
    Ok(hits as f64 / samples.len() as f64)
}
