use serde::{Deserialize, Serialize};

use crate::agreement::{average_kappa, consensus_histogram, pairwise_kappas, rater_accuracy, PairKappa, RaterTable};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaterScore {
    pub rater: String,
    pub group: Option<String>,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupAgreement {
    pub group: String,
    pub n_raters: usize,
    pub average_kappa: f64,
    pub pairwise: Vec<PairKappa>,
    /// Index `c - 1` holds the percentage of actions with `c` distinct decisions.
    pub consensus_percent: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub task: String,
    pub n_actions: usize,
    pub labels: Vec<String>,
    pub raters: Vec<RaterScore>,
    pub groups: Vec<GroupAgreement>,
}

/// Agreement statistics per requested group. With no groups requested, every
/// group declared in the table is reported, or the whole panel as `"all"`
/// when the table declares none.
pub fn run_agreement(table: &RaterTable, task: &str, groups: &[String]) -> Result<AgreementReport> {
    let accuracy = rater_accuracy(table);
    let raters = table
        .rater_names()
        .iter()
        .enumerate()
        .map(|(i, name)| RaterScore {
            rater: name.clone(),
            group: table.groups().map(|g| g[i].clone()),
            accuracy: accuracy[i],
        })
        .collect();

    let selected: Vec<Option<String>> = if !groups.is_empty() {
        groups.iter().cloned().map(Some).collect()
    } else if table.groups().is_some() {
        table.group_names().into_iter().map(Some).collect()
    } else {
        vec![None]
    };

    let mut reports = Vec::with_capacity(selected.len());
    for g in selected {
        let members = table.raters_in(g.as_deref())?;
        reports.push(GroupAgreement {
            group: g.clone().unwrap_or_else(|| "all".into()),
            n_raters: members.len(),
            average_kappa: average_kappa(table, g.as_deref())?,
            pairwise: pairwise_kappas(table, g.as_deref())?,
            consensus_percent: consensus_histogram(table, g.as_deref())?,
            mean_accuracy: members.iter().map(|&r| accuracy[r]).sum::<f64>() / members.len() as f64,
        });
    }
    Ok(AgreementReport {
        task: task.to_string(),
        n_actions: table.n_actions(),
        labels: table.labels().names().to_vec(),
        raters,
        groups: reports,
    })
}
