//! Inter-rater agreement: accuracy against ground truth, pairwise Cohen's
//! kappa and its unweighted mean over rater pairs (Light's kappa), and
//! per-action consensus histograms.
//!
//! Rater tables are read from CSV:
//!
//! ```text
//! action_id,ground_truth,rater_1,rater_2,rater_3
//! group,,high-level,high-level,talent
//! 17,Offence + No card,Offence + No card,No offence,1
//! ```
//!
//! The second line is optional and assigns a group to each rater. Decision
//! cells hold either a label name or its integer code.

use std::collections::BTreeSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};

/// Ordered label names; a code is an index into the list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet(Vec<String>);

impl LabelSet {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Config("label set is empty".into()));
        }
        let unique: BTreeSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(Error::Config("label set has duplicates".into()));
        }
        Ok(Self(labels))
    }

    pub fn for_task(task: Task) -> Self {
        Self(task.labels().iter().map(|s| s.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    /// Accepts a label name or an integer code.
    pub fn code(&self, cell: &str) -> Option<usize> {
        let cell = cell.trim();
        if let Some(i) = self.0.iter().position(|l| l == cell) {
            return Some(i);
        }
        cell.parse::<usize>().ok().filter(|&i| i < self.0.len())
    }
}

/// Complete actions x raters decision table with ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct RaterTable {
    labels: LabelSet,
    action_ids: Vec<String>,
    rater_names: Vec<String>,
    groups: Option<Vec<String>>,
    /// `decisions[action][rater]`.
    decisions: Vec<Vec<usize>>,
    ground_truth: Vec<usize>,
}

impl RaterTable {
    pub fn new(
        labels: LabelSet,
        action_ids: Vec<String>,
        rater_names: Vec<String>,
        groups: Option<Vec<String>>,
        decisions: Vec<Vec<usize>>,
        ground_truth: Vec<usize>,
    ) -> Result<Self> {
        let k = labels.len();
        if action_ids.len() != decisions.len() || ground_truth.len() != decisions.len() {
            return Err(Error::contract("actions, decisions and ground truth differ in length"));
        }
        if let Some(g) = &groups {
            if g.len() != rater_names.len() {
                return Err(Error::contract("one group label per rater required"));
            }
        }
        for (a, row) in decisions.iter().enumerate() {
            if row.len() != rater_names.len() {
                return Err(Error::contract(format!(
                    "action {} has {} decisions for {} raters",
                    action_ids[a],
                    row.len(),
                    rater_names.len()
                )));
            }
            if row.iter().chain(std::iter::once(&ground_truth[a])).any(|&c| c >= k) {
                return Err(Error::contract(format!(
                    "action {} has a code outside the label set",
                    action_ids[a]
                )));
            }
        }
        Ok(Self {
            labels,
            action_ids,
            rater_names,
            groups,
            decisions,
            ground_truth,
        })
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn n_actions(&self) -> usize {
        self.decisions.len()
    }

    pub fn n_raters(&self) -> usize {
        self.rater_names.len()
    }

    pub fn rater_names(&self) -> &[String] {
        &self.rater_names
    }

    pub fn action_ids(&self) -> &[String] {
        &self.action_ids
    }

    pub fn ground_truth(&self) -> &[usize] {
        &self.ground_truth
    }

    pub fn groups(&self) -> Option<&[String]> {
        self.groups.as_deref()
    }

    /// Distinct group labels in order of first appearance.
    pub fn group_names(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for g in self.groups.iter().flatten() {
            if !out.contains(g) {
                out.push(g.clone());
            }
        }
        out
    }

    pub fn rater_decisions(&self, rater: usize) -> Vec<usize> {
        self.decisions.iter().map(|row| row[rater]).collect()
    }

    /// Rater indices in `group`, or all raters for `None`.
    pub fn raters_in(&self, group: Option<&str>) -> Result<Vec<usize>> {
        match group {
            None => Ok((0..self.n_raters()).collect()),
            Some(name) => {
                let groups = self
                    .groups
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("table has no rater groups (asked for {name:?})")))?;
                Ok(groups
                    .iter()
                    .enumerate()
                    .filter(|(_, g)| g.as_str() == name)
                    .map(|(i, _)| i)
                    .collect())
            }
        }
    }

    pub fn read_csv<R: Read>(reader: R, labels: LabelSet) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut records = rdr.records();
        let header = match records.next() {
            Some(r) => r?,
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "missing header row".into(),
                })
            }
        };
        if header.len() < 3 {
            return Err(Error::Parse {
                line: 1,
                message: "expected action_id,ground_truth,rater_1,...".into(),
            });
        }
        let rater_names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let width = header.len();

        let mut groups = None;
        let mut action_ids = Vec::new();
        let mut decisions = Vec::new();
        let mut ground_truth = Vec::new();
        for (idx, rec) in records.enumerate() {
            let rec = rec?;
            let line = rec.position().map_or(idx + 2, |p| p.line() as usize);
            if rec.len() == 1 && rec[0].is_empty() {
                continue;
            }
            if rec.len() != width {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {width} fields, found {}", rec.len()),
                });
            }
            if idx == 0 && matches!(&rec[0], "group" | "#group") {
                groups = Some(rec.iter().skip(2).map(str::to_string).collect());
                continue;
            }
            let code = |cell: &str| {
                labels.code(cell).ok_or_else(|| Error::UnknownLabel {
                    line,
                    task: "rater".into(),
                    label: cell.to_string(),
                })
            };
            if rec.iter().skip(1).any(str::is_empty) {
                return Err(Error::Parse {
                    line,
                    message: "missing cell; the rater table must be complete".into(),
                });
            }
            action_ids.push(rec[0].to_string());
            ground_truth.push(code(&rec[1])?);
            decisions.push(rec.iter().skip(2).map(code).collect::<Result<Vec<_>>>()?);
        }
        Self::new(labels, action_ids, rater_names, groups, decisions, ground_truth)
    }

    pub fn load(path: impl AsRef<Path>, labels: LabelSet) -> Result<Self> {
        Self::read_csv(fs::File::open(path)?, labels)
    }

    /// Writes the table with label names in every decision cell.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["action_id".to_string(), "ground_truth".to_string()];
        header.extend(self.rater_names.iter().cloned());
        w.write_record(&header)?;
        if let Some(groups) = &self.groups {
            let mut row = vec!["group".to_string(), String::new()];
            row.extend(groups.iter().cloned());
            w.write_record(&row)?;
        }
        let names = self.labels.names();
        for (a, row) in self.decisions.iter().enumerate() {
            let mut out = vec![self.action_ids[a].clone(), names[self.ground_truth[a]].clone()];
            out.extend(row.iter().map(|&c| names[c].clone()));
            w.write_record(&out)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Cohen's kappa between two raters over `n_labels` categories.
///
/// `Ok(None)` marks the undefined case: chance agreement of exactly one
/// (both raters constant) with observed agreement below one.
pub fn cohen_kappa(a: &[usize], b: &[usize], n_labels: usize) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::contract(format!(
            "rater decision vectors differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::contract("kappa needs at least one decision"));
    }
    let mut count_a = vec![0usize; n_labels];
    let mut count_b = vec![0usize; n_labels];
    let mut agree = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        if x >= n_labels || y >= n_labels {
            return Err(Error::contract(format!("decision code outside {n_labels} labels")));
        }
        count_a[x] += 1;
        count_b[y] += 1;
        agree += usize::from(x == y);
    }
    let n = a.len() as f64;
    let p_o = agree as f64 / n;
    let p_e: f64 = count_a
        .iter()
        .zip(&count_b)
        .map(|(&ca, &cb)| (ca as f64 / n) * (cb as f64 / n))
        .sum();
    if p_e == 1.0 {
        return Ok((p_o == 1.0).then_some(1.0));
    }
    Ok(Some((p_o - p_e) / (1.0 - p_e)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairKappa {
    pub rater_a: usize,
    pub rater_b: usize,
    pub kappa: Option<f64>,
}

/// Kappa for every unordered rater pair in `group`, in lexicographic order.
pub fn pairwise_kappas(table: &RaterTable, group: Option<&str>) -> Result<Vec<PairKappa>> {
    let raters = table.raters_in(group)?;
    if raters.len() < 2 {
        return Err(Error::contract(format!(
            "average kappa needs at least 2 raters, group {group:?} has {}",
            raters.len()
        )));
    }
    let decisions: Vec<Vec<usize>> = raters.iter().map(|&r| table.rater_decisions(r)).collect();
    let mut out = Vec::new();
    for i in 0..raters.len() {
        for j in i + 1..raters.len() {
            out.push(PairKappa {
                rater_a: raters[i],
                rater_b: raters[j],
                kappa: cohen_kappa(&decisions[i], &decisions[j], table.labels().len())?,
            });
        }
    }
    Ok(out)
}

/// Unweighted mean of pairwise kappa (Light's kappa). Undefined pairs are
/// skipped with a warning.
pub fn average_kappa(table: &RaterTable, group: Option<&str>) -> Result<f64> {
    let pairs = pairwise_kappas(table, group)?;
    let defined: Vec<f64> = pairs.iter().filter_map(|p| p.kappa).collect();
    for p in pairs.iter().filter(|p| p.kappa.is_none()) {
        log::warn!(
            "kappa undefined for raters {} and {} (constant, different decisions); excluded from the average",
            table.rater_names()[p.rater_a],
            table.rater_names()[p.rater_b]
        );
    }
    if defined.is_empty() {
        return Err(Error::contract("every rater pair has undefined kappa"));
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Percentage of actions on which the group's raters made exactly `c`
/// distinct decisions, for `c = 1..=min(raters, labels)` (index `c - 1`).
pub fn consensus_histogram(table: &RaterTable, group: Option<&str>) -> Result<Vec<f64>> {
    let raters = table.raters_in(group)?;
    if raters.is_empty() {
        return Err(Error::contract(format!("group {group:?} has no raters")));
    }
    if table.n_actions() == 0 {
        return Err(Error::contract("rater table has no actions"));
    }
    let bins = raters.len().min(table.labels().len());
    let mut counts = vec![0usize; bins];
    for row in &table.decisions {
        let distinct: BTreeSet<usize> = raters.iter().map(|&r| row[r]).collect();
        counts[distinct.len() - 1] += 1;
    }
    let n = table.n_actions() as f64;
    Ok(counts.into_iter().map(|c| 100.0 * c as f64 / n).collect())
}

/// Fraction of actions where each rater matches the ground truth.
pub fn rater_accuracy(table: &RaterTable) -> Vec<f64> {
    let n = table.n_actions() as f64;
    (0..table.n_raters())
        .map(|r| {
            let hits = table
                .decisions
                .iter()
                .zip(&table.ground_truth)
                .filter(|(row, &gt)| row[r] == gt)
                .count();
            hits as f64 / n
        })
        .collect()
}

/// Table of raters answering uniformly at random, independently of each
/// other and of the (also random) ground truth.
pub fn simulate_independent_raters(
    labels: LabelSet,
    n_actions: usize,
    n_raters: usize,
    groups: Option<Vec<String>>,
    seed: u64,
) -> Result<RaterTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = labels.len();
    let mut decisions = Vec::with_capacity(n_actions);
    let mut truth = Vec::with_capacity(n_actions);
    for _ in 0..n_actions {
        truth.push(rng.random_range(0..k));
        decisions.push((0..n_raters).map(|_| rng.random_range(0..k)).collect());
    }
    RaterTable::new(
        labels,
        (0..n_actions).map(|i| i.to_string()).collect(),
        (1..=n_raters).map(|i| format!("rater_{i}")).collect(),
        groups,
        decisions,
        truth,
    )
}
