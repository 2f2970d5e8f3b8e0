use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean, train_and_evaluate_split, ExperimentConfig};
use crate::aggregation::AggregationKind;
use crate::data::DataSplit;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedScores {
    pub seed: u64,
    pub foul_accuracy: f64,
    pub foul_balanced_accuracy: f64,
    pub off_accuracy: f64,
    pub off_balanced_accuracy: f64,
}

/// One pooling kind's test scores, averaged over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub encoder: String,
    pub pooling: AggregationKind,
    pub foul_accuracy: f64,
    pub foul_balanced_accuracy: f64,
    pub off_accuracy: f64,
    pub off_balanced_accuracy: f64,
    pub per_seed: Vec<SeedScores>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn row(&self, pooling: AggregationKind) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.pooling == pooling)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "encoder", "pooling", "foul_acc", "foul_ba", "off_acc", "off_ba", "n_seeds",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.encoder.clone(),
                r.pooling.to_string(),
                format!("{:.6}", r.foul_accuracy),
                format!("{:.6}", r.foul_balanced_accuracy),
                format!("{:.6}", r.off_accuracy),
                format!("{:.6}", r.off_balanced_accuracy),
                r.per_seed.len().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trains one model per `(pooling, seed)` on the shared split and reports
/// each pooling kind's mean test scores.
pub fn run_comparison(
    split: &DataSplit<f64>,
    poolings: &[AggregationKind],
    seeds: &[u64],
    cfg: &ExperimentConfig,
) -> Result<ComparisonTable> {
    let jobs: Vec<(AggregationKind, u64)> = poolings
        .iter()
        .flat_map(|&k| seeds.iter().map(move |&s| (k, s)))
        .collect();
    let run = |&(kind, seed): &(AggregationKind, u64)| -> Result<SeedScores> {
        let r = train_and_evaluate_split(split, kind, seed, cfg)?;
        log::info!(
            "compare {kind} seed {seed}: foul acc {:.3}, off acc {:.3}",
            r.test.foul.accuracy,
            r.test.off.accuracy
        );
        Ok(SeedScores {
            seed,
            foul_accuracy: r.test.foul.accuracy,
            foul_balanced_accuracy: r.test.foul.balanced_accuracy,
            off_accuracy: r.test.off.accuracy,
            off_balanced_accuracy: r.test.off.balanced_accuracy,
        })
    };
    let results: Vec<Result<SeedScores>> = if cfg.parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    };
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let rows = poolings
        .iter()
        .enumerate()
        .map(|(i, &pooling)| {
            let per_seed = results[i * seeds.len()..(i + 1) * seeds.len()].to_vec();
            let avg = |f: fn(&SeedScores) -> f64| mean(&per_seed.iter().map(f).collect::<Vec<_>>());
            ComparisonRow {
                encoder: cfg.model.encoder_tag().to_string(),
                pooling,
                foul_accuracy: avg(|s| s.foul_accuracy),
                foul_balanced_accuracy: avg(|s| s.foul_balanced_accuracy),
                off_accuracy: avg(|s| s.off_accuracy),
                off_balanced_accuracy: avg(|s| s.off_balanced_accuracy),
                per_seed,
            }
        })
        .collect();
    Ok(ComparisonTable {
        seeds: seeds.to_vec(),
        rows,
    })
}
