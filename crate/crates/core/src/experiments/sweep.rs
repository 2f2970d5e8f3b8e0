use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean, population_std, train_and_evaluate, ExperimentConfig};
use crate::aggregation::AggregationKind;
use crate::data::{subsample, DataSplit, FOUL_CLASSES, OFFENCE_CLASSES};
use crate::error::{Error, Result};

/// Expected accuracy of a uniformly random decision: `1/K` per task.
pub fn random_baseline() -> (f64, f64) {
    (1.0 / FOUL_CLASSES as f64, 1.0 / OFFENCE_CLASSES as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub fraction: f64,
    pub n_train: usize,
    /// True for the zero-data point, which reports the random baseline.
    pub random_baseline: bool,
    pub foul_accuracies: Vec<f64>,
    pub off_accuracies: Vec<f64>,
    pub foul_mean: f64,
    pub foul_std: f64,
    pub off_mean: f64,
    pub off_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub pooling: AggregationKind,
    pub repeats: usize,
    pub n_test: usize,
    pub random_baseline: (f64, f64),
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn point(&self, fraction: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.fraction == fraction)
    }

    /// One row per fraction: means with population-std error bars.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "fraction",
            "n_train",
            "repeats",
            "foul_mean",
            "foul_std",
            "off_mean",
            "off_std",
            "random_baseline",
        ])?;
        for p in &self.points {
            w.write_record([
                p.fraction.to_string(),
                p.n_train.to_string(),
                p.foul_accuracies.len().to_string(),
                format!("{:.6}", p.foul_mean),
                format!("{:.6}", p.foul_std),
                format!("{:.6}", p.off_mean),
                format!("{:.6}", p.off_std),
                p.random_baseline.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn subsample_seed(seed: u64, fraction_index: usize, repeat: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ ((fraction_index as u64) << 40) ^ repeat as u64
}

/// Trains `repeats` models per training-set fraction, always testing on
/// `split.test`. Repeat `r` initialises from `cfg.seed + r`.
pub fn run_sweep(
    split: &DataSplit<f64>,
    fractions: &[f64],
    repeats: usize,
    cfg: &ExperimentConfig,
) -> Result<SweepResult> {
    if let Some(f) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::Config(format!("sweep fraction {f} outside [0, 1]")));
    }
    if repeats == 0 {
        return Err(Error::Config("sweep needs at least one repeat".into()));
    }
    let pooling = cfg.model.aggregation;
    let jobs: Vec<(usize, usize)> = (0..fractions.len())
        .filter(|&i| fractions[i] > 0.0)
        .flat_map(|i| (0..repeats).map(move |r| (i, r)))
        .collect();
    let run = |&(fi, r): &(usize, usize)| -> Result<(usize, f64, f64)> {
        let subset = subsample(&split.train, fractions[fi], subsample_seed(cfg.seed, fi, r));
        if subset.is_empty() {
            return Err(Error::contract(format!(
                "fraction {} of {} training samples is empty",
                fractions[fi],
                split.train.len()
            )));
        }
        let seed = cfg.seed.wrapping_add(r as u64);
        let res = train_and_evaluate(&subset, &split.val, &split.test, pooling, seed, cfg)?;
        log::info!(
            "sweep fraction {} repeat {r}: foul acc {:.3}, off acc {:.3}",
            fractions[fi],
            res.test.foul.accuracy,
            res.test.off.accuracy
        );
        Ok((subset.len(), res.test.foul.accuracy, res.test.off.accuracy))
    };
    let results: Vec<Result<(usize, f64, f64)>> = if cfg.parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    };
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let baseline = random_baseline();
    let mut points = Vec::with_capacity(fractions.len());
    let mut cursor = 0;
    for &fraction in fractions {
        if fraction == 0.0 {
            points.push(SweepPoint {
                fraction,
                n_train: 0,
                random_baseline: true,
                foul_accuracies: Vec::new(),
                off_accuracies: Vec::new(),
                foul_mean: baseline.0,
                foul_std: 0.0,
                off_mean: baseline.1,
                off_std: 0.0,
            });
            continue;
        }
        let chunk = &results[cursor..cursor + repeats];
        cursor += repeats;
        let foul: Vec<f64> = chunk.iter().map(|r| r.1).collect();
        let off: Vec<f64> = chunk.iter().map(|r| r.2).collect();
        points.push(SweepPoint {
            fraction,
            n_train: chunk[0].0,
            random_baseline: false,
            foul_mean: mean(&foul),
            foul_std: population_std(&foul),
            off_mean: mean(&off),
            off_std: population_std(&off),
            foul_accuracies: foul,
            off_accuracies: off,
        });
    }
    Ok(SweepResult {
        pooling,
        repeats,
        n_test: split.test.len(),
        random_baseline: baseline,
        points,
    })
}
