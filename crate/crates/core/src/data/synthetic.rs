//! Multi-view samples with planted structure: a known subset of views carries
//! the class signal and the others are label-independent noise.

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{MultiViewSample, FOUL_CLASSES, OFFENCE_CLASSES};
use crate::error::{Error, Result};
use crate::numcore::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub views_per_sample: usize,
    pub n_informative_views: usize,
    pub dim: usize,
    /// Per-coordinate standard deviation of class-mean vectors.
    pub class_separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub foul_frequencies: Vec<f64>,
    pub off_frequencies: Vec<f64>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_samples: 600,
            views_per_sample: 4,
            n_informative_views: 2,
            dim: 16,
            class_separation: 3.0,
            noise_sigma: 0.5,
            seed: 0,
            foul_frequencies: vec![0.35, 0.25, 0.05, 0.1, 0.1, 0.05, 0.07, 0.03],
            off_frequencies: vec![0.3, 0.45, 0.2, 0.05],
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.views_per_sample == 0 || self.dim == 0 {
            return bad("views_per_sample and dim must be positive".into());
        }
        if self.n_informative_views == 0 || self.n_informative_views > self.views_per_sample {
            return bad(format!(
                "n_informative_views must be in 1..={}, got {}",
                self.views_per_sample, self.n_informative_views
            ));
        }
        if !self.class_separation.is_finite() || self.class_separation <= 0.0 {
            return bad("class_separation must be positive".into());
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return bad("noise_sigma must be nonnegative".into());
        }
        for (name, freqs, k) in [
            ("foul_frequencies", &self.foul_frequencies, FOUL_CLASSES),
            ("off_frequencies", &self.off_frequencies, OFFENCE_CLASSES),
        ] {
            if freqs.len() != k || freqs.iter().any(|&p| !p.is_finite() || p < 0.0) || freqs.iter().sum::<f64>() <= 0.0
            {
                return bad(format!("{name} needs {k} nonnegative weights with a positive sum"));
            }
        }
        Ok(())
    }

    /// Per-coordinate scale of class means.
    pub fn mean_scale(&self) -> f64 {
        self.class_separation
    }

    /// Per-coordinate standard deviation of an informative view, which
    /// uninformative views reproduce.
    pub fn marginal_scale(&self) -> f64 {
        (self.mean_scale().powi(2) + self.noise_sigma.powi(2)).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub samples: Vec<MultiViewSample<f64>>,
    /// `informative[i][v]` is true when view `v` of sample `i` carries signal.
    pub informative: Vec<Vec<bool>>,
    /// Indexed by `foul * OFFENCE_CLASSES + off`.
    pub class_means: Vec<Vec<f64>>,
}

impl SyntheticDataset {
    pub fn class_mean(&self, foul: usize, off: usize) -> &[f64] {
        &self.class_means[foul * OFFENCE_CLASSES + off]
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let mean_scale = spec.mean_scale();
    let class_means: Vec<Vec<f64>> = (0..FOUL_CLASSES * OFFENCE_CLASSES)
        .map(|_| (0..spec.dim).map(|_| mean_scale * normal(&mut rng)).collect())
        .collect();

    let foul_dist =
        WeightedIndex::new(&spec.foul_frequencies).map_err(|e| Error::Config(format!("foul_frequencies: {e}")))?;
    let off_dist =
        WeightedIndex::new(&spec.off_frequencies).map_err(|e| Error::Config(format!("off_frequencies: {e}")))?;
    let noise_scale = spec.marginal_scale();

    let mut samples = Vec::with_capacity(spec.n_samples);
    let mut informative = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        let foul = foul_dist.sample(&mut rng);
        let off = off_dist.sample(&mut rng);
        let mut positions: Vec<usize> = (0..spec.views_per_sample).collect();
        positions.shuffle(&mut rng);
        let mut mask = vec![false; spec.views_per_sample];
        for &p in &positions[..spec.n_informative_views] {
            mask[p] = true;
        }
        let mean = &class_means[foul * OFFENCE_CLASSES + off];
        let mut data = Vec::with_capacity(spec.views_per_sample * spec.dim);
        for &is_informative in &mask {
            for &m in mean {
                let z = normal(&mut rng);
                data.push(if is_informative {
                    m + spec.noise_sigma * z
                } else {
                    noise_scale * z
                });
            }
        }
        samples.push(MultiViewSample {
            action_id: format!("syn-{i:05}"),
            views: Matrix::new(spec.views_per_sample, spec.dim, data)?,
            foul,
            off,
        });
        informative.push(mask);
    }
    Ok(SyntheticDataset {
        samples,
        informative,
        class_means,
    })
}
