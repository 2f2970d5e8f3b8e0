//! Central finite differences against the tape's analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationKind;
use crate::data::{MultiViewSample, FOUL_CLASSES, OFFENCE_CLASSES};
use crate::error::Result;
use crate::model::{EncoderSpec, ModelConfig, VarsModel};
use crate::numcore::Matrix;

pub const DEFAULT_STEP: f64 = 1e-6;

/// ReLU inputs closer than this to zero make an instance ineligible.
pub const KINK_MARGIN: f64 = 1e-4;

/// Central-difference gradient of `f` with respect to every entry of `inputs`.
pub fn numeric_gradient(f: impl Fn(&[Matrix<f64>]) -> f64, inputs: &[Matrix<f64>], h: f64) -> Vec<Matrix<f64>> {
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for t in 0..inputs.len() {
        let mut g = Matrix::zeros(inputs[t].rows(), inputs[t].cols());
        for k in 0..inputs[t].len() {
            let x = inputs[t].data()[k];
            work[t].data_mut()[k] = x + h;
            let plus = f(&work);
            work[t].data_mut()[k] = x - h;
            let minus = f(&work);
            work[t].data_mut()[k] = x;
            g.data_mut()[k] = (plus - minus) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

fn norm(ms: &[&Matrix<f64>]) -> f64 {
    ms.iter().flat_map(|m| m.data()).map(|x| x * x).sum::<f64>().sqrt()
}

/// `||a - b|| / max(||a||, ||b||)` over all entries jointly; zero when both vanish.
pub fn relative_error(a: &[Matrix<f64>], b: &[Matrix<f64>]) -> f64 {
    let diff: Vec<Matrix<f64>> = a.iter().zip(b).map(|(x, y)| x.sub(y).expect("same shapes")).collect();
    let scale = norm(&a.iter().collect::<Vec<_>>()).max(norm(&b.iter().collect::<Vec<_>>()));
    if scale == 0.0 {
        return 0.0;
    }
    norm(&diff.iter().collect::<Vec<_>>()) / scale
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub relative_error: f64,
    pub max_abs_diff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheck {
    pub relative_error: f64,
    pub tensors: Vec<TensorCheck>,
}

/// Compares the backward pass of the multitask loss on `sample` with central
/// differences of the forward loss.
pub fn check_model(model: &VarsModel<f64>, sample: &MultiViewSample<f64>, h: f64) -> Result<ModelCheck> {
    let (_, analytic, _) = model.loss_and_gradients(sample)?;
    let config = model.config().clone();
    let names = model.names().to_vec();
    let loss_at = |values: &[Matrix<f64>]| -> f64 {
        let params = names.iter().cloned().zip(values.iter().cloned()).collect();
        let m = VarsModel::from_parameters(config.clone(), params).expect("same layout");
        m.loss(sample).expect("forward on a valid sample")
    };
    let numeric = numeric_gradient(loss_at, model.values(), h);
    let tensors = names
        .iter()
        .zip(analytic.iter().zip(&numeric))
        .map(|(name, (a, n))| TensorCheck {
            name: name.clone(),
            relative_error: relative_error(std::slice::from_ref(a), std::slice::from_ref(n)),
            max_abs_diff: a
                .data()
                .iter()
                .zip(n.data())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        })
        .collect();
    Ok(ModelCheck {
        relative_error: relative_error(&analytic, &numeric),
        tensors,
    })
}

/// A random attention model with a trainable MLP encoder and a random
/// labelled sample, redrawn until every ReLU input clears [`KINK_MARGIN`].
pub fn random_instance(n_views: usize, dim: usize, seed: u64) -> Result<(VarsModel<f64>, MultiViewSample<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let in_dim = rng.random_range(2..=6);
        let hidden = rng.random_range(2..=8);
        let mut cfg = ModelConfig::new(dim, AggregationKind::Attention);
        cfg.encoder = EncoderSpec::Mlp { in_dim, hidden };
        cfg.head_hidden = Some(rng.random_range(2..=dim.max(2)));
        let mut model = VarsModel::<f64>::new(cfg, rng.random())?;
        // Nonzero biases so every parameter is exercised.
        for v in model.values_mut() {
            if v.rows() == 1 || v.cols() == 1 {
                for x in v.data_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *x = 0.1 * z;
                }
            }
        }
        let data = (0..n_views * in_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let sample = MultiViewSample {
            action_id: format!("gradcheck-{seed}"),
            views: Matrix::new(n_views, in_dim, data)?,
            foul: rng.random_range(0..FOUL_CLASSES),
            off: rng.random_range(0..OFFENCE_CLASSES),
        };
        let margin = model.relu_margin(&sample.views)?.unwrap_or(f64::INFINITY);
        if margin >= KINK_MARGIN {
            return Ok((model, sample));
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteCase {
    pub seed: u64,
    pub n_views: usize,
    pub dim: usize,
    pub relative_error: f64,
}

/// Runs [`check_model`] over every `(seed, n, d)` combination.
pub fn run_suite(seeds: &[u64], views: &[usize], dims: &[usize], h: f64) -> Result<Vec<SuiteCase>> {
    let mut out = Vec::new();
    for &seed in seeds {
        for &n in views {
            for &d in dims {
                let instance_seed = seed.wrapping_mul(1_000_003) ^ ((n as u64) << 32) ^ d as u64;
                let (model, sample) = random_instance(n, d, instance_seed)?;
                let check = check_model(&model, &sample, h)?;
                out.push(SuiteCase {
                    seed,
                    n_views: n,
                    dim: d,
                    relative_error: check.relative_error,
                });
            }
        }
    }
    Ok(out)
}
