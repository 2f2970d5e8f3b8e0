use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::MultiViewSample;
use crate::scalar::Scalar;

/// Draws `round(fraction * N)` samples without replacement, stratified on the
/// foul label. Each class keeps `floor` or `ceil` of its proportional share;
/// output keeps the original order.
pub fn subsample<T: Scalar>(dataset: &[MultiViewSample<T>], fraction: f64, seed: u64) -> Vec<MultiViewSample<T>> {
    let fraction = if fraction.is_nan() {
        0.0
    } else {
        fraction.clamp(0.0, 1.0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.iter().enumerate() {
        by_class.entry(s.foul).or_default().push(i);
    }

    let target = (fraction * dataset.len() as f64).round() as usize;
    let mut quotas: Vec<(usize, usize, f64)> = by_class
        .iter()
        .map(|(&class, members)| {
            let exact = fraction * members.len() as f64;
            (class, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut remainder = target.saturating_sub(assigned);

    // Largest fractional share first; equal shares in seeded random order.
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.shuffle(&mut rng);
    order.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2));
    for idx in order {
        if remainder == 0 {
            break;
        }
        if quotas[idx].2 > 0.0 {
            quotas[idx].1 += 1;
            remainder -= 1;
        }
    }

    let mut chosen = Vec::with_capacity(target);
    for (class, quota, _) in quotas {
        let mut members = by_class[&class].clone();
        members.shuffle(&mut rng);
        chosen.extend_from_slice(&members[..quota.min(members.len())]);
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|i| dataset[i].clone()).collect()
}
