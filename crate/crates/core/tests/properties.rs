use proptest::prelude::*;

use vars_core::aggregation::{pool, AggregationKind, FeatureMatrix, DEGENERATE_EPS};
use vars_core::agreement::{cohen_kappa, consensus_histogram, LabelSet, RaterTable};
use vars_core::data::{generate_synthetic, read_dataset, subsample, write_dataset, SyntheticSpec, FOUL_CLASSES};
use vars_core::metrics::ConfusionMatrix;
use vars_core::numcore::Matrix;

fn features() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>)> {
    (1usize..7, 1usize..9).prop_flat_map(|(n, d)| {
        (
            Just(n),
            Just(d),
            prop::collection::vec(-3.0f64..3.0, n * d),
            prop::collection::vec(-2.0f64..2.0, d * d),
        )
    })
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

fn permuted_rows(f: &Matrix<f64>, perm: &[usize]) -> Matrix<f64> {
    let rows: Vec<&[f64]> = perm.iter().map(|&p| f.row(p)).collect();
    Matrix::from_rows(&rows).unwrap()
}

proptest! {
    #[test]
    fn attention_weights_form_a_simplex((n, d, fv, wv) in features(), zero in any::<bool>()) {
        let f = if zero { Matrix::zeros(n, d) } else { Matrix::new(n, d, fv).unwrap() };
        let w = Matrix::new(d, d, wv).unwrap();
        let p = pool(&FeatureMatrix::new(f), AggregationKind::Attention, Some(&w)).unwrap();
        let a = p.attention.unwrap();
        prop_assert!(a.values().iter().all(|&x| x >= 0.0));
        prop_assert!((a.values().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn pooling_is_permutation_equivariant(((n, d, fv, wv), perm) in features().prop_flat_map(|x| {
        let n = x.0;
        (Just(x), permutation(n))
    })) {
        let f = Matrix::new(n, d, fv).unwrap();
        let w = Matrix::new(d, d, wv).unwrap();
        let g = permuted_rows(&f, &perm);
        for kind in AggregationKind::ALL {
            let a = pool(&FeatureMatrix::new(f.clone()), kind, Some(&w)).unwrap();
            let b = pool(&FeatureMatrix::new(g.clone()), kind, Some(&w)).unwrap();
            for (x, y) in a.representation.data().iter().zip(b.representation.data()) {
                prop_assert!((x - y).abs() <= 1e-12, "{kind}: R differs");
            }
            if let (Some(wa), Some(wb)) = (&a.attention, &b.attention) {
                for (i, &p) in perm.iter().enumerate() {
                    prop_assert!((wb.values()[i] - wa.values()[p]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_view_passes_through_every_kind(row in prop::collection::vec(-3.0f64..3.0, 1..9), wseed in any::<u64>()) {
        let d = row.len();
        let w = Matrix::new(d, d, (0..d * d).map(|i| ((wseed as f64) + i as f64).sin()).collect()).unwrap();
        let f = FeatureMatrix::from_rows(std::slice::from_ref(&row)).unwrap();
        for kind in AggregationKind::ALL {
            let p = pool(&f, kind, Some(&w)).unwrap();
            prop_assert_eq!(p.representation.data(), row.as_slice());
            if let Some(a) = p.attention {
                prop_assert_eq!(a.values(), &[1.0][..]);
            }
        }
    }

    #[test]
    fn identical_views_get_uniform_attention(row in prop::collection::vec(-3.0f64..3.0, 1..9), n in 1usize..7) {
        let d = row.len();
        let f = FeatureMatrix::from_rows(&vec![row.clone(); n]).unwrap();
        let w = Matrix::identity(d);
        let norm_sq: f64 = row.iter().map(|x| x * x).sum();
        prop_assume!(norm_sq * (n * n) as f64 > DEGENERATE_EPS);
        let a = pool(&f, AggregationKind::Attention, Some(&w)).unwrap().attention.unwrap();
        for &x in a.values() {
            prop_assert!((x - 1.0 / n as f64).abs() <= 1e-12);
        }
    }
}

fn naive_metrics(counts: &[Vec<u64>]) -> (f64, f64) {
    let mut correct = 0u64;
    let mut total = 0u64;
    let mut recalls = Vec::new();
    for (i, row) in counts.iter().enumerate() {
        let mut row_total = 0u64;
        for (j, &c) in row.iter().enumerate() {
            total += c;
            row_total += c;
            if i == j {
                correct += c;
            }
        }
        if row_total > 0 {
            recalls.push(row[i] as f64 / row_total as f64);
        }
    }
    (
        correct as f64 / total as f64,
        recalls.iter().sum::<f64>() / recalls.len() as f64,
    )
}

fn counts(k: usize) -> impl Strategy<Value = Vec<Vec<u64>>> {
    prop::collection::vec(prop::collection::vec(0u64..20, k), k)
        .prop_filter("nonempty", |m| m.iter().flatten().sum::<u64>() > 0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metrics_agree_with_naive_reference(m in prop::sample::select(vec![2usize, 4, 8]).prop_flat_map(counts)) {
        let cm = ConfusionMatrix::from_counts(&m).unwrap();
        let (acc, ba) = naive_metrics(&m);
        prop_assert!((cm.accuracy().unwrap() - acc).abs() <= 1e-12);
        prop_assert!((cm.balanced_accuracy().unwrap() - ba).abs() <= 1e-12);
    }

    #[test]
    fn balanced_classes_make_accuracy_and_ba_coincide(
        (k, per_class, raw) in (2usize..9, 1u64..15).prop_flat_map(|(k, p)| {
            (Just(k), Just(p), prop::collection::vec(prop::collection::vec(0u64..100, k), k))
        })
    ) {
        // Spread exactly `per_class` truths of every class over the predictions.
        let rows: Vec<Vec<u64>> = raw
            .iter()
            .map(|weights| {
                let mut row = vec![0u64; k];
                let total: u64 = weights.iter().sum::<u64>().max(1);
                let mut left = per_class;
                for (j, &w) in weights.iter().enumerate() {
                    let take = (per_class * w / total).min(left);
                    row[j] = take;
                    left -= take;
                }
                row[0] += left;
                row
            })
            .collect();
        let cm = ConfusionMatrix::from_counts(&rows).unwrap();
        prop_assert!((cm.accuracy().unwrap() - cm.balanced_accuracy().unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn metrics_ignore_consistent_class_relabelling(
        (m, perm) in prop::sample::select(vec![2usize, 4, 8]).prop_flat_map(|k| (counts(k), permutation(k)))
    ) {
        let k = m.len();
        let mut permuted = vec![vec![0u64; k]; k];
        for i in 0..k {
            for j in 0..k {
                permuted[perm[i]][perm[j]] = m[i][j];
            }
        }
        let a = ConfusionMatrix::from_counts(&m).unwrap();
        let b = ConfusionMatrix::from_counts(&permuted).unwrap();
        prop_assert!((a.accuracy().unwrap() - b.accuracy().unwrap()).abs() <= 1e-12);
        prop_assert!((a.balanced_accuracy().unwrap() - b.balanced_accuracy().unwrap()).abs() <= 1e-12);
    }
}

fn rater_pair() -> impl Strategy<Value = (usize, Vec<usize>, Vec<usize>)> {
    (2usize..6, 1usize..40)
        .prop_flat_map(|(k, n)| (Just(k), prop::collection::vec(0..k, n), prop::collection::vec(0..k, n)))
}

proptest! {
    #[test]
    fn kappa_is_symmetric_and_bounded((k, a, b) in rater_pair()) {
        let ab = cohen_kappa(&a, &b, k).unwrap();
        let ba = cohen_kappa(&b, &a, k).unwrap();
        prop_assert_eq!(ab.map(f64::to_bits), ba.map(f64::to_bits));
        if let Some(x) = ab {
            prop_assert!(x <= 1.0);
            if x == 1.0 {
                prop_assert_eq!(&a, &b);
            }
        }
    }

    #[test]
    fn kappa_of_identical_raters_is_one((k, a, _) in rater_pair()) {
        prop_assert_eq!(cohen_kappa(&a, &a, k).unwrap(), Some(1.0));
    }

    #[test]
    fn kappa_ignores_relabelling(((k, a, b), perm) in rater_pair().prop_flat_map(|x| {
        let k = x.0;
        (Just(x), permutation(k))
    })) {
        let ra: Vec<usize> = a.iter().map(|&x| perm[x]).collect();
        let rb: Vec<usize> = b.iter().map(|&x| perm[x]).collect();
        match (cohen_kappa(&a, &b, k).unwrap(), cohen_kappa(&ra, &rb, k).unwrap()) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn consensus_percentages_sum_to_hundred(
        (k, raters, rows) in (2usize..6, 2usize..7, 1usize..30).prop_flat_map(|(k, r, n)| {
            (Just(k), Just(r), prop::collection::vec(prop::collection::vec(0..k, r), n))
        })
    ) {
        let labels = LabelSet::new((0..k).map(|i| format!("l{i}")).collect()).unwrap();
        let n = rows.len();
        let table = RaterTable::new(
            labels,
            (0..n).map(|i| i.to_string()).collect(),
            (0..raters).map(|i| format!("r{i}")).collect(),
            None,
            rows,
            vec![0; n],
        )
        .unwrap();
        let hist = consensus_histogram(&table, None).unwrap();
        prop_assert_eq!(hist.len(), raters.min(k));
        prop_assert!((hist.iter().sum::<f64>() - 100.0).abs() <= 1e-9);
    }
}

fn small_spec() -> impl Strategy<Value = SyntheticSpec> {
    (1usize..5, 1usize..6, 0.5f64..4.0, 0.0f64..1.0, any::<u64>(), 1usize..80).prop_flat_map(
        |(views, dim, sep, sigma, seed, n)| {
            (1..=views).prop_map(move |inf| SyntheticSpec {
                n_samples: n,
                views_per_sample: views,
                n_informative_views: inf,
                dim,
                class_separation: sep,
                noise_sigma: sigma,
                seed,
                ..SyntheticSpec::default()
            })
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_datasets_pass_validation_and_are_deterministic(spec in small_spec()) {
        let ds = generate_synthetic(&spec).unwrap();
        let mut first = Vec::new();
        write_dataset(&mut first, &ds.samples).unwrap();
        let mut second = Vec::new();
        write_dataset(&mut second, &generate_synthetic(&spec).unwrap().samples).unwrap();
        prop_assert_eq!(&first, &second);
        let loaded = read_dataset::<f64, _>(first.as_slice()).unwrap();
        prop_assert_eq!(loaded, ds.samples);
    }

    #[test]
    fn subsampling_is_stratified(spec in small_spec(), fraction in 0.0f64..=1.0, seed in any::<u64>()) {
        let ds = generate_synthetic(&spec).unwrap().samples;
        let sub = subsample(&ds, fraction, seed);
        prop_assert_eq!(sub.len(), (fraction * ds.len() as f64).round() as usize);
        for c in 0..FOUL_CLASSES {
            let full = ds.iter().filter(|s| s.foul == c).count() as f64;
            let got = sub.iter().filter(|s| s.foul == c).count() as f64;
            prop_assert!((got - fraction * full).abs() <= 1.0 + 1e-9, "class {c}: {got} of {full}");
        }
    }
}
