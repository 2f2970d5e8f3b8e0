use vars_core::aggregation::AggregationKind;
use vars_core::data::{generate_synthetic, MultiViewSample, SyntheticSpec, OFFENCE_CLASSES};
use vars_core::experiments::ExperimentConfig;
use vars_core::model::{
    adam_step, evaluate, train, AdamConfig, AdamState, EncoderSpec, ModelConfig, TrainConfig, VarsModel,
};
use vars_core::numcore::Matrix;

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[test]
fn nearest_class_mean_recovers_labels_from_informative_views() {
    let ds = generate_synthetic(&SyntheticSpec::default()).unwrap();
    let mut hits = 0usize;
    let mut total = 0usize;
    for (s, mask) in ds.samples.iter().zip(&ds.informative) {
        for v in (0..s.n_views()).filter(|&v| mask[v]) {
            let best = (0..ds.class_means.len())
                .min_by(|&i, &j| {
                    squared_distance(s.views.row(v), &ds.class_means[i])
                        .total_cmp(&squared_distance(s.views.row(v), &ds.class_means[j]))
                })
                .unwrap();
            hits += usize::from(best == s.foul * OFFENCE_CLASSES + s.off);
            total += 1;
        }
    }
    let acc = hits as f64 / total as f64;
    assert!(acc >= 0.95, "nearest-centroid accuracy {acc}");
}

fn separable_set() -> Vec<MultiViewSample<f64>> {
    let spec = SyntheticSpec {
        n_informative_views: 4,
        ..SyntheticSpec::default()
    };
    generate_synthetic(&spec).unwrap().samples
}

#[test]
fn separable_data_is_fit_within_fifty_epochs() {
    let data = separable_set();
    let cfg = TrainConfig {
        max_epochs: 50,
        ..ExperimentConfig::synthetic_benchmark().train
    };
    for kind in AggregationKind::ALL {
        let model = VarsModel::new(ModelConfig::new(16, kind), 3).unwrap();
        let out = train(model, &data, &[], &cfg).unwrap();
        let eval = evaluate(&out.model, &data).unwrap();
        assert!(
            eval.foul.accuracy >= 0.95,
            "{kind}: foul train accuracy {}",
            eval.foul.accuracy
        );
        assert!(
            eval.off.accuracy >= 0.95,
            "{kind}: offence train accuracy {}",
            eval.off.accuracy
        );
    }
}

fn fixed_batch() -> Vec<MultiViewSample<f64>> {
    generate_synthetic(&SyntheticSpec {
        n_samples: 10,
        ..SyntheticSpec::default()
    })
    .unwrap()
    .samples
}

#[test]
fn full_batch_adam_halves_the_loss_in_a_hundred_steps() {
    let data = fixed_batch();
    let batch: Vec<&MultiViewSample<f64>> = data.iter().collect();
    for kind in AggregationKind::ALL {
        let mut model = VarsModel::new(ModelConfig::new(16, kind), 0).unwrap();
        let mut state = AdamState::new(model.values());
        let initial = model.batch_gradient(&batch, false).unwrap().loss;
        for _ in 0..100 {
            let g = model.batch_gradient(&batch, false).unwrap();
            adam_step(model.values_mut(), &g.grads, &mut state, 1e-3, &AdamConfig::default()).unwrap();
        }
        let last = model.batch_gradient(&batch, false).unwrap().loss;
        assert!(last <= 0.5 * initial, "{kind}: {initial} -> {last}");
    }
}

#[test]
fn plain_gradient_descent_lowers_the_loss() {
    let data = fixed_batch();
    let batch: Vec<&MultiViewSample<f64>> = data.iter().collect();
    for kind in AggregationKind::ALL {
        let mut model = VarsModel::new(ModelConfig::new(16, kind), 0).unwrap();
        let initial = model.batch_gradient(&batch, false).unwrap().loss;
        for _ in 0..100 {
            let g = model.batch_gradient(&batch, false).unwrap();
            for (p, gi) in model.values_mut().iter_mut().zip(&g.grads) {
                *p = p.sub(&gi.scale(1e-3)).unwrap();
            }
        }
        let last = model.batch_gradient(&batch, false).unwrap().loss;
        assert!(last < initial, "{kind}: {initial} -> {last}");
    }
}

fn bits(model: &VarsModel<f64>) -> Vec<u64> {
    model
        .values()
        .iter()
        .flat_map(|v| v.data().iter().map(|x| x.to_bits()))
        .collect()
}

#[test]
fn same_seed_trains_to_identical_parameters() {
    let data = fixed_batch();
    let cfg = TrainConfig {
        max_epochs: 5,
        batch_size: 3,
        lr0: 1e-2,
        seed: 11,
        ..TrainConfig::default()
    };
    let run = |parallel: bool| {
        let model = VarsModel::new(ModelConfig::new(16, AggregationKind::Attention), 4).unwrap();
        train(
            model,
            &data[..7],
            &data[7..],
            &TrainConfig {
                parallel,
                ..cfg.clone()
            },
        )
        .unwrap()
    };
    let (a, b, c) = (run(false), run(false), run(true));
    assert_eq!(bits(&a.model), bits(&b.model));
    assert_eq!(bits(&a.model), bits(&c.model));
    assert_eq!(a.history, c.history);
}

#[test]
fn returned_model_is_the_best_recorded_epoch() {
    let data = generate_synthetic(&SyntheticSpec {
        n_samples: 90,
        ..SyntheticSpec::default()
    })
    .unwrap()
    .samples;
    let cfg = TrainConfig {
        max_epochs: 8,
        lr0: 3e-2,
        decay_every: 100,
        ..TrainConfig::default()
    };
    let model = VarsModel::new(ModelConfig::new(16, AggregationKind::Attention), 1).unwrap();
    let out = train(model, &data[..60], &data[60..], &cfg).unwrap();
    let best = out
        .history
        .iter()
        .map(|r| r.val_off_accuracy.unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let returned = evaluate(&out.model, &data[60..]).unwrap().off.accuracy;
    assert_eq!(returned, best);
    assert_eq!(out.history[out.best_epoch.unwrap()].val_off_accuracy, Some(best));
}

#[test]
fn trainable_encoders_learn_too() {
    let data = separable_set();
    let cfg = TrainConfig {
        max_epochs: 10,
        ..ExperimentConfig::synthetic_benchmark().train
    };
    for encoder in [
        EncoderSpec::Linear { in_dim: 16 },
        EncoderSpec::Mlp { in_dim: 16, hidden: 24 },
    ] {
        let mut config = ModelConfig::new(12, AggregationKind::Attention);
        config.encoder = encoder.clone();
        let model = VarsModel::new(config, 2).unwrap();
        let out = train(model, &data, &[], &cfg).unwrap();
        let acc = evaluate(&out.model, &data).unwrap().foul.accuracy;
        assert!(acc >= 0.8, "{encoder:?}: foul train accuracy {acc}");
    }
}

#[test]
fn forward_pass_matches_frozen_logits() {
    let mut config = ModelConfig::new(4, AggregationKind::Attention);
    config.head_hidden = Some(3);
    let model = VarsModel::<f64>::new(config, 2024).unwrap();
    let views = Matrix::from_rows(&[[0.5, -1.0, 2.0, 0.25], [1.5, 0.5, -0.5, 1.0], [-0.75, 1.25, 0.5, 2.0]]).unwrap();
    let p = model.forward(&views).unwrap();
    let foul = [
        0.2826576054736551,
        -0.03293483186698218,
        0.14050194963342286,
        -0.08903885126339077,
        0.5226570000077202,
        0.12551936342568853,
        -0.260745361482707,
        0.20836363391554627,
    ];
    let off = [
        0.011801417167306308,
        0.022508048311157377,
        0.0060097506469417574,
        0.007376621019652476,
    ];
    let attention = [0.6207585612709816, 0.16337774759524976, 0.21586369113376852];
    let close = |got: &[f64], want: &[f64]| got.iter().zip(want).all(|(g, w)| (g - w).abs() <= 1e-12);
    assert!(close(p.foul_logits.data(), &foul), "{:?}", p.foul_logits.data());
    assert!(close(p.off_logits.data(), &off), "{:?}", p.off_logits.data());
    assert!(close(p.attention.as_ref().unwrap().values(), &attention));
    assert_eq!((p.foul_class, p.off_class), (4, 1));
}
