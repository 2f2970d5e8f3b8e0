//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vars_core::aggregation::{
    attention_parameter_count, attention_scores, normalize_similarity, pool, similarity, AggregationKind, FeatureMatrix,
};
use vars_core::agreement::cohen_kappa;
use vars_core::experiments::{
    attention_hit_rate, run_comparison, run_sweep, synthetic_benchmark, train_and_evaluate_split, ExperimentConfig,
};
use vars_core::gradcheck::{check_model, random_instance, DEFAULT_STEP};
use vars_core::metrics::ConfusionMatrix;
use vars_core::model::{lr_at_epoch, multitask_loss, train, ModelConfig, TrainConfig, VarsModel};
use vars_core::numcore::{Matrix, Vector};
use vars_core::Prediction;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::new(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect(),
    )
    .unwrap()
}

fn gradient_suite() -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_tensor = 0.0f64;
    let mut worst_null = 0.0f64;
    let mut cases = 0;
    for seed in 0..20u64 {
        for n in 1..=4 {
            for d in [2, 8, 16] {
                let instance_seed = seed * 1_000 + (n * 100 + d) as u64;
                let (model, sample) = random_instance(n, d, instance_seed).unwrap();
                let check = check_model(&model, &sample, DEFAULT_STEP).unwrap();
                worst = worst.max(check.relative_error);
                for t in &check.tensors {
                    // W receives no gradient from a single view; only noise remains.
                    if n == 1 && t.name == "attention.w" {
                        worst_null = worst_null.max(t.max_abs_diff);
                    } else {
                        worst_tensor = worst_tensor.max(t.relative_error);
                    }
                }
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst < 1e-5 && worst_tensor < 1e-5 && worst_null < 1e-12 && elapsed < Duration::from_secs(60),
        format!(
            "{cases} cases, worst relative error {worst:.2e}, worst single tensor {worst_tensor:.2e}, \
             single-view W gradient within {worst_null:.1e} of zero, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn attention_weights(f: &FeatureMatrix<f64>, w: &Matrix<f64>) -> Vec<f64> {
    attention_scores(&normalize_similarity(&similarity(f, w).unwrap()).unwrap())
        .values()
        .to_vec()
}

fn attention_invariants() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures = Vec::new();
    for trial in 0..1000 {
        let n = rng.random_range(1..=6);
        let d = rng.random_range(1..=8);
        let f = FeatureMatrix::new(random_matrix(&mut rng, n, d));
        let w = random_matrix(&mut rng, d, d);
        let a = attention_weights(&f, &w);
        let sum: f64 = a.iter().sum();
        if a.iter().any(|&x| x < 0.0) || (sum - 1.0).abs() > 1e-9 {
            failures.push(format!("trial {trial}: weights {a:?}"));
        }

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let rows: Vec<&[f64]> = perm.iter().map(|&p| f.view(p)).collect();
        let permuted = attention_weights(&FeatureMatrix::from_rows(&rows).unwrap(), &w);
        if perm
            .iter()
            .enumerate()
            .any(|(i, &p)| (permuted[i] - a[p]).abs() > 1e-12)
        {
            failures.push(format!("trial {trial}: not permutation equivariant"));
        }

        let single = FeatureMatrix::from_rows(&[f.view(0)]).unwrap();
        let pooled = pool(&single, AggregationKind::Attention, Some(&w)).unwrap();
        let a1 = pooled.attention.unwrap();
        if a1.values() != [1.0] || pooled.representation.data() != f.view(0) {
            failures.push(format!("trial {trial}: single view not passed through"));
        }

        let dup = FeatureMatrix::from_rows(&vec![f.view(0); n]).unwrap();
        let ad = attention_weights(&dup, &w);
        if ad.iter().any(|&x| (x - 1.0 / n as f64).abs() > 1e-12) {
            failures.push(format!("trial {trial}: identical views gave {ad:?}"));
        }

        let zero = FeatureMatrix::new(Matrix::zeros(n, d));
        match pool(&zero, AggregationKind::Attention, Some(&w)) {
            Ok(p)
                if p.attention
                    .as_ref()
                    .unwrap()
                    .values()
                    .iter()
                    .all(|&x| x == 1.0 / n as f64) => {}
            other => failures.push(format!("trial {trial}: zero features gave {other:?}")),
        }
    }
    let detail = match failures.first() {
        None => "1000 random pairs: simplex, equivariance, single view, duplicates, zero fallback".to_string(),
        Some(first) => format!("{} failures, first: {first}", failures.len()),
    };
    verdict(failures.is_empty(), detail)
}

fn pooling_comparison_and_interpretability() -> (Verdict, Verdict) {
    let cfg = ExperimentConfig::synthetic_benchmark();
    let bench = synthetic_benchmark(&cfg).unwrap();
    let seeds: Vec<u64> = (0..5).collect();

    let start = Instant::now();
    let table = run_comparison(&bench.split, &AggregationKind::ALL, &seeds, &cfg).unwrap();
    let elapsed = start.elapsed();
    let acc = |k| table.row(k).unwrap().foul_accuracy;
    let (mean, max, att) = (
        acc(AggregationKind::Mean),
        acc(AggregationKind::Max),
        acc(AggregationKind::Attention),
    );
    let comparison = verdict(
        att - mean >= 0.05 && att - max >= 0.05 && elapsed < Duration::from_secs(300),
        format!(
            "foul accuracy over 5 seeds: attention {att:.4}, mean {mean:.4}, max {max:.4} ({} train / {} test, {:.1}s)",
            bench.split.train.len(),
            bench.split.test.len(),
            elapsed.as_secs_f64()
        ),
    );

    let attention_row = table.row(AggregationKind::Attention).unwrap();
    let mut rates = Vec::new();
    let mut reproduced = true;
    for (i, &seed) in seeds.iter().enumerate() {
        let run = train_and_evaluate_split(&bench.split, AggregationKind::Attention, seed, &cfg).unwrap();
        reproduced &= run.test.foul.accuracy == attention_row.per_seed[i].foul_accuracy;
        rates.push(attention_hit_rate(&run.outcome.model, &bench.split.test, &bench.test_informative).unwrap());
    }
    let lowest = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let rates_str: Vec<String> = rates.iter().map(|r| format!("{r:.3}")).collect();
    let interpretability = verdict(
        lowest >= 0.8 && reproduced,
        format!(
            "informative views hold the top-2 ranks in [{}] of test samples per seed",
            rates_str.join(", ")
        ),
    );
    (comparison, interpretability)
}

fn brute_accuracy(truth: &[usize], pred: &[usize]) -> f64 {
    truth.iter().zip(pred).filter(|(t, p)| t == p).count() as f64 / truth.len() as f64
}

fn brute_balanced_accuracy(k: usize, truth: &[usize], pred: &[usize]) -> f64 {
    let mut recalls = Vec::new();
    for c in 0..k {
        let idx: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == c).collect();
        if !idx.is_empty() {
            recalls.push(idx.iter().filter(|&&i| pred[i] == c).count() as f64 / idx.len() as f64);
        }
    }
    recalls.iter().sum::<f64>() / recalls.len() as f64
}

fn brute_kappa(a: &[usize], b: &[usize]) -> Option<f64> {
    let n = a.len() as f64;
    let p_o = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut chance_pairs = 0usize;
    for x in a {
        for y in b {
            chance_pairs += usize::from(x == y);
        }
    }
    let p_e = chance_pairs as f64 / (n * n);
    if p_e == 1.0 {
        return (p_o == 1.0).then_some(1.0);
    }
    Some((p_o - p_e) / (1.0 - p_e))
}

fn metric_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut mismatched_definedness = 0;
    for _ in 0..1000 {
        let k = rng.random_range(2..=8);
        let len = rng.random_range(1..=60);
        let truth: Vec<usize> = (0..len).map(|_| rng.random_range(0..k)).collect();
        let pred: Vec<usize> = (0..len).map(|_| rng.random_range(0..k)).collect();
        let cm = ConfusionMatrix::from_pairs(k, &truth, &pred).unwrap();
        worst = worst.max((cm.accuracy().unwrap() - brute_accuracy(&truth, &pred)).abs());
        worst = worst.max((cm.balanced_accuracy().unwrap() - brute_balanced_accuracy(k, &truth, &pred)).abs());
        match (cohen_kappa(&truth, &pred, k).unwrap(), brute_kappa(&truth, &pred)) {
            (Some(x), Some(y)) => worst = worst.max((x - y).abs()),
            (None, None) => {}
            _ => mismatched_definedness += 1,
        }
    }
    let ba = ConfusionMatrix::from_counts(&[vec![3, 1], vec![2, 2]])
        .unwrap()
        .balanced_accuracy()
        .unwrap();
    let k0 = cohen_kappa(&[0, 0, 1, 1], &[0, 1, 0, 1], 2).unwrap();
    let k1 = cohen_kappa(&[0, 0, 1, 1], &[1, 1, 0, 0], 2).unwrap();
    verdict(
        worst <= 1e-12 && mismatched_definedness == 0 && ba == 0.625 && k0 == Some(0.0) && k1 == Some(-1.0),
        format!(
            "3000 oracle comparisons, max deviation {worst:.1e}; BA [[3,1],[2,2]] = {ba}; kappa examples {k0:?}, {k1:?}"
        ),
    )
}

fn training_recipe() -> Verdict {
    let recipe = TrainConfig::default();
    let lrs = [
        lr_at_epoch(&recipe, 0),
        lr_at_epoch(&recipe, 3),
        lr_at_epoch(&recipe, 6),
    ];
    let schedule_ok = lrs == [5e-5, 1.5e-5, 4.5e-6];

    let uniform = Prediction::from_logits(Vector::<f64>::zeros(8), Vector::zeros(4), None);
    let loss = multitask_loss(&uniform, 3, 1).unwrap();
    let loss_ok = (loss - (8f64.ln() + 4f64.ln())).abs() < 1e-12;

    let mut cfg = ExperimentConfig::synthetic_benchmark();
    cfg.split.train = 120;
    cfg.split.val = 40;
    cfg.split.test = 60;
    cfg.train.max_epochs = 4;
    let bench = synthetic_benchmark(&cfg).unwrap();
    let split = &bench.split;
    let model = VarsModel::new(ModelConfig::new(16, AggregationKind::Attention), 9).unwrap();
    let run = |parallel: bool| {
        let tc = TrainConfig {
            parallel,
            ..cfg.train.clone()
        };
        train(model.clone(), &split.train, &split.val, &tc).unwrap()
    };
    let (a, b, c) = (run(false), run(false), run(true));
    let bits = |m: &VarsModel<f64>| -> Vec<u64> {
        m.values()
            .iter()
            .flat_map(|v| v.data().iter().map(|x| x.to_bits()))
            .collect()
    };
    let training_identical = bits(&a.model) == bits(&b.model)
        && a.history == b.history
        && bits(&a.model) == bits(&c.model)
        && a.history == c.history;

    let fractions = [0.0, 0.5, 1.0];
    let serial = run_sweep(split, &fractions, 3, &cfg).unwrap();
    let parallel_cfg = ExperimentConfig {
        parallel: true,
        ..cfg.clone()
    };
    let parallel = run_sweep(split, &fractions, 3, &parallel_cfg).unwrap();
    let sweep_identical = serial == parallel;

    verdict(
        schedule_ok && recipe.batch_size == 6 && loss_ok && training_identical && sweep_identical,
        format!(
            "lr {lrs:?}, batch {}, uniform loss {loss:.15}, repeat/parallel training identical: {training_identical}, serial/parallel sweep identical: {sweep_identical}",
            recipe.batch_size
        ),
    )
}

fn sweep_protocol() -> Verdict {
    let cfg = ExperimentConfig::synthetic_benchmark();
    let bench = synthetic_benchmark(&cfg).unwrap();
    let start = Instant::now();
    let result = run_sweep(&bench.split, &[0.0, 0.25, 0.5, 0.75, 1.0], 10, &cfg).unwrap();
    let elapsed = start.elapsed();
    let zero = result.point(0.0).unwrap();
    let quarter = result.point(0.25).unwrap();
    let full = result.point(1.0).unwrap();
    let baseline_ok = zero.random_baseline && zero.foul_mean == 0.125 && zero.off_mean == 0.25;
    let complete = result
        .points
        .iter()
        .filter(|p| !p.random_baseline)
        .all(|p| p.foul_accuracies.len() == 10 && p.off_accuracies.len() == 10);
    let summary: Vec<String> = result
        .points
        .iter()
        .map(|p| format!("{}: {:.3}±{:.3}", p.fraction, p.foul_mean, p.foul_std))
        .collect();
    verdict(
        baseline_ok
            && complete
            && result.n_test == bench.split.test.len()
            && full.foul_mean > quarter.foul_mean
            && elapsed < Duration::from_secs(900),
        format!(
            "foul accuracy by fraction [{}], offence at 1.0 {:.3} vs 0.25 {:.3}, {:.1}s",
            summary.join(", "),
            full.off_mean,
            quarter.off_mean,
            elapsed.as_secs_f64()
        ),
    )
}

fn parameter_census() -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for d in [1, 2, 8, 16, 64] {
        let hc = d;
        let heads = (hc * d + hc + 8 * hc + 8) + (hc * d + hc + 4 * hc + 4);
        let att = VarsModel::<f64>::new(ModelConfig::new(d, AggregationKind::Attention), 0).unwrap();
        let mean = VarsModel::<f64>::new(ModelConfig::new(d, AggregationKind::Mean), 0).unwrap();
        let audit: usize = att.census().iter().map(|(_, r, c)| r * c).sum();
        ok &= att.attention_overhead() == d * d
            && attention_parameter_count(d) == d * d
            && mean.attention_overhead() == 0
            && att.parameter_count() == audit
            && att.parameter_count() == heads + d * d
            && mean.parameter_count() == heads;
        notes.push(format!("d={d}: {}", att.parameter_count()));
    }
    verdict(
        ok,
        format!("overhead d^2, totals match shape audit ({})", notes.join(", ")),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results = vec![
        ("1 gradient suite", gradient_suite()),
        ("2 attention invariants", attention_invariants()),
    ];
    let (comparison, interpretability) = pooling_comparison_and_interpretability();
    results.push(("3 attention beats mean/max pooling", comparison));
    results.push(("4 attention ranks informative views", interpretability));
    results.push(("5 metric oracles", metric_oracles()));
    results.push(("6 training recipe", training_recipe()));
    results.push(("7 sweep protocol", sweep_protocol()));
    results.push(("8 parameter census", parameter_census()));

    let mut failed = 0;
    for (name, v) in &results {
        println!(
            "criterion {name}: {} ({})",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
