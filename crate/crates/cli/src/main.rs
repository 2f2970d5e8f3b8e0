use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use vars_core::aggregation::AggregationKind;
use vars_core::agreement::{simulate_independent_raters, LabelSet, RaterTable};
use vars_core::data::{dataset_hash, load_dataset, load_split, save_split, DataSplit, MultiViewSample, Task};
use vars_core::experiments::{
    inspect_action, run_agreement, run_comparison, run_sweep, synthetic_benchmark, train_and_evaluate_split,
    ExperimentConfig, Manifest,
};
use vars_core::gradcheck::{run_suite, DEFAULT_STEP};
use vars_core::model::{evaluate, load_checkpoint, save_checkpoint, Checkpoint, EpochRecord};

#[derive(Parser)]
#[command(name = "vars", version, about = "Multi-view foul classification experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base config when no file is given.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Default)]
    preset: Preset,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory for manifest, reports and tables.
    #[arg(long, global = true, default_value = "runs/latest")]
    out: PathBuf,
    /// Run independent trainings concurrently.
    #[arg(long, global = true)]
    parallel: bool,
    #[arg(long, global = true)]
    pooling: Option<AggregationKind>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    /// Logging verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Default recipe: lr 5e-5, decay 0.3 every 3 epochs, batch 6, 7 epochs.
    Default,
    /// Desk-scale recipe for the synthetic benchmark.
    Synthetic,
}

#[derive(Subcommand)]
enum Command {
    /// Write a planted-structure synthetic split (train/val/test JSONL).
    GenSynthetic,
    /// Train one model and save its best checkpoint.
    Train(DataArgs),
    /// Evaluate a checkpoint on a dataset file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSONL dataset, or a split directory (its test.jsonl is used).
        #[arg(long)]
        data: PathBuf,
    },
    /// Compare mean, max and attention pooling over several seeds.
    Compare {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Accuracy versus training-set fraction on a fixed test set.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated fractions in [0, 1].
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Per-view attention and predictions for one action.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, conflicts_with = "index")]
        action_id: Option<String>,
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Inter-rater agreement from a rater CSV.
    Agree {
        /// Rater table; omit together with --simulate to analyse chance-level raters.
        #[arg(long, required_unless_present = "simulate")]
        raters: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = TaskArg::FoulType)]
        task: TaskArg,
        /// Comma-separated groups to report; default is every declared group.
        #[arg(long, value_delimiter = ',')]
        groups: Vec<String>,
        /// Simulate this many independent random raters instead of reading a file.
        #[arg(long)]
        simulate: Option<usize>,
        #[arg(long, default_value_t = 500)]
        actions: usize,
    },
    /// Finite-difference check of the full multitask gradient.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        n_seeds: u64,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        views: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "2,8,16")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Split directory with train.jsonl, optional val.jsonl and test.jsonl.
    /// Without it the synthetic benchmark is generated in memory.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    FoulType,
    OffenceSeverity,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::FoulType => Task::FoulType,
            TaskArg::OffenceSeverity => Task::OffenceSeverity,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => match c.preset {
            Preset::Default => ExperimentConfig::default(),
            Preset::Synthetic => ExperimentConfig::synthetic_benchmark(),
        },
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
        cfg.synthetic.seed = seed;
    }
    if let Some(p) = c.pooling {
        cfg.model.aggregation = p;
    }
    if let Some(e) = c.epochs {
        cfg.train.max_epochs = e;
    }
    if let Some(lr) = c.lr {
        cfg.train.lr0 = lr;
    }
    if let Some(b) = c.batch_size {
        cfg.train.batch_size = b;
    }
    cfg.parallel |= c.parallel;
    cfg.train.validate()?;
    Ok(cfg)
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text).with_context(|| format!("writing {name}"))
}

fn csv_file(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(dir.join(name)).with_context(|| format!("creating {name}"))?,
    ))
}

/// Loads a split directory, or generates the synthetic benchmark when none is given.
fn load_data(args: &DataArgs, cfg: &ExperimentConfig, manifest: Manifest) -> Result<(DataSplit<f64>, Manifest)> {
    let (split, manifest) = match &args.data {
        Some(dir) => (
            load_split(dir).with_context(|| format!("loading split from {}", dir.display()))?,
            manifest.note(format!("data: {}", dir.display())),
        ),
        None => (
            synthetic_benchmark(cfg)?.split,
            manifest.note("data: synthetic benchmark generated from config.synthetic and config.split"),
        ),
    };
    let mut manifest = manifest.with_dataset("train", dataset_hash(&split.train));
    if !split.val.is_empty() {
        manifest = manifest.with_dataset("val", dataset_hash(&split.val));
    }
    let manifest = manifest.with_dataset("test", dataset_hash(&split.test));
    Ok((split, manifest))
}

fn load_samples(path: &Path) -> Result<Vec<MultiViewSample<f64>>> {
    let file = if path.is_dir() {
        path.join("test.jsonl")
    } else {
        path.to_path_buf()
    };
    load_dataset(&file).with_context(|| format!("loading {}", file.display()))
}

fn write_history(dir: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(csv_file(dir, "history.csv")?);
    for r in history {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = load_config(&cli.common)?;
    let out = cli.common.out.clone();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    match cli.command {
        Command::GenSynthetic => {
            let bench = synthetic_benchmark(&cfg)?;
            save_split(&out, &bench.split)?;
            write_json(&out, "test_informative.json", &bench.test_informative)?;
            Manifest::new("gen-synthetic", &cfg, vec![cfg.synthetic.seed])?
                .with_dataset("train", dataset_hash(&bench.split.train))
                .with_dataset("val", dataset_hash(&bench.split.val))
                .with_dataset("test", dataset_hash(&bench.split.test))
                .save(&out)?;
            println!(
                "wrote {} train / {} val / {} test samples to {}",
                bench.split.train.len(),
                bench.split.val.len(),
                bench.split.test.len(),
                out.display()
            );
        }
        Command::Train(data) => {
            let manifest = Manifest::new("train", &cfg, vec![cfg.seed])?;
            let (split, manifest) = load_data(&data, &cfg, manifest)?;
            let run = train_and_evaluate_split(&split, cfg.model.aggregation, cfg.seed, &cfg)?;
            let o = &run.outcome;
            save_checkpoint(
                out.join("checkpoint.json"),
                &Checkpoint::new(&o.model, Some(&cfg.train), &o.history, o.best_epoch),
            )?;
            write_history(&out, &o.history)?;
            write_json(&out, "metrics.json", &run.test)?;
            manifest.save(&out)?;
            println!(
                "{} pooling, best epoch {}: test foul acc {:.4} (BA {:.4}), offence acc {:.4} (BA {:.4})",
                cfg.model.aggregation,
                o.best_epoch.map_or("none".to_string(), |e| e.to_string()),
                run.test.foul.accuracy,
                run.test.foul.balanced_accuracy,
                run.test.off.accuracy,
                run.test.off.balanced_accuracy
            );
        }
        Command::Eval { checkpoint, data } => {
            let model = load_checkpoint(&checkpoint)?.to_model::<f64>()?;
            let samples = load_samples(&data)?;
            let report = evaluate(&model, &samples)?;
            write_json(&out, "metrics.json", &report)?;
            Manifest::new("eval", &cfg, vec![cfg.seed])?
                .with_dataset("eval", dataset_hash(&samples))
                .note(format!("checkpoint: {}", checkpoint.display()))
                .save(&out)?;
            println!(
                "foul acc {:.4} (BA {:.4}), offence acc {:.4} (BA {:.4}), loss {:.4} on {} samples",
                report.foul.accuracy,
                report.foul.balanced_accuracy,
                report.off.accuracy,
                report.off.balanced_accuracy,
                report.loss,
                samples.len()
            );
        }
        Command::Compare { data, seeds } => {
            let seeds = seeds.unwrap_or_else(|| cfg.seeds.clone());
            let manifest = Manifest::new("compare", &cfg, seeds.clone())?
                .note(format!("table entries are means over {} seeds", seeds.len()));
            let (split, manifest) = load_data(&data, &cfg, manifest)?;
            let table = run_comparison(&split, &cfg.poolings, &seeds, &cfg)?;
            table.write_csv(csv_file(&out, "comparison.csv")?)?;
            write_json(&out, "comparison.json", &table)?;
            manifest.save(&out)?;
            println!(
                "{:<10} {:<10} {:>8} {:>8} {:>8} {:>8}",
                "encoder", "pooling", "foul", "foul BA", "off", "off BA"
            );
            for r in &table.rows {
                println!(
                    "{:<10} {:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                    r.encoder,
                    r.pooling,
                    r.foul_accuracy,
                    r.foul_balanced_accuracy,
                    r.off_accuracy,
                    r.off_balanced_accuracy
                );
            }
        }
        Command::Sweep {
            data,
            fractions,
            repeats,
        } => {
            let fractions = fractions.unwrap_or_else(|| cfg.sweep.fractions.clone());
            let repeats = repeats.unwrap_or(cfg.sweep.repeats);
            let seeds = (0..repeats as u64).map(|r| cfg.seed.wrapping_add(r)).collect();
            let manifest = Manifest::new("sweep", &cfg, seeds)?;
            let (split, manifest) = load_data(&data, &cfg, manifest)?;
            let result = run_sweep(&split, &fractions, repeats, &cfg)?;
            result.write_csv(csv_file(&out, "sweep.csv")?)?;
            write_json(&out, "sweep.json", &result)?;
            manifest.save(&out)?;
            for p in &result.points {
                println!(
                    "fraction {:>5}: foul {:.4} ± {:.4}, offence {:.4} ± {:.4}{}",
                    p.fraction,
                    p.foul_mean,
                    p.foul_std,
                    p.off_mean,
                    p.off_std,
                    if p.random_baseline { " (random baseline)" } else { "" }
                );
            }
        }
        Command::Inspect {
            checkpoint,
            data,
            action_id,
            index,
        } => {
            let model = load_checkpoint(&checkpoint)?.to_model::<f64>()?;
            let samples = load_samples(&data)?;
            let sample = match &action_id {
                Some(id) => samples
                    .iter()
                    .find(|s| &s.action_id == id)
                    .with_context(|| format!("no action {id}"))?,
                None => samples
                    .get(index)
                    .with_context(|| format!("index {index} out of range for {} samples", samples.len()))?,
            };
            let report = inspect_action(&model, sample)?;
            write_json(&out, "inspect.json", &report)?;
            Manifest::new("inspect", &cfg, vec![cfg.seed])?
                .with_dataset("inspect", dataset_hash(&samples))
                .note(format!("checkpoint: {}", checkpoint.display()))
                .save(&out)?;
            println!("action {}", report.action_id);
            for &v in &report.view_ranking {
                println!("  view {}: {:6.2}%", v + 1, report.view_percentages[v]);
            }
            for (task, r) in [("foul type", &report.foul), ("offence", &report.offence)] {
                println!(
                    "  {task}: {} ({:.1}% confidence), ground truth {}",
                    r.predicted_label,
                    100.0 * r.confidence,
                    r.ground_truth_label
                );
            }
        }
        Command::Agree {
            raters,
            task,
            groups,
            simulate,
            actions,
        } => {
            let task = Task::from(task);
            let labels = LabelSet::for_task(task);
            let mut manifest = Manifest::new("agree", &cfg, vec![cfg.seed])?;
            let table = match (raters, simulate) {
                (Some(path), _) => {
                    manifest = manifest.note(format!("raters: {}", path.display()));
                    RaterTable::load(&path, labels)?
                }
                (None, Some(n)) => {
                    if n < 2 {
                        bail!("--simulate needs at least two raters");
                    }
                    let t = simulate_independent_raters(labels, actions, n, None, cfg.seed)?;
                    t.write_csv(csv_file(&out, "simulated_raters.csv")?)?;
                    manifest = manifest.note(format!("{n} simulated independent raters over {actions} actions"));
                    t
                }
                (None, None) => unreachable!("clap requires --raters or --simulate"),
            };
            let report = run_agreement(&table, task.as_str(), &groups)?;
            write_json(&out, "agreement.json", &report)?;
            manifest.save(&out)?;
            for g in &report.groups {
                let hist: Vec<String> = g.consensus_percent.iter().map(|p| format!("{p:.1}")).collect();
                println!(
                    "{}: {} raters, kappa {:.4}, mean accuracy {:.4}, consensus % [{}]",
                    g.group,
                    g.n_raters,
                    g.average_kappa,
                    g.mean_accuracy,
                    hist.join(", ")
                );
            }
        }
        Command::Gradcheck {
            n_seeds,
            views,
            dims,
            tolerance,
        } => {
            let seeds: Vec<u64> = (0..n_seeds).map(|s| cfg.seed.wrapping_add(s)).collect();
            let cases = run_suite(&seeds, &views, &dims, DEFAULT_STEP)?;
            write_json(&out, "gradcheck.json", &cases)?;
            Manifest::new("gradcheck", &cfg, seeds)?.save(&out)?;
            let worst = cases.iter().map(|c| c.relative_error).fold(0.0, f64::max);
            let failed = cases
                .iter()
                .filter(|c| c.relative_error.is_nan() || c.relative_error >= tolerance)
                .count();
            println!(
                "{} cases, worst relative error {worst:.3e}, {failed} above {tolerance:e}",
                cases.len()
            );
            if failed > 0 {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
