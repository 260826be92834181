//! `otdd`: command-line driver for the distillation pipeline.
//!
//! Every subcommand takes `--config FILE` and any number of
//! `--set section.key=value` overrides. Exit status is 0 on success, 2 for
//! configuration errors and 3 when a stage fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use otdd_core::data::{make_gmm_dataset, Split};
use otdd_core::harness::pipeline::{distill, relabel, train, train_pool};
use otdd_core::harness::sweep::write_sweep;
use otdd_core::harness::*;
use otdd_core::io::{read_dataset, read_json, read_soft_labels, write_dataset, write_json, write_soft_labels};
use otdd_core::model::Classifier;
use otdd_core::student::evaluate;
use otdd_core::{Error, Result};

#[derive(Parser)]
#[command(name = "otdd", version, about = "Optimal-transport dataset distillation on toy mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file of `section.key = value` lines.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set sampler.ipc=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw train and test splits for one seed.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for train.csv and test.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a distilled set from a train split.
    Distill {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Disable OT guidance.
        #[arg(long)]
        no_otg: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the teacher pool and soft-label a distilled set.
    Relabel {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        distilled: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the whole pool instead of the alpha-minimising subset.
        #[arg(long)]
        no_lia: bool,
        /// Soft-label CSV; the alpha report goes next to it as `<out>.alpha.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a student on a distilled set and its soft labels.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        distilled: PathBuf,
        #[arg(long)]
        soft: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Drop the batch OT loss.
        #[arg(long)]
        no_otm: bool,
        /// Model JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Top-1 accuracy of a saved model on a test split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Run the arm selected by `ablation.*` over all seeds.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run full and single-ablation arms on shared seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Alpha and student accuracy per teacher subset.
    AlphaSweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated teacher ids; `uniform` names the flat teacher.
        /// Repeatable. Defaults to each pool teacher, the whole pool and
        /// `uniform`.
        #[arg(long = "subset")]
        subsets: Vec<String>,
    },
    /// Coverage of real points by a distilled set.
    Coverage {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        distilled: PathBuf,
        /// Absolute thresholds; defaults to `coverage.thresholds` times the
        /// mode std. Repeatable.
        #[arg(long = "threshold")]
        thresholds: Vec<f64>,
        /// Restrict both sets to one class.
        #[arg(long)]
        class: Option<usize>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_file(path).map_err(|e| match e {
            Error::Io { .. } => Error::Config(e.to_string()),
            other => other,
        })?,
        None => ExperimentConfig::default(),
    };
    for kv in &common.overrides {
        config.apply_override(kv)?;
    }
    config.validate()?;
    Ok(config)
}

fn read_split(path: &Path, classes: usize, stage: &'static str) -> Result<otdd_core::data::LabeledDataset> {
    read_dataset(path, Some(classes)).map_err(|e| e.in_stage(stage))
}

fn print_report(report: &RunReport) {
    let std = report.accuracy.std.map_or_else(|| "n/a".into(), |s| format!("{s:.4}"));
    println!(
        "{:<8} accuracy {:.4} ± {std}  alpha {:.4}  w_distill {:.4}  seeds {}",
        report.arm, report.accuracy.mean, report.alpha.mean, report.w_distill.mean, report.accuracy.n
    );
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenData { common, seed, out } => {
            let config = load(&common)?;
            let (train, test) = make_gmm_dataset(&config.gmm_spec()?, seed).map_err(|e| e.in_stage("data"))?;
            write_dataset(&out.join("train.csv"), &train)?;
            write_dataset(&out.join("test.csv"), &test)?;
            println!("wrote {} train and {} test points to {}", train.len(), test.len(), out.display());
        }
        Command::Distill { common, train, seed, no_otg, out } => {
            let config = load(&common)?;
            let spec = config.gmm_spec()?;
            let train = read_split(&train, spec.num_classes, "distill")?;
            let set = distill(&config, &spec, &train, seed, !no_otg)?;
            write_dataset(&out, &set.data)?;
            println!("wrote {} distilled points to {}", set.data.len(), out.display());
        }
        Command::Relabel { common, train, distilled, seed, no_lia, out } => {
            let config = load(&common)?;
            let classes = config.grid.num_classes;
            let train = read_split(&train, classes, "relabel")?;
            let distilled = read_split(&distilled, classes, "relabel")?;
            let (teachers, _) = train_pool(&config, &train, seed)?;
            let r = relabel(&config, &train, &teachers, &distilled, !no_lia)?;
            write_soft_labels(&out, &r.soft)?;
            let mut alpha_path = out.into_os_string();
            alpha_path.push(".alpha.json");
            write_json(Path::new(&alpha_path), &r.alpha)?;
            println!("alpha {:.6} with teachers {}", r.alpha.alpha, r.soft.source_teachers.join("+"));
        }
        Command::Train { common, distilled, soft, seed, no_otm, out } => {
            let config = load(&common)?;
            let distilled = read_split(&distilled, config.grid.num_classes, "train")?;
            let soft = read_soft_labels(&soft).map_err(|e| e.in_stage("train"))?;
            let run = train(&config, &distilled, &soft, !no_otm, seed)?;
            write_json(&out, &run.student.model)?;
            if let Some(last) = run.epoch_losses.last() {
                println!("final epoch loss {last:.6}");
            }
        }
        Command::Eval { model, test } => {
            let model: Classifier = read_json(&model).map_err(|e| e.in_stage("eval"))?;
            let test = read_dataset(&test, Some(model.num_classes)).map_err(|e| e.in_stage("eval"))?;
            if test.split != Split::Test {
                eprintln!("note: evaluating on a `{}` split", test.split);
            }
            println!("{}", evaluate(&model, &test)?);
        }
        Command::Run { common } => {
            let config = load(&common)?;
            let report = run_pipeline(&config)?;
            print_report(&report);
        }
        Command::Ablate { common } => {
            let config = load(&common)?;
            let report = run_ablation(&config)?;
            for arm in &report.arms {
                print_report(arm);
            }
            for c in &report.comparisons {
                let t = &c.sign_test;
                println!(
                    "full vs {:<7} wins {} losses {} ties {}  sign-test p {:.4}",
                    c.ablated, t.wins, t.losses, t.ties, t.p_value
                );
            }
        }
        Command::AlphaSweep { common, subsets } => {
            let config = load(&common)?;
            let subsets: Vec<Vec<String>> = if subsets.is_empty() {
                let pool: Vec<String> = config.pool.iter().map(|t| t.id()).collect();
                let mut s: Vec<Vec<String>> = pool.iter().map(|t| vec![t.clone()]).collect();
                s.push(pool);
                s.push(vec![UNIFORM_TEACHER.to_string()]);
                s
            } else {
                subsets
                    .iter()
                    .map(|s| s.split(',').map(|t| t.trim().to_string()).collect())
                    .collect()
            };
            let rows = sweep_alpha(&config, &subsets)?;
            write_sweep(&config.output_dir, &rows)?;
            for r in &rows {
                println!("{:<40} alpha {:.6}  accuracy {:.4}", r.name(), r.alpha.mean, r.accuracy.mean);
            }
        }
        Command::Coverage { common, real, distilled, thresholds, class } => {
            let config = load(&common)?;
            let classes = config.grid.num_classes;
            let real = read_split(&real, classes, "coverage")?;
            let distilled = read_split(&distilled, classes, "coverage")?;
            let thresholds = if thresholds.is_empty() { config.thresholds() } else { thresholds };
            let (r, d) = match class {
                Some(c) if c >= classes => return Err(Error::Config(format!("class {c} out of range"))),
                Some(c) => (real.class_points(c), distilled.class_points(c)),
                None => (real.points, distilled.points),
            };
            let values = coverage_grid(r.view(), d.view(), &thresholds, config.coverage_p).map_err(|e| e.in_stage("coverage"))?;
            println!("threshold,coverage");
            for (t, v) in thresholds.iter().zip(values) {
                println!("{t},{v}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
