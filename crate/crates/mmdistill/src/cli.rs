//! The `mmdistill` command line.
//!
//! Every command writes a JSON document to stdout. Exit codes: 0 success,
//! 1 runtime or training failure, 2 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use mmdistill_core::data::{dataset_stats, gen_synthetic};
use mmdistill_core::eval::evaluate;
use mmdistill_core::graph::normalized_adjacency;
use mmdistill_core::numerics::{stream_rng, Stream};
use mmdistill_core::pipeline::{
    distill_student, evaluate_student, train_student_plain, train_teacher, DistillOutcome, Variant,
};
use serde_json::{json, Map, Value};

use crate::checkpoint::{load_checkpoint, load_teacher, save_student, save_teacher, Checkpoint};
use crate::config::RunConfig;
use crate::dataset::{load_dataset, save_dataset};
use crate::logs::{metrics_json, read_timing, JsonLinesObserver, TIMING};
use crate::report::ParamReport;

#[derive(Debug, Parser)]
#[command(name = "mmdistill", version, about = "Distill a multi-modal graph recommender into an ID-only student")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `seed` from the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Split {
    Validation,
    Test,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-modal dataset directory.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Stage 1: train the teacher.
    TrainTeacher {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "full")]
        variant: String,
        #[command(flatten)]
        common: Common,
    },
    /// Stage 2: distill a student from a trained teacher.
    Distill {
        #[arg(long)]
        data_dir: PathBuf,
        /// Teacher checkpoint directory; optional for `--variant no_kd`.
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "full")]
        variant: String,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a student or teacher checkpoint.
    Eval {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated cutoffs.
        #[arg(long, value_delimiter = ',', default_value = "20,50")]
        k_list: Vec<usize>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        /// Also write the metrics JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report parameter counts and compression ratios.
    ReportParams {
        #[arg(long, requires = "student", conflicts_with = "preset")]
        teacher: Option<PathBuf>,
        #[arg(long, requires = "teacher")]
        student: Option<PathBuf>,
        /// Published layout instead of checkpoints: `netflix` or `electronics`.
        #[arg(long, required_unless_present = "teacher")]
        preset: Option<String>,
        /// Run directories whose timing logs to summarize.
        #[arg(long)]
        logs: Vec<PathBuf>,
        /// Human-readable text instead of JSON.
        #[arg(long)]
        text: bool,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Failure(e)
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

fn run_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path).map_err(|e| usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.train.seed = seed;
        config.data.seed = seed;
    }
    config.train.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

fn prepare_out(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.is_file() {
        return Err(usage(format!("{} is a file", dir.display())));
    }
    let non_empty = std::fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(false);
    if non_empty && !force {
        return Err(usage(format!("output directory {} is not empty; pass --force to overwrite", dir.display())));
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn parse_variant(name: &str) -> Result<Variant, CliError> {
    name.parse().map_err(|e: mmdistill_core::Error| usage(e.to_string()))
}

fn write_summary(dir: &Path, value: &Value) -> anyhow::Result<()> {
    let path = dir.join("summary.json");
    std::fs::write(&path, format!("{}\n", serde_json::to_string_pretty(value)?)).with_context(|| format!("writing {}", path.display()))
}

fn distill_summary(outcome: &DistillOutcome, test: &Map<String, Value>, variant: Variant) -> Value {
    json!({
        "variant": variant.name(),
        "best_epoch": outcome.best_epoch,
        "epochs_run": outcome.epochs_run,
        "validation_recall@20": outcome.best_recall,
        "census": outcome.student_census(),
        "test": test,
    })
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::GenData { out: dir, common } => {
            let config = run_config(&common)?;
            prepare_out(&dir, common.force)?;
            let bundle = gen_synthetic(&config.data).map_err(|e| usage(e.to_string()))?;
            save_dataset(&dir, &bundle, Some(&config.data)).context("saving dataset")?;
            emit(out, &serde_json::to_value(dataset_stats(&bundle)).expect("plain struct"))?;
        }
        Command::TrainTeacher { data_dir, out: dir, variant, common } => {
            let variant = parse_variant(&variant)?;
            let config = variant.apply(&run_config(&common)?.train);
            let bundle = load_dataset(&data_dir).context("loading dataset")?;
            prepare_out(&dir, common.force)?;
            let mut observer = JsonLinesObserver::create(&dir).context("opening logs")?;
            let outcome = train_teacher(&bundle, &config, &mut observer).context("training teacher")?;
            observer.finish().context("writing logs")?;
            save_teacher(&dir, &outcome.model, config.seed).context("saving teacher")?;
            let test = mmdistill_core::pipeline::evaluate_teacher(&outcome.model, &bundle, &config.ks)
                .context("evaluating teacher")?;
            let summary = json!({
                "variant": variant.name(),
                "best_epoch": outcome.best_epoch,
                "epochs_run": outcome.epochs_run,
                "validation_recall@20": outcome.best_recall,
                "test": metrics_json(&test),
            });
            write_summary(&dir, &summary)?;
            emit(out, &summary)?;
        }
        Command::Distill { data_dir, teacher, out: dir, variant, common } => {
            let variant = parse_variant(&variant)?;
            let config = variant.apply(&run_config(&common)?.train);
            let teacher = match (&teacher, variant) {
                (Some(path), _) => Some(load_teacher(path).with_context(|| format!("loading teacher {}", path.display()))?),
                (None, Variant::NoKd) => None,
                (None, _) => return Err(usage("--teacher is required unless --variant no_kd")),
            };
            if let Some(t) = &teacher {
                if variant == Variant::NoPrompt && t.lambda1 != 0.0 {
                    return Err(usage("--variant no_prompt needs a teacher trained with --variant no_prompt"));
                }
            }
            let bundle = load_dataset(&data_dir).context("loading dataset")?;
            prepare_out(&dir, common.force)?;
            let mut observer = JsonLinesObserver::create(&dir).context("opening logs")?;
            let outcome = match &teacher {
                Some(t) => distill_student(t, &bundle, &config, &mut observer),
                None => train_student_plain(&bundle, &config, &mut observer),
            }
            .context("distilling student")?;
            observer.finish().context("writing logs")?;
            save_student(&dir, &outcome.student, config.seed).context("saving student")?;
            if let Some(t) = &outcome.teacher {
                save_teacher(&dir.join("teacher_tuned"), t, config.seed).context("saving tuned teacher")?;
            }
            let test = evaluate_student(&outcome.student, &bundle, &config.ks).context("evaluating student")?;
            let summary = distill_summary(&outcome, &metrics_json(&test), variant);
            write_summary(&dir, &summary)?;
            emit(out, &summary)?;
        }
        Command::Eval { data_dir, checkpoint, k_list, split, out: file } => {
            if k_list.is_empty() || k_list.contains(&0) {
                return Err(usage("--k-list needs positive cutoffs"));
            }
            let bundle = load_dataset(&data_dir).context("loading dataset")?;
            let model = load_checkpoint(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let target = match split {
                Split::Validation => &bundle.validation,
                Split::Test => &bundle.test,
            };
            let adj = normalized_adjacency(&bundle.train);
            let (kind, result) = match &model {
                Checkpoint::Student(s) => ("student", evaluate(&s.forward(&adj).context("student forward")?, &bundle.train, target, &k_list)),
                Checkpoint::Teacher(t) => {
                    let mut rng = stream_rng(0, Stream::Dropout, 0);
                    let fwd = t.forward(&adj, &bundle.train, &bundle.features, false, &mut rng).context("teacher forward")?;
                    ("teacher", evaluate(&fwd, &bundle.train, target, &k_list))
                }
            };
            let result = result.context("evaluating")?;
            let mut doc = Map::new();
            doc.insert("checkpoint".into(), json!(kind));
            doc.insert("split".into(), json!(match split { Split::Validation => "validation", Split::Test => "test" }));
            doc.insert("users".into(), json!(result.n_users));
            doc.extend(metrics_json(&result));
            let doc = Value::Object(doc);
            if let Some(path) = file {
                std::fs::write(&path, format!("{doc}\n")).with_context(|| format!("writing {}", path.display()))?;
            }
            emit(out, &doc)?;
        }
        Command::ReportParams { teacher, student, preset, logs, text } => {
            let mut report = match (teacher, student, preset) {
                (Some(t), Some(s), _) => {
                    let teacher = load_teacher(&t).with_context(|| format!("loading {}", t.display()))?;
                    let student = match load_checkpoint(&s).with_context(|| format!("loading {}", s.display()))? {
                        Checkpoint::Student(s) => s,
                        Checkpoint::Teacher(_) => return Err(usage(format!("{} is not a student checkpoint", s.display()))),
                    };
                    if (teacher.n_users(), teacher.n_items()) != (student.n_users(), student.n_items()) {
                        return Err(CliError::Failure(anyhow::anyhow!(
                            "checkpoint mismatch: teacher is {}x{}, student is {}x{}",
                            teacher.n_users(),
                            teacher.n_items(),
                            student.n_users(),
                            student.n_items()
                        )));
                    }
                    ParamReport::from_models("checkpoints", &teacher, &student)
                }
                (_, _, Some(name)) => {
                    ParamReport::preset(&name).ok_or_else(|| usage(format!("unknown preset {name:?}; use netflix or electronics")))?
                }
                _ => return Err(usage("pass --teacher and --student, or --preset")),
            };
            for dir in &logs {
                let timing = read_timing(&dir.join(TIMING)).context("reading timing log")?;
                report.add_timing(&timing);
            }
            if text {
                write!(out, "{report}").context("writing report")?;
            } else {
                emit(out, &serde_json::to_value(&report).expect("plain struct"))?;
            }
        }
    }
    Ok(())
}

fn emit(out: &mut dyn Write, value: &Value) -> anyhow::Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(value)?).context("writing to stdout")
}

/// Parses `args` (including the program name), runs the command, and
/// returns the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            2
        }
        Err(CliError::Failure(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
