//! `tstok` command line: synthetic data, tokenizer training, the three task
//! pipelines, ablations, run comparison and checkpoint evaluation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use tstok::checkpoint::Checkpoint;
use tstok::data::write_csv;
use tstok::harness::{self, DataSource, ExperimentConfig, Task};
use tstok::metrics::PermutationTest;
use tstok::synthetic::{generate_synthetic, SyntheticSpec};

#[derive(Parser)]
#[command(name = "tstok", version, about = "Discrete time-series tokenization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seeds, e.g. 0,1,2.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds run concurrently on up to this many threads.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Override a config value: `--set tokenizer.iterations=200` (value parsed as JSON,
    /// falling back to a string).
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ablation {
    Codebook,
    Representation,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as one CSV per example (plus labels.csv for spiked data).
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train a tokenizer and report held-out reconstruction error.
    TrainTokenizer {
        #[command(flatten)]
        common: Common,
    },
    /// Masked imputation with a tokenizer trained on masked inputs.
    Impute {
        #[command(flatten)]
        common: Common,
        /// Reuse a saved tokenizer instead of training one.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Reconstruction-error anomaly detection.
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train a tokenizer and a forecaster per horizon and score them.
    TrainForecaster {
        #[command(flatten)]
        common: Common,
        /// Reuse a saved tokenizer; the forecaster is still trained.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score a saved tokenizer + forecaster checkpoint on the configured data.
    Forecast {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Codebook size sweep or tokens-vs-patches forecasting.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: Ablation,
    },
    /// Compare two result sets (run directories or table CSVs).
    Compare {
        #[command(flatten)]
        common: Common,
        a: PathBuf,
        b: PathBuf,
        /// Method row to compare; defaults to the first method in each table.
        #[arg(long)]
        method: Option<String>,
        /// Use the unpaired test even when seed counts match.
        #[arg(long)]
        unpaired: bool,
    },
    /// Evaluate a checkpoint on the configured data's test range.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .with_context(|| format!("cannot set {path}: {part} is inside a non-object"))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}

fn load_config(common: &Common, task: Option<Task>) -> Result<ExperimentConfig> {
    let mut value = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => serde_json::to_value(ExperimentConfig::default())?,
    };
    if let Some(task) = task {
        set_path(&mut value, "task", serde_json::to_value(task)?)?;
    }
    for o in &common.overrides {
        let (path, raw) = o.split_once('=').with_context(|| format!("--set {o}: expected PATH=VALUE"))?;
        let v = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut value, path, v)?;
    }
    if !common.seed.is_empty() {
        set_path(&mut value, "seeds", serde_json::to_value(&common.seed)?)?;
    }
    if let Some(out) = &common.out {
        set_path(&mut value, "output_dir", serde_json::to_value(out)?)?;
    }
    let config: ExperimentConfig = serde_json::from_value(value).context("invalid experiment config")?;
    config.validate()?;
    Ok(config)
}

fn run_task(common: &Common, task: Task, checkpoint: Option<&Path>) -> Result<()> {
    let config = load_config(common, Some(task))?;
    let ck = checkpoint
        .map(|p| Checkpoint::load(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let report = harness::run(&config, ck.as_ref(), common.threads, common.force)?;
    print!("{}", report.mean_table.render()?);
    eprintln!("wrote {}", config.output_dir.display());
    Ok(())
}

fn gen_data(common: &Common) -> Result<()> {
    let config = load_config(common, None)?;
    let DataSource::Synthetic(spec) = &config.data else {
        bail!("gen-data needs a synthetic data source in the config");
    };
    let out = &config.output_dir;
    harness::prepare_output_dir(out, common.force)?;
    let seeds = if common.seed.is_empty() { vec![spec.seed] } else { common.seed.clone() };
    for seed in seeds {
        let gen = generate_synthetic(&SyntheticSpec { seed, ..spec.clone() })?;
        let dir = out.join(format!("seed-{seed}"));
        std::fs::create_dir_all(&dir)?;
        for e in 0..gen.dataset.num_examples() {
            write_csv(&gen.dataset, e, dir.join(format!("{}.csv", gen.dataset.example_ids[e])))?;
        }
        if let Some(labels) = &gen.labels {
            for (e, row) in labels.rows().into_iter().enumerate() {
                let mut text = String::from("label\n");
                for &b in row {
                    text.push_str(if b { "1\n" } else { "0\n" });
                }
                std::fs::write(dir.join(format!("{}.labels.csv", gen.dataset.example_ids[e])), text)?;
            }
        }
    }
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(&config)?)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn compare(common: &Common, a: &Path, b: &Path, method: Option<&str>, unpaired: bool) -> Result<()> {
    let ta = harness::load_results(a)?;
    let tb = harness::load_results(b)?;
    let test = PermutationTest {
        paired: !unpaired,
        seed: common.seed.first().copied().unwrap_or(0),
        ..PermutationTest::default()
    };
    let labels = (a.display().to_string(), b.display().to_string());
    let report = harness::compare(&ta, &tb, (&labels.0, &labels.1), method, test)?;
    let text = report.render();
    print!("{text}");
    if let Some(out) = &common.out {
        harness::prepare_output_dir(out, common.force)?;
        std::fs::write(out.join("compare.txt"), &text)?;
        std::fs::write(out.join("compare.csv"), report.to_csv())?;
        std::fs::write(out.join("compare.json"), serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn eval(common: &Common, checkpoint: &Path) -> Result<()> {
    let config = load_config(common, None)?;
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let table = harness::evaluate_checkpoint(&config, &ck)?;
    print!("{}", table.render()?);
    if let Some(out) = &common.out {
        harness::prepare_output_dir(out, common.force)?;
        std::fs::write(out.join("table.csv"), table.to_csv())?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenData { common } => gen_data(common),
        Command::TrainTokenizer { common } => run_task(common, Task::Tokenizer, None),
        Command::Impute { common, checkpoint } => run_task(common, Task::Impute, checkpoint.as_deref()),
        Command::Detect { common, checkpoint } => run_task(common, Task::Anomaly, checkpoint.as_deref()),
        Command::TrainForecaster { common, checkpoint } => {
            let mut stripped = None;
            if let Some(p) = checkpoint {
                // keep only the tokenizer so a forecaster is always trained
                let mut ck = Checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?;
                ck.forecaster = None;
                stripped = Some(ck);
            }
            let config = load_config(common, Some(Task::Forecast))?;
            let report = harness::run(&config, stripped.as_ref(), common.threads, common.force)?;
            print!("{}", report.mean_table.render()?);
            Ok(())
        }
        Command::Forecast { common, checkpoint } => {
            let ck = Checkpoint::load(checkpoint)?;
            let Some(fc) = ck.forecaster()? else {
                bail!("{} has no forecaster section", checkpoint.display());
            };
            let mut common = common.clone();
            common.overrides.push(format!("forecaster.lookback={}", fc.config.lookback));
            common.overrides.push(format!("horizons=[{}]", fc.config.horizon));
            run_task(&common, Task::Forecast, Some(checkpoint))
        }
        Command::Ablate { common, kind } => {
            let task = match kind {
                Ablation::Codebook => Task::AblateCodebook,
                Ablation::Representation => Task::AblateRepresentation,
            };
            run_task(common, task, None)
        }
        Command::Compare {
            common,
            a,
            b,
            method,
            unpaired,
        } => compare(common, a, b, method.as_deref(), *unpaired),
        Command::Eval { common, checkpoint } => eval(common, checkpoint),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
