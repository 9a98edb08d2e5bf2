//! Seeded experiment runner: builds data, trains, evaluates and writes
//! per-seed artifacts plus merged tables. Also the run-vs-run comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{load_csv, window_starts, GlobalNormalizer, TimeSeriesDataset, UnivariateBatch};
use crate::error::{Error, Result};
use crate::metrics::{avg_wins, precision_recall_f1, permutation_test, BinaryLabels, Direction, PermutationTest, ResultTable};
use crate::synthetic::{generate_synthetic, SyntheticKind, SyntheticSpec};
use crate::tasks::ablation::{codebook_size_sweep, representation_ablation, ForecastSplit};
use crate::tasks::anomaly::{detect_anomalies, DetectOptions};
use crate::tasks::forecast::{evaluate_forecaster, split_lookback, train_forecaster, Forecaster, ForecasterConfig};
use crate::tasks::imputation::{evaluate_imputation, train_imputing_vqvae, MASK_RATIOS};
use crate::vqvae::{reconstruction_mse, train, LossRecord, VqVaeConfig, VqVaeModel};

pub const METHOD: &str = "tstok";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Tokenizer training and held-out reconstruction only.
    Tokenizer,
    Impute,
    Anomaly,
    Forecast,
    AblateCodebook,
    AblateRepresentation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    /// One CSV per example; all must share the header.
    Csv(Vec<PathBuf>),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSpec::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub task: Task,
    pub data: DataSource,
    /// Per-step 0/1 labels (CSV, one column) for anomaly runs on CSV data,
    /// one file per data file.
    pub anomaly_labels: Vec<PathBuf>,
    pub train_fraction: f64,
    pub val_fraction: f64,
    /// Length of the windows the tokenizer is trained and evaluated on.
    pub window_length: usize,
    /// Stride between training windows.
    pub stride: usize,
    /// Per-sensor z-scoring fitted on the training range.
    pub global_norm: bool,
    /// Instance normalization inside the tokenizer; `None` picks the task
    /// default (off for imputation, on otherwise).
    pub revin: Option<bool>,
    pub tokenizer: VqVaeConfig,
    pub forecaster: ForecasterConfig,
    pub mask_ratios: Vec<f64>,
    pub anomaly_ratio: f64,
    pub detect: DetectOptions,
    pub horizons: Vec<usize>,
    pub codebook_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::Impute,
            data: DataSource::default(),
            anomaly_labels: Vec::new(),
            train_fraction: 0.7,
            val_fraction: 0.1,
            window_length: 96,
            stride: 8,
            global_norm: true,
            revin: None,
            tokenizer: VqVaeConfig::default(),
            forecaster: ForecasterConfig::default(),
            mask_ratios: MASK_RATIOS.to_vec(),
            anomaly_ratio: 0.02,
            detect: DetectOptions::default(),
            horizons: vec![96],
            codebook_sizes: vec![32, 256, 512],
            seeds: vec![0, 1, 2],
            output_dir: PathBuf::from("runs/out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("seeds must be non-empty".into()));
        }
        if let DataSource::Csv(paths) = &self.data {
            if paths.is_empty() {
                return Err(Error::InvalidArgument("no CSV paths given".into()));
            }
            for p in paths.iter().chain(self.anomaly_labels.iter()) {
                if !p.exists() {
                    return Err(Error::InvalidArgument(format!("{} does not exist", p.display())));
                }
            }
        }
        if !(self.train_fraction > 0.0 && self.val_fraction >= 0.0 && self.train_fraction + self.val_fraction < 1.0) {
            return Err(Error::InvalidArgument("split fractions must leave a test range".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidArgument("stride must be positive".into()));
        }
        Ok(())
    }

    fn revin_for_task(&self) -> bool {
        self.revin.unwrap_or(self.task != Task::Impute)
    }

    fn tokenizer_config(&self, seed: u64) -> VqVaeConfig {
        VqVaeConfig {
            seed,
            instance_norm: self.revin_for_task(),
            ..self.tokenizer.clone()
        }
    }
}

/// Data prepared for one run: the (optionally globally normalized) dataset,
/// a clean copy for anomaly training, labels and the time ranges.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub data: TimeSeriesDataset,
    pub clean: TimeSeriesDataset,
    pub labels: Option<Array2<bool>>,
    pub train: (usize, usize),
    pub test: (usize, usize),
    pub normalizer: Option<GlobalNormalizer>,
}

fn load_dataset(
    source: &DataSource,
    spike_start: Option<usize>,
) -> Result<(TimeSeriesDataset, Option<TimeSeriesDataset>, Option<Array2<bool>>)> {
    match source {
        DataSource::Synthetic(spec) => {
            let spec = &SyntheticSpec {
                spike_start: spike_start.unwrap_or(spec.spike_start),
                ..spec.clone()
            };
            let gen = generate_synthetic(spec)?;
            let clean = if spec.kind == SyntheticKind::Spiked {
                Some(
                    generate_synthetic(&SyntheticSpec {
                        kind: SyntheticKind::MultiSine,
                        ..spec.clone()
                    })?
                    .dataset,
                )
            } else {
                None
            };
            Ok((gen.dataset, clean, gen.labels))
        }
        DataSource::Csv(paths) => {
            let parts = paths.iter().map(load_csv).collect::<Result<Vec<_>>>()?;
            let first = &parts[0];
            for p in &parts[1..] {
                if p.sensor_names != first.sensor_names || p.len() != first.len() {
                    return Err(Error::Shape("CSV files differ in header or length".into()));
                }
            }
            let views: Vec<_> = parts.iter().map(|p| p.values.view()).collect();
            let values = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?;
            let ids = paths.iter().map(|p| p.display().to_string()).collect();
            Ok((TimeSeriesDataset::new(values, first.sensor_names.clone(), ids)?, None, None))
        }
    }
}

fn load_labels(paths: &[PathBuf], examples: usize, t: usize) -> Result<Array2<bool>> {
    if paths.len() != examples {
        return Err(Error::Shape(format!("{} label files for {examples} examples", paths.len())));
    }
    let mut out = Array2::from_elem((examples, t), false);
    for (e, path) in paths.iter().enumerate() {
        let ds = load_csv(path)?;
        if ds.len() != t || ds.num_sensors() != 1 {
            return Err(Error::Shape(format!(
                "{}: expected one label column of length {t}",
                path.display()
            )));
        }
        out.row_mut(e).assign(&ds.values.slice(s![0, 0, ..]).mapv(|v| v != 0.0));
    }
    Ok(out)
}

pub fn prepare_data(config: &ExperimentConfig) -> Result<PreparedData> {
    let t = match &config.data {
        DataSource::Synthetic(spec) => spec.length,
        DataSource::Csv(paths) => load_csv(&paths[0])?.len(),
    };
    let a = (t as f64 * config.train_fraction).round() as usize;
    let b = (t as f64 * (config.train_fraction + config.val_fraction)).round() as usize;
    // synthetic anomaly runs put their whole spike budget in the test range
    let spike_start = (config.task == Task::Anomaly).then_some(b);
    let (raw, clean, mut labels) = load_dataset(&config.data, spike_start)?;
    if labels.is_none() && !config.anomaly_labels.is_empty() {
        labels = Some(load_labels(&config.anomaly_labels, raw.num_examples(), raw.len())?);
    }
    let clean = clean.unwrap_or_else(|| raw.clone());
    let (data, clean, normalizer) = if config.global_norm {
        let norm = GlobalNormalizer::fit(&clean, 0..a)?;
        (norm.apply(&raw)?, norm.apply(&clean)?, Some(norm))
    } else {
        (raw, clean, None)
    };
    Ok(PreparedData {
        data,
        clean,
        labels,
        train: (0, a),
        test: (b, t),
        normalizer,
    })
}

/// All `[S]`-row windows of length `window` at `stride` inside `range`,
/// flattened to univariate rows (example-major, window, sensor-minor).
pub fn window_rows(ds: &TimeSeriesDataset, range: (usize, usize), window: usize, stride: usize) -> Result<UnivariateBatch> {
    let starts = window_starts(range.1 - range.0, window, stride)?;
    let (e, s_, _) = ds.values.dim();
    let mut rows = Array2::zeros((e * starts.len() * s_, window));
    let mut origin = Vec::with_capacity(rows.nrows());
    let mut r = 0;
    for ei in 0..e {
        for &st in &starts {
            for si in 0..s_ {
                let a = range.0 + st;
                rows.row_mut(r).assign(&ds.values.slice(s![ei, si, a..a + window]));
                origin.push((ei, si));
                r += 1;
            }
        }
    }
    Ok(UnivariateBatch { series: rows, origin })
}

/// Structured result of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub task: Task,
    pub seed: u64,
    pub table: ResultTable,
    pub details: serde_json::Value,
}

struct SeedOutput {
    result: SeedResult,
    checkpoints: Vec<(String, Checkpoint)>,
    history: Vec<LossRecord>,
}

fn pct(r: f64) -> String {
    format!("mask-{}%", r * 100.0)
}

fn train_tokenizer(
    config: &ExperimentConfig,
    prep: &PreparedData,
    seed: u64,
    pretrained: Option<&VqVaeModel>,
    source: &TimeSeriesDataset,
) -> Result<(VqVaeModel, Vec<LossRecord>)> {
    if let Some(m) = pretrained {
        return Ok((m.clone(), Vec::new()));
    }
    let rows = window_rows(source, prep.train, config.window_length, config.stride)?;
    let mut model = VqVaeModel::new(config.tokenizer_config(seed))?;
    let history = if config.task == Task::Impute {
        train_imputing_vqvae(&mut model, &rows, &config.mask_ratios)?
    } else {
        train(&mut model, &rows)?
    };
    Ok((model, history))
}

fn forecast_split(prep: &PreparedData, config: &ExperimentConfig, horizon: usize) -> Result<ForecastSplit> {
    let lookback = config.forecaster.lookback;
    let w = lookback + horizon;
    let train_rows = window_rows(&prep.data, prep.train, w, config.stride)?;
    let test_rows = window_rows(&prep.data, prep.test, w, config.stride)?;
    let (train_x, train_y) = split_lookback(&train_rows.series, lookback, horizon)?;
    let (test_x, test_y) = split_lookback(&test_rows.series, lookback, horizon)?;
    Ok(ForecastSplit {
        train_x,
        train_y,
        test_x,
        test_y,
    })
}

fn run_seed(
    config: &ExperimentConfig,
    prep: &PreparedData,
    seed: u64,
    pretrained: Option<&Checkpoint>,
) -> Result<SeedOutput> {
    let pre_model = pretrained.map(Checkpoint::tokenizer).transpose()?;
    let mut table = ResultTable::new();
    let mut checkpoints = Vec::new();
    let details;
    let test_windows = || window_rows(&prep.data, prep.test, config.window_length, config.window_length);
    let (history, tokenizer) = match config.task {
        Task::AblateCodebook => (Vec::new(), None),
        Task::Anomaly => {
            let (m, h) = train_tokenizer(config, prep, seed, pre_model.as_ref(), &prep.clean)?;
            (h, Some(m))
        }
        _ => {
            let (m, h) = train_tokenizer(config, prep, seed, pre_model.as_ref(), &prep.data)?;
            (h, Some(m))
        }
    };
    if let Some(m) = &tokenizer {
        checkpoints.push(("tokenizer.json".to_string(), Checkpoint::from_model(m)));
    }

    match config.task {
        Task::Tokenizer => {
            let m = tokenizer.as_ref().unwrap();
            let mse = reconstruction_mse(m, &test_windows()?)?;
            table.push(METHOD, "reconstruction", "mse", mse, Direction::Lower)?;
            details = serde_json::json!({ "heldout_mse": mse });
        }
        Task::Impute => {
            let m = tokenizer.as_ref().unwrap();
            let metrics = evaluate_imputation(m, &test_windows()?, &config.mask_ratios, seed)?;
            for r in &metrics {
                table.push(METHOD, &pct(r.ratio), "mse", r.mse, Direction::Lower)?;
                table.push(METHOD, &pct(r.ratio), "mae", r.mae, Direction::Lower)?;
                table.push("mean-fill", &pct(r.ratio), "mse", r.baseline_mse, Direction::Lower)?;
                table.push("mean-fill", &pct(r.ratio), "mae", r.baseline_mae, Direction::Lower)?;
            }
            details = serde_json::to_value(&metrics)?;
        }
        Task::Anomaly => {
            let m = tokenizer.as_ref().unwrap();
            let labels = prep
                .labels
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("anomaly task needs labels".into()))?;
            // test ranges rarely divide the compression factor; score them in
            // tokenizer-sized windows unless told otherwise
            let options = DetectOptions {
                window: Some(config.detect.window.unwrap_or(config.window_length)),
                ..config.detect
            };
            let (mut pred, mut truth) = (Vec::new(), Vec::new());
            for e in 0..prep.data.num_examples() {
                let series = prep.data.values.slice(s![e, .., prep.test.0..prep.test.1]).to_owned();
                let res = detect_anomalies(m, &UnivariateBatch::from_rows(series), config.anomaly_ratio, options)?;
                pred.extend(res.flags);
                truth.extend(labels.slice(s![e, prep.test.0..prep.test.1]).iter().cloned());
            }
            let (pred, truth) = (BinaryLabels(pred), BinaryLabels(truth));
            let adj = precision_recall_f1(&pred, &truth, true)?;
            let raw = precision_recall_f1(&pred, &truth, false)?;
            let setting = format!("A={}%", config.anomaly_ratio * 100.0);
            table.push(METHOD, &setting, "precision", adj.precision, Direction::Higher)?;
            table.push(METHOD, &setting, "recall", adj.recall, Direction::Higher)?;
            table.push(METHOD, &setting, "f1", adj.f1, Direction::Higher)?;
            details = serde_json::json!({ "adjusted": adj, "unadjusted": raw, "ratio": config.anomaly_ratio });
        }
        Task::Forecast => {
            let m = tokenizer.as_ref().unwrap();
            let mut per = BTreeMap::new();
            for &h in &config.horizons {
                let split = forecast_split(prep, config, h)?;
                let existing = pretrained
                    .map(Checkpoint::forecaster)
                    .transpose()?
                    .flatten()
                    .filter(|fc| fc.config.horizon == h);
                let fc = match existing {
                    Some(fc) => fc,
                    None => {
                        let cfg = ForecasterConfig {
                            horizon: h,
                            seed,
                            ..config.forecaster.clone()
                        };
                        let mut fc = Forecaster::for_tokenizer(cfg, &m.config)?;
                        train_forecaster(&mut fc, m, &split.train_x, &split.train_y)?;
                        fc
                    }
                };
                let met = evaluate_forecaster(&fc, m, &split.test_x, &split.test_y)?;
                let setting = format!("{}->{h}", config.forecaster.lookback);
                table.push(METHOD, &setting, "mse", met.mse, Direction::Lower)?;
                table.push(METHOD, &setting, "mae", met.mae, Direction::Lower)?;
                table.push("naive", &setting, "mse", met.naive_mse, Direction::Lower)?;
                table.push("naive", &setting, "mae", met.naive_mae, Direction::Lower)?;
                checkpoints.push((format!("forecaster-{h}.json"), Checkpoint::from_model(m).with_forecaster(&fc)));
                per.insert(h.to_string(), met);
            }
            details = serde_json::to_value(&per)?;
        }
        Task::AblateCodebook => {
            let base = config.tokenizer_config(seed);
            let rows = window_rows(&prep.data, prep.train, config.window_length, config.stride)?;
            let pts = codebook_size_sweep(&base, &config.codebook_sizes, &rows, &test_windows()?)?;
            for p in &pts {
                table.push(&format!("K={}", p.codebook_size), "reconstruction", "mse", p.heldout_mse, Direction::Lower)?;
            }
            details = serde_json::to_value(&pts)?;
        }
        Task::AblateRepresentation => {
            let m = tokenizer.as_ref().unwrap();
            let mut per = BTreeMap::new();
            for &h in &config.horizons {
                let split = forecast_split(prep, config, h)?;
                let cfg = ForecasterConfig {
                    horizon: h,
                    seed,
                    ..config.forecaster.clone()
                };
                let res = representation_ablation(m, &cfg, &split)?;
                table.extend(&res.table)?;
                per.insert(h.to_string(), res);
            }
            details = serde_json::to_value(&per)?;
        }
    }
    Ok(SeedOutput {
        result: SeedResult {
            task: config.task,
            seed,
            table,
            details,
        },
        checkpoints,
        history,
    })
}

/// Refuses to write into a non-empty directory unless `force` is set.
pub fn prepare_output_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(Error::InvalidArgument(format!(
                "{} exists and is not empty (use --force to overwrite)",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn history_csv(history: &[LossRecord]) -> String {
    let mut out = String::from("step,rec,vq,cmt\n");
    for r in history {
        let _ = writeln!(out, "{},{},{},{}", r.step, r.rec, r.vq, r.cmt);
    }
    out
}

/// Mean and sample std per cell across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub setting: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub direction: Direction,
}

pub fn summarize(tables: &[ResultTable]) -> Vec<SummaryRow> {
    let mut cells: Vec<(String, String, String, Direction, Vec<f64>)> = Vec::new();
    for t in tables {
        for r in &t.rows {
            match cells
                .iter_mut()
                .find(|c| c.0 == r.method && c.1 == r.setting && c.2 == r.metric)
            {
                Some(c) => c.4.push(r.value),
                None => cells.push((r.method.clone(), r.setting.clone(), r.metric.clone(), r.direction, vec![r.value])),
            }
        }
    }
    cells
        .into_iter()
        .map(|(method, setting, metric, direction, v)| {
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                method,
                setting,
                metric,
                mean,
                std,
                n,
                direction,
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "setting", "metric", "mean", "std", "n", "direction"]).expect("in-memory");
    for r in rows {
        let dir = match r.direction {
            Direction::Lower => "lower",
            Direction::Higher => "higher",
        };
        w.write_record([
            r.method.as_str(),
            &r.setting,
            &r.metric,
            &r.mean.to_string(),
            &r.std.to_string(),
            &r.n.to_string(),
            dir,
        ])
        .expect("in-memory");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub seeds: Vec<SeedResult>,
    pub summary: Vec<SummaryRow>,
    pub mean_table: ResultTable,
}

/// Runs every seed and writes:
/// `seed-<n>/{results.json, table.csv, loss_history.csv, *.json checkpoints}`,
/// plus `table.csv` (per-cell mean), `summary.csv` (mean, std, n) and
/// `config.json` at the top of the output directory.
///
/// Seeds are independent; with `threads > 1` they run concurrently, each on
/// one thread, so results do not depend on the thread count.
pub fn run(config: &ExperimentConfig, pretrained: Option<&Checkpoint>, threads: usize, force: bool) -> Result<RunReport> {
    config.validate()?;
    let out = &config.output_dir;
    prepare_output_dir(out, force)?;
    let prep = prepare_data(config)?;
    let threads = threads.max(1);

    let mut outputs: Vec<Option<Result<SeedOutput>>> = (0..config.seeds.len()).map(|_| None).collect();
    for chunk_start in (0..config.seeds.len()).step_by(threads) {
        let end = (chunk_start + threads).min(config.seeds.len());
        std::thread::scope(|sc| {
            let handles: Vec<_> = (chunk_start..end)
                .map(|i| {
                    let prep = &prep;
                    sc.spawn(move || run_seed(config, prep, config.seeds[i], pretrained))
                })
                .collect();
            for (i, h) in (chunk_start..end).zip(handles) {
                outputs[i] = Some(h.join().expect("seed thread panicked"));
            }
        });
    }

    let mut seeds = Vec::new();
    for o in outputs {
        let o = o.expect("every seed ran")?;
        let dir = out.join(format!("seed-{}", o.result.seed));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write(&dir.join("results.json"), &serde_json::to_string_pretty(&o.result)?)?;
        write(&dir.join("table.csv"), &o.result.table.to_csv())?;
        write(&dir.join("loss_history.csv"), &history_csv(&o.history))?;
        for (name, ck) in &o.checkpoints {
            ck.save(dir.join(name))?;
        }
        seeds.push(o.result);
    }
    let tables: Vec<ResultTable> = seeds.iter().map(|s| s.table.clone()).collect();
    let summary = summarize(&tables);
    let mut mean_table = ResultTable::new();
    for r in &summary {
        mean_table.push(&r.method, &r.setting, &r.metric, r.mean, r.direction)?;
    }
    write(&out.join("summary.csv"), &summary_csv(&summary))?;
    write(&out.join("table.csv"), &mean_table.to_csv())?;
    write(&out.join("config.json"), &serde_json::to_string_pretty(config)?)?;
    Ok(RunReport {
        seeds,
        summary,
        mean_table,
    })
}

/// Scores a saved tokenizer (and forecaster, if the checkpoint has one) on the
/// test range of the configured data.
pub fn evaluate_checkpoint(config: &ExperimentConfig, ck: &Checkpoint) -> Result<ResultTable> {
    config.validate()?;
    let prep = prepare_data(config)?;
    let model = ck.tokenizer()?;
    let mut table = ResultTable::new();
    let w = window_rows(&prep.data, prep.test, config.window_length, config.window_length)?;
    table.push(METHOD, "reconstruction", "mse", reconstruction_mse(&model, &w)?, Direction::Lower)?;
    if let Some(fc) = ck.forecaster()? {
        let cfg = ExperimentConfig {
            forecaster: fc.config.clone(),
            ..config.clone()
        };
        let split = forecast_split(&prep, &cfg, fc.config.horizon)?;
        let met = evaluate_forecaster(&fc, &model, &split.test_x, &split.test_y)?;
        let setting = format!("{}->{}", fc.config.lookback, fc.config.horizon);
        table.push(METHOD, &setting, "mse", met.mse, Direction::Lower)?;
        table.push(METHOD, &setting, "mae", met.mae, Direction::Lower)?;
    }
    Ok(table)
}

/// Per-seed tables of a run directory (sorted by seed), or a single table file.
pub fn load_results(path: &Path) -> Result<Vec<ResultTable>> {
    if path.is_file() {
        return Ok(vec![ResultTable::read_csv(path)?]);
    }
    let mut seeds: Vec<(u64, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        let name = entry.file_name().to_string_lossy().to_string();
        if let Some(n) = name.strip_prefix("seed-").and_then(|n| n.parse().ok()) {
            seeds.push((n, entry.path().join("table.csv")));
        }
    }
    if seeds.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} has no seed-<n> result directories",
            path.display()
        )));
    }
    seeds.sort();
    seeds.iter().map(|(_, p)| ResultTable::read_csv(p)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub setting: String,
    pub metric: String,
    pub direction: Direction,
    pub mean_a: f64,
    pub mean_b: f64,
    /// One-sided p-value that `a` is better than `b`.
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub label_a: String,
    pub label_b: String,
    pub rows: Vec<CompareRow>,
    pub avg_wins_ties: (f64, f64),
    pub avg_wins_strict: (f64, f64),
    /// Fraction of cells with `p ≤ 0.05`.
    pub significant_fraction: f64,
}

fn method_values(tables: &[ResultTable], method: Option<&str>) -> Result<BTreeMap<(String, String), (Direction, Vec<f64>)>> {
    let mut out: BTreeMap<(String, String), (Direction, Vec<f64>)> = BTreeMap::new();
    for t in tables {
        let m = match method {
            Some(m) => m.to_string(),
            None => t
                .methods()
                .into_iter()
                .next()
                .ok_or_else(|| Error::InvalidArgument("empty result table".into()))?,
        };
        for r in t.rows.iter().filter(|r| r.method == m) {
            out.entry((r.setting.clone(), r.metric.clone()))
                .or_insert((r.direction, Vec::new()))
                .1
                .push(r.value);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!("no rows for method {method:?}")));
    }
    Ok(out)
}

/// Aligns the cells of two result sets by `(setting, metric)` and reports
/// AvgWins with and without tie double-counting plus a per-cell permutation
/// test across seeds (paired when both sides have the same number of seeds).
pub fn compare(
    a: &[ResultTable],
    b: &[ResultTable],
    labels: (&str, &str),
    method: Option<&str>,
    test: PermutationTest,
) -> Result<CompareReport> {
    let va = method_values(a, method)?;
    let vb = method_values(b, method)?;
    let mut missing: Vec<String> = va
        .keys()
        .filter(|k| !vb.contains_key(*k))
        .map(|(s, m)| format!("{s}/{m} missing from {}", labels.1))
        .collect();
    missing.extend(
        vb.keys()
            .filter(|k| !va.contains_key(*k))
            .map(|(s, m)| format!("{s}/{m} missing from {}", labels.0)),
    );
    if !missing.is_empty() {
        return Err(Error::Misaligned(missing));
    }
    let (la, lb) = (format!("A:{}", labels.0), format!("B:{}", labels.1));
    let mut table = ResultTable::new();
    let mut rows = Vec::new();
    for ((setting, metric), (dir, xa)) in &va {
        let xb = &vb[&(setting.clone(), metric.clone())].1;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(xa), mean(xb));
        table.push(&la, setting, metric, ma, *dir)?;
        table.push(&lb, setting, metric, mb, *dir)?;
        // orient so that "a better" is always "a smaller"
        let sign = if *dir == Direction::Lower { 1.0 } else { -1.0 };
        let oa: Vec<f64> = xa.iter().map(|v| sign * v).collect();
        let ob: Vec<f64> = xb.iter().map(|v| sign * v).collect();
        let p_value = permutation_test(
            &oa,
            &ob,
            PermutationTest {
                paired: test.paired && oa.len() == ob.len(),
                ..test
            },
        )?;
        rows.push(CompareRow {
            setting: setting.clone(),
            metric: metric.clone(),
            direction: *dir,
            mean_a: ma,
            mean_b: mb,
            p_value,
        });
    }
    let ties = avg_wins(&table, true)?;
    let strict = avg_wins(&table, false)?;
    let significant = rows.iter().filter(|r| r.p_value <= 0.05).count() as f64 / rows.len() as f64;
    Ok(CompareReport {
        label_a: labels.0.to_string(),
        label_b: labels.1.to_string(),
        rows,
        avg_wins_ties: (ties[&la], ties[&lb]),
        avg_wins_strict: (strict[&la], strict[&lb]),
        significant_fraction: significant,
    })
}

impl CompareReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["setting", "metric", "mean_a", "mean_b", "p_value"]).expect("in-memory");
        for r in &self.rows {
            w.write_record([
                r.setting.as_str(),
                &r.metric,
                &r.mean_a.to_string(),
                &r.mean_b.to_string(),
                &r.p_value.to_string(),
            ])
            .expect("in-memory");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<20} {:<12} {:>14} {:>14} {:>10}",
            "setting", "metric", self.label_a, self.label_b, "p"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<20} {:<12} {:>14.6} {:>14.6} {:>10.4}",
                r.setting, r.metric, r.mean_a, r.mean_b, r.p_value
            );
        }
        let _ = writeln!(
            out,
            "AvgWins (ties counted): {:.1}% / {:.1}%",
            100.0 * self.avg_wins_ties.0,
            100.0 * self.avg_wins_ties.1
        );
        let _ = writeln!(
            out,
            "AvgWins (no ties):      {:.1}% / {:.1}%",
            100.0 * self.avg_wins_strict.0,
            100.0 * self.avg_wins_strict.1
        );
        let _ = writeln!(out, "cells with p <= 0.05:   {:.1}%", 100.0 * self.significant_fraction);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(vals: &[(&str, f64)]) -> ResultTable {
        let mut t = ResultTable::new();
        for (setting, v) in vals {
            t.push("m", setting, "mse", *v, Direction::Lower).unwrap();
        }
        t
    }

    #[test]
    fn self_comparison() {
        let a = vec![table(&[("s1", 0.1), ("s2", 0.2)]), table(&[("s1", 0.15), ("s2", 0.25)])];
        let rep = compare(&a, &a, ("a", "a"), None, PermutationTest::default()).unwrap();
        assert_eq!(rep.avg_wins_ties, (1.0, 1.0));
        assert_eq!(rep.avg_wins_strict, (0.0, 0.0));
        assert!(rep.rows.iter().all(|r| r.p_value == 1.0));
    }

    #[test]
    fn strict_dominance_and_misalignment() {
        let a = vec![table(&[("s1", 0.1), ("s2", 0.2)])];
        let b = vec![table(&[("s1", 0.3), ("s2", 0.4)])];
        let rep = compare(&a, &b, ("a", "b"), None, PermutationTest::default()).unwrap();
        assert_eq!(rep.avg_wins_ties, (1.0, 0.0));
        assert_eq!(rep.avg_wins_strict, (1.0, 0.0));
        let c = vec![table(&[("s1", 0.3)])];
        match compare(&a, &c, ("a", "c"), None, PermutationTest::default()) {
            Err(Error::Misaligned(cells)) => assert_eq!(cells, vec!["s2/mse missing from c".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn summary_mean_std() {
        let rows = summarize(&[table(&[("s", 1.0)]), table(&[("s", 3.0)])]);
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].mean, rows[0].std, rows[0].n), (2.0, 2f64.sqrt(), 2));
    }

    #[test]
    fn window_rows_layout() {
        let ds = TimeSeriesDataset::from_values(Array2::from_shape_fn((2, 10), |(s, t)| (s * 100 + t) as f64).insert_axis(Axis(0))).unwrap();
        let rows = window_rows(&ds, (2, 10), 4, 2).unwrap();
        // starts 2, 4, 6 × 2 sensors
        assert_eq!(rows.series.nrows(), 6);
        assert_eq!(rows.series.row(1).to_vec(), vec![102.0, 103.0, 104.0, 105.0]);
        assert_eq!(rows.series.row(4).to_vec(), vec![6.0, 7.0, 8.0, 9.0]);
        assert!(window_rows(&ds, (0, 3), 4, 1).is_err());
    }

    #[test]
    fn output_dir_guard() {
        let dir = tempfile::tempdir().unwrap();
        prepare_output_dir(dir.path(), false).unwrap();
        std::fs::write(dir.path().join("x"), "1").unwrap();
        assert!(prepare_output_dir(dir.path(), false).is_err());
        assert!(prepare_output_dir(dir.path(), true).is_ok());
    }
}
