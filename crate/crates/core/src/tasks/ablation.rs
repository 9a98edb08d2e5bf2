//! Ablations: codebook size sweeps and tokens-vs-patches forecasting.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::UnivariateBatch;
use crate::error::{Error, Result};
use crate::metrics::{avg_wins, Direction, ResultTable};
use crate::tasks::forecast::{
    evaluate_forecaster, train_forecaster, ForecastMetrics, Forecaster, ForecasterConfig, Representation,
};
use crate::vqvae::{reconstruction_mse, train, VqVaeConfig, VqVaeModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodebookPoint {
    pub codebook_size: usize,
    pub heldout_mse: f64,
    pub final_train_rec: f64,
}

/// Trains one tokenizer per codebook size, identical in everything else, and
/// reports held-out reconstruction MSE.
pub fn codebook_size_sweep(
    base: &VqVaeConfig,
    sizes: &[usize],
    train_rows: &UnivariateBatch,
    heldout: &UnivariateBatch,
) -> Result<Vec<CodebookPoint>> {
    sizes
        .iter()
        .map(|&k| {
            let mut model = VqVaeModel::new(VqVaeConfig {
                codebook_size: k,
                ..base.clone()
            })?;
            let hist = train(&mut model, train_rows)?;
            Ok(CodebookPoint {
                codebook_size: k,
                heldout_mse: reconstruction_mse(&model, heldout)?,
                final_train_rec: hist.last().map_or(f64::NAN, |r| r.rec),
            })
        })
        .collect()
}

pub fn codebook_table(points: &[CodebookPoint]) -> Result<ResultTable> {
    let mut t = ResultTable::new();
    for p in points {
        t.push(&format!("K={}", p.codebook_size), "reconstruction", "mse", p.heldout_mse, Direction::Lower)?;
    }
    Ok(t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentationRun {
    pub representation: Representation,
    /// Hash of the shared downstream parameters at initialization.
    pub downstream_init: String,
    pub metrics: ForecastMetrics,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentationAblation {
    pub runs: Vec<RepresentationRun>,
    pub table: ResultTable,
    /// Fraction of cells won, ties counted for every tied method.
    pub avg_wins: std::collections::BTreeMap<String, f64>,
}

/// Lookback/future windows for training and testing.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastSplit {
    pub train_x: Array2<f64>,
    pub train_y: Array2<f64>,
    pub test_x: Array2<f64>,
    pub test_y: Array2<f64>,
}

/// Trains and scores the same downstream forecaster once on tokenizer latents
/// and once on raw patches. Everything but the representation (seed, data,
/// architecture, schedule) is shared; the shared part of the initialization
/// is hashed and must agree.
pub fn representation_ablation(
    tokenizer: &VqVaeModel,
    config: &ForecasterConfig,
    data: &ForecastSplit,
) -> Result<RepresentationAblation> {
    let mut runs = Vec::new();
    let mut table = ResultTable::new();
    let setting = format!("{}->{}", config.lookback, config.horizon);
    for repr in [Representation::Tokens, Representation::Patches] {
        let cfg = ForecasterConfig {
            representation: repr,
            ..config.clone()
        };
        let mut fc = Forecaster::for_tokenizer(cfg, &tokenizer.config)?;
        let downstream_init = fc.downstream_fingerprint();
        let hist = train_forecaster(&mut fc, tokenizer, &data.train_x, &data.train_y)?;
        let metrics = evaluate_forecaster(&fc, tokenizer, &data.test_x, &data.test_y)?;
        table.push(repr.name(), &setting, "mse", metrics.mse, Direction::Lower)?;
        table.push(repr.name(), &setting, "mae", metrics.mae, Direction::Lower)?;
        runs.push(RepresentationRun {
            representation: repr,
            downstream_init,
            metrics,
            final_loss: hist.last().copied().unwrap_or(f64::NAN),
        });
    }
    if runs[0].downstream_init != runs[1].downstream_init {
        return Err(Error::InvalidArgument(
            "downstream initialization differs between representations".into(),
        ));
    }
    let avg_wins = avg_wins(&table, true)?;
    Ok(RepresentationAblation { runs, table, avg_wins })
}
