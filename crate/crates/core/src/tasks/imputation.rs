//! Masked imputation: the tokenizer reconstructs the whole series from a
//! zero-filled input, and the reconstruction is read off at missing positions.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{apply_mask, sample_mask, MaskSpec, UnivariateBatch, STD_EPS};
use crate::error::{Error, Result};
use crate::metrics::masked_errors;
use crate::vqvae::{seeded, train_with, LossRecord, VqVaeConfig, VqVaeModel, STREAM_MASK};

/// Canonical masking fractions.
pub const MASK_RATIOS: [f64; 4] = [0.125, 0.25, 0.375, 0.5];

#[derive(Clone, Debug, PartialEq)]
pub struct ImputationResult {
    /// Input at observed positions, reconstruction at missing ones.
    pub filled: Array2<f64>,
    pub recon: Array2<f64>,
    pub mask: MaskSpec,
}

/// Mean and floored population std over the observed entries of each row.
fn observed_stats(series: &Array2<f64>, mask: &Array2<bool>) -> Vec<(f64, f64)> {
    series
        .rows()
        .into_iter()
        .zip(mask.rows())
        .map(|(row, m)| {
            let vals: Vec<f64> = row.iter().zip(m).filter(|(_, &o)| o).map(|(v, _)| *v).collect();
            if vals.is_empty() {
                return (0.0, 1.0);
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt().max(STD_EPS))
        })
        .collect()
}

/// Missing entries are set to 0 in the model's input space, encoded,
/// quantized and decoded. With instance normalization enabled, the per-row
/// statistics come from observed entries only, so missing values never leak
/// into the normalization.
pub fn impute(model: &VqVaeModel, batch: &UnivariateBatch, mask: &MaskSpec) -> Result<ImputationResult> {
    model.check_length(batch.len())?;
    if batch.series.dim() != mask.mask.dim() {
        return Err(Error::Shape(format!(
            "mask {:?} vs batch {:?}",
            mask.mask.dim(),
            batch.series.dim()
        )));
    }
    let stats = if model.config.instance_norm {
        observed_stats(&batch.series, &mask.mask)
    } else {
        vec![(0.0, 1.0); batch.rows()]
    };
    let mut norm = batch.series.clone();
    for (mut row, &(m, s)) in norm.rows_mut().into_iter().zip(&stats) {
        row.mapv_inplace(|v| (v - m) / s);
    }
    let masked = apply_mask(&batch.with_series(norm), mask, 0.0)?;
    let mut recon = model.reconstruct(&masked.series)?;
    for (mut row, &(m, s)) in recon.rows_mut().into_iter().zip(&stats) {
        row.mapv_inplace(|v| v * s + m);
    }
    let mut filled = batch.series.clone();
    ndarray::Zip::from(&mut filled)
        .and(&recon)
        .and(&mask.mask)
        .for_each(|f, &r, &observed| {
            if !observed {
                *f = r;
            }
        });
    Ok(ImputationResult {
        filled,
        recon,
        mask: mask.clone(),
    })
}

/// Trains like [`crate::vqvae::train`], except each sampled batch is masked at a
/// ratio drawn uniformly from `mask_ratios` before encoding; the loss still
/// scores the reconstruction against the unmasked rows. Mask draws use their
/// own random stream, so `mask_ratios = [0.0]` reproduces plain training.
pub fn train_imputing_vqvae(
    model: &mut VqVaeModel,
    data: &UnivariateBatch,
    mask_ratios: &[f64],
) -> Result<Vec<LossRecord>> {
    if mask_ratios.is_empty() {
        return Err(Error::InvalidArgument("mask_ratios is empty".into()));
    }
    if let Some(r) = mask_ratios.iter().find(|r| !(0.0..1.0).contains(*r)) {
        return Err(Error::InvalidArgument(format!("mask ratio {r} outside [0, 1)")));
    }
    let mut rng = seeded(model.config.seed, STREAM_MASK);
    let ratios = mask_ratios.to_vec();
    train_with(model, data, move |target| {
        let ratio = ratios[rng.random_range(0..ratios.len())];
        let spec = sample_mask(target.nrows(), target.ncols(), ratio, rng.random())?;
        Ok(apply_mask(&UnivariateBatch::from_rows(target.clone()), &spec, 0.0)?.series)
    })
}

/// Convenience constructor + masked training.
pub fn fit_imputer(
    config: VqVaeConfig,
    data: &UnivariateBatch,
    mask_ratios: &[f64],
) -> Result<(VqVaeModel, Vec<LossRecord>)> {
    let mut model = VqVaeModel::new(config)?;
    let history = train_imputing_vqvae(&mut model, data, mask_ratios)?;
    Ok((model, history))
}

/// Each missing entry gets the mean of its row's observed entries.
pub fn mean_fill(batch: &UnivariateBatch, mask: &MaskSpec) -> Result<Array2<f64>> {
    if batch.series.dim() != mask.mask.dim() {
        return Err(Error::Shape(format!(
            "mask {:?} vs batch {:?}",
            mask.mask.dim(),
            batch.series.dim()
        )));
    }
    let stats = observed_stats(&batch.series, &mask.mask);
    let mut out = batch.series.clone();
    for ((mut row, m), &(mean, _)) in out.rows_mut().into_iter().zip(mask.mask.rows()).zip(&stats) {
        row.iter_mut().zip(m).filter(|(_, &o)| !o).for_each(|(v, _)| *v = mean);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputationMetrics {
    pub ratio: f64,
    /// Over missing positions only.
    pub mse: f64,
    pub mae: f64,
    /// Over every position of the filled series.
    pub mse_all: f64,
    pub mae_all: f64,
    pub baseline_mse: f64,
    pub baseline_mae: f64,
}

/// Scores [`impute`] and the mean-fill baseline at each ratio. Masks for all
/// ratios are drawn from one seed, so a larger ratio hides a superset of the
/// positions hidden by a smaller one.
pub fn evaluate_imputation(
    model: &VqVaeModel,
    batch: &UnivariateBatch,
    ratios: &[f64],
    seed: u64,
) -> Result<Vec<ImputationMetrics>> {
    let everywhere = Array2::from_elem(batch.series.dim(), true);
    ratios
        .iter()
        .map(|&ratio| {
            let mask = sample_mask(batch.rows(), batch.len(), ratio, seed)?;
            let missing = mask.mask.mapv(|o| !o);
            let res = impute(model, batch, &mask)?;
            let (mse, mae) = masked_errors(&res.filled, &batch.series, &missing)?;
            let (mse_all, mae_all) = masked_errors(&res.filled, &batch.series, &everywhere)?;
            let base = mean_fill(batch, &mask)?;
            let (baseline_mse, baseline_mae) = masked_errors(&base, &batch.series, &missing)?;
            Ok(ImputationMetrics {
                ratio,
                mse,
                mae,
                mse_all,
                mae_all,
                baseline_mse,
                baseline_mae,
            })
        })
        .collect()
}
