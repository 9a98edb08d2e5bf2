//! Reconstruction-based anomaly detection: time steps the tokenizer
//! reconstructs worst are flagged.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::data::{revin_normalize, UnivariateBatch};
use crate::error::{Error, Result};
use crate::vqvae::VqVaeModel;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Threshold {
    /// One top-A% cut over the whole series.
    #[default]
    Global,
    /// A separate top-A% cut inside each scoring window.
    PerWindow,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectOptions {
    /// Score the series in consecutive windows of this length (must be a
    /// multiple of the compression factor). `None` scores it in one pass.
    pub window: Option<usize>,
    pub threshold: Threshold,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyResult {
    pub scores: Vec<f64>,
    pub flags: Vec<bool>,
    pub ratio: f64,
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(format!(
            "anomaly ratio {ratio} outside [0, 1)"
        )));
    }
    Ok(())
}

/// Flags the `round(ratio·n)` largest scores; equal scores favour the lower index.
pub fn top_fraction(scores: &[f64], ratio: f64) -> Result<Vec<bool>> {
    check_ratio(ratio)?;
    let k = (ratio * scores.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut flags = vec![false; scores.len()];
    for &i in &order[..k] {
        flags[i] = true;
    }
    Ok(flags)
}

/// Window start offsets covering `0..t`; the last window is aligned to the end.
fn window_starts(t: usize, w: usize) -> Vec<usize> {
    let mut starts: Vec<usize> = (0..t / w).map(|i| i * w).collect();
    if t % w != 0 {
        starts.push(t - w);
    }
    starts
}

/// Squared reconstruction error per step, averaged over the rows (sensors) of
/// `series` and measured in the model's input space.
fn segment_scores(model: &VqVaeModel, series: &Array2<f64>) -> Result<Vec<f64>> {
    let batch = UnivariateBatch::from_rows(series.clone());
    let input = if model.config.instance_norm {
        revin_normalize(&batch).0.series
    } else {
        batch.series
    };
    let rec = model.reconstruct(&input)?;
    let err = (&rec - &input).mapv(|v| v * v);
    Ok(err.mean_axis(ndarray::Axis(0)).expect("at least one row").to_vec())
}

/// Per-step anomaly scores for one multivariate series `[S, T]`.
pub fn anomaly_scores(model: &VqVaeModel, series: &UnivariateBatch, window: Option<usize>) -> Result<Vec<f64>> {
    let t = series.len();
    if series.rows() == 0 {
        return Err(Error::Shape("no sensors to score".into()));
    }
    let Some(w) = window else {
        model.check_length(t)?;
        return segment_scores(model, &series.series);
    };
    model.check_length(w)?;
    if w > t {
        return Err(Error::WindowTooLong { window: w, range: t });
    }
    let mut scores = vec![f64::NAN; t];
    for start in window_starts(t, w) {
        let seg = segment_scores(model, &series.series.slice(s![.., start..start + w]).to_owned())?;
        for (k, v) in seg.into_iter().enumerate() {
            // where the end-aligned window overlaps, the earlier window's score is kept
            if scores[start + k].is_nan() {
                scores[start + k] = v;
            }
        }
    }
    Ok(scores)
}

pub fn detect_anomalies(
    model: &VqVaeModel,
    series: &UnivariateBatch,
    ratio: f64,
    options: DetectOptions,
) -> Result<AnomalyResult> {
    check_ratio(ratio)?;
    let scores = anomaly_scores(model, series, options.window)?;
    let flags = match (options.threshold, options.window) {
        (Threshold::PerWindow, Some(w)) => {
            let t = scores.len();
            let mut flags = vec![false; t];
            let mut covered = 0;
            for start in window_starts(t, w) {
                // only the part of the window not already thresholded
                let lo = covered.max(start);
                let part = top_fraction(&scores[lo..start + w], ratio)?;
                flags[lo..start + w].copy_from_slice(&part);
                covered = start + w;
            }
            flags
        }
        _ => top_fraction(&scores, ratio)?,
    };
    Ok(AnomalyResult { scores, flags, ratio })
}
