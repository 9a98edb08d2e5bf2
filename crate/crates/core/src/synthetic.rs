//! Seeded synthetic corpora: sinusoid mixtures, mixtures with a linear trend,
//! and mixtures with injected single-step spikes plus their labels.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{row_stats, TimeSeriesDataset};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    MultiSine,
    SinePlusTrend,
    Spiked,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub sensors: usize,
    pub length: usize,
    pub examples: usize,
    pub noise_std: f64,
    /// Fraction of time steps spiked per example (spiked only), in `[0, 0.1]`.
    pub spike_ratio: f64,
    /// Spike height in multiples of the clean row's standard deviation.
    pub spike_amplitude: f64,
    /// Spikes are placed in `[spike_start, length)`, `round(spike_ratio · (length − spike_start))`
    /// per example; lets a held-out tail carry the whole anomaly budget.
    pub spike_start: usize,
    /// Each row sums between 1 and `max_components` sinusoids.
    pub max_components: usize,
    /// Shortest and longest period, in steps.
    pub period_range: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            kind: SyntheticKind::MultiSine,
            sensors: 4,
            length: 512,
            examples: 8,
            noise_std: 0.0,
            spike_ratio: 0.02,
            spike_amplitude: 5.0,
            spike_start: 0,
            max_components: 3,
            period_range: (8.0, 64.0),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synthetic spec: {m}")));
        if self.sensors == 0 || self.length == 0 || self.examples == 0 {
            return bad("dimensions must be positive");
        }
        if !(0.0..=0.1).contains(&self.spike_ratio) {
            return bad("spike_ratio must lie in [0, 0.1]");
        }
        if self.max_components == 0 {
            return bad("max_components must be at least 1");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be finite and nonnegative");
        }
        if self.spike_start >= self.length {
            return bad("spike_start must lie inside the series");
        }
        if !self.spike_amplitude.is_finite() {
            return bad("spike_amplitude must be finite");
        }
        let (lo, hi) = self.period_range;
        if !(lo >= 2.0 && hi >= lo && hi.is_finite()) {
            return bad("period_range must satisfy 2 <= lo <= hi");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub dataset: TimeSeriesDataset,
    /// Per-example anomaly labels `[E, T]`; present for the spiked kind.
    /// Spikes hit every sensor of an example at the same steps, on top of the
    /// series the multi-sine kind produces for the same seed.
    pub labels: Option<Array2<bool>>,
}

fn sine_row(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, out: &mut [f64]) {
    let comps = rng.random_range(1..=spec.max_components);
    let (lo, hi) = spec.period_range;
    for _ in 0..comps {
        let period = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let amp = rng.random_range(0.5..1.5);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let w = std::f64::consts::TAU / period;
        for (t, v) in out.iter_mut().enumerate() {
            *v += amp * (w * t as f64 + phase).sin();
        }
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let (e, s, t) = (spec.examples, spec.sensors, spec.length);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // spikes draw from their own stream so the underlying clean series do not
    // depend on the kind
    let mut spike_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    spike_rng.set_stream(1);
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut values = Array3::<f64>::zeros((e, s, t));
    let mut labels = (spec.kind == SyntheticKind::Spiked).then(|| Array2::from_elem((e, t), false));
    let span = t - spec.spike_start;
    let n_spikes = (spec.spike_ratio * span as f64).round() as usize;

    for ei in 0..e {
        for si in 0..s {
            let mut row = vec![0.0; t];
            sine_row(&mut rng, spec, &mut row);
            if spec.kind == SyntheticKind::SinePlusTrend {
                let slope = rng.random_range(-2.0..2.0) / t as f64;
                row.iter_mut().enumerate().for_each(|(k, v)| *v += slope * k as f64);
            }
            if spec.noise_std > 0.0 {
                row.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
            }
            values
                .slice_mut(ndarray::s![ei, si, ..])
                .assign(&ndarray::Array1::from(row));
        }
        if let Some(labels) = labels.as_mut() {
            let positions: Vec<usize> = rand::seq::index::sample(&mut spike_rng, span, n_spikes)
                .iter()
                .map(|p| p + spec.spike_start)
                .collect();
            for si in 0..s {
                let (_, std) = row_stats(values.slice(ndarray::s![ei, si, ..]));
                for &pos in &positions {
                    let sign = if spike_rng.random::<bool>() { 1.0 } else { -1.0 };
                    values[[ei, si, pos]] += sign * spec.spike_amplitude * std;
                }
            }
            for &pos in &positions {
                labels[[ei, pos]] = true;
            }
        }
    }

    let dataset = TimeSeriesDataset::new(
        values,
        (0..s).map(|i| format!("s{i}")).collect(),
        (0..e).map(|i| format!("ex{i}")).collect(),
    )?;
    Ok(SyntheticData { dataset, labels })
}
