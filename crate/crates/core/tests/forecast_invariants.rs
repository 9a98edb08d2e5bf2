mod common;

use common::*;
use ndarray::{Array2, Array3, Axis};
use tstok::data::{flatten_sensors, TimeSeriesDataset};
use tstok::metrics::mse;
use tstok::tasks::forecast::{Architecture, Forecaster, ForecasterConfig, Representation};
use tstok::vqvae::VqVaeModel;

fn config(architecture: Architecture, representation: Representation) -> ForecasterConfig {
    ForecasterConfig {
        model_dim: 8,
        hidden_dim: 16,
        num_heads: 2,
        num_layers: 2,
        lookback: 32,
        horizon: 8,
        mlp_hidden: 16,
        architecture,
        representation,
        ..ForecasterConfig::default()
    }
}

fn multisensor(s: usize, t: usize) -> TimeSeriesDataset {
    let values = Array3::from_shape_fn((2, s, t), |(e, si, k)| {
        let k = k as f64;
        (1.0 + si as f64) * (0.2 * k + e as f64 + si as f64).sin() + 0.1 * si as f64 * k / 10.0
    });
    TimeSeriesDataset::from_values(values).unwrap()
}

#[test]
fn permuting_sensors_permutes_forecasts() {
    let tok = VqVaeModel::new(tiny_tokenizer(1)).unwrap();
    let ds = multisensor(4, 32);
    let perm = [2usize, 0, 3, 1];
    let permuted = TimeSeriesDataset::from_values(ds.values.select(Axis(1), &perm)).unwrap();
    for arch in [Architecture::Transformer, Architecture::Mlp] {
        for repr in [Representation::Tokens, Representation::Patches] {
            let fc = Forecaster::for_tokenizer(config(arch, repr), &tok.config).unwrap();
            let a = fc.forward(&tok, &flatten_sensors(&ds).series).unwrap().y;
            let b = fc.forward(&tok, &flatten_sensors(&permuted).series).unwrap().y;
            // rows are example-major, sensor-minor
            for e in 0..2 {
                for (new_s, &old_s) in perm.iter().enumerate() {
                    let ra = a.row(e * 4 + old_s);
                    let rb = b.row(e * 4 + new_s);
                    let err = (&ra - &rb).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    assert!(err <= 1e-12, "{arch:?}/{repr:?}: {err:e}");
                }
            }
        }
    }
}

#[test]
fn unnormalization_identity_and_metric_consistency() {
    let tok = VqVaeModel::new(tiny_tokenizer(2)).unwrap();
    let rows = sine_rows(5, 40, 0.7);
    let x: Array2<f64> = rows.slice(ndarray::s![.., ..32]).to_owned();
    let y: Array2<f64> = rows.slice(ndarray::s![.., 32..]).mapv(|v| 2.0 * v - 0.5);
    let fc = Forecaster::for_tokenizer(config(Architecture::Transformer, Representation::Tokens), &tok.config).unwrap();
    let out = fc.forward(&tok, &x).unwrap();
    assert_eq!(out.y.dim(), (5, 8));
    assert!(out.sigma.iter().all(|&s| s > 0.0));
    let rebuilt = Array2::from_shape_fn(out.y_norm.dim(), |(i, j)| out.sigma[i] * out.y_norm[[i, j]] + out.mu[i]);
    assert_eq!(out.y, rebuilt);
    assert_eq!(mse(&out.y, &y).unwrap(), mse(&rebuilt, &y).unwrap());
}
