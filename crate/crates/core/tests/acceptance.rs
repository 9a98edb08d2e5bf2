//! Acceptance suite: one PASS/FAIL line per criterion, each with a pinned
//! tolerance and wall-clock budget. Run alone with
//! `cargo test -p tstok --test acceptance` (optionally followed by `C4` etc.
//! to select criteria).

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tstok::checkpoint::Checkpoint;
use tstok::data::{flatten_sensors, TimeSeriesDataset};
use tstok::harness::{self, DataSource, ExperimentConfig, RunReport, Task};
use tstok::metrics::{avg_wins, permutation_test, point_adjust, precision_recall_f1, BinaryLabels, Direction, PermutationTest, ResultTable};
use tstok::synthetic::{SyntheticKind, SyntheticSpec};
use tstok::tasks::ablation::RepresentationAblation;
use tstok::tasks::forecast::{Architecture, Forecaster, ForecasterConfig, Representation};
use tstok::tasks::imputation::{evaluate_imputation, ImputationMetrics, MASK_RATIOS};
use tstok::vqvae::{nearest_codewords, reconstruction_mse, train, VqVaeConfig, VqVaeModel};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

// ---- pinned tolerances -----------------------------------------------------

/// C4: MSE(K=512) may exceed MSE(K=256) by at most this fraction.
const C4_K512_SLACK: f64 = 0.10;
/// C6: minimum point-adjusted F1 averaged over seeds.
const C6_MIN_F1: f64 = 0.9;
/// C9: Monte Carlo vs exact permutation p-value.
const C9_MC_TOL: f64 = 0.02;
/// C7 invariants: sensor-permutation mismatch allowed.
const EQUIVARIANCE_TOL: f64 = 1e-12;

// ---- shared configurations -------------------------------------------------

fn tokenizer(codebook_size: usize, iterations: usize) -> VqVaeConfig {
    VqVaeConfig {
        codebook_size,
        code_dim: 16,
        compression_factor: 4,
        num_residual_layers: 1,
        residual_hidden: 16,
        block_hidden: 32,
        iterations,
        batch_size: 64,
        learning_rate: 1e-3,
        ..VqVaeConfig::default()
    }
}

fn forecaster(iterations: usize) -> ForecasterConfig {
    ForecasterConfig {
        model_dim: 32,
        hidden_dim: 64,
        num_heads: 4,
        num_layers: 2,
        dropout: 0.0,
        lookback: 96,
        horizon: 96,
        learning_rate: 1e-3,
        iterations,
        batch_size: 32,
        mlp_hidden: 64,
        architecture: Architecture::Transformer,
        ..ForecasterConfig::default()
    }
}

fn corpus(kind: SyntheticKind, sensors: usize, length: usize, examples: usize, seed: u64) -> DataSource {
    DataSource::Synthetic(SyntheticSpec {
        kind,
        sensors,
        length,
        examples,
        noise_std: 0.0,
        spike_ratio: 0.02,
        spike_amplitude: 5.0,
        seed,
        ..SyntheticSpec::default()
    })
}

fn run_in(dir: &Path, name: &str, mut config: ExperimentConfig, threads: usize) -> Result<RunReport, String> {
    config.output_dir = dir.join(name);
    harness::run(&config, None, threads, false).map_err(|e| format!("{name}: {e}"))
}

fn cell(table: &ResultTable, method: &str, setting: &str, metric: &str) -> Result<f64, String> {
    table
        .get(method, setting, metric)
        .map(|r| r.value)
        .ok_or_else(|| format!("missing cell {method}/{setting}/{metric}"))
}

// ---- criteria ----------------------------------------------------------------

fn c1_gradients(_: &Path) -> Outcome {
    let mut tok_worst = (0.0, String::new());
    for seed in 0..3 {
        let r = tokenizer_gradient_check(seed, Terms::TOTAL);
        if r.0 >= tok_worst.0 {
            tok_worst = r;
        }
    }
    ensure!(tok_worst.0 <= FD_REL_TOL, "tokenizer: relative error {:e} at {}", tok_worst.0, tok_worst.1);

    let tok = VqVaeModel::new(tiny_tokenizer(10)).unwrap();
    let rows = sine_rows(3, 24, 0.3);
    let x: Array2<f64> = rows.slice(ndarray::s![.., ..16]).to_owned();
    let y: Array2<f64> = rows.slice(ndarray::s![.., 16..]).mapv(|v| 3.0 * v + 1.0);
    let mut fc_worst = (0.0, String::new());
    for architecture in [Architecture::Transformer, Architecture::Mlp] {
        for representation in [Representation::Tokens, Representation::Patches] {
            let cfg = ForecasterConfig {
                model_dim: 8,
                hidden_dim: 8,
                num_heads: 2,
                num_layers: 1,
                dropout: 0.0,
                lookback: 16,
                horizon: 8,
                mlp_hidden: 8,
                architecture,
                representation,
                ..ForecasterConfig::default()
            };
            let fc = Forecaster::for_tokenizer(cfg, &tok.config).unwrap();
            let r = forecaster_gradient_check(&fc, &tok, &x, &y);
            if r.0 >= fc_worst.0 {
                fc_worst = (r.0, format!("{architecture:?}/{representation:?} {}", r.1));
            }
        }
    }
    ensure!(fc_worst.0 <= FD_REL_TOL, "forecaster: relative error {:e} at {}", fc_worst.0, fc_worst.1);
    Ok(format!(
        "worst relative error: tokenizer {:.1e}, forecaster {:.1e} (tol {FD_REL_TOL:.0e}, h {FD_STEP:.0e})",
        tok_worst.0, fc_worst.0
    ))
}

fn c2_quantizer(_: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut ties = 0;
    for i in 0..1000 {
        let (cb, z) = random_instance(&mut rng);
        let got = nearest_codewords(cb.view(), z.view());
        let want = brute_force_nearest(&cb, &z);
        ensure!(got == want, "instance {i}: {got:?} vs exhaustive {want:?}");
        for row in z.rows() {
            let d: Vec<f64> = cb
                .rows()
                .into_iter()
                .map(|c| row.iter().zip(c.iter()).map(|(a, b)| (a - b) * (a - b)).sum())
                .collect();
            let m = d.iter().cloned().fold(f64::INFINITY, f64::min);
            if d.iter().filter(|&&v| v == m).count() > 1 {
                ties += 1;
            }
        }
    }
    let constructed: [(Array2<f64>, Array2<f64>, Vec<usize>); 3] = [
        (
            ndarray::array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [1.0, 0.0]],
            ndarray::array![[0.0, 0.0], [1.0, 0.0]],
            vec![0, 0],
        ),
        (ndarray::array![[5.0], [2.0], [2.0]], ndarray::array![[2.1], [1.9]], vec![1, 1]),
        (ndarray::array![[9.0], [0.0], [2.0]], ndarray::array![[1.0]], vec![1]),
    ];
    for (cb, z, want) in &constructed {
        ensure!(&nearest_codewords(cb.view(), z.view()) == want, "constructed tie {z:?}");
        ensure!(&brute_force_nearest(cb, z) == want, "oracle disagrees on constructed tie {z:?}");
    }
    ensure!(ties >= 50, "only {ties} tied latents exercised");
    Ok(format!("1000 random instances + 3 constructed ties identical ({ties} tied latents)"))
}

fn c3_stop_gradient(_: &Path) -> Outcome {
    let (mut enc_checked, mut cb_checked, mut boundary) = (0, 0, 0);
    for seed in 0..3 {
        let mut model = VqVaeModel::new(tiny_tokenizer(seed)).unwrap();
        let x = random_rows(seed + 50, 3, 16);
        codebook_near_latents(&mut model, &x, seed);
        let frozen = model.stop_grad_values(&x).unwrap();

        let vq = tokenizer_analytic(&model, &x, &frozen, Terms::VQ);
        let cmt = tokenizer_analytic(&model, &x, &frozen, Terms::CMT);
        let mut cb_grad = 0.0f64;
        let mut enc_grad = 0.0f64;
        for ((p, gv), gc) in model.params.iter().zip(&vq).zip(&cmt) {
            let max = |g: &ndarray::ArrayD<f64>| g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if p.name.starts_with("encoder.") {
                ensure!(max(gv) == 0.0, "dL_vq/d{} = {:e}", p.name, max(gv));
                enc_grad = enc_grad.max(max(gc));
            }
            if p.name == "codebook" {
                ensure!(max(gc) == 0.0, "dL_cmt/dcodebook = {:e}", max(gc));
                cb_grad = cb_grad.max(max(gv));
            }
        }
        ensure!(enc_grad > 0.0 && cb_grad > 0.0, "the live gradient paths vanished");

        // perturbation through the stop-gradient path
        let h = FD_STEP;
        let base_vq = surrogate_loss(&model, &x, &frozen, Terms::VQ);
        let base_cmt = surrogate_loss(&model, &x, &frozen, Terms::CMT);
        for pi in 0..model.params.len() {
            let name = model.params.iter().nth(pi).unwrap().name.clone();
            let is_enc = name.starts_with("encoder.");
            if !is_enc && name != "codebook" {
                continue;
            }
            let len = model.params.iter().nth(pi).unwrap().value.len();
            for k in 0..len {
                let mut m = model.clone();
                m.params.iter_mut().nth(pi).unwrap().value.as_slice_mut().unwrap()[k] += h;
                if m.stop_grad_values(&x).unwrap().indices != frozen.indices {
                    boundary += 1;
                    continue;
                }
                if is_enc {
                    let now = surrogate_loss(&m, &x, &frozen, Terms::VQ);
                    ensure!(now == base_vq, "vq moved under {name}[{k}]: {:e}", (now - base_vq) / h);
                    enc_checked += 1;
                } else {
                    let now = surrogate_loss(&m, &x, &frozen, Terms::CMT);
                    ensure!(now == base_cmt, "cmt moved under codebook[{k}]: {:e}", (now - base_cmt) / h);
                    cb_checked += 1;
                }
            }
        }
    }
    ensure!(enc_checked > 0 && cb_checked > 0, "no perturbation stayed inside its cell");
    Ok(format!(
        "analytic and perturbation gradients zero ({enc_checked} encoder, {cb_checked} codebook scalars; {boundary} boundary crossings skipped)"
    ))
}

fn c4_codebook_trend(dir: &Path) -> Outcome {
    let config = ExperimentConfig {
        task: Task::AblateCodebook,
        data: corpus(SyntheticKind::MultiSine, 8, 512, 64, 0),
        window_length: 64,
        stride: 16,
        revin: Some(true),
        tokenizer: tokenizer(256, 2000),
        codebook_sizes: vec![32, 256, 512],
        seeds: vec![0],
        ..ExperimentConfig::default()
    };
    let report = run_in(dir, "c4", config, 1)?;
    let t = &report.mean_table;
    let m = |k: usize| cell(t, &format!("K={k}"), "reconstruction", "mse");
    let (m32, m256, m512) = (m(32)?, m(256)?, m(512)?);
    let detail = format!("held-out MSE K=32 {m32:.5}, K=256 {m256:.5}, K=512 {m512:.5}");
    ensure!(m32 > m256, "{detail}: K=32 not worse than K=256");
    ensure!(m512 <= (1.0 + C4_K512_SLACK) * m256, "{detail}: K=512 above {:.0}% slack", 100.0 * C4_K512_SLACK);
    Ok(detail)
}

fn c5_imputation(dir: &Path) -> Outcome {
    let config = ExperimentConfig {
        task: Task::Impute,
        data: corpus(SyntheticKind::MultiSine, 8, 512, 16, 0),
        window_length: 64,
        stride: 16,
        tokenizer: tokenizer(256, 1500),
        mask_ratios: MASK_RATIOS.to_vec(),
        seeds: vec![0, 1, 2],
        ..ExperimentConfig::default()
    };
    let report = run_in(dir, "c5", config, 1)?;
    let t = &report.mean_table;
    let mut prev = f64::NEG_INFINITY;
    let mut parts = Vec::new();
    for r in MASK_RATIOS {
        let setting = format!("mask-{}%", r * 100.0);
        let ours = cell(t, "tstok", &setting, "mse")?;
        let base = cell(t, "mean-fill", &setting, "mse")?;
        parts.push(format!("{}%: {ours:.4} vs {base:.4}", r * 100.0));
        ensure!(ours < base, "{setting}: {ours} not below mean-fill {base}");
        ensure!(ours >= prev, "{setting}: MSE {ours} below the previous ratio's {prev}");
        prev = ours;
    }
    Ok(format!("masked MSE vs mean-fill (3-seed mean) {}", parts.join(", ")))
}

fn c6_anomaly(dir: &Path) -> Outcome {
    let mut f1s = Vec::new();
    for seed in 0..3u64 {
        let config = ExperimentConfig {
            task: Task::Anomaly,
            data: corpus(SyntheticKind::Spiked, 8, 512, 16, seed),
            window_length: 64,
            stride: 16,
            tokenizer: tokenizer(256, 1500),
            anomaly_ratio: 0.02,
            seeds: vec![seed],
            ..ExperimentConfig::default()
        };
        let report = run_in(dir, &format!("c6-{seed}"), config, 1)?;
        f1s.push(cell(&report.mean_table, "tstok", "A=2%", "f1")?);
    }
    let mean = f1s.iter().sum::<f64>() / f1s.len() as f64;
    let detail = format!("adjusted F1 per seed {f1s:.3?}, mean {mean:.3} (min {C6_MIN_F1})");
    ensure!(mean >= C6_MIN_F1, "{detail}");
    Ok(detail)
}

fn c7_forecasting(dir: &Path) -> Outcome {
    let config = ExperimentConfig {
        task: Task::Forecast,
        data: corpus(SyntheticKind::MultiSine, 4, 2000, 8, 0),
        window_length: 96,
        stride: 16,
        tokenizer: tokenizer(256, 800),
        forecaster: forecaster(400),
        horizons: vec![96],
        seeds: vec![0, 1, 2],
        ..ExperimentConfig::default()
    };
    let report = run_in(dir, "c7", config.clone(), 1)?;
    let mut parts = Vec::new();
    for s in &report.seeds {
        let ours = cell(&s.table, "tstok", "96->96", "mse")?;
        let naive = cell(&s.table, "naive", "96->96", "mse")?;
        parts.push(format!("seed {}: {ours:.4} vs {naive:.4}", s.seed));
        ensure!(ours < naive, "seed {}: MSE {ours} not below naive {naive}", s.seed);
    }

    // invariants on a trained forecaster
    let ck = Checkpoint::load(dir.join("c7/seed-0/forecaster-96.json")).map_err(|e| e.to_string())?;
    let tok = ck.tokenizer().map_err(|e| e.to_string())?;
    let fc = ck.forecaster().map_err(|e| e.to_string())?.ok_or("no forecaster section")?;
    let prep = harness::prepare_data(&config).map_err(|e| e.to_string())?;
    let start = prep.test.0;
    let window = prep.data.values.slice(ndarray::s![..2, .., start..start + 96]).to_owned();
    let ds = TimeSeriesDataset::from_values(window).map_err(|e| e.to_string())?;
    let s = ds.num_sensors();
    let out = fc.forward(&tok, &flatten_sensors(&ds).series).map_err(|e| e.to_string())?;
    ensure!(out.y.dim() == (2 * s, 96), "forecast shape {:?}", out.y.dim());
    let rebuilt = Array2::from_shape_fn(out.y.dim(), |(i, j)| out.sigma[i] * out.y_norm[[i, j]] + out.mu[i]);
    ensure!(out.y == rebuilt, "y differs from sigma * y_norm + mu");
    let perm: Vec<usize> = (0..s).rev().collect();
    let permuted = TimeSeriesDataset::from_values(ds.values.select(Axis(1), &perm)).map_err(|e| e.to_string())?;
    let out_p = fc.forward(&tok, &flatten_sensors(&permuted).series).map_err(|e| e.to_string())?;
    for e in 0..2 {
        for (new_s, &old_s) in perm.iter().enumerate() {
            let err = (&out.y.row(e * s + old_s) - &out_p.y.row(e * s + new_s))
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            ensure!(err <= EQUIVARIANCE_TOL, "sensor permutation changed forecasts by {err:e}");
        }
    }
    Ok(format!("MSE vs naive {}; shape, unnormalization and equivariance hold", parts.join(", ")))
}

fn c8_representation_parity(dir: &Path) -> Outcome {
    let config = ExperimentConfig {
        task: Task::AblateRepresentation,
        data: corpus(SyntheticKind::MultiSine, 4, 1024, 4, 0),
        window_length: 96,
        stride: 16,
        tokenizer: tokenizer(64, 300),
        forecaster: forecaster(150),
        horizons: vec![96],
        seeds: vec![0],
        ..ExperimentConfig::default()
    };
    let report = run_in(dir, "c8", config, 1)?;
    let per: std::collections::BTreeMap<String, RepresentationAblation> =
        serde_json::from_value(report.seeds[0].details.clone()).map_err(|e| e.to_string())?;
    let abl = per.get("96").ok_or("no 96-step result")?;
    ensure!(abl.runs.len() == 2, "{} runs", abl.runs.len());
    let reprs: Vec<_> = abl.runs.iter().map(|r| r.representation).collect();
    ensure!(reprs == [Representation::Tokens, Representation::Patches], "ran {reprs:?}");
    ensure!(
        abl.runs[0].downstream_init == abl.runs[1].downstream_init,
        "downstream init hashes differ"
    );
    for r in &abl.runs {
        ensure!(r.metrics.mse.is_finite() && r.final_loss.is_finite(), "{:?} did not complete", r.representation);
    }
    let wins = &abl.avg_wins;
    ensure!(wins.len() == 2, "AvgWins has {} methods", wins.len());
    let table = std::fs::read_to_string(dir.join("c8/table.csv")).map_err(|e| e.to_string())?;
    ensure!(table.contains("tokens,96->96,mse") && table.contains("patches,96->96,mse"), "table lacks a pipeline");
    Ok(format!(
        "both pipelines complete, init hash {}, AvgWins tokens {:.0}% / patches {:.0}%",
        &abl.runs[0].downstream_init[..12],
        100.0 * wins["tokens"],
        100.0 * wins["patches"]
    ))
}

/// (prediction, truth, point-adjusted prediction, adjusted TP, FP, FN)
const LABEL_CASES: [(&str, &str, &str, usize, usize, usize); 50] = [
    ("", "", "", 0, 0, 0),
    ("0", "0", "0", 0, 0, 0),
    ("1", "0", "1", 0, 1, 0),
    ("0", "1", "0", 0, 0, 1),
    ("1", "1", "1", 1, 0, 0),
    ("0000", "0000", "0000", 0, 0, 0),
    ("1111", "0000", "1111", 0, 4, 0),
    ("0000", "1111", "0000", 0, 0, 4),
    ("1111", "1111", "1111", 4, 0, 0),
    ("1000", "1111", "1111", 4, 0, 0),
    ("0001", "1111", "1111", 4, 0, 0),
    ("0100", "0110", "0110", 2, 0, 0),
    ("0010", "0110", "0110", 2, 0, 0),
    ("1001", "0110", "1001", 0, 2, 2),
    ("01000", "01110", "01110", 3, 0, 0),
    ("00100", "01110", "01110", 3, 0, 0),
    ("00010", "01110", "01110", 3, 0, 0),
    ("10001", "01110", "10001", 0, 2, 3),
    ("010000", "011011", "011000", 2, 0, 2),
    ("000001", "011011", "000011", 2, 0, 2),
    ("010001", "011011", "011011", 4, 0, 0),
    ("100100", "011011", "100100", 0, 2, 4),
    ("0100000010", "0111001110", "0111001110", 6, 0, 0),
    ("0000001000", "0111001110", "0000001110", 3, 0, 3),
    ("1000000001", "0111001110", "1000000001", 0, 2, 6),
    ("0010000100", "0111001110", "0111001110", 6, 0, 0),
    ("1111111111", "0111001110", "1111111111", 6, 4, 0),
    ("10101010", "11001100", "11101110", 4, 2, 0),
    ("01010101", "11001100", "11011101", 4, 2, 0),
    ("00100010", "11001100", "00100010", 0, 2, 4),
    ("10000001", "10000001", "10000001", 2, 0, 0),
    ("01000010", "10000001", "01000010", 0, 2, 2),
    ("11000011", "10000001", "11000011", 2, 2, 0),
    ("000111000", "111000111", "000111000", 0, 3, 6),
    ("100000001", "111000111", "111000111", 6, 0, 0),
    ("001000100", "111000111", "111000111", 6, 0, 0),
    ("0000010000", "0000111110", "0000111110", 5, 0, 0),
    ("0000000001", "0000111111", "0000111111", 6, 0, 0),
    ("1000000000", "1111100000", "1111100000", 5, 0, 0),
    ("0110", "1001", "0110", 0, 2, 2),
    ("1001", "1001", "1001", 2, 0, 0),
    ("0101", "1010", "0101", 0, 2, 2),
    ("001100", "000110", "001110", 2, 1, 0),
    ("000011", "000110", "000111", 2, 1, 0),
    ("110000", "000110", "110000", 0, 2, 2),
    ("1010101010", "0101010101", "1010101010", 0, 5, 5),
    ("0101010101", "0101010101", "0101010101", 5, 0, 0),
    ("0001000100010", "0011100111110", "0011100111110", 8, 0, 0),
    ("0000000000001", "0011100111111", "0000000111111", 6, 0, 3),
    ("1110000000000", "0011100111110", "1111100000000", 3, 2, 5),
];

fn labels(s: &str) -> BinaryLabels {
    BinaryLabels(s.chars().map(|c| c == '1').collect())
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn c9_metrics(_: &Path) -> Outcome {
    for (i, &(p, t, adj, tp, fp, fnn)) in LABEL_CASES.iter().enumerate() {
        let (pred, truth) = (labels(p), labels(t));
        let got = point_adjust(&pred, &truth).map_err(|e| e.to_string())?;
        ensure!(got == labels(adj), "case {i}: adjust({p}, {t}) gave {:?}", got.0);
        ensure!(point_adjust(&got, &truth).unwrap() == got, "case {i}: not idempotent");
        for (k, ch) in t.chars().enumerate() {
            if ch == '0' {
                ensure!(got.0[k] == pred.0[k], "case {i}: changed position {k} outside truth");
            }
        }
        let prf = precision_recall_f1(&pred, &truth, true).map_err(|e| e.to_string())?;
        let (pr, rc) = (ratio(tp, tp + fp), ratio(tp, tp + fnn));
        let f1 = if pr + rc == 0.0 { 0.0 } else { 2.0 * pr * rc / (pr + rc) };
        ensure!(
            (prf.precision - pr).abs() < 1e-12 && (prf.recall - rc).abs() < 1e-12 && (prf.f1 - f1).abs() < 1e-12,
            "case {i}: {prf:?} vs P {pr} R {rc} F1 {f1}"
        );
        let raw = precision_recall_f1(&pred, &truth, false).unwrap();
        ensure!(prf.recall >= raw.recall && prf.f1 >= raw.f1 - 1e-15, "case {i}: adjustment lowered recall/F1");
    }

    let exact = PermutationTest::default();
    // d = a - b = (-1, -1, -1): of the 8 sign patterns only the identity reaches mean -1
    let p = permutation_test(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0], exact).unwrap();
    ensure!(p == 1.0 / 8.0, "n=3 all-negative case: p = {p}");
    // d = (-2, -1, 0.5), sum -2.5; sign-flip sums: -2.5, -3.5, -0.5, -1.5, 1.5, 0.5, 3.5, 2.5
    let p = permutation_test(&[0.0, 1.0, 2.5], &[2.0, 2.0, 2.0], exact).unwrap();
    ensure!(p == 2.0 / 8.0, "n=3 mixed case: p = {p}");
    // unpaired {1,2} vs {3,4}: only 1 of the C(4,2)=6 splits has mean(a) that low
    let unpaired = PermutationTest { paired: false, ..exact };
    let p = permutation_test(&[1.0, 2.0], &[3.0, 4.0], unpaired).unwrap();
    ensure!((p - 1.0 / 6.0).abs() < 1e-15, "unpaired 2+2 case: p = {p}");

    let a = [0.31, 0.52, 0.12, 0.44, 0.29, 0.61, 0.35, 0.18, 0.47, 0.40];
    let b = [0.35, 0.50, 0.20, 0.41, 0.38, 0.66, 0.33, 0.27, 0.45, 0.49];
    let mc = |paired| PermutationTest { paired, exhaustive_limit: 0, seed: 11 };
    let (pe, pm) = (permutation_test(&a, &b, exact).unwrap(), permutation_test(&a, &b, mc(true)).unwrap());
    ensure!((pe - pm).abs() <= C9_MC_TOL, "paired n=10: exact {pe} vs MC {pm}");
    let (ue, um) = (
        permutation_test(&a, &b, unpaired).unwrap(),
        permutation_test(&a, &b, mc(false)).unwrap(),
    );
    ensure!((ue - um).abs() <= C9_MC_TOL, "unpaired n=10: exact {ue} vs MC {um}");

    // A wins c1 and f1, B wins c3, c2 is tied
    let mut t = ResultTable::new();
    for (m, s, metric, v, d) in [
        ("A", "c1", "mse", 0.1, Direction::Lower),
        ("B", "c1", "mse", 0.2, Direction::Lower),
        ("A", "c2", "mse", 0.3, Direction::Lower),
        ("B", "c2", "mse", 0.3, Direction::Lower),
        ("A", "c3", "mse", 0.5, Direction::Lower),
        ("B", "c3", "mse", 0.4, Direction::Lower),
        ("A", "c4", "f1", 0.9, Direction::Higher),
        ("B", "c4", "f1", 0.8, Direction::Higher),
    ] {
        t.push(m, s, metric, v, d).unwrap();
    }
    let ties = avg_wins(&t, true).unwrap();
    let strict = avg_wins(&t, false).unwrap();
    ensure!(ties["A"] == 0.75 && ties["B"] == 0.5, "with ties {ties:?}");
    ensure!(strict["A"] == 0.5 && strict["B"] == 0.25, "without ties {strict:?}");
    Ok(format!(
        "50 label pairs exact; p(n=3) = 1/8; exact vs MC at n=10: {pe:.4}/{pm:.4} paired, {ue:.4}/{um:.4} unpaired"
    ))
}

fn small_config(task: Task) -> ExperimentConfig {
    ExperimentConfig {
        task,
        data: corpus(SyntheticKind::MultiSine, 2, 384, 2, 5),
        window_length: 32,
        stride: 8,
        tokenizer: VqVaeConfig {
            codebook_size: 16,
            code_dim: 8,
            num_residual_layers: 1,
            residual_hidden: 8,
            block_hidden: 16,
            iterations: 60,
            batch_size: 16,
            ..VqVaeConfig::default()
        },
        forecaster: ForecasterConfig {
            model_dim: 8,
            hidden_dim: 16,
            num_heads: 2,
            num_layers: 1,
            lookback: 32,
            horizon: 16,
            iterations: 20,
            batch_size: 8,
            mlp_hidden: 16,
            ..ForecasterConfig::default()
        },
        horizons: vec![16],
        seeds: vec![0, 1],
        ..ExperimentConfig::default()
    }
}

fn c10_determinism(dir: &Path) -> Outcome {
    let files = ["seed-0/results.json", "seed-1/results.json", "seed-0/loss_history.csv", "summary.csv", "table.csv"];
    for task in [Task::Impute, Task::Forecast] {
        let name = format!("{task:?}").to_lowercase();
        let config = small_config(task);
        run_in(dir, &format!("c10-{name}-a"), config.clone(), 1)?;
        run_in(dir, &format!("c10-{name}-b"), config.clone(), 1)?;
        run_in(dir, &format!("c10-{name}-c"), config, 2)?;
        for f in files {
            let read = |run: &str| std::fs::read(dir.join(format!("c10-{name}-{run}")).join(f)).unwrap();
            ensure!(read("a") == read("b"), "{name}: {f} differs between identical runs");
            ensure!(read("a") == read("c"), "{name}: {f} depends on the thread count");
        }
    }

    // in-memory vs save/load for a tokenizer
    let config = small_config(Task::Impute);
    let prep = harness::prepare_data(&config).map_err(|e| e.to_string())?;
    let rows = harness::window_rows(&prep.data, prep.train, 32, 8).map_err(|e| e.to_string())?;
    let held = harness::window_rows(&prep.data, prep.test, 32, 32).map_err(|e| e.to_string())?;
    let mut model = VqVaeModel::new(config.tokenizer.clone()).map_err(|e| e.to_string())?;
    train(&mut model, &rows).map_err(|e| e.to_string())?;
    let eval = |m: &VqVaeModel| -> (f64, Vec<ImputationMetrics>) {
        (
            reconstruction_mse(m, &held).unwrap(),
            evaluate_imputation(m, &held, &MASK_RATIOS, 3).unwrap(),
        )
    };
    let path = dir.join("c10-tokenizer.json");
    Checkpoint::from_model(&model).save(&path).map_err(|e| e.to_string())?;
    let loaded = Checkpoint::load(&path).and_then(|c| c.tokenizer()).map_err(|e| e.to_string())?;
    ensure!(eval(&loaded) == eval(&model), "loaded tokenizer evaluates differently");
    let resaved = Checkpoint::from_model(&loaded).to_json().map_err(|e| e.to_string())?;
    ensure!(resaved.as_bytes() == std::fs::read(&path).unwrap().as_slice(), "re-saved checkpoint bytes differ");

    // a saved forecaster scores exactly what its run reported
    let fc_config = small_config(Task::Forecast);
    let ck = Checkpoint::load(dir.join("c10-forecast-a/seed-1/forecaster-16.json")).map_err(|e| e.to_string())?;
    let table = harness::evaluate_checkpoint(&fc_config, &ck).map_err(|e| e.to_string())?;
    let run_table = ResultTable::read_csv(dir.join("c10-forecast-a/seed-1/table.csv")).map_err(|e| e.to_string())?;
    for metric in ["mse", "mae"] {
        let (a, b) = (cell(&table, "tstok", "32->16", metric)?, cell(&run_table, "tstok", "32->16", metric)?);
        ensure!(a == b, "forecaster {metric}: {a} after reload vs {b} in the run");
    }
    Ok("results byte-identical across reruns and thread counts; reloaded checkpoints evaluate identically".into())
}

// ---- runner ------------------------------------------------------------------

struct Criterion {
    id: &'static str,
    name: &'static str,
    budget: Duration,
    check: fn(&Path) -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: "C1", name: "gradient correctness", budget: Duration::from_secs(30), check: c1_gradients },
        Criterion { id: "C2", name: "quantizer oracle", budget: Duration::from_secs(5), check: c2_quantizer },
        Criterion { id: "C3", name: "stop-gradient semantics", budget: Duration::from_secs(10), check: c3_stop_gradient },
        Criterion { id: "C4", name: "codebook-size trend", budget: Duration::from_secs(600), check: c4_codebook_trend },
        Criterion { id: "C5", name: "imputation beats mean-fill", budget: Duration::from_secs(600), check: c5_imputation },
        Criterion { id: "C6", name: "anomaly detection F1", budget: Duration::from_secs(300), check: c6_anomaly },
        Criterion { id: "C7", name: "forecasting beats naive", budget: Duration::from_secs(900), check: c7_forecasting },
        Criterion { id: "C8", name: "tokens-vs-patches parity", budget: Duration::from_secs(900), check: c8_representation_parity },
        Criterion { id: "C9", name: "metrics exactness", budget: Duration::from_secs(60), check: c9_metrics },
        Criterion { id: "C10", name: "determinism and persistence", budget: Duration::from_secs(120), check: c10_determinism },
    ];
    // cargo passes test-harness flags through; anything else selects criteria by id
    let selected: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let dir = tempfile::tempdir().expect("temp dir");
    let (mut passed, mut ran) = (0, 0);
    println!("acceptance suite");
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.iter().any(|s| s.eq_ignore_ascii_case(c.id))) {
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| (c.check)(dir.path())))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > c.budget => Err(format!("over budget: {elapsed:.1?} > {:?}", c.budget)),
            o => o,
        };
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        if outcome.is_ok() {
            passed += 1;
        }
        println!(
            "{status} {:<4} {:<28} {:>7.1}s / {:>4}s  {detail}",
            c.id,
            c.name,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    println!("{passed}/{ran} criteria passed");
    if passed != ran {
        std::process::exit(1);
    }
}
