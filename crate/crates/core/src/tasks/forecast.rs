//! Forecasting from a frozen tokenizer.
//!
//! Each sensor is forecast independently. Its lookback window is instance
//! normalized and turned into a sequence of `T_in/F` feature vectors, either the
//! tokenizer's quantized latents or learned projections of raw length-`F`
//! patches. A transformer encoder (or an MLP, for the ablation) maps that
//! sequence to a normalized forecast `ȳ`, while a small feedforward head reads
//! the raw lookback and predicts the future window's mean `μ` and std `σ`.
//! The forecast is `y = σ·ȳ + μ`.

use ndarray::{s, Array1, Array2, Array3, ArrayD, Axis};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autograd::{smooth_l1_scalar, Graph, Var};
use crate::data::{revin_normalize, UnivariateBatch};
use crate::error::{Error, Result};
use crate::metrics::{mae, mse};
use crate::nn::{dropout, Bound, LayerNorm, Linear, ParamStore};
use crate::optim::{Adam, OneCycle};
use crate::vqvae::{gather, sample_rows, seeded, VqVaeConfig, VqVaeModel, STREAM_SAMPLER};

/// Floor added to the softplus output of the σ head.
pub const SIGMA_EPS: f64 = 1e-5;
/// Transition point of the smooth-L1 losses.
pub const SMOOTH_L1_BETA: f64 = 1.0;
/// Standard forecast lengths.
pub const HORIZONS: [usize; 4] = [96, 192, 336, 720];

const STREAM_DROPOUT: u64 = 3;
const PREDICT_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    #[default]
    Transformer,
    Mlp,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// Quantized latents of the frozen tokenizer.
    #[default]
    Tokens,
    /// Raw instance-normalized patches of length `F`.
    Patches,
}

impl Representation {
    pub fn name(self) -> &'static str {
        match self {
            Representation::Tokens => "tokens",
            Representation::Patches => "patches",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecasterConfig {
    pub model_dim: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub dropout: f64,
    pub lookback: usize,
    pub horizon: usize,
    /// Peak of the one-cycle schedule.
    pub learning_rate: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub architecture: Architecture,
    pub representation: Representation,
    /// Width of the MLP variant's hidden layers.
    pub mlp_hidden: usize,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        Self {
            model_dim: 64,
            hidden_dim: 256,
            num_heads: 4,
            num_layers: 4,
            dropout: 0.1,
            lookback: 96,
            horizon: 96,
            learning_rate: 1e-4,
            iterations: 1000,
            batch_size: 32,
            seed: 0,
            architecture: Architecture::Transformer,
            representation: Representation::Tokens,
            mlp_hidden: 256,
        }
    }
}

impl ForecasterConfig {
    pub fn validate(&self, patch_len: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("forecaster config: {m}")));
        if self.lookback == 0 || self.lookback % patch_len != 0 {
            return Err(Error::NotDivisible {
                len: self.lookback,
                factor: patch_len,
            });
        }
        if self.horizon == 0 || self.model_dim == 0 || self.hidden_dim == 0 || self.mlp_hidden == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.num_heads == 0 || self.model_dim % self.num_heads != 0 {
            return bad(format!(
                "model_dim {} not divisible by num_heads {}",
                self.model_dim, self.num_heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and nonnegative".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        Ok(())
    }
}

/// A fresh random stream per named layer, so a layer's initial values do not
/// depend on which other layers exist.
fn layer_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(name.as_bytes());
    let stream = u64::from_le_bytes(digest[..8].try_into().unwrap());
    seeded(seed, stream)
}

fn linear(store: &mut ParamStore, seed: u64, name: &str, i: usize, o: usize) -> Linear {
    Linear::new(store, &mut layer_rng(seed, name), name, i, o)
}

#[derive(Clone, Debug)]
struct EncoderLayer {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    norm1: LayerNorm,
    ff1: Linear,
    ff2: Linear,
    norm2: LayerNorm,
}

#[derive(Clone, Debug)]
enum Body {
    Transformer {
        patch: Option<Linear>,
        in_proj: Linear,
        layers: Vec<EncoderLayer>,
        head: Linear,
    },
    Mlp {
        fc0: Linear,
        fc1: Linear,
        fc2: Linear,
        norm: LayerNorm,
    },
}

#[derive(Clone, Debug)]
struct StatsHead {
    fc0: Linear,
    fc1: Linear,
    mu: Linear,
    sigma: Linear,
}

#[derive(Clone, Debug)]
pub struct Forecaster {
    pub config: ForecasterConfig,
    pub params: ParamStore,
    /// Width of each tokenizer latent.
    pub code_dim: usize,
    /// Steps per token (the tokenizer's compression factor).
    pub patch_len: usize,
    body: Body,
    stats: StatsHead,
}

/// Representation-dependent features for a set of lookback windows.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    /// `[N, steps·width]`.
    pub data: Array2<f64>,
    pub steps: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForecastOutput {
    /// `[N, T_out]`, normalized units.
    pub y_norm: Array2<f64>,
    pub mu: Array1<f64>,
    pub sigma: Array1<f64>,
    /// `σ·ȳ + μ` per row.
    pub y: Array2<f64>,
}

/// Sinusoidal position table `[len, dim]`.
pub fn positional_encoding(len: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((len, dim), |(pos, i)| {
        let freq = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
        let a = pos as f64 * freq;
        if i % 2 == 0 {
            a.sin()
        } else {
            a.cos()
        }
    })
}

/// Splits each row `[T]` into non-overlapping length-`f` patches and applies
/// `patch · weight + bias`: `[N, T] → [N, T/f, D]`.
pub fn patch_embed(x: &Array2<f64>, f: usize, weight: &Array2<f64>, bias: &Array1<f64>) -> Result<Array3<f64>> {
    let (n, t) = x.dim();
    if f == 0 || t % f != 0 {
        return Err(Error::NotDivisible { len: t, factor: f });
    }
    if weight.nrows() != f || weight.ncols() != bias.len() {
        return Err(Error::Shape(format!(
            "patch weight {:?} and bias {} for patch length {f}",
            weight.dim(),
            bias.len()
        )));
    }
    let patches = x.as_standard_layout().into_owned().into_shape_with_order((n * t / f, f)).unwrap();
    let out = patches.dot(weight) + bias;
    Ok(out.into_shape_with_order((n, t / f, bias.len())).unwrap())
}

impl Forecaster {
    pub fn new(config: ForecasterConfig, code_dim: usize, patch_len: usize) -> Result<Self> {
        config.validate(patch_len)?;
        let seed = config.seed;
        let mut store = ParamStore::new();
        let steps = config.lookback / patch_len;
        let body = match config.architecture {
            Architecture::Transformer => {
                let patch = (config.representation == Representation::Patches)
                    .then(|| linear(&mut store, seed, "patch.proj", patch_len, code_dim));
                let dm = config.model_dim;
                let in_proj = linear(&mut store, seed, "transformer.in_proj", code_dim, dm);
                let layers = (0..config.num_layers)
                    .map(|i| {
                        let pre = format!("transformer.layer{i}");
                        EncoderLayer {
                            q: linear(&mut store, seed, &format!("{pre}.q"), dm, dm),
                            k: linear(&mut store, seed, &format!("{pre}.k"), dm, dm),
                            v: linear(&mut store, seed, &format!("{pre}.v"), dm, dm),
                            o: linear(&mut store, seed, &format!("{pre}.o"), dm, dm),
                            norm1: LayerNorm::new(&mut store, &format!("{pre}.norm1"), dm),
                            ff1: linear(&mut store, seed, &format!("{pre}.ff1"), dm, config.hidden_dim),
                            ff2: linear(&mut store, seed, &format!("{pre}.ff2"), config.hidden_dim, dm),
                            norm2: LayerNorm::new(&mut store, &format!("{pre}.norm2"), dm),
                        }
                    })
                    .collect();
                let head = linear(&mut store, seed, "transformer.head", steps * dm, config.horizon);
                Body::Transformer {
                    patch,
                    in_proj,
                    layers,
                    head,
                }
            }
            Architecture::Mlp => {
                let input = match config.representation {
                    Representation::Tokens => steps * code_dim,
                    Representation::Patches => config.lookback,
                };
                let h = config.mlp_hidden;
                Body::Mlp {
                    fc0: linear(&mut store, seed, "mlp.fc0", input, h),
                    fc1: linear(&mut store, seed, "mlp.fc1", h, h),
                    fc2: linear(&mut store, seed, "mlp.fc2", h, config.horizon),
                    norm: LayerNorm::new(&mut store, "mlp.norm", config.horizon),
                }
            }
        };
        let h = config.hidden_dim;
        let stats = StatsHead {
            fc0: linear(&mut store, seed, "stats.fc0", config.lookback, h),
            fc1: linear(&mut store, seed, "stats.fc1", h, h),
            mu: linear(&mut store, seed, "stats.mu", h, 1),
            sigma: linear(&mut store, seed, "stats.sigma", h, 1),
        };
        Ok(Self {
            config,
            params: store,
            code_dim,
            patch_len,
            body,
            stats,
        })
    }

    /// Sized to consume the given tokenizer's latents.
    pub fn for_tokenizer(config: ForecasterConfig, tokenizer: &VqVaeConfig) -> Result<Self> {
        Self::new(config, tokenizer.code_dim, tokenizer.compression_factor)
    }

    pub fn steps(&self) -> usize {
        self.config.lookback / self.patch_len
    }

    /// Hash of every parameter that is shared by both representations.
    pub fn downstream_fingerprint(&self) -> String {
        self.params
            .fingerprint_filtered(|n| !n.starts_with("patch.") && !n.starts_with("mlp.fc0."))
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.config.lookback {
            return Err(Error::Shape(format!(
                "lookback {} vs configured {}",
                x.ncols(),
                self.config.lookback
            )));
        }
        Ok(())
    }

    /// Representation features of lookback windows `x: [N, T_in]`.
    pub fn features(&self, tokenizer: &VqVaeModel, x: &Array2<f64>) -> Result<Features> {
        self.check_input(x)?;
        let n = x.nrows();
        let batch = UnivariateBatch::from_rows(x.clone());
        match self.config.representation {
            Representation::Tokens => {
                if tokenizer.config.code_dim != self.code_dim
                    || tokenizer.config.compression_factor != self.patch_len
                {
                    return Err(Error::Shape(format!(
                        "tokenizer (D={}, F={}) does not match forecaster (D={}, F={})",
                        tokenizer.config.code_dim,
                        tokenizer.config.compression_factor,
                        self.code_dim,
                        self.patch_len
                    )));
                }
                let (zq, _) = tokenizer.quantized_embeddings(&batch)?;
                let (_, l, d) = zq.z.dim();
                Ok(Features {
                    data: zq.z.into_shape_with_order((n, l * d)).unwrap(),
                    steps: l,
                    width: d,
                })
            }
            Representation::Patches => Ok(Features {
                data: revin_normalize(&batch).0.series,
                steps: self.steps(),
                width: self.patch_len,
            }),
        }
    }

    fn attention(&self, g: &Graph, p: &Bound, layer: &EncoderLayer, h: Var, b: usize) -> Var {
        let (l, dm, heads) = (self.steps(), self.config.model_dim, self.config.num_heads);
        let dh = dm / heads;
        let split = |v: Var| {
            let v = g.reshape(v, &[b, l, heads, dh]);
            let v = g.permute(v, &[0, 2, 1, 3]);
            g.reshape(v, &[b * heads, l, dh])
        };
        let q = split(layer.q.forward(g, p, h));
        let k = split(layer.k.forward(g, p, h));
        let v = split(layer.v.forward(g, p, h));
        let scores = g.scale(g.bmm(q, k, true), 1.0 / (dh as f64).sqrt());
        let attn = g.softmax(scores);
        let ctx = g.bmm(attn, v, false);
        let ctx = g.reshape(ctx, &[b, heads, l, dh]);
        let ctx = g.permute(ctx, &[0, 2, 1, 3]);
        let ctx = g.reshape(ctx, &[b * l, dm]);
        layer.o.forward(g, p, ctx)
    }

    /// Builds `(ȳ [B, T_out], μ [B, 1], σ [B, 1])`. Dropout is active only when
    /// `rng` is given.
    pub fn forward_graph(
        &self,
        g: &Graph,
        p: &Bound,
        features: &Array2<f64>,
        raw: &Array2<f64>,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (Var, Var, Var) {
        let b = features.nrows();
        let drop = self.config.dropout;
        let ybar = match &self.body {
            Body::Transformer {
                patch,
                in_proj,
                layers,
                head,
            } => {
                let (l, dm) = (self.steps(), self.config.model_dim);
                let width = features.ncols() / l;
                let x = g.constant(features.clone().into_dyn());
                let mut h = g.reshape(x, &[b * l, width]);
                if let Some(patch) = patch {
                    h = patch.forward(g, p, h);
                }
                h = in_proj.forward(g, p, h);
                let pe = g.constant(positional_encoding(l, dm).into_dyn());
                h = g.reshape(g.add_broadcast(g.reshape(h, &[b, l, dm]), pe), &[b * l, dm]);
                for layer in layers {
                    let a = self.attention(g, p, layer, h, b);
                    let a = dropout(g, a, drop, rng.as_deref_mut());
                    h = layer.norm1.forward(g, p, g.add(h, a));
                    let f = layer.ff2.forward(g, p, g.relu(layer.ff1.forward(g, p, h)));
                    let f = dropout(g, f, drop, rng.as_deref_mut());
                    h = layer.norm2.forward(g, p, g.add(h, f));
                }
                head.forward(g, p, g.reshape(h, &[b, l * dm]))
            }
            Body::Mlp { fc0, fc1, fc2, norm } => {
                let x = g.constant(features.clone().into_dyn());
                let h = g.relu(fc0.forward(g, p, x));
                let h = g.relu(fc1.forward(g, p, h));
                let h = dropout(g, h, drop, rng.as_deref_mut());
                norm.forward(g, p, fc2.forward(g, p, h))
            }
        };
        let r = g.constant(raw.clone().into_dyn());
        let h = g.relu(self.stats.fc0.forward(g, p, r));
        let h = g.relu(self.stats.fc1.forward(g, p, h));
        let mu = self.stats.mu.forward(g, p, h);
        let sigma = g.add_scalar(g.softplus(self.stats.sigma.forward(g, p, h)), SIGMA_EPS);
        (ybar, mu, sigma)
    }

    /// Training objective for precomputed features against future windows `target: [B, T_out]`.
    pub fn loss_graph(
        &self,
        g: &Graph,
        p: &Bound,
        features: &Array2<f64>,
        raw: &Array2<f64>,
        target: &Array2<f64>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Var {
        let (ybar, mu, sigma) = self.forward_graph(g, p, features, raw, rng);
        let t = ForecastTargets::new(target);
        let l1 = g.smooth_l1(ybar, t.y_norm.into_dyn(), SMOOTH_L1_BETA);
        let l2 = g.smooth_l1(mu, t.mu.insert_axis(Axis(1)).into_dyn(), SMOOTH_L1_BETA);
        let l3 = g.smooth_l1(sigma, t.sigma.insert_axis(Axis(1)).into_dyn(), SMOOTH_L1_BETA);
        g.add(g.add(l1, l2), l3)
    }

    /// Inference from precomputed features.
    pub fn predict_features(&self, features: &Features, raw: &Array2<f64>) -> Result<ForecastOutput> {
        if features.data.nrows() != raw.nrows() {
            return Err(Error::Shape(format!(
                "{} feature rows vs {} input rows",
                features.data.nrows(),
                raw.nrows()
            )));
        }
        let n = raw.nrows();
        let t_out = self.config.horizon;
        let mut y_norm = Array2::zeros((n, t_out));
        let mut mu = Array1::zeros(n);
        let mut sigma = Array1::zeros(n);
        let mut start = 0;
        while start < n {
            let end = (start + PREDICT_CHUNK).min(n);
            let g = Graph::new();
            let p = self.params.bind_frozen(&g);
            let f = features.data.slice(s![start..end, ..]).to_owned();
            let r = raw.slice(s![start..end, ..]).to_owned();
            let (yb, m, sg) = self.forward_graph(&g, &p, &f, &r, None);
            y_norm.slice_mut(s![start..end, ..]).assign(&to2(&g.value(yb)));
            mu.slice_mut(s![start..end]).assign(&to2(&g.value(m)).column(0));
            sigma.slice_mut(s![start..end]).assign(&to2(&g.value(sg)).column(0));
            start = end;
        }
        Ok(assemble(y_norm, mu, sigma))
    }

    /// Forecast for lookback windows `x: [N, T_in]` (one row per sensor).
    pub fn forward(&self, tokenizer: &VqVaeModel, x: &Array2<f64>) -> Result<ForecastOutput> {
        let f = self.features(tokenizer, x)?;
        self.predict_features(&f, x)
    }
}

fn to2(t: &ArrayD<f64>) -> Array2<f64> {
    t.clone().into_dimensionality().expect("2-D")
}

/// `y = σ·ȳ + μ` per row.
pub fn assemble(y_norm: Array2<f64>, mu: Array1<f64>, sigma: Array1<f64>) -> ForecastOutput {
    let mut y = y_norm.clone();
    for (i, mut row) in y.rows_mut().into_iter().enumerate() {
        row.mapv_inplace(|v| sigma[i] * v + mu[i]);
    }
    ForecastOutput { y_norm, mu, sigma, y }
}

/// Ground truth for the three loss terms: the instance-normalized future
/// window and its own mean and (floored) std.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastTargets {
    pub y_norm: Array2<f64>,
    pub mu: Array1<f64>,
    pub sigma: Array1<f64>,
}

impl ForecastTargets {
    pub fn new(target: &Array2<f64>) -> Self {
        let (norm, state) = revin_normalize(&UnivariateBatch::from_rows(target.clone()));
        Self {
            y_norm: norm.series,
            mu: Array1::from(state.mean),
            sigma: Array1::from(state.std),
        }
    }
}

fn mean_smooth_l1<'a>(a: impl Iterator<Item = &'a f64>, b: impl Iterator<Item = &'a f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for (x, y) in a.zip(b) {
        s += smooth_l1_scalar(x - y, SMOOTH_L1_BETA);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Sum of the three mean smooth-L1 terms for `ȳ`, `μ` and `σ`.
pub fn forecaster_loss(out: &ForecastOutput, target: &Array2<f64>) -> Result<f64> {
    if out.y_norm.dim() != target.dim() || out.mu.len() != target.nrows() || out.sigma.len() != target.nrows() {
        return Err(Error::Shape(format!(
            "forecast {:?} vs target {:?}",
            out.y_norm.dim(),
            target.dim()
        )));
    }
    let t = ForecastTargets::new(target);
    Ok(mean_smooth_l1(out.y_norm.iter(), t.y_norm.iter())
        + mean_smooth_l1(out.mu.iter(), t.mu.iter())
        + mean_smooth_l1(out.sigma.iter(), t.sigma.iter()))
}

/// Splits rows of length `T_in + T_out` into lookback and future windows.
pub fn split_lookback(rows: &Array2<f64>, lookback: usize, horizon: usize) -> Result<(Array2<f64>, Array2<f64>)> {
    if rows.ncols() != lookback + horizon {
        return Err(Error::Shape(format!(
            "rows of length {} cannot split into {lookback} + {horizon}",
            rows.ncols()
        )));
    }
    Ok((
        rows.slice(s![.., ..lookback]).to_owned(),
        rows.slice(s![.., lookback..]).to_owned(),
    ))
}

/// Trains on lookback/future pairs `(x, y)` with Adam and a one-cycle
/// schedule. The tokenizer is only read. Returns the per-step loss.
pub fn train_forecaster(
    fc: &mut Forecaster,
    tokenizer: &VqVaeModel,
    x: &Array2<f64>,
    y: &Array2<f64>,
) -> Result<Vec<f64>> {
    if x.nrows() != y.nrows() || y.ncols() != fc.config.horizon {
        return Err(Error::Shape(format!(
            "inputs {:?} vs targets {:?} (horizon {})",
            x.dim(),
            y.dim(),
            fc.config.horizon
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::InvalidArgument("no training windows".into()));
    }
    let features = fc.features(tokenizer, x)?;
    let mut sampler = seeded(fc.config.seed, STREAM_SAMPLER);
    let mut drop_rng = seeded(fc.config.seed, STREAM_DROPOUT);
    let schedule = OneCycle::new(fc.config.learning_rate, fc.config.iterations);
    let mut opt = Adam::new(&fc.params, fc.config.learning_rate);
    let mut history = Vec::with_capacity(fc.config.iterations);
    for step in 0..fc.config.iterations {
        let idx = sample_rows(&mut sampler, x.nrows(), fc.config.batch_size);
        let (f, r, t) = (gather(&features.data, &idx), gather(x, &idx), gather(y, &idx));
        let g = Graph::new();
        let p = fc.params.bind(&g);
        let loss = fc.loss_graph(&g, &p, &f, &r, &t, Some(&mut drop_rng));
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                component: "forecast",
                value,
                step,
            });
        }
        let grads = fc.params.collect_grads(&g.backward(loss));
        opt.lr = schedule.lr(step);
        opt.step(&mut fc.params, &grads);
        history.push(value);
    }
    Ok(history)
}

/// Repeats the last observed value of each lookback across the horizon.
pub fn naive_forecast(x: &Array2<f64>, horizon: usize) -> Array2<f64> {
    let n = x.nrows();
    let last = x.ncols().saturating_sub(1);
    Array2::from_shape_fn((n, horizon), |(i, _)| x[[i, last]])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastMetrics {
    pub mse: f64,
    pub mae: f64,
    pub naive_mse: f64,
    pub naive_mae: f64,
}

pub fn evaluate_forecaster(
    fc: &Forecaster,
    tokenizer: &VqVaeModel,
    x: &Array2<f64>,
    y: &Array2<f64>,
) -> Result<ForecastMetrics> {
    let out = fc.forward(tokenizer, x)?;
    let naive = naive_forecast(x, fc.config.horizon);
    Ok(ForecastMetrics {
        mse: mse(&out.y, y)?,
        mae: mae(&out.y, y)?,
        naive_mse: mse(&naive, y)?,
        naive_mae: mae(&naive, y)?,
    })
}

/// Forces the stats head to output exactly `μ = 0`, `σ = softplus(b)+ε` for a
/// chosen bias `b`; used to check the unnormalization path.
pub fn pin_stats_head(fc: &mut Forecaster, mu: f64, sigma_bias: f64) {
    let ids = [
        (fc.stats.mu.weight, 0.0),
        (fc.stats.mu.bias, mu),
        (fc.stats.sigma.weight, 0.0),
        (fc.stats.sigma.bias, sigma_bias),
    ];
    for (id, v) in ids {
        fc.params.get_mut(id).fill(v);
    }
}
