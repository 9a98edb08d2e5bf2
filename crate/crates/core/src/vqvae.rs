//! Vector-quantized autoencoder over univariate series.
//!
//! The encoder compresses a length-`T` series into `T/F` latent vectors of
//! width `D` with a stack of stride-2 convolutions followed by residual blocks
//! and a 1×1 projection. Each latent vector is replaced by its nearest codeword
//! and the decoder (transposed convolutions, same block layout in reverse)
//! maps the quantized sequence back to `T` steps.
//!
//! Training minimizes
//!
//! ```text
//! L = 1/N Σ_i ‖x_i − x̂_i‖² + ‖sg[z] − ẑ‖² + β‖z − sg[ẑ]‖²
//! ```
//!
//! with the reconstruction gradient copied straight through the quantizer.
//! The two codebook terms are averaged over the `N` series of the batch the
//! same way as the reconstruction term.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::data::{revin_denormalize, revin_normalize, RevInState, UnivariateBatch};
use crate::error::{Error, Result};
use crate::nn::{self, Bound, Conv1d, ConvTranspose1d, ParamId, ParamStore};
use crate::optim::Adam;

/// Rows per chunk for gradient-free passes; bounds graph memory.
const INFERENCE_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VqVaeConfig {
    pub codebook_size: usize,
    pub code_dim: usize,
    pub compression_factor: usize,
    pub num_residual_layers: usize,
    pub residual_hidden: usize,
    pub block_hidden: usize,
    pub commitment_weight: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Instance-normalize (RevIN) every training row. Off for imputation.
    pub instance_norm: bool,
}

impl Default for VqVaeConfig {
    fn default() -> Self {
        Self {
            codebook_size: 256,
            code_dim: 64,
            compression_factor: 4,
            num_residual_layers: 2,
            residual_hidden: 64,
            block_hidden: 128,
            commitment_weight: 0.25,
            learning_rate: 1e-3,
            iterations: 15000,
            batch_size: 4096,
            seed: 0,
            instance_norm: true,
        }
    }
}

impl VqVaeConfig {
    pub fn validate(&self) -> Result<()> {
        let f = self.compression_factor;
        if f == 0 || !f.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "compression factor {f} is not a positive power of two"
            )));
        }
        if self.codebook_size == 0 || self.code_dim == 0 {
            return Err(Error::InvalidArgument("codebook size and dimension must be positive".into()));
        }
        if self.block_hidden < 2 || self.residual_hidden == 0 {
            return Err(Error::InvalidArgument("hidden sizes too small".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if !(self.commitment_weight >= 0.0) || !(self.learning_rate >= 0.0) {
            return Err(Error::InvalidArgument("β and learning rate must be non-negative".into()));
        }
        Ok(())
    }

    pub fn strided_layers(&self) -> usize {
        self.compression_factor.trailing_zeros() as usize
    }
}

/// `K` codewords of width `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub codewords: Array2<f64>,
}

impl Codebook {
    /// Entries uniform on `[−1/K, 1/K]`.
    pub fn init_uniform(rng: &mut ChaCha8Rng, size: usize, dim: usize) -> Self {
        let b = 1.0 / size as f64;
        Self {
            codewords: Array2::from_shape_fn((size, dim), |_| rng.random_range(-b..=b)),
        }
    }

    pub fn size(&self) -> usize {
        self.codewords.nrows()
    }

    pub fn dim(&self) -> usize {
        self.codewords.ncols()
    }

    /// Nearest codeword per latent (see [`nearest_codewords`]) and the quantized latents.
    pub fn quantize(&self, z: &LatentSequence) -> Result<(LatentSequence, Array2<usize>)> {
        let (n, l, d) = z.z.dim();
        if d != self.dim() {
            return Err(Error::Shape(format!(
                "latent width {d} vs codeword width {}",
                self.dim()
            )));
        }
        let flat = z.z.view().into_shape_with_order((n * l, d)).unwrap();
        let idx = nearest_codewords(self.codewords.view(), flat);
        let zq = self.lookup(&idx)?;
        Ok((
            LatentSequence {
                z: zq.into_shape_with_order((n, l, d)).unwrap(),
            },
            Array2::from_shape_vec((n, l), idx).unwrap(),
        ))
    }

    fn lookup(&self, idx: &[usize]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((idx.len(), self.dim()));
        for (mut row, &i) in out.rows_mut().into_iter().zip(idx) {
            if i >= self.size() {
                return Err(Error::TokenOutOfRange {
                    index: i,
                    size: self.size(),
                });
            }
            row.assign(&self.codewords.row(i));
        }
        Ok(out)
    }
}

/// `argmin_k ‖z_m − c_k‖²` for every row `m` of `z`; ties go to the lowest `k`.
pub fn nearest_codewords(codewords: ArrayView2<f64>, z: ArrayView2<f64>) -> Vec<usize> {
    let cw = codewords.as_standard_layout();
    let zs = z.as_standard_layout();
    let d = cw.ncols();
    let cs = cw.as_slice().unwrap();
    zs.as_slice()
        .unwrap()
        .chunks(d.max(1))
        .map(|row| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, c) in cs.chunks(d.max(1)).enumerate() {
                let dist: f64 = row.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                if dist < best_d {
                    best_d = dist;
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Encoder output `[N, T/F, D]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSequence {
    pub z: Array3<f64>,
}

/// Codeword indices per row plus the instance-normalization needed to undo them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub indices: Vec<Vec<usize>>,
    pub revin: RevInState,
}

/// Values held constant by the stop-gradient operators, flattened to `[N·L, D]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StopGradValues {
    pub z: Array2<f64>,
    pub zq: Array2<f64>,
    pub indices: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub total: f64,
    pub rec: f64,
    pub vq: f64,
    pub cmt: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub rec: f64,
    pub vq: f64,
    pub cmt: f64,
}

#[derive(Clone, Debug)]
struct ResidualBlock {
    conv_a: Conv1d,
    conv_b: Conv1d,
}

impl ResidualBlock {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, ch: usize, hidden: usize) -> Self {
        Self {
            conv_a: Conv1d::new(store, rng, &format!("{name}.conv_a"), ch, hidden, 3, 1, 1),
            conv_b: Conv1d::new(store, rng, &format!("{name}.conv_b"), hidden, ch, 1, 1, 0),
        }
    }

    fn forward(&self, g: &Graph, p: &Bound, x: Var) -> Var {
        let h = self.conv_a.forward(g, p, g.relu(x));
        let h = self.conv_b.forward(g, p, g.relu(h));
        g.add(x, h)
    }
}

fn residual_stack(g: &Graph, p: &Bound, blocks: &[ResidualBlock], x: Var) -> Var {
    let h = blocks.iter().fold(x, |h, b| b.forward(g, p, h));
    g.relu(h)
}

#[derive(Clone, Debug)]
struct Encoder {
    down: Vec<Conv1d>,
    blocks: Vec<ResidualBlock>,
    proj: Conv1d,
}

#[derive(Clone, Debug)]
struct Decoder {
    proj: Conv1d,
    blocks: Vec<ResidualBlock>,
    up: Vec<ConvTranspose1d>,
    /// Only for `F = 1`, where there is no transposed layer to reach one channel.
    out: Option<Conv1d>,
}

#[derive(Clone, Debug)]
pub struct VqVaeModel {
    pub config: VqVaeConfig,
    pub params: ParamStore,
    encoder: Encoder,
    decoder: Decoder,
    codebook: ParamId,
    /// Batch sampler state; persisted in checkpoints.
    pub rng: ChaCha8Rng,
}

/// Stream ids keep initialization, batch sampling and masking independent.
pub(crate) const STREAM_INIT: u64 = 0;
pub(crate) const STREAM_SAMPLER: u64 = 1;
pub(crate) const STREAM_MASK: u64 = 2;

pub(crate) fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl VqVaeModel {
    pub fn new(config: VqVaeConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(config.seed, STREAM_INIT);
        let mut store = ParamStore::new();
        let m = config.strided_layers();
        let (hid, half) = (config.block_hidden, config.block_hidden / 2);

        let mut down = Vec::new();
        if m == 0 {
            down.push(Conv1d::new(&mut store, &mut rng, "encoder.down0", 1, hid, 3, 1, 1));
        }
        for i in 0..m {
            let cin = if i == 0 { 1 } else { half };
            let cout = if i + 1 == m { hid } else { half };
            down.push(Conv1d::new(&mut store, &mut rng, &format!("encoder.down{i}"), cin, cout, 4, 2, 1));
        }
        let blocks = (0..config.num_residual_layers)
            .map(|i| ResidualBlock::new(&mut store, &mut rng, &format!("encoder.res{i}"), hid, config.residual_hidden))
            .collect();
        let proj = Conv1d::new(&mut store, &mut rng, "encoder.proj", hid, config.code_dim, 1, 1, 0);
        let encoder = Encoder { down, blocks, proj };

        let dproj = Conv1d::new(&mut store, &mut rng, "decoder.proj", config.code_dim, hid, 1, 1, 0);
        let dblocks = (0..config.num_residual_layers)
            .map(|i| ResidualBlock::new(&mut store, &mut rng, &format!("decoder.res{i}"), hid, config.residual_hidden))
            .collect();
        let mut up = Vec::new();
        for i in 0..m {
            let cin = if i == 0 { hid } else { half };
            let cout = if i + 1 == m { 1 } else { half };
            up.push(ConvTranspose1d::new(&mut store, &mut rng, &format!("decoder.up{i}"), cin, cout, 4, 2, 1));
        }
        let out = (m == 0).then(|| Conv1d::new(&mut store, &mut rng, "decoder.out", hid, 1, 3, 1, 1));
        let decoder = Decoder {
            proj: dproj,
            blocks: dblocks,
            up,
            out,
        };

        let cb = Codebook::init_uniform(&mut rng, config.codebook_size, config.code_dim);
        let codebook = store.add("codebook", cb.codewords.into_dyn());
        let rng = seeded(config.seed, STREAM_SAMPLER);
        Ok(Self {
            config,
            params: store,
            encoder,
            decoder,
            codebook,
            rng,
        })
    }

    pub fn codebook(&self) -> Codebook {
        Codebook {
            codewords: self
                .params
                .get(self.codebook)
                .clone()
                .into_dimensionality()
                .expect("codebook is 2-D"),
        }
    }

    pub fn codebook_id(&self) -> ParamId {
        self.codebook
    }

    pub fn check_length(&self, t: usize) -> Result<()> {
        let f = self.config.compression_factor;
        if t == 0 || t % f != 0 {
            return Err(Error::NotDivisible { len: t, factor: f });
        }
        Ok(())
    }

    /// `x: [N, T]` → latents `[N·T/F, D]` (row-major over `(n, step)`).
    pub fn encode_graph(&self, g: &Graph, p: &Bound, x: Var) -> Var {
        let s = g.shape(x);
        let (n, t) = (s[0], s[1]);
        let mut h = g.reshape(x, &[n, 1, t]);
        for conv in &self.encoder.down {
            h = g.relu(conv.forward(g, p, h));
        }
        h = residual_stack(g, p, &self.encoder.blocks, h);
        h = self.encoder.proj.forward(g, p, h);
        let l = g.shape(h)[2];
        let h = g.permute(h, &[0, 2, 1]);
        g.reshape(h, &[n * l, self.config.code_dim])
    }

    /// Latents `[N·L, D]` → series `[N, L·F]`.
    pub fn decode_graph(&self, g: &Graph, p: &Bound, zq: Var, n: usize) -> Var {
        let d = self.config.code_dim;
        let l = g.shape(zq)[0] / n;
        let h = g.reshape(zq, &[n, l, d]);
        let h = g.permute(h, &[0, 2, 1]);
        let mut h = self.decoder.proj.forward(g, p, h);
        h = residual_stack(g, p, &self.decoder.blocks, h);
        let last = self.decoder.up.len();
        for (i, conv) in self.decoder.up.iter().enumerate() {
            h = conv.forward(g, p, h);
            if i + 1 < last {
                h = g.relu(h);
            }
        }
        if let Some(out) = &self.decoder.out {
            h = out.forward(g, p, h);
        }
        let t = g.shape(h)[2];
        g.reshape(h, &[n, t])
    }

    pub fn encode(&self, batch: &UnivariateBatch) -> Result<LatentSequence> {
        self.check_length(batch.len())?;
        let (n, t) = batch.series.dim();
        let (l, d) = (t / self.config.compression_factor, self.config.code_dim);
        let mut z = Array3::zeros((n, l, d));
        for (ci, chunk) in batch.series.axis_chunks_iter(Axis(0), INFERENCE_CHUNK).enumerate() {
            let g = Graph::new();
            let p = self.params.bind_frozen(&g);
            let x = g.constant(chunk.to_owned().into_dyn());
            let zv = self.encode_graph(&g, &p, x);
            let rows = chunk.nrows();
            let val = g.value(zv).clone().into_shape_with_order((rows, l, d)).unwrap();
            z.slice_mut(ndarray::s![ci * INFERENCE_CHUNK..ci * INFERENCE_CHUNK + rows, .., ..])
                .assign(&val);
        }
        Ok(LatentSequence { z })
    }

    pub fn quantize(&self, z: &LatentSequence) -> Result<(LatentSequence, Array2<usize>)> {
        self.codebook().quantize(z)
    }

    pub fn decode(&self, zq: &LatentSequence) -> Result<UnivariateBatch> {
        let (n, l, d) = zq.z.dim();
        if d != self.config.code_dim {
            return Err(Error::Shape(format!(
                "latent width {d} vs model code_dim {}",
                self.config.code_dim
            )));
        }
        let t = l * self.config.compression_factor;
        let mut out = Array2::zeros((n, t));
        for (ci, chunk) in zq.z.axis_chunks_iter(Axis(0), INFERENCE_CHUNK).enumerate() {
            let g = Graph::new();
            let p = self.params.bind_frozen(&g);
            let rows = chunk.dim().0;
            let flat = chunk.to_owned().into_shape_with_order((rows * l, d)).unwrap();
            let y = self.decode_graph(&g, &p, g.constant(flat.into_dyn()), rows);
            let val = g.value(y).clone().into_dimensionality::<ndarray::Ix2>().unwrap();
            out.slice_mut(ndarray::s![ci * INFERENCE_CHUNK..ci * INFERENCE_CHUNK + rows, ..])
                .assign(&val);
        }
        Ok(UnivariateBatch::from_rows(out))
    }

    /// encode → quantize → decode, in whatever space `series` already lives in.
    pub fn reconstruct(&self, series: &Array2<f64>) -> Result<Array2<f64>> {
        let batch = UnivariateBatch::from_rows(series.clone());
        let z = self.encode(&batch)?;
        let (zq, _) = self.quantize(&z)?;
        Ok(self.decode(&zq)?.series)
    }

    /// instance-normalize → encode → quantize.
    pub fn tokenize(&self, batch: &UnivariateBatch) -> Result<TokenSequence> {
        let (norm, revin) = revin_normalize(batch);
        let z = self.encode(&norm)?;
        let (_, idx) = self.quantize(&z)?;
        Ok(TokenSequence {
            indices: idx.rows().into_iter().map(|r| r.to_vec()).collect(),
            revin,
        })
    }

    /// codeword lookup → decode → undo instance normalization.
    pub fn detokenize(&self, tokens: &TokenSequence) -> Result<UnivariateBatch> {
        let n = tokens.indices.len();
        let l = tokens.indices.first().map_or(0, Vec::len);
        if tokens.indices.iter().any(|r| r.len() != l) {
            return Err(Error::Shape("ragged token rows".into()));
        }
        let flat: Vec<usize> = tokens.indices.iter().flatten().cloned().collect();
        let cb = self.codebook();
        let zq = cb.lookup(&flat)?;
        let zq = LatentSequence {
            z: zq.into_shape_with_order((n, l, cb.dim())).unwrap(),
        };
        let out = self.decode(&zq)?;
        revin_denormalize(&out, &tokens.revin)
    }

    /// Quantized latents `ẑ` (`[N, T/F, D]`) after instance normalization.
    pub fn quantized_embeddings(&self, batch: &UnivariateBatch) -> Result<(LatentSequence, RevInState)> {
        let (norm, revin) = revin_normalize(batch);
        let z = self.encode(&norm)?;
        let (zq, _) = self.quantize(&z)?;
        Ok((zq, revin))
    }

    /// Builds the training loss on `g`. `input` is fed to the encoder and the
    /// reconstruction is scored against `target` (they differ under masking).
    ///
    /// With `frozen = Some(..)` every stop-gradient argument and the codeword
    /// assignment are taken from `frozen` instead of the current forward pass.
    /// The resulting scalar has the same gradient at the point where `frozen`
    /// was recorded, and is an ordinary differentiable function of the
    /// parameters around it, which is what finite differences need.
    pub fn loss_graph(
        &self,
        g: &Graph,
        p: &Bound,
        input: &Array2<f64>,
        target: &Array2<f64>,
        frozen: Option<&StopGradValues>,
    ) -> (Var, [Var; 3]) {
        let n = input.nrows() as f64;
        let x = g.constant(input.clone().into_dyn());
        let z = self.encode_graph(g, p, x);
        let (sg_z, idx) = match frozen {
            Some(f) => (g.constant(f.z.clone().into_dyn()), f.indices.clone()),
            None => {
                let idx = {
                    let zv = g.value(z);
                    let zv = zv.view().into_dimensionality().unwrap();
                    let cb = self.params.get(self.codebook).view().into_dimensionality().unwrap();
                    nearest_codewords(cb, zv)
                };
                (g.detach(z), idx)
            }
        };
        let zq = g.gather_rows(p.get(self.codebook), &idx);
        let sg_zq = match frozen {
            Some(f) => g.constant(f.zq.clone().into_dyn()),
            None => g.detach(zq),
        };

        // codebook term: sg[z] − ẑ
        let vq = g.scale(g.sum_sq(g.sub(sg_z, zq)), 1.0 / n);
        // commitment term: z − sg[ẑ]
        let cmt = g.scale(g.sum_sq(g.sub(z, sg_zq)), 1.0 / n);
        // straight-through: value ẑ, gradient to z
        let shift = &*g.value(sg_zq) - &*g.value(sg_z);
        let st = g.add(z, g.constant(shift));

        let xhat = self.decode_graph(g, p, st, input.nrows());
        let tgt = g.constant(target.clone().into_dyn());
        let rec = g.scale(g.sum_sq(g.sub(tgt, xhat)), 1.0 / n);
        let total = g.add(g.add(rec, vq), g.scale(cmt, self.config.commitment_weight));
        (total, [rec, vq, cmt])
    }

    /// Stop-gradient arguments and assignment of one forward pass.
    pub fn stop_grad_values(&self, input: &Array2<f64>) -> Result<StopGradValues> {
        let z = self.encode(&UnivariateBatch::from_rows(input.clone()))?;
        let (n, l, d) = z.z.dim();
        let z = z.z.into_shape_with_order((n * l, d)).unwrap();
        let cb = self.params.get(self.codebook).view().into_dimensionality().unwrap();
        let indices = nearest_codewords(cb, z.view());
        let zq = self.codebook().lookup(&indices)?;
        Ok(StopGradValues { z, zq, indices })
    }

    /// One forward/backward/Adam update.
    pub fn train_step(
        &mut self,
        opt: &mut Adam,
        input: &Array2<f64>,
        target: &Array2<f64>,
        step: usize,
    ) -> Result<LossComponents> {
        self.check_length(input.ncols())?;
        if input.dim() != target.dim() {
            return Err(Error::Shape(format!(
                "input {:?} vs target {:?}",
                input.dim(),
                target.dim()
            )));
        }
        let g = Graph::new();
        let p = self.params.bind(&g);
        let (total, [rec, vq, cmt]) = self.loss_graph(&g, &p, input, target, None);
        let lc = LossComponents {
            total: g.scalar(total),
            rec: g.scalar(rec),
            vq: g.scalar(vq),
            cmt: g.scalar(cmt),
        };
        for (component, value) in [("total", lc.total), ("rec", lc.rec), ("vq", lc.vq), ("cmt", lc.cmt)] {
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    component,
                    value,
                    step,
                });
            }
        }
        let grads = g.backward(total);
        let grads = self.params.collect_grads(&grads);
        opt.step(&mut self.params, &grads);
        Ok(lc)
    }
}

/// Numeric value of the training objective for given tensors.
pub fn vqvae_loss(
    x: &Array2<f64>,
    xhat: &Array2<f64>,
    z: &LatentSequence,
    zq: &LatentSequence,
    beta: f64,
) -> Result<LossComponents> {
    if x.dim() != xhat.dim() || z.z.dim() != zq.z.dim() || z.z.dim().0 != x.nrows() {
        return Err(Error::Shape(format!(
            "x {:?}, x̂ {:?}, z {:?}, ẑ {:?}",
            x.dim(),
            xhat.dim(),
            z.z.dim(),
            zq.z.dim()
        )));
    }
    let n = x.nrows() as f64;
    let rec = (x - xhat).mapv(|v| v * v).sum() / n;
    let vq = (&z.z - &zq.z).mapv(|v| v * v).sum() / n;
    let cmt = vq;
    Ok(LossComponents {
        total: rec + vq + beta * cmt,
        rec,
        vq,
        cmt,
    })
}

/// Draws `batch_size` row indices uniformly with replacement.
pub(crate) fn sample_rows(rng: &mut ChaCha8Rng, rows: usize, batch_size: usize) -> Vec<usize> {
    (0..batch_size).map(|_| rng.random_range(0..rows)).collect()
}

pub(crate) fn gather(data: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    data.select(Axis(0), idx)
}

/// Trains for `config.iterations` steps on the rows of `data` (already in the
/// space the model should see, before instance normalization). `make_input`
/// may corrupt the sampled target rows before they reach the encoder.
pub fn train_with<F>(model: &mut VqVaeModel, data: &UnivariateBatch, mut make_input: F) -> Result<Vec<LossRecord>>
where
    F: FnMut(&Array2<f64>) -> Result<Array2<f64>>,
{
    model.check_length(data.len())?;
    if data.rows() == 0 {
        return Err(Error::InvalidArgument("no training rows".into()));
    }
    let rows = if model.config.instance_norm {
        revin_normalize(data).0.series
    } else {
        data.series.clone()
    };
    let mut opt = Adam::new(&model.params, model.config.learning_rate);
    let mut history = Vec::with_capacity(model.config.iterations);
    for step in 0..model.config.iterations {
        let idx = sample_rows(&mut model.rng, rows.nrows(), model.config.batch_size);
        let target = gather(&rows, &idx);
        let input = make_input(&target)?;
        let lc = model.train_step(&mut opt, &input, &target, step)?;
        history.push(LossRecord {
            step,
            rec: lc.rec,
            vq: lc.vq,
            cmt: lc.cmt,
        });
    }
    Ok(history)
}

pub fn train(model: &mut VqVaeModel, data: &UnivariateBatch) -> Result<Vec<LossRecord>> {
    train_with(model, data, |t| Ok(t.clone()))
}

/// Mean squared reconstruction error per element, in the model's input space.
pub fn reconstruction_mse(model: &VqVaeModel, data: &UnivariateBatch) -> Result<f64> {
    let rows = if model.config.instance_norm {
        revin_normalize(data).0.series
    } else {
        data.series.clone()
    };
    let rec = model.reconstruct(&rows)?;
    Ok((&rec - &rows).mapv(|v| v * v).mean().unwrap_or(0.0))
}

/// Codebook with entries uniform on `±bound`, independent of any model.
pub fn random_codebook(seed: u64, size: usize, dim: usize, bound: f64) -> Codebook {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Codebook {
        codewords: nn::uniform(&mut rng, &[size, dim], bound)
            .into_dimensionality()
            .unwrap(),
    }
}
