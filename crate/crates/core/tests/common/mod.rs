//! Shared test oracles. Everything here recomputes values through forward-only
//! public APIs so it never shares code paths with the backward pass it checks.
#![allow(dead_code)]

use ndarray::{Array2, Array3, ArrayD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tstok::autograd::Graph;
use tstok::data::UnivariateBatch;
use tstok::nn::ParamStore;
use tstok::tasks::forecast::{forecaster_loss, Forecaster};
use tstok::vqvae::{LatentSequence, StopGradValues, VqVaeConfig, VqVaeModel};

/// Finite-difference step and relative tolerance for every gradient check.
pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Magnitudes below this count as zero when forming the relative error.
pub const FD_FLOOR: f64 = 1e-4;

/// The small tokenizer used by gradient checks: T=16, F=4, D=4, K=8, one residual block.
pub fn tiny_tokenizer(seed: u64) -> VqVaeConfig {
    VqVaeConfig {
        codebook_size: 8,
        code_dim: 4,
        compression_factor: 4,
        num_residual_layers: 1,
        residual_hidden: 4,
        block_hidden: 8,
        iterations: 0,
        batch_size: 4,
        seed,
        instance_norm: false,
        ..VqVaeConfig::default()
    }
}

pub fn random_rows(seed: u64, n: usize, t: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, t), |_| rng.random_range(-1.5..1.5))
}

pub fn sine_rows(n: usize, t: usize, phase: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, t), |(r, k)| {
        let k = k as f64;
        (0.37 * k + r as f64 + phase).sin() + 0.5 * (0.11 * k + 2.0 * r as f64).cos()
    })
}

/// Pulls the codebook close to the current encoder outputs so most assignments
/// are far from quantization-cell boundaries and vq/cmt are not dominated by
/// the random initialization.
pub fn codebook_near_latents(model: &mut VqVaeModel, x: &Array2<f64>, seed: u64) {
    let z = model.encode(&UnivariateBatch::from_rows(x.clone())).unwrap().z;
    let (n, l, d) = z.dim();
    let flat = z.into_shape_with_order((n * l, d)).unwrap();
    let k = model.config.codebook_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = model.codebook_id();
    let cb = model.params.get_mut(id);
    for i in 0..k {
        let src = flat.row(i % flat.nrows());
        for j in 0..d {
            cb[[i, j]] = src[j] + rng.random_range(-0.05..0.05);
        }
    }
}

/// Which loss terms to include in the oracle value.
#[derive(Clone, Copy, Debug)]
pub struct Terms {
    pub rec: bool,
    pub vq: bool,
    pub cmt: bool,
}

impl Terms {
    pub const TOTAL: Terms = Terms { rec: true, vq: true, cmt: true };
    pub const VQ: Terms = Terms { rec: false, vq: true, cmt: false };
    pub const CMT: Terms = Terms { rec: false, vq: false, cmt: true };
    pub const REC: Terms = Terms { rec: true, vq: false, cmt: false };
}

/// Forward value of the tokenizer objective with every stop-gradient argument
/// and the code assignment held at `frozen`:
///   rec = ‖x − dec(z + (ẑ₀ − z₀))‖²/N,  vq = ‖z₀ − C[idx₀]‖²/N,  cmt = ‖z − ẑ₀‖²/N.
/// `cmt` is returned unweighted; the total uses the model's β.
pub fn surrogate_loss(model: &VqVaeModel, x: &Array2<f64>, frozen: &StopGradValues, terms: Terms) -> f64 {
    let n = x.nrows() as f64;
    let z = model.encode(&UnivariateBatch::from_rows(x.clone())).unwrap().z;
    let (b, l, d) = z.dim();
    let zflat = z.into_shape_with_order((b * l, d)).unwrap();
    let mut total = 0.0;
    if terms.rec {
        let st = &zflat + &(&frozen.zq - &frozen.z);
        let xhat = model
            .decode(&LatentSequence {
                z: st.into_shape_with_order((b, l, d)).unwrap(),
            })
            .unwrap()
            .series;
        total += (x - &xhat).mapv(|v| v * v).sum() / n;
    }
    if terms.vq {
        let cb = model.codebook().codewords;
        let mut s = 0.0;
        for (r, &i) in frozen.indices.iter().enumerate() {
            for j in 0..d {
                s += (frozen.z[[r, j]] - cb[[i, j]]).powi(2);
            }
        }
        total += s / n;
    }
    if terms.cmt {
        let c = (&zflat - &frozen.zq).mapv(|v| v * v).sum() / n;
        total += if terms.rec { model.config.commitment_weight * c } else { c };
    }
    total
}

/// Central difference of `f` w.r.t. every scalar of every parameter in `params`.
pub fn numeric_grads<F>(params: &mut ParamStore, mut f: F) -> Vec<ArrayD<f64>>
where
    F: FnMut(&ParamStore) -> f64,
{
    let shapes: Vec<_> = params.iter().map(|p| p.value.raw_dim()).collect();
    let mut out: Vec<ArrayD<f64>> = shapes.iter().map(|s| ArrayD::zeros(s.clone())).collect();
    for (pi, grad) in out.iter_mut().enumerate() {
        for k in 0..grad.len() {
            let orig = nth(params, pi, k);
            set_nth(params, pi, k, orig + FD_STEP);
            let up = f(params);
            set_nth(params, pi, k, orig - FD_STEP);
            let down = f(params);
            set_nth(params, pi, k, orig);
            grad.as_slice_mut().unwrap()[k] = (up - down) / (2.0 * FD_STEP);
        }
    }
    out
}

fn nth(params: &ParamStore, pi: usize, k: usize) -> f64 {
    let v = &params.iter().nth(pi).unwrap().value;
    v.as_slice().unwrap()[k]
}

fn set_nth(params: &mut ParamStore, pi: usize, k: usize, value: f64) {
    params.iter_mut().nth(pi).unwrap().value.as_slice_mut().unwrap()[k] = value;
}

/// Largest relative error between analytic and numeric gradients, with the
/// offending parameter name.
pub fn worst_relative_error(params: &ParamStore, analytic: &[ArrayD<f64>], numeric: &[ArrayD<f64>]) -> (f64, String) {
    let mut worst = (0.0, String::new());
    for ((p, a), n) in params.iter().zip(analytic).zip(numeric) {
        for (x, y) in a.iter().zip(n.iter()) {
            let err = (x - y).abs() / x.abs().max(y.abs()).max(FD_FLOOR);
            if err > worst.0 {
                worst = (err, format!("{} (analytic {x:e}, numeric {y:e})", p.name));
            }
        }
    }
    worst
}

/// Analytic gradients of the selected tokenizer terms with frozen stop-gradients.
pub fn tokenizer_analytic(model: &VqVaeModel, x: &Array2<f64>, frozen: &StopGradValues, terms: Terms) -> Vec<ArrayD<f64>> {
    let g = Graph::new();
    let p = model.params.bind(&g);
    let (total, [rec, vq, cmt]) = model.loss_graph(&g, &p, x, x, Some(frozen));
    let loss = match (terms.rec, terms.vq, terms.cmt) {
        (true, true, true) => total,
        (true, false, false) => rec,
        (false, true, false) => vq,
        (false, false, true) => cmt,
        other => panic!("unsupported term selection {other:?}"),
    };
    model.params.collect_grads(&g.backward(loss))
}

/// FD check of the tokenizer objective; returns the worst relative error.
pub fn tokenizer_gradient_check(seed: u64, terms: Terms) -> (f64, String) {
    let mut model = VqVaeModel::new(tiny_tokenizer(seed)).unwrap();
    let x = random_rows(seed + 100, 3, 16);
    codebook_near_latents(&mut model, &x, seed);
    let frozen = model.stop_grad_values(&x).unwrap();
    let analytic = tokenizer_analytic(&model, &x, &frozen, terms);
    let mut params = model.params.clone();
    let numeric = numeric_grads(&mut params, |ps| {
        let mut m = model.clone();
        m.params = ps.clone();
        surrogate_loss(&m, &x, &frozen, terms)
    });
    worst_relative_error(&model.params, &analytic, &numeric)
}

/// FD check of the forecaster objective (dropout off) on tokenizer features.
pub fn forecaster_gradient_check(fc: &Forecaster, tok: &VqVaeModel, x: &Array2<f64>, y: &Array2<f64>) -> (f64, String) {
    let feats = fc.features(tok, x).unwrap();
    let g = Graph::new();
    let p = fc.params.bind(&g);
    let loss = fc.loss_graph(&g, &p, &feats.data, x, y, None);
    let analytic = fc.params.collect_grads(&g.backward(loss));
    let mut params = fc.params.clone();
    let numeric = numeric_grads(&mut params, |ps| {
        let mut f = fc.clone();
        f.params = ps.clone();
        forecaster_loss(&f.predict_features(&feats, x).unwrap(), y).unwrap()
    });
    worst_relative_error(&fc.params, &analytic, &numeric)
}

/// Quantizer instance: codebook with 1..=32 codewords, a handful of latents,
/// and sometimes a duplicated codeword or a latent placed exactly between two.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (Array2<f64>, Array2<f64>) {
    let k = rng.random_range(1..=32);
    let d = rng.random_range(1..=8);
    let n = rng.random_range(1..=16);
    // coarse grid values make exact distance ties common
    let grid = rng.random_bool(0.3);
    let draw = |rng: &mut ChaCha8Rng| {
        if grid {
            rng.random_range(-2i32..=2) as f64 * 0.5
        } else {
            rng.random_range(-3.0..3.0)
        }
    };
    let mut cb = Array2::from_shape_fn((k, d), |_| draw(rng));
    let mut z = Array2::from_shape_fn((n, d), |_| draw(rng));
    if k >= 2 && rng.random_bool(0.3) {
        let (a, b) = (rng.random_range(0..k), rng.random_range(0..k));
        let row = cb.row(a).to_owned();
        cb.row_mut(b).assign(&row);
    }
    if k >= 2 && rng.random_bool(0.3) {
        let (a, b) = (rng.random_range(0..k), rng.random_range(0..k));
        let mid = (&cb.row(a) + &cb.row(b)) / 2.0;
        z.row_mut(0).assign(&mid);
    }
    (cb, z)
}

/// Brute-force nearest codeword: full scan, strict `<` so the first minimum wins.
pub fn brute_force_nearest(codewords: &Array2<f64>, z: &Array2<f64>) -> Vec<usize> {
    z.rows()
        .into_iter()
        .map(|row| {
            let mut best = (f64::INFINITY, 0);
            for (i, c) in codewords.rows().into_iter().enumerate() {
                let d: f64 = row.iter().zip(c.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, i);
                }
            }
            best.1
        })
        .collect()
}

pub fn as_latents(z: Array2<f64>) -> LatentSequence {
    let (n, d) = z.dim();
    LatentSequence {
        z: z.into_shape_with_order((n, 1, d)).unwrap(),
    }
}

pub fn to3(z: &Array3<f64>) -> Array2<f64> {
    let (n, l, d) = z.dim();
    z.clone().into_shape_with_order((n * l, d)).unwrap()
}
