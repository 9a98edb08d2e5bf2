//! Parameter storage and the small set of layers the models are built from.

use std::collections::BTreeMap;

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autograd::{Graph, Gradients, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Ordered collection of named trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

/// Shape + row-major data, the on-disk form of one parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(self.params.iter().all(|p| p.name != name), "duplicate {name}");
        self.params.push(Param { name, value });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Registers every parameter on `g` as a trainable leaf.
    pub fn bind(&self, g: &Graph) -> Bound {
        Bound(
            self.params
                .iter()
                .enumerate()
                .map(|(i, p)| g.param(i, &p.value))
                .collect(),
        )
    }

    /// Registers every parameter as a constant (inference, frozen models).
    pub fn bind_frozen(&self, g: &Graph) -> Bound {
        Bound(
            self.params
                .iter()
                .map(|p| g.constant(p.value.clone()))
                .collect(),
        )
    }

    /// Per-parameter gradients in store order; parameters the loss does not reach get zeros.
    pub fn collect_grads(&self, grads: &Gradients) -> Vec<Tensor> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                grads
                    .param(i)
                    .unwrap_or_else(|| ArrayD::zeros(p.value.raw_dim()))
            })
            .collect()
    }

    pub fn to_named(&self, prefix: &str) -> BTreeMap<String, NamedArray> {
        self.params
            .iter()
            .filter_map(|p| {
                p.name.strip_prefix(prefix).map(|rest| {
                    (
                        rest.to_string(),
                        NamedArray {
                            shape: p.value.shape().to_vec(),
                            data: p.value.iter().cloned().collect(),
                        },
                    )
                })
            })
            .collect()
    }

    /// Overwrites the values of parameters under `prefix` from a checkpoint map.
    /// Every parameter under the prefix must be present with a matching shape.
    pub fn load_named(&mut self, prefix: &str, named: &BTreeMap<String, NamedArray>) -> Result<()> {
        let mut seen = 0;
        for p in self.params.iter_mut() {
            let Some(rest) = p.name.strip_prefix(prefix) else {
                continue;
            };
            let arr = named
                .get(rest)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {}", p.name)))?;
            if arr.shape != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} has shape {:?}, checkpoint has {:?}",
                    p.name,
                    p.value.shape(),
                    arr.shape
                )));
            }
            p.value = ArrayD::from_shape_vec(IxDyn(&arr.shape), arr.data.clone())
                .map_err(|e| Error::Checkpoint(format!("{}: {e}", p.name)))?;
            seen += 1;
        }
        if seen != named.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameters under '{prefix}', model expects {seen}",
                named.len()
            )));
        }
        Ok(())
    }

    /// SHA-256 over names, shapes and little-endian bytes of every parameter.
    pub fn fingerprint(&self) -> String {
        self.fingerprint_filtered(|_| true)
    }

    pub fn fingerprint_filtered(&self, keep: impl Fn(&str) -> bool) -> String {
        let mut h = Sha256::new();
        for p in self.params.iter().filter(|p| keep(&p.name)) {
            h.update(p.name.as_bytes());
            for d in p.value.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in p.value.iter() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Graph handles for every parameter of a store, indexed by [`ParamId`].
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn get(&self, id: ParamId) -> Var {
        self.0[id.0]
    }
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    ArrayD::from_shape_vec(IxDyn(shape), data).unwrap()
}

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Weights and bias uniform on ±1/√in_dim.
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = store.add(format!("{name}.weight"), uniform(rng, &[in_dim, out_dim], bound));
        let bias = store.add(format!("{name}.bias"), uniform(rng, &[out_dim], bound));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    /// `x: [rows, in_dim]` → `[rows, out_dim]`.
    pub fn forward(&self, g: &Graph, p: &Bound, x: Var) -> Var {
        g.linear(x, p.get(self.weight), p.get(self.bias))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let bound = 1.0 / ((cin * kernel) as f64).sqrt();
        let weight = store.add(format!("{name}.weight"), uniform(rng, &[cout, cin, kernel], bound));
        let bias = store.add(format!("{name}.bias"), uniform(rng, &[cout], bound));
        Self {
            weight,
            bias,
            stride,
            pad,
        }
    }

    pub fn forward(&self, g: &Graph, p: &Bound, x: Var) -> Var {
        g.conv1d(x, p.get(self.weight), p.get(self.bias), self.stride, self.pad)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConvTranspose1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl ConvTranspose1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let bound = 1.0 / ((cout * kernel) as f64).sqrt();
        let weight = store.add(format!("{name}.weight"), uniform(rng, &[cin, cout, kernel], bound));
        let bias = store.add(format!("{name}.bias"), uniform(rng, &[cout], bound));
        Self {
            weight,
            bias,
            stride,
            pad,
        }
    }

    pub fn forward(&self, g: &Graph, p: &Bound, x: Var) -> Var {
        g.conv_transpose1d(x, p.get(self.weight), p.get(self.bias), self.stride, self.pad)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), ArrayD::ones(IxDyn(&[dim])));
        let beta = store.add(format!("{name}.beta"), ArrayD::zeros(IxDyn(&[dim])));
        Self { gamma, beta }
    }

    pub fn forward(&self, g: &Graph, p: &Bound, x: Var) -> Var {
        g.layer_norm(x, p.get(self.gamma), p.get(self.beta), Self::EPS)
    }
}

/// Inverted dropout. Identity when `rng` is `None` (evaluation) or `p == 0`.
pub fn dropout(g: &Graph, x: Var, p: f64, rng: Option<&mut ChaCha8Rng>) -> Var {
    match rng {
        Some(rng) if p > 0.0 => {
            let shape = g.shape(x);
            let keep = 1.0 / (1.0 - p);
            let n = shape.iter().product();
            let mask: Vec<f64> = (0..n)
                .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                .collect();
            g.mul_const(x, ArrayD::from_shape_vec(IxDyn(&shape), mask).unwrap())
        }
        _ => x,
    }
}
