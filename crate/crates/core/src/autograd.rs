//! Tape-based reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s during a forward
//! pass. [`Graph::backward`] then walks the tape in reverse and accumulates
//! vector-Jacobian products into a [`Gradients`] table. The operation set is
//! exactly what the tokenizer and the forecasters need: strided and transposed
//! 1D convolutions, (batched) matrix products, row gathers for codebook
//! lookups, softmax, layer normalization and a handful of elementwise maps.
//!
//! All values are kept in standard (row-major, contiguous) layout.

use std::cell::{Ref, RefCell};

use ndarray::{linalg::general_mat_mul, Array2, ArrayD, ArrayView2, Axis, Ix2, IxDyn, Zip};

pub type Tensor = ArrayD<f64>;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Param(usize),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Tensor),
    Scale(Var, f64),
    AddScalar(Var),
    AddBroadcast(Var, Var),
    Relu(Var),
    Softplus(Var),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    MatMul(Var, Var),
    Bmm {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
        cols: Array2<f64>,
    },
    ConvTranspose1d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
        rows: Array2<f64>,
    },
    Gather(Var, Vec<usize>),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Array2<f64>,
        inv_std: Vec<f64>,
    },
    Sum(Var),
    SumSq(Var),
    SmoothL1 {
        x: Var,
        target: Tensor,
        beta: f64,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation for later differentiation.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

fn to2(t: &Tensor) -> ArrayView2<'_, f64> {
    t.view()
        .into_dimensionality::<Ix2>()
        .expect("tensor is not two-dimensional")
}

fn permuted(t: &Tensor, axes: &[usize]) -> Tensor {
    t.view()
        .permuted_axes(IxDyn(axes))
        .as_standard_layout()
        .into_owned()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        let nodes = self.nodes.borrow();
        vars.iter().any(|v| nodes[v.0].requires_grad)
    }

    /// A value that receives no gradient.
    pub fn constant(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A trainable leaf. `slot` identifies the parameter in [`Gradients::param`].
    pub fn param(&self, slot: usize, value: &Tensor) -> Var {
        self.push(value.clone(), Op::Param(slot), true)
    }

    /// Stop-gradient: same value, no gradient flows back through it.
    pub fn detach(&self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.value(v).shape().to_vec()
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        assert_eq!(t.len(), 1, "scalar() on tensor of shape {:?}", t.shape());
        *t.iter().next().unwrap()
    }

    fn binary_same_shape(&self, a: Var, b: Var, what: &str) {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert_eq!(sa, sb, "{what}: shape mismatch {sa:?} vs {sb:?}");
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, "add");
        let v = &*self.value(a) + &*self.value(b);
        self.push(v, Op::Add(a, b), self.rg(&[a, b]))
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, "sub");
        let v = &*self.value(a) - &*self.value(b);
        self.push(v, Op::Sub(a, b), self.rg(&[a, b]))
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, "mul");
        let v = &*self.value(a) * &*self.value(b);
        self.push(v, Op::Mul(a, b), self.rg(&[a, b]))
    }

    /// Elementwise product with a constant tensor (dropout masks).
    pub fn mul_const(&self, a: Var, c: Tensor) -> Var {
        assert_eq!(self.shape(a), c.shape(), "mul_const: shape mismatch");
        let v = &*self.value(a) * &c;
        self.push(v, Op::MulConst(a, c), self.rg(&[a]))
    }

    pub fn scale(&self, a: Var, k: f64) -> Var {
        let v = &*self.value(a) * k;
        self.push(v, Op::Scale(a, k), self.rg(&[a]))
    }

    pub fn add_scalar(&self, a: Var, k: f64) -> Var {
        let v = &*self.value(a) + k;
        self.push(v, Op::AddScalar(a), self.rg(&[a]))
    }

    /// `a + b` where `b`'s shape equals the trailing axes of `a`'s shape.
    pub fn add_broadcast(&self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert!(
            sb.len() <= sa.len() && sa[sa.len() - sb.len()..] == sb[..],
            "add_broadcast: {sb:?} is not a suffix of {sa:?}"
        );
        let v = {
            let va = self.value(a);
            let vb = self.value(b);
            let inner = vb.len();
            let mut out = va.clone();
            let flat = out.as_slice_mut().unwrap();
            let bs = vb.as_slice().unwrap();
            for chunk in flat.chunks_mut(inner) {
                for (o, x) in chunk.iter_mut().zip(bs) {
                    *o += x;
                }
            }
            out
        };
        self.push(v, Op::AddBroadcast(a, b), self.rg(&[a, b]))
    }

    pub fn relu(&self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a), self.rg(&[a]))
    }

    pub fn softplus(&self, a: Var) -> Var {
        let v = self.value(a).mapv(softplus);
        self.push(v, Op::Softplus(a), self.rg(&[a]))
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Var {
        let v = self
            .value(a)
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .unwrap_or_else(|e| panic!("reshape to {shape:?}: {e}"));
        self.push(v, Op::Reshape(a), self.rg(&[a]))
    }

    pub fn permute(&self, a: Var, axes: &[usize]) -> Var {
        let v = permuted(&self.value(a), axes);
        self.push(v, Op::Permute(a, axes.to_vec()), self.rg(&[a]))
    }

    /// Two-dimensional matrix product.
    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let v = {
            let (va, vb) = (self.value(a), self.value(b));
            to2(&va).dot(&to2(&vb)).into_dyn()
        };
        self.push(v, Op::MatMul(a, b), self.rg(&[a, b]))
    }

    /// `x · w + b` for `x: [rows, in]`, `w: [in, out]`, `b: [out]`.
    pub fn linear(&self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_broadcast(y, b)
    }

    /// Batched product `a[i] · b[i]` (or `a[i] · b[i]ᵀ`) over the leading axis.
    pub fn bmm(&self, a: Var, b: Var, trans_b: bool) -> Var {
        let v = {
            let (va, vb) = (self.value(a), self.value(b));
            let (sa, sb) = (va.shape(), vb.shape());
            assert_eq!(sa.len(), 3, "bmm expects rank-3 inputs");
            assert_eq!(sa[0], sb[0], "bmm batch mismatch");
            let (m, n) = (sa[1], if trans_b { sb[1] } else { sb[2] });
            let mut out = ndarray::Array3::<f64>::zeros((sa[0], m, n));
            for i in 0..sa[0] {
                let ai = va.index_axis(Axis(0), i).into_dimensionality::<Ix2>().unwrap();
                let bi = vb.index_axis(Axis(0), i).into_dimensionality::<Ix2>().unwrap();
                let bi = if trans_b { bi.reversed_axes() } else { bi };
                general_mat_mul(1.0, &ai, &bi, 0.0, &mut out.index_axis_mut(Axis(0), i));
            }
            out.into_dyn()
        };
        self.push(v, Op::Bmm { a, b, trans_b }, self.rg(&[a, b]))
    }

    /// 1D convolution. `x: [N, Cin, L]`, `w: [Cout, Cin, K]`, `b: [Cout]`, zero padding `pad` on both ends.
    pub fn conv1d(&self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let (value, cols) = {
            let (vx, vw, vb) = (self.value(x), self.value(w), self.value(b));
            let (n, cin, lin) = dims3(&vx);
            let (cout, cin_w, k) = dims3(&vw);
            assert_eq!(cin, cin_w, "conv1d: channel mismatch");
            assert!(lin + 2 * pad >= k, "conv1d: input shorter than kernel");
            let lout = (lin + 2 * pad - k) / stride + 1;
            let xs = vx.as_slice().unwrap();
            let mut cols = Array2::<f64>::zeros((n * lout, cin * k));
            {
                let cs = cols.as_slice_mut().unwrap();
                let width = cin * k;
                for ni in 0..n {
                    for t in 0..lout {
                        let row = &mut cs[(ni * lout + t) * width..(ni * lout + t + 1) * width];
                        for ci in 0..cin {
                            let base = (ni * cin + ci) * lin;
                            for kk in 0..k {
                                let pos = (t * stride + kk) as isize - pad as isize;
                                if pos >= 0 && (pos as usize) < lin {
                                    row[ci * k + kk] = xs[base + pos as usize];
                                }
                            }
                        }
                    }
                }
            }
            let w2 = vw.view().into_shape_with_order((cout, cin * k)).unwrap();
            let prod = cols.dot(&w2.t());
            let bs = vb.as_slice().unwrap();
            let mut out = ndarray::Array3::<f64>::zeros((n, cout, lout));
            {
                let os = out.as_slice_mut().unwrap();
                let ps = prod.as_slice().unwrap();
                for ni in 0..n {
                    for t in 0..lout {
                        let prow = &ps[(ni * lout + t) * cout..(ni * lout + t + 1) * cout];
                        for co in 0..cout {
                            os[(ni * cout + co) * lout + t] = prow[co] + bs[co];
                        }
                    }
                }
            }
            (out.into_dyn(), cols)
        };
        let rg = self.rg(&[x, w, b]);
        self.push(
            value,
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                pad,
                cols,
            },
            rg,
        )
    }

    /// Transposed 1D convolution. `x: [N, Cin, L]`, `w: [Cin, Cout, K]`, `b: [Cout]`.
    /// Output length is `(L - 1)·stride - 2·pad + K`.
    pub fn conv_transpose1d(&self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let (value, rows) = {
            let (vx, vw, vb) = (self.value(x), self.value(w), self.value(b));
            let (n, cin, lin) = dims3(&vx);
            let (cin_w, cout, k) = dims3(&vw);
            assert_eq!(cin, cin_w, "conv_transpose1d: channel mismatch");
            let lout = (lin - 1) * stride + k - 2 * pad;
            let rows = permuted(&vx, &[0, 2, 1])
                .into_shape_with_order((n * lin, cin))
                .unwrap();
            let w2 = vw.view().into_shape_with_order((cin, cout * k)).unwrap();
            let prod = rows.dot(&w2);
            let ps = prod.as_slice().unwrap();
            let bs = vb.as_slice().unwrap();
            let mut out = ndarray::Array3::<f64>::zeros((n, cout, lout));
            {
                let os = out.as_slice_mut().unwrap();
                for ni in 0..n {
                    for co in 0..cout {
                        let orow = &mut os[(ni * cout + co) * lout..(ni * cout + co + 1) * lout];
                        orow.iter_mut().for_each(|o| *o = bs[co]);
                        for t in 0..lin {
                            let prow = &ps[(ni * lin + t) * cout * k + co * k..][..k];
                            for (kk, p) in prow.iter().enumerate() {
                                let pos = (t * stride + kk) as isize - pad as isize;
                                if pos >= 0 && (pos as usize) < lout {
                                    orow[pos as usize] += p;
                                }
                            }
                        }
                    }
                }
            }
            (out.into_dyn(), rows)
        };
        let rg = self.rg(&[x, w, b]);
        self.push(
            value,
            Op::ConvTranspose1d {
                x,
                w,
                b,
                stride,
                pad,
                rows,
            },
            rg,
        )
    }

    /// Rows of `table: [K, D]` selected by `indices`, giving `[indices.len(), D]`.
    pub fn gather_rows(&self, table: Var, indices: &[usize]) -> Var {
        let v = {
            let vt = self.value(table);
            let t2 = to2(&vt);
            let d = t2.ncols();
            let mut out = Array2::<f64>::zeros((indices.len(), d));
            for (mut row, &i) in out.rows_mut().into_iter().zip(indices) {
                row.assign(&t2.row(i));
            }
            out.into_dyn()
        };
        self.push(v, Op::Gather(table, indices.to_vec()), self.rg(&[table]))
    }

    /// Softmax over the last axis.
    pub fn softmax(&self, a: Var) -> Var {
        let v = {
            let mut out = self.value(a).clone();
            let d = *out.shape().last().unwrap();
            for row in out.as_slice_mut().unwrap().chunks_mut(d) {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - m).exp();
                    s += *x;
                }
                row.iter_mut().for_each(|x| *x /= s);
            }
            out
        };
        self.push(v, Op::Softmax(a), self.rg(&[a]))
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta` of that width.
    pub fn layer_norm(&self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let (value, xhat, inv_std) = {
            let (vx, vg, vb) = (self.value(x), self.value(gamma), self.value(beta));
            let d = *vx.shape().last().unwrap();
            let rows = vx.len() / d;
            let mut xhat = Array2::<f64>::zeros((rows, d));
            let mut inv_std = Vec::with_capacity(rows);
            let mut out = vx.clone();
            let (gs, bs) = (vg.as_slice().unwrap(), vb.as_slice().unwrap());
            let xs = vx.as_slice().unwrap();
            let hs = xhat.as_slice_mut().unwrap();
            let os = out.as_slice_mut().unwrap();
            for r in 0..rows {
                let row = &xs[r * d..(r + 1) * d];
                let mean = row.iter().sum::<f64>() / d as f64;
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
                let is = 1.0 / (var + eps).sqrt();
                inv_std.push(is);
                for j in 0..d {
                    let h = (row[j] - mean) * is;
                    hs[r * d + j] = h;
                    os[r * d + j] = h * gs[j] + bs[j];
                }
            }
            (out, xhat, inv_std)
        };
        let rg = self.rg(&[x, gamma, beta]);
        self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        )
    }

    pub fn sum(&self, a: Var) -> Var {
        let v = ArrayD::from_elem(IxDyn(&[]), self.value(a).sum());
        self.push(v, Op::Sum(a), self.rg(&[a]))
    }

    pub fn mean(&self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Sum of squares of all entries.
    pub fn sum_sq(&self, a: Var) -> Var {
        let v = ArrayD::from_elem(IxDyn(&[]), self.value(a).iter().map(|x| x * x).sum());
        self.push(v, Op::SumSq(a), self.rg(&[a]))
    }

    /// Mean smooth-L1 loss against a constant target: `0.5·u²/β` for `|u| < β`, else `|u| - 0.5·β`.
    pub fn smooth_l1(&self, x: Var, target: Tensor, beta: f64) -> Var {
        assert_eq!(self.shape(x), target.shape(), "smooth_l1: shape mismatch");
        let v = {
            let vx = self.value(x);
            let n = vx.len() as f64;
            let s: f64 = Zip::from(&*vx)
                .and(&target)
                .fold(0.0, |acc, &a, &t| acc + smooth_l1_scalar(a - t, beta));
            ArrayD::from_elem(IxDyn(&[]), s / n)
        };
        self.push(v, Op::SmoothL1 { x, target, beta }, self.rg(&[x]))
    }

    /// Reverse sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[loss.0].value.len(), 1, "backward from non-scalar");
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(ArrayD::ones(nodes[loss.0].value.raw_dim()));

        let mut params = Vec::new();
        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Param(slot) = node.op {
                params.push((slot, i));
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let wants = |v: &Var| nodes[v.0].requires_grad;
            let mut acc = |v: Var, t: Tensor| {
                if !nodes[v.0].requires_grad {
                    return;
                }
                // kernels below read gradients as contiguous slices
                let t = if t.is_standard_layout() {
                    t
                } else {
                    t.as_standard_layout().into_owned()
                };
                match &mut grads[v.0] {
                    Some(existing) => *existing += &t,
                    slot @ None => *slot = Some(t),
                }
            };
            match &node.op {
                Op::Leaf | Op::Param(_) => {}
                Op::Add(a, b) => {
                    if wants(b) {
                        acc(*b, g.clone());
                    }
                    acc(*a, g);
                }
                Op::Sub(a, b) => {
                    if wants(b) {
                        acc(*b, -&g);
                    }
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    if wants(a) {
                        acc(*a, &g * &nodes[b.0].value);
                    }
                    if wants(b) {
                        acc(*b, &g * &nodes[a.0].value);
                    }
                }
                Op::MulConst(a, c) => acc(*a, &g * c),
                Op::Scale(a, k) => acc(*a, g * *k),
                Op::AddScalar(a) => acc(*a, g),
                Op::AddBroadcast(a, b) => {
                    if wants(b) {
                        let bshape = nodes[b.0].value.raw_dim();
                        let inner = nodes[b.0].value.len();
                        let mut gb = vec![0.0; inner];
                        for chunk in g.as_slice().unwrap().chunks(inner) {
                            for (o, x) in gb.iter_mut().zip(chunk) {
                                *o += x;
                            }
                        }
                        acc(*b, ArrayD::from_shape_vec(bshape, gb).unwrap());
                    }
                    acc(*a, g);
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&nodes[a.0].value)
                        .for_each(|g, &x| {
                            if x <= 0.0 {
                                *g = 0.0
                            }
                        });
                    acc(*a, ga);
                }
                Op::Softplus(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&nodes[a.0].value)
                        .for_each(|g, &x| *g *= sigmoid(x));
                    acc(*a, ga);
                }
                Op::Reshape(a) => {
                    let shape = nodes[a.0].value.raw_dim();
                    acc(*a, g.into_shape_with_order(shape).unwrap());
                }
                Op::Permute(a, axes) => {
                    let mut inv = vec![0; axes.len()];
                    for (i, &ax) in axes.iter().enumerate() {
                        inv[ax] = i;
                    }
                    acc(*a, permuted(&g, &inv));
                }
                Op::MatMul(a, b) => {
                    let g2 = to2(&g);
                    if wants(a) {
                        acc(*a, g2.dot(&to2(&nodes[b.0].value).t()).into_dyn());
                    }
                    if wants(b) {
                        acc(*b, to2(&nodes[a.0].value).t().dot(&g2).into_dyn());
                    }
                }
                Op::Bmm { a, b, trans_b } => {
                    let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                    let batch = va.shape()[0];
                    let mut ga = ArrayD::<f64>::zeros(va.raw_dim());
                    let mut gb = ArrayD::<f64>::zeros(vb.raw_dim());
                    for i in 0..batch {
                        let ai = va.index_axis(Axis(0), i).into_dimensionality::<Ix2>().unwrap();
                        let bi = vb.index_axis(Axis(0), i).into_dimensionality::<Ix2>().unwrap();
                        let gi = g.index_axis(Axis(0), i).into_dimensionality::<Ix2>().unwrap();
                        let mut gai =
                            ga.index_axis_mut(Axis(0), i).into_dimensionality::<Ix2>().unwrap();
                        let mut gbi =
                            gb.index_axis_mut(Axis(0), i).into_dimensionality::<Ix2>().unwrap();
                        if *trans_b {
                            // C = A·Bᵀ: dA = dC·B, dB = dCᵀ·A
                            general_mat_mul(1.0, &gi, &bi, 0.0, &mut gai);
                            general_mat_mul(1.0, &gi.t(), &ai, 0.0, &mut gbi);
                        } else {
                            general_mat_mul(1.0, &gi, &bi.t(), 0.0, &mut gai);
                            general_mat_mul(1.0, &ai.t(), &gi, 0.0, &mut gbi);
                        }
                    }
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Conv1d {
                    x,
                    w,
                    b,
                    stride,
                    pad,
                    cols,
                } => {
                    let (n, cout, lout) = dims3(&g);
                    let vw = &nodes[w.0].value;
                    let (_, cin, k) = dims3(vw);
                    let lin = nodes[x.0].value.shape()[2];
                    let g2 = permuted(&g, &[0, 2, 1])
                        .into_shape_with_order((n * lout, cout))
                        .unwrap();
                    if wants(b) {
                        acc(*b, g2.sum_axis(Axis(0)).into_dyn());
                    }
                    if wants(w) {
                        let gw = g2.t().dot(cols);
                        acc(*w, gw.into_shape_with_order(vw.raw_dim()).unwrap());
                    }
                    if wants(x) {
                        let w2 = vw.view().into_shape_with_order((cout, cin * k)).unwrap();
                        let gcols = g2.dot(&w2);
                        let gs = gcols.as_slice().unwrap();
                        let mut gx = vec![0.0; n * cin * lin];
                        let width = cin * k;
                        for ni in 0..n {
                            for t in 0..lout {
                                let row = &gs[(ni * lout + t) * width..][..width];
                                for ci in 0..cin {
                                    let base = (ni * cin + ci) * lin;
                                    for kk in 0..k {
                                        let pos = (t * stride + kk) as isize - *pad as isize;
                                        if pos >= 0 && (pos as usize) < lin {
                                            gx[base + pos as usize] += row[ci * k + kk];
                                        }
                                    }
                                }
                            }
                        }
                        acc(*x, ArrayD::from_shape_vec(IxDyn(&[n, cin, lin]), gx).unwrap());
                    }
                }
                Op::ConvTranspose1d {
                    x,
                    w,
                    b,
                    stride,
                    pad,
                    rows,
                } => {
                    let (n, cout, lout) = dims3(&g);
                    let vw = &nodes[w.0].value;
                    let (cin, _, k) = dims3(vw);
                    let lin = nodes[x.0].value.shape()[2];
                    if wants(b) {
                        acc(*b, g.sum_axis(Axis(2)).sum_axis(Axis(0)));
                    }
                    let gs = g.as_slice().unwrap();
                    let mut gcol = Array2::<f64>::zeros((n * lin, cout * k));
                    {
                        let cs = gcol.as_slice_mut().unwrap();
                        for ni in 0..n {
                            for t in 0..lin {
                                let row = &mut cs[(ni * lin + t) * cout * k..][..cout * k];
                                for co in 0..cout {
                                    let grow = &gs[(ni * cout + co) * lout..][..lout];
                                    for kk in 0..k {
                                        let pos = (t * stride + kk) as isize - *pad as isize;
                                        if pos >= 0 && (pos as usize) < lout {
                                            row[co * k + kk] = grow[pos as usize];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    let w2 = vw.view().into_shape_with_order((cin, cout * k)).unwrap();
                    if wants(w) {
                        let gw = rows.t().dot(&gcol);
                        acc(*w, gw.into_shape_with_order(vw.raw_dim()).unwrap());
                    }
                    if wants(x) {
                        let gr = gcol.dot(&w2.t());
                        let gx = gr
                            .into_shape_with_order((n, lin, cin))
                            .unwrap()
                            .permuted_axes([0, 2, 1])
                            .as_standard_layout()
                            .into_owned();
                        acc(*x, gx.into_dyn());
                    }
                }
                Op::Gather(table, indices) => {
                    let mut gt = ArrayD::<f64>::zeros(nodes[table.0].value.raw_dim());
                    {
                        let g2 = to2(&g);
                        let mut gt2 = gt.view_mut().into_dimensionality::<Ix2>().unwrap();
                        for (row, &i) in g2.rows().into_iter().zip(indices) {
                            let mut dst = gt2.row_mut(i);
                            dst += &row;
                        }
                    }
                    acc(*table, gt);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let d = *y.shape().last().unwrap();
                    let mut ga = g;
                    for (grow, yrow) in ga
                        .as_slice_mut()
                        .unwrap()
                        .chunks_mut(d)
                        .zip(y.as_slice().unwrap().chunks(d))
                    {
                        let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                        for (gv, yv) in grow.iter_mut().zip(yrow) {
                            *gv = yv * (*gv - dot);
                        }
                    }
                    acc(*a, ga);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let d = xhat.ncols();
                    let gs = g.as_slice().unwrap();
                    let hs = xhat.as_slice().unwrap();
                    if wants(beta) || wants(gamma) {
                        let mut gg = vec![0.0; d];
                        let mut gbt = vec![0.0; d];
                        for (grow, hrow) in gs.chunks(d).zip(hs.chunks(d)) {
                            for j in 0..d {
                                gg[j] += grow[j] * hrow[j];
                                gbt[j] += grow[j];
                            }
                        }
                        acc(*gamma, ArrayD::from_shape_vec(IxDyn(&[d]), gg).unwrap());
                        acc(*beta, ArrayD::from_shape_vec(IxDyn(&[d]), gbt).unwrap());
                    }
                    if wants(x) {
                        let gam = nodes[gamma.0].value.as_slice().unwrap();
                        let mut gx = ArrayD::<f64>::zeros(g.raw_dim());
                        let gxs = gx.as_slice_mut().unwrap();
                        let df = d as f64;
                        for (r, is) in inv_std.iter().enumerate() {
                            let grow = &gs[r * d..][..d];
                            let hrow = &hs[r * d..][..d];
                            let mut s1 = 0.0;
                            let mut s2 = 0.0;
                            for j in 0..d {
                                let gh = grow[j] * gam[j];
                                s1 += gh;
                                s2 += gh * hrow[j];
                            }
                            for j in 0..d {
                                let gh = grow[j] * gam[j];
                                gxs[r * d + j] = is / df * (df * gh - s1 - hrow[j] * s2);
                            }
                        }
                        acc(*x, gx);
                    }
                }
                Op::Sum(a) => {
                    let g0 = *g.iter().next().unwrap();
                    acc(*a, ArrayD::from_elem(nodes[a.0].value.raw_dim(), g0));
                }
                Op::SumSq(a) => {
                    let g0 = *g.iter().next().unwrap();
                    acc(*a, nodes[a.0].value.mapv(|x| 2.0 * x * g0));
                }
                Op::SmoothL1 { x, target, beta } => {
                    let g0 = *g.iter().next().unwrap();
                    let vx = &nodes[x.0].value;
                    let n = vx.len() as f64;
                    let mut gx = vx - target;
                    gx.mapv_inplace(|u| {
                        let d = if u.abs() < *beta { u / beta } else { u.signum() };
                        d * g0 / n
                    });
                    acc(*x, gx);
                }
            }
        }
        Gradients { grads, params }
    }
}

fn dims3(t: &Tensor) -> (usize, usize, usize) {
    let s = t.shape();
    assert_eq!(s.len(), 3, "expected rank-3 tensor, got {s:?}");
    (s[0], s[1], s[2])
}

pub fn smooth_l1_scalar(u: f64, beta: f64) -> f64 {
    if u.abs() < beta {
        0.5 * u * u / beta
    } else {
        u.abs() - 0.5 * beta
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. a parameter slot, summed over every node bound to it.
    pub fn param(&self, slot: usize) -> Option<Tensor> {
        let mut out: Option<Tensor> = None;
        for &(s, node) in &self.params {
            if s != slot {
                continue;
            }
            if let Some(g) = &self.grads[node] {
                match &mut out {
                    Some(o) => *o += g,
                    None => out = Some(g.clone()),
                }
            }
        }
        out
    }

    /// Gradient w.r.t. any node that required one; `None` if no path reached it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}
