//! Reverse-mode autodiff over f64 tensors.
//!
//! A define-by-run tape with the fixed op set this model family needs:
//! strided convolution, ReLU, global average pooling, linear layers,
//! hashed-embedding mean pooling, RMS fusion over stacked rows, L2
//! normalization, scaled similarity matrices, and soft-target softmax
//! cross-entropy. Values are computed eagerly at insertion; `backward`
//! walks the tape once in reverse. Node ids are strictly increasing, so a
//! single reverse sweep visits children before parents.

use crate::tensor::Tensor;

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    /// Constant input; `param` carries the parameter-slot index for
    /// trainable leaves.
    Leaf { param: Option<usize> },
    Conv2d {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        stride: usize,
        pad: usize,
    },
    LeakyRelu { x: NodeId, slope: f64 },
    GlobalAvgPool { x: NodeId },
    Linear { x: NodeId, w: NodeId, b: NodeId },
    EmbedMeanPool { table: NodeId, tokens: Vec<u32> },
    Stack { parts: Vec<NodeId> },
    RmsFuseRows { x: NodeId },
    Add { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: f64 },
    L2Normalize { x: NodeId },
    MatMulTransB { a: NodeId, b: NodeId },
    /// y = x * exp(-t), t a scalar node (log-temperature).
    ScaleExpNeg { x: NodeId, t: NodeId },
    /// Mean over rows of softmax cross-entropy against fixed target rows.
    SoftmaxCeRows { logits: NodeId, targets: Tensor },
    Transpose { x: NodeId },
}

pub struct Graph {
    ops: Vec<Op>,
    values: Vec<Tensor>,
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            ops: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id]
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.ops.push(op);
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { param: None }, value)
    }

    pub fn param(&mut self, slot: usize, value: Tensor) -> NodeId {
        self.push(Op::Leaf { param: Some(slot) }, value)
    }

    pub fn conv2d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        stride: usize,
        pad: usize,
    ) -> NodeId {
        let value = conv2d_fwd(
            &self.values[input],
            &self.values[weight],
            &self.values[bias],
            stride,
            pad,
        );
        self.push(
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                pad,
            },
            value,
        )
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.leaky_relu(x, 0.0)
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        let value = Tensor::from_vec(
            self.values[x].shape(),
            self.values[x]
                .data()
                .iter()
                .map(|&v| if v > 0.0 { v } else { slope * v })
                .collect(),
        );
        self.push(Op::LeakyRelu { x, slope }, value)
    }

    pub fn global_avg_pool(&mut self, x: NodeId) -> NodeId {
        let v = &self.values[x];
        let (c, h, w) = (v.shape()[0], v.shape()[1], v.shape()[2]);
        let mut out = vec![0.0; c];
        for ci in 0..c {
            let plane = &v.data()[ci * h * w..(ci + 1) * h * w];
            out[ci] = plane.iter().sum::<f64>() / (h * w) as f64;
        }
        self.push(Op::GlobalAvgPool { x }, Tensor::from_vec(&[c], out))
    }

    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let value = linear_fwd(&self.values[x], &self.values[w], &self.values[b]);
        self.push(Op::Linear { x, w, b }, value)
    }

    pub fn embed_mean_pool(&mut self, table: NodeId, tokens: Vec<u32>) -> NodeId {
        let value = embed_mean_pool_fwd(&self.values[table], &tokens);
        self.push(Op::EmbedMeanPool { table, tokens }, value)
    }

    pub fn stack(&mut self, parts: Vec<NodeId>) -> NodeId {
        assert!(!parts.is_empty(), "stack of zero rows");
        let d = self.values[parts[0]].len();
        let mut data = Vec::with_capacity(parts.len() * d);
        for &p in &parts {
            debug_assert_eq!(self.values[p].len(), d);
            data.extend_from_slice(self.values[p].data());
        }
        let value = Tensor::from_vec(&[parts.len(), d], data);
        self.push(Op::Stack { parts }, value)
    }

    pub fn rms_fuse_rows(&mut self, x: NodeId) -> NodeId {
        let value = rms_fuse_fwd(&self.values[x]);
        self.push(Op::RmsFuseRows { x }, value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.values[a], &self.values[b]);
        debug_assert_eq!(va.shape(), vb.shape());
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::from_vec(va.shape(), data);
        self.push(Op::Add { a, b }, value)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = &self.values[x];
        let value = Tensor::from_vec(v.shape(), v.data().iter().map(|&t| t * c).collect());
        self.push(Op::Scale { x, c }, value)
    }

    pub fn l2_normalize(&mut self, x: NodeId) -> NodeId {
        let v = &self.values[x];
        let norm = l2_norm(v.data());
        // A zero or overflowed feature poisons the batch as NaN; the training
        // loop reports a non-finite loss as divergence.
        let value = if norm.is_finite() && norm > 0.0 {
            Tensor::from_vec(v.shape(), v.data().iter().map(|&t| t / norm).collect())
        } else {
            Tensor::from_vec(v.shape(), vec![f64::NAN; v.len()])
        };
        self.push(Op::L2Normalize { x }, value)
    }

    pub fn matmul_trans_b(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = matmul_tb(&self.values[a], &self.values[b]);
        self.push(Op::MatMulTransB { a, b }, value)
    }

    pub fn scale_exp_neg(&mut self, x: NodeId, t: NodeId) -> NodeId {
        let s = (-self.values[t].item()).exp();
        let v = &self.values[x];
        let value = Tensor::from_vec(v.shape(), v.data().iter().map(|&u| u * s).collect());
        self.push(Op::ScaleExpNeg { x, t }, value)
    }

    pub fn softmax_ce_rows(&mut self, logits: NodeId, targets: Tensor) -> NodeId {
        let value = Tensor::scalar(softmax_ce_rows_fwd(&self.values[logits], &targets));
        self.push(Op::SoftmaxCeRows { logits, targets }, value)
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let v = &self.values[x];
        let (n, m) = (v.shape()[0], v.shape()[1]);
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                data[j * n + i] = v.data()[i * m + j];
            }
        }
        self.push(Op::Transpose { x }, Tensor::from_vec(&[m, n], data))
    }

    /// Reverse sweep from a scalar root. Returns per-node gradients.
    pub fn backward(&self, root: NodeId) -> Gradients {
        assert_eq!(self.values[root].len(), 1, "backward root must be scalar");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.values.len()];
        grads[root] = Some(Tensor::scalar(1.0));

        for id in (0..=root).rev() {
            let Some(g) = grads[id].clone() else { continue };
            match &self.ops[id] {
                Op::Leaf { .. } => {}
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    stride,
                    pad,
                } => {
                    let (gi, gw, gb) = conv2d_bwd(
                        &self.values[*input],
                        &self.values[*weight],
                        &g,
                        *stride,
                        *pad,
                    );
                    accumulate(&mut grads, *input, gi);
                    accumulate(&mut grads, *weight, gw);
                    accumulate(&mut grads, *bias, gb);
                }
                Op::LeakyRelu { x, slope } => {
                    let vx = &self.values[*x];
                    let gx = Tensor::from_vec(
                        vx.shape(),
                        vx.data()
                            .iter()
                            .zip(g.data())
                            .map(|(&v, &gg)| if v > 0.0 { gg } else { slope * gg })
                            .collect(),
                    );
                    accumulate(&mut grads, *x, gx);
                }
                Op::GlobalAvgPool { x } => {
                    let vx = &self.values[*x];
                    let (c, h, w) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
                    let mut gx = vec![0.0; c * h * w];
                    for ci in 0..c {
                        let gv = g.data()[ci] / (h * w) as f64;
                        for p in &mut gx[ci * h * w..(ci + 1) * h * w] {
                            *p = gv;
                        }
                    }
                    accumulate(&mut grads, *x, Tensor::from_vec(vx.shape(), gx));
                }
                Op::Linear { x, w, b } => {
                    let (gx, gw, gb) =
                        linear_bwd(&self.values[*x], &self.values[*w], &g);
                    let _ = b;
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *w, gw);
                    accumulate(&mut grads, *b, gb);
                }
                Op::EmbedMeanPool { table, tokens } => {
                    let vt = &self.values[*table];
                    let (_bins, e) = (vt.shape()[0], vt.shape()[1]);
                    let mut gt = Tensor::zeros(vt.shape());
                    let scale = 1.0 / tokens.len() as f64;
                    for &tok in tokens {
                        let row = tok as usize * e;
                        for j in 0..e {
                            gt.data_mut()[row + j] += g.data()[j] * scale;
                        }
                    }
                    accumulate(&mut grads, *table, gt);
                }
                Op::Stack { parts } => {
                    let d = self.values[parts[0]].len();
                    for (i, &p) in parts.iter().enumerate() {
                        let gp = Tensor::from_vec(
                            self.values[p].shape(),
                            g.data()[i * d..(i + 1) * d].to_vec(),
                        );
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::RmsFuseRows { x } => {
                    let vx = &self.values[*x];
                    let y = &self.values[id];
                    let (k, d) = (vx.shape()[0], vx.shape()[1]);
                    let mut gx = vec![0.0; k * d];
                    for i in 0..k {
                        for j in 0..d {
                            let yj = y.data()[j];
                            if yj > 0.0 {
                                gx[i * d + j] =
                                    g.data()[j] * vx.data()[i * d + j] / (k as f64 * yj);
                            }
                        }
                    }
                    accumulate(&mut grads, *x, Tensor::from_vec(vx.shape(), gx));
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Scale { x, c } => {
                    let mut gx = g.clone();
                    gx.scale(*c);
                    accumulate(&mut grads, *x, gx);
                }
                Op::L2Normalize { x } => {
                    let vx = &self.values[*x];
                    let y = &self.values[id];
                    let norm = l2_norm(vx.data());
                    let dot: f64 = y
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(a, b)| a * b)
                        .sum();
                    let gx = Tensor::from_vec(
                        vx.shape(),
                        y.data()
                            .iter()
                            .zip(g.data())
                            .map(|(&yi, &gi)| (gi - yi * dot) / norm)
                            .collect(),
                    );
                    accumulate(&mut grads, *x, gx);
                }
                Op::MatMulTransB { a, b } => {
                    let (va, vb) = (&self.values[*a], &self.values[*b]);
                    let (n, d) = (va.shape()[0], va.shape()[1]);
                    let m = vb.shape()[0];
                    let mut ga = vec![0.0; n * d];
                    let mut gb = vec![0.0; m * d];
                    for i in 0..n {
                        for j in 0..m {
                            let gij = g.data()[i * m + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for kk in 0..d {
                                ga[i * d + kk] += gij * vb.data()[j * d + kk];
                                gb[j * d + kk] += gij * va.data()[i * d + kk];
                            }
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::from_vec(va.shape(), ga));
                    accumulate(&mut grads, *b, Tensor::from_vec(vb.shape(), gb));
                }
                Op::ScaleExpNeg { x, t } => {
                    let s = (-self.values[*t].item()).exp();
                    let vx = &self.values[*x];
                    let gx = Tensor::from_vec(
                        vx.shape(),
                        g.data().iter().map(|&gg| gg * s).collect(),
                    );
                    let gt: f64 = -g
                        .data()
                        .iter()
                        .zip(self.values[id].data())
                        .map(|(gg, yy)| gg * yy)
                        .sum::<f64>();
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *t, Tensor::scalar(gt));
                }
                Op::SoftmaxCeRows { logits, targets } => {
                    let vl = &self.values[*logits];
                    let (n, m) = (vl.shape()[0], vl.shape()[1]);
                    let mut gl = vec![0.0; n * m];
                    let gscale = g.item() / n as f64;
                    for i in 0..n {
                        let row = &vl.data()[i * m..(i + 1) * m];
                        let probs = softmax(row);
                        for j in 0..m {
                            gl[i * m + j] =
                                gscale * (probs[j] - targets.data()[i * m + j]);
                        }
                    }
                    accumulate(&mut grads, *logits, Tensor::from_vec(vl.shape(), gl));
                }
                Op::Transpose { x } => {
                    let (m, n) = (g.shape()[0], g.shape()[1]);
                    let mut gx = vec![0.0; n * m];
                    for i in 0..m {
                        for j in 0..n {
                            gx[j * m + i] = g.data()[i * n + j];
                        }
                    }
                    accumulate(&mut grads, *x, Tensor::from_vec(&[n, m], gx));
                }
            }
        }
        Gradients { grads }
    }

    /// Gradients of parameter leaves, keyed by parameter slot.
    pub fn param_grads(&self, grads: &Gradients) -> Vec<(usize, Tensor)> {
        let mut out = Vec::new();
        for (id, op) in self.ops.iter().enumerate() {
            if let Op::Leaf { param: Some(slot) } = op {
                if let Some(g) = grads.get(id) {
                    out.push((*slot, g.clone()));
                }
            }
        }
        out
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor) {
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

// ── Shared forward/backward kernels ─────────────────────────────────────────

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

pub(crate) fn conv2d_fwd(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Tensor {
    let (cin, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (cout, kcin, kh, kw) = (
        weight.shape()[0],
        weight.shape()[1],
        weight.shape()[2],
        weight.shape()[3],
    );
    assert_eq!(cin, kcin, "conv2d channel mismatch");
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; cout * ho * wo];
    let idata = input.data();
    let wdata = weight.data();
    for co in 0..cout {
        let wbase = co * cin * kh * kw;
        for oy in 0..ho {
            let iy0 = (oy * stride) as i64 - pad as i64;
            for ox in 0..wo {
                let ix0 = (ox * stride) as i64 - pad as i64;
                let mut acc = bias.data()[co];
                for ci in 0..cin {
                    let ibase = ci * h * w;
                    let wcbase = wbase + ci * kh * kw;
                    for ky in 0..kh {
                        let iy = iy0 + ky as i64;
                        if iy < 0 || iy >= h as i64 {
                            continue;
                        }
                        let irow = ibase + iy as usize * w;
                        let wrow = wcbase + ky * kw;
                        for kx in 0..kw {
                            let ix = ix0 + kx as i64;
                            if ix < 0 || ix >= w as i64 {
                                continue;
                            }
                            acc += idata[irow + ix as usize] * wdata[wrow + kx];
                        }
                    }
                }
                out[co * ho * wo + oy * wo + ox] = acc;
            }
        }
    }
    Tensor::from_vec(&[cout, ho, wo], out)
}

pub(crate) fn conv2d_bwd(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
) -> (Tensor, Tensor, Tensor) {
    let (cin, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (cout, _, kh, kw) = (
        weight.shape()[0],
        weight.shape()[1],
        weight.shape()[2],
        weight.shape()[3],
    );
    let (ho, wo) = (grad_out.shape()[1], grad_out.shape()[2]);
    let mut gi = vec![0.0; cin * h * w];
    let mut gw = vec![0.0; weight.len()];
    let mut gb = vec![0.0; cout];
    let idata = input.data();
    let wdata = weight.data();
    let gdata = grad_out.data();
    for co in 0..cout {
        let wbase = co * cin * kh * kw;
        for oy in 0..ho {
            let iy0 = (oy * stride) as i64 - pad as i64;
            for ox in 0..wo {
                let ix0 = (ox * stride) as i64 - pad as i64;
                let g = gdata[co * ho * wo + oy * wo + ox];
                if g == 0.0 {
                    continue;
                }
                gb[co] += g;
                for ci in 0..cin {
                    let ibase = ci * h * w;
                    let wcbase = wbase + ci * kh * kw;
                    for ky in 0..kh {
                        let iy = iy0 + ky as i64;
                        if iy < 0 || iy >= h as i64 {
                            continue;
                        }
                        let irow = ibase + iy as usize * w;
                        let wrow = wcbase + ky * kw;
                        for kx in 0..kw {
                            let ix = ix0 + kx as i64;
                            if ix < 0 || ix >= w as i64 {
                                continue;
                            }
                            gw[wrow + kx] += g * idata[irow + ix as usize];
                            gi[irow + ix as usize] += g * wdata[wrow + kx];
                        }
                    }
                }
            }
        }
    }
    (
        Tensor::from_vec(input.shape(), gi),
        Tensor::from_vec(weight.shape(), gw),
        Tensor::from_vec(&[cout], gb),
    )
}

/// x: [k] or [n, k]; w: [k, m]; b: [m]. Output rank follows `x`.
pub(crate) fn linear_fwd(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (k, m) = (w.shape()[0], w.shape()[1]);
    let (n, vec_in) = match x.shape() {
        [kk] => {
            assert_eq!(*kk, k, "linear input dim mismatch");
            (1, true)
        }
        [n, kk] => {
            assert_eq!(*kk, k, "linear input dim mismatch");
            (*n, false)
        }
        other => panic!("linear expects rank 1 or 2, got {other:?}"),
    };
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let xi = &x.data()[i * k..(i + 1) * k];
        let oi = &mut out[i * m..(i + 1) * m];
        oi.copy_from_slice(b.data());
        for (kk, &xv) in xi.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wrow = &w.data()[kk * m..(kk + 1) * m];
            for j in 0..m {
                oi[j] += xv * wrow[j];
            }
        }
    }
    if vec_in {
        Tensor::from_vec(&[m], out)
    } else {
        Tensor::from_vec(&[n, m], out)
    }
}

pub(crate) fn linear_bwd(x: &Tensor, w: &Tensor, grad_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (k, m) = (w.shape()[0], w.shape()[1]);
    let n = if x.shape().len() == 1 { 1 } else { x.shape()[0] };
    let mut gx = vec![0.0; n * k];
    let mut gw = vec![0.0; k * m];
    let mut gb = vec![0.0; m];
    for i in 0..n {
        let xi = &x.data()[i * k..(i + 1) * k];
        let gi = &grad_out.data()[i * m..(i + 1) * m];
        for j in 0..m {
            gb[j] += gi[j];
        }
        for kk in 0..k {
            let wrow = &w.data()[kk * m..(kk + 1) * m];
            let mut acc = 0.0;
            for j in 0..m {
                acc += gi[j] * wrow[j];
                gw[kk * m + j] += xi[kk] * gi[j];
            }
            gx[i * k + kk] = acc;
        }
    }
    (
        Tensor::from_vec(x.shape(), gx),
        Tensor::from_vec(w.shape(), gw),
        Tensor::from_vec(&[m], gb),
    )
}

pub(crate) fn embed_mean_pool_fwd(table: &Tensor, tokens: &[u32]) -> Tensor {
    assert!(!tokens.is_empty(), "embed_mean_pool of zero tokens");
    let e = table.shape()[1];
    let mut out = vec![0.0; e];
    for &tok in tokens {
        let row = &table.data()[tok as usize * e..(tok as usize + 1) * e];
        for j in 0..e {
            out[j] += row[j];
        }
    }
    let scale = 1.0 / tokens.len() as f64;
    for v in &mut out {
        *v *= scale;
    }
    Tensor::from_vec(&[e], out)
}

/// Elementwise sqrt of the column means of squares of a [k, d] matrix.
pub(crate) fn rms_fuse_fwd(x: &Tensor) -> Tensor {
    let (k, d) = (x.shape()[0], x.shape()[1]);
    let mut out = vec![0.0; d];
    for i in 0..k {
        for j in 0..d {
            let v = x.data()[i * d + j];
            out[j] += v * v;
        }
    }
    for v in &mut out {
        *v = (*v / k as f64).sqrt();
    }
    Tensor::from_vec(&[d], out)
}

pub(crate) fn matmul_tb(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, d) = (a.shape()[0], a.shape()[1]);
    let m = b.shape()[0];
    assert_eq!(b.shape()[1], d, "matmul_tb inner dim mismatch");
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let ai = &a.data()[i * d..(i + 1) * d];
        for j in 0..m {
            let bj = &b.data()[j * d..(j + 1) * d];
            out[i * m + j] = ai.iter().zip(bj).map(|(x, y)| x * y).sum();
        }
    }
    Tensor::from_vec(&[n, m], out)
}

pub(crate) fn softmax_ce_rows_fwd(logits: &Tensor, targets: &Tensor) -> f64 {
    let (n, m) = (logits.shape()[0], logits.shape()[1]);
    assert_eq!(targets.shape(), logits.shape(), "target shape mismatch");
    let mut total = 0.0;
    for i in 0..n {
        let row = &logits.data()[i * m..(i + 1) * m];
        let trow = &targets.data()[i * m..(i + 1) * m];
        let lse = log_sum_exp(row);
        let dot: f64 = row.iter().zip(trow).map(|(x, t)| x * t).sum();
        total += lse - dot;
    }
    total / n as f64
}
