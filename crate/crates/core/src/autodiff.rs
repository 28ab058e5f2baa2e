// Copyright 2026 The Supermask Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Reverse-mode automatic differentiation on a linear tape.
//!
//! Every operation appends a node holding its output and whatever it needs
//! for the backward pass. [`Tape::backward`] walks the nodes in exact reverse
//! order and accumulates gradients additively into every input that needs one.

use crate::error::{Error, Result};
use crate::kernels::{self, ConvGeometry};
use crate::tensor::{Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Normalisation statistics to use for a batch-norm node.
#[derive(Debug, Clone, Copy)]
pub enum NormStats<'a, T> {
    /// Normalise with the statistics of the current batch.
    Batch,
    /// Normalise with fixed running statistics.
    Running { mean: &'a [T], var: &'a [T] },
}

/// Per-channel batch statistics observed by a training-mode batch-norm node.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMoments<T> {
    pub mean: Vec<T>,
    /// Biased (population) variance.
    pub var: Vec<T>,
    /// Number of values reduced per channel.
    pub count: usize,
}

pub const BN_EPS: f64 = 1e-5;

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Linear {
        x: Var,
        w: Var,
    },
    Conv2d {
        x: Var,
        w: Var,
        geom: ConvGeometry,
    },
    Relu(Var),
    MaxPool2 {
        x: Var,
        argmax: Vec<usize>,
    },
    BatchNorm {
        x: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        channels: usize,
        spatial: usize,
        batch_stats: bool,
    },
    Reshape(Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        log_probs: Vec<T>,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Linear { .. } => "linear",
            Op::Conv2d { .. } => "conv2d",
            Op::Relu(_) => "relu",
            Op::MaxPool2 { .. } => "maxpool2",
            Op::BatchNorm { .. } => "batchnorm",
            Op::Reshape(_) => "reshape",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Sum(_) => "sum",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match *self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Mul(a, b) => vec![a, b],
            Op::Linear { x, w } | Op::Conv2d { x, w, .. } => vec![x, w],
            Op::Relu(x) | Op::Reshape(x) | Op::Scale(x, _) | Op::Sum(x) => vec![x],
            Op::MaxPool2 { x, .. } | Op::BatchNorm { x, .. } => vec![x],
            Op::CrossEntropy { logits, .. } => vec![logits],
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
    trainable: bool,
}

pub struct Tape<T = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input. Only trainable leaves receive gradients.
    pub fn leaf(&mut self, value: Tensor<T>, trainable: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: trainable,
            trainable,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(format!("{} output", op.name())));
        }
        let needs_grad = op.inputs().iter().any(|&i| self.needs(i));
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            trainable: false,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = crate::tensor::matmul(self.value(a), self.value(b))?;
        self.push(out, Op::MatMul(a, b))
    }

    /// `x[N,in] · wᵀ` for a weight stored as `[out,in]`.
    pub fn linear(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xs, ws) = (self.value(x).shape(), self.value(w).shape());
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(Error::shape(format!("linear x{:?} w{:?}", xs, ws)));
        }
        let (n, k, m) = (xs[0], xs[1], ws[0]);
        let mut out = vec![T::zero(); n * m];
        T::gemm(
            n,
            k,
            m,
            T::one(),
            self.value(x).data(),
            k as isize,
            1,
            self.value(w).data(),
            1,
            k as isize,
            T::zero(),
            &mut out,
            m as isize,
            1,
        );
        let out = Tensor::new(vec![n, m], out)?;
        self.push(out, Op::Linear { x, w })
    }

    /// Cross-correlation of `x[N,C,H,W]` with `w[F,C,kh,kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let (xs, ws) = (self.value(x).shape(), self.value(w).shape());
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] {
            return Err(Error::shape(format!("conv2d x{:?} w{:?}", xs, ws)));
        }
        let geom = ConvGeometry::new(xs[1], xs[2], xs[3], ws[2], ws[3], stride, pad)
            .ok_or_else(|| {
                Error::shape(format!(
                    "conv2d output size not integral for x{:?} w{:?} stride {} pad {}",
                    xs, ws, stride, pad
                ))
            })?;
        let (n, f) = (xs[0], ws[0]);
        let out = kernels::conv2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            n,
            f,
            &geom,
        );
        let out = Tensor::new(vec![n, f, geom.out_h, geom.out_w], out)?;
        self.push(out, Op::Conv2d { x, w, geom })
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self
            .value(x)
            .map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(out, Op::Relu(x))
    }

    /// 2×2 max pooling, stride 2, on `[N,C,H,W]`.
    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 4 || xs[2] < 2 || xs[3] < 2 {
            return Err(Error::shape(format!("maxpool2 on {:?}", xs)));
        }
        let (out, argmax) =
            kernels::maxpool2_forward(self.value(x).data(), xs[0] * xs[1], xs[2], xs[3]);
        let out = Tensor::new(vec![xs[0], xs[1], xs[2] / 2, xs[3] / 2], out)?;
        self.push(out, Op::MaxPool2 { x, argmax })
    }

    /// Non-affine batch normalisation over `[N,C,...]`. With
    /// [`NormStats::Batch`] the observed moments are returned so the caller
    /// can update running statistics.
    pub fn batch_norm(
        &mut self,
        x: Var,
        stats: NormStats<'_, T>,
    ) -> Result<(Var, Option<BatchMoments<T>>)> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() < 2 {
            return Err(Error::shape(format!("batch_norm on {:?}", xs)));
        }
        let (n, c) = (xs[0], xs[1]);
        let spatial: usize = xs[2..].iter().product();
        let eps = T::from_f64(BN_EPS);
        let data = self.value(x).data();
        let (mean, var, moments) = match stats {
            NormStats::Batch => {
                let (m, v) = kernels::channel_moments(data, n, c, spatial);
                let moments = BatchMoments {
                    mean: m.clone(),
                    var: v.clone(),
                    count: n * spatial,
                };
                (m, v, Some(moments))
            }
            NormStats::Running { mean, var } => {
                if mean.len() != c || var.len() != c {
                    return Err(Error::shape(format!(
                        "batch_norm has {} running stats for {} channels",
                        mean.len(),
                        c
                    )));
                }
                (mean.to_vec(), var.to_vec(), None)
            }
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = vec![T::zero(); data.len()];
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * spatial;
                for s in off..off + spatial {
                    xhat[s] = (data[s] - mean[ch]) * inv_std[ch];
                }
            }
        }
        let out = Tensor::new(xs, xhat.clone())?;
        let var = self.push(
            out,
            Op::BatchNorm {
                x,
                xhat,
                inv_std,
                channels: c,
                spatial,
                batch_stats: moments.is_some(),
            },
        )?;
        Ok((var, moments))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        self.push(out, Op::Reshape(x))
    }

    /// Flattens `[N, ...]` to `[N, rest]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let xs = self.value(x).shape();
        let n = xs[0];
        let rest = xs[1..].iter().product();
        self.reshape(x, vec![n, rest])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |p, q| p * q)?;
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var> {
        let out = self.value(x).map(|v| v * factor);
        self.push(out, Op::Scale(x, factor))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::new(vec![], vec![self.value(x).sum()])?;
        self.push(out, Op::Sum(x))
    }

    /// Mean negative log-likelihood of `labels` under `softmax(logits)`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let ls = self.value(logits).shape();
        if ls.len() != 2 || ls[0] != labels.len() {
            return Err(Error::shape(format!(
                "cross_entropy logits {:?} with {} labels",
                ls,
                labels.len()
            )));
        }
        let (n, k) = (ls[0], ls[1]);
        if n == 0 {
            return Err(Error::invalid("cross_entropy on an empty batch"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::invalid(format!(
                "label {} out of range for {} classes",
                bad, k
            )));
        }
        let log_probs = kernels::log_softmax_rows(self.value(logits).data(), n, k);
        let nll: T = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -log_probs[i * k + l])
            .sum();
        let loss = Tensor::new(vec![], vec![nll / T::from_f64(n as f64)])?;
        self.push(
            loss,
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                log_probs,
            },
        )
    }

    /// Backpropagates from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), T::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of {}", node.op.name())));
            }
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        let trainable = self.nodes.iter().map(|n| n.trainable).collect();
        Ok(Gradients { grads, trainable })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, delta: Tensor<T>) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (e, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                    *e = *e + *d;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if self.needs(a) {
                    // dA = G · Bᵀ
                    let mut da = vec![T::zero(); m * k];
                    T::gemm(m, n, k, T::one(), g.data(), n as isize, 1, bv.data(), 1, n as isize, T::zero(), &mut da, k as isize, 1);
                    self.accumulate(grads, a, Tensor::new(vec![m, k], da)?);
                }
                if self.needs(b) {
                    // dB = Aᵀ · G
                    let mut db = vec![T::zero(); k * n];
                    T::gemm(k, m, n, T::one(), av.data(), 1, k as isize, g.data(), n as isize, 1, T::zero(), &mut db, n as isize, 1);
                    self.accumulate(grads, b, Tensor::new(vec![k, n], db)?);
                }
            }
            &Op::Linear { x, w } => {
                let (xv, wv) = (self.value(x), self.value(w));
                let (n, k, m) = (xv.shape()[0], xv.shape()[1], wv.shape()[0]);
                if self.needs(x) {
                    // dX[n,k] = G[n,m] · W[m,k]
                    let mut dx = vec![T::zero(); n * k];
                    T::gemm(n, m, k, T::one(), g.data(), m as isize, 1, wv.data(), k as isize, 1, T::zero(), &mut dx, k as isize, 1);
                    self.accumulate(grads, x, Tensor::new(vec![n, k], dx)?);
                }
                if self.needs(w) {
                    // dW[m,k] = Gᵀ · X
                    let mut dw = vec![T::zero(); m * k];
                    T::gemm(m, n, k, T::one(), g.data(), 1, m as isize, xv.data(), k as isize, 1, T::zero(), &mut dw, k as isize, 1);
                    self.accumulate(grads, w, Tensor::new(vec![m, k], dw)?);
                }
            }
            &Op::Conv2d { x, w, geom } => {
                let (xv, wv) = (self.value(x), self.value(w));
                let (n, f) = (xv.shape()[0], wv.shape()[0]);
                let mut dx = self.needs(x).then(|| vec![T::zero(); xv.len()]);
                let mut dw = self.needs(w).then(|| vec![T::zero(); wv.len()]);
                kernels::conv2d_backward(
                    xv.data(),
                    wv.data(),
                    g.data(),
                    n,
                    f,
                    &geom,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                );
                if let Some(dx) = dx {
                    self.accumulate(grads, x, Tensor::new(xv.shape().to_vec(), dx)?);
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, w, Tensor::new(wv.shape().to_vec(), dw)?);
                }
            }
            &Op::Relu(x) => {
                let dx = self
                    .value(x)
                    .zip_map(g, |v, gv| if v > T::zero() { gv } else { T::zero() })?;
                self.accumulate(grads, x, dx);
            }
            Op::MaxPool2 { x, argmax } => {
                let xv = self.value(*x);
                let mut dx = vec![T::zero(); xv.len()];
                for (&src, &gv) in argmax.iter().zip(g.data()) {
                    dx[src] = dx[src] + gv;
                }
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
            }
            Op::BatchNorm {
                x,
                xhat,
                inv_std,
                channels,
                spatial,
                batch_stats,
            } => {
                let xv = self.value(*x);
                let (c, s) = (*channels, *spatial);
                let n = xv.shape()[0];
                let gd = g.data();
                let mut dx = vec![T::zero(); xv.len()];
                if *batch_stats {
                    let m = T::from_f64((n * s) as f64);
                    for ch in 0..c {
                        let (mut sum_g, mut sum_gx) = (T::zero(), T::zero());
                        for i in 0..n {
                            let off = (i * c + ch) * s;
                            for t in off..off + s {
                                sum_g = sum_g + gd[t];
                                sum_gx = sum_gx + gd[t] * xhat[t];
                            }
                        }
                        let k = inv_std[ch] / m;
                        for i in 0..n {
                            let off = (i * c + ch) * s;
                            for t in off..off + s {
                                dx[t] = k * (m * gd[t] - sum_g - xhat[t] * sum_gx);
                            }
                        }
                    }
                } else {
                    for i in 0..n {
                        for ch in 0..c {
                            let off = (i * c + ch) * s;
                            for t in off..off + s {
                                dx[t] = gd[t] * inv_std[ch];
                            }
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
            }
            &Op::Reshape(x) => {
                let dx = g.clone().reshape(self.value(x).shape().to_vec())?;
                self.accumulate(grads, x, dx);
            }
            &Op::Mul(a, b) => {
                if self.needs(a) {
                    let da = g.zip_map(self.value(b), |gv, bv| gv * bv)?;
                    self.accumulate(grads, a, da);
                }
                if self.needs(b) {
                    let db = g.zip_map(self.value(a), |gv, av| gv * av)?;
                    self.accumulate(grads, b, db);
                }
            }
            &Op::Scale(x, factor) => {
                self.accumulate(grads, x, g.map(|v| v * factor));
            }
            &Op::Sum(x) => {
                let gv = g.data()[0];
                self.accumulate(grads, x, Tensor::full(self.value(x).shape(), gv));
            }
            Op::CrossEntropy {
                logits,
                labels,
                log_probs,
            } => {
                let shape = self.value(*logits).shape().to_vec();
                let (n, k) = (shape[0], shape[1]);
                let scale = g.data()[0] / T::from_f64(n as f64);
                let mut dl: Vec<T> = log_probs.iter().map(|&lp| lp.exp() * scale).collect();
                for (i, &l) in labels.iter().enumerate() {
                    dl[i * k + l] = dl[i * k + l] - scale;
                }
                self.accumulate(grads, *logits, Tensor::new(shape, dl)?);
            }
        }
        Ok(())
    }
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    trainable: Vec<bool>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to a trainable leaf. Leaves the loss
    /// does not depend on get an all-zero gradient of their own shape, which
    /// is why the caller supplies the tape.
    pub fn get(&self, tape: &Tape<T>, v: Var) -> Result<Tensor<T>> {
        if !self.trainable.get(v.0).copied().unwrap_or(false) {
            return Err(Error::DetachedLeaf(v.0));
        }
        Ok(match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(tape.value(v).shape()),
        })
    }

    /// Moves the gradient out without cloning.
    pub fn take(&mut self, tape: &Tape<T>, v: Var) -> Result<Tensor<T>> {
        if !self.trainable.get(v.0).copied().unwrap_or(false) {
            return Err(Error::DetachedLeaf(v.0));
        }
        Ok(self.grads[v.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn sum_gives_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[0.5, -2.0, 7.0]), true);
        let l = tape.sum(x).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(&tape, x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn half_squared_norm_gives_x() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 2], &[1.0, -2.0, 0.25, 3.0]), true);
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        let l = tape.scale(s, 0.5).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(&tape, x).unwrap().data(), &[1.0, -2.0, 0.25, 3.0]);
    }

    #[test]
    fn detached_leaf_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]), true);
        let c = tape.constant(t(&[2], &[3.0, 4.0]));
        let p = tape.mul(x, c).unwrap();
        let l = tape.sum(p).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(&tape, x).unwrap().data(), &[3.0, 4.0]);
        assert!(matches!(g.get(&tape, c), Err(Error::DetachedLeaf(_))));
    }

    #[test]
    fn relu_forward_and_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[-1.0, 0.0, 2.0]), true);
        let r = tape.relu(x).unwrap();
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
        let l = tape.sum(r).unwrap();
        let g = tape.backward(l).unwrap();
        // gradient at exactly zero is zero
        assert_eq!(g.get(&tape, x).unwrap().data(), &[0.0, 0.0, 1.0]);

        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[-1.0, 3.0]), true);
        let r = tape.relu(x).unwrap();
        let l = tape.sum(r).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(&tape, x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn relu_all_negative_is_zero() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::from_vec(vec![-3.0, -0.5, -1e-8]));
        let r = tape.relu(x).unwrap();
        assert!(tape.value(r).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros(&[3, 10]));
        let l = tape.cross_entropy(x, &[0, 4, 9]).unwrap();
        assert!((tape.value(l).data()[0] - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_confident_correct_is_near_zero() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::new(vec![1, 3], vec![0.0, 1000.0, 0.0]).unwrap());
        let l = tape.cross_entropy(x, &[1]).unwrap();
        assert!(tape.value(l).data()[0].abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(
            tape.cross_entropy(x, &[0, 3]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn conv_center_of_ones_is_nine() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let w = tape.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let y = tape.conv2d(x, w, 1, 1).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 1, 3, 3]);
        assert_eq!(tape.value(y).data()[4], 9.0);
        assert_eq!(tape.value(y).data()[0], 4.0);
    }

    #[test]
    fn conv_delta_kernel_is_identity() {
        let data: Vec<f32> = (0..2 * 2 * 5 * 4).map(|i| i as f32 * 0.3 - 4.0).collect();
        let mut kernel = vec![0.0f32; 2 * 2 * 9];
        // filter f copies channel f
        kernel[4] = 1.0;
        kernel[9 * 3 + 4] = 1.0;
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::new(vec![2, 2, 5, 4], data.clone()).unwrap());
        let w = tape.constant(Tensor::new(vec![2, 2, 3, 3], kernel).unwrap());
        let y = tape.conv2d(x, w, 1, 1).unwrap();
        assert_eq!(tape.value(y).data(), &data[..]);
    }

    #[test]
    fn conv_rejects_channel_mismatch_and_bad_stride() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::zeros(&[1, 2, 4, 4]));
        let w = tape.constant(Tensor::zeros(&[1, 3, 3, 3]));
        assert!(tape.conv2d(x, w, 1, 1).is_err());
        let w = tape.constant(Tensor::zeros(&[1, 2, 3, 3]));
        assert!(tape.conv2d(x, w, 2, 0).is_err());
    }

    #[test]
    fn batch_norm_normalises_per_channel() {
        // channel 0: mean 5, var 4 ; channel 1: constant
        let vals = [3.0, 7.0, 3.0, 7.0];
        let mut data = Vec::new();
        for n in 0..2 {
            data.extend_from_slice(&vals[2 * n..2 * n + 2]);
            data.extend_from_slice(&[1.5, 1.5]);
        }
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[2, 2, 1, 2], &data));
        let (y, m) = tape.batch_norm(x, NormStats::Batch).unwrap();
        let m = m.unwrap();
        assert_eq!(m.mean, vec![5.0, 1.5]);
        assert_eq!(m.var, vec![4.0, 0.0]);
        let y = tape.value(y).data();
        let expect = 2.0 / (4.0 + BN_EPS).sqrt();
        assert!((y[0] + expect).abs() < 1e-12 && (y[1] - expect).abs() < 1e-12);
        assert_eq!(&y[2..4], &[0.0, 0.0]);
    }

    #[test]
    fn batch_norm_hand_formula() {
        // 2×1×2×2 example
        let x = [1.0, 2.0, 4.0, 5.0, -1.0, 0.0, 3.0, 2.0];
        let mean = x.iter().sum::<f64>() / 8.0;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
        let mut tape = Tape::<f64>::new();
        let xv = tape.constant(t(&[2, 1, 2, 2], &x));
        let (y, _) = tape.batch_norm(xv, NormStats::Batch).unwrap();
        for (o, v) in tape.value(y).data().iter().zip(x) {
            assert!((o - (v - mean) / (var + BN_EPS).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_norm_running_stats_default_is_identity_like() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::new(vec![1, 2], vec![0.5, -2.0]).unwrap());
        let (y, m) = tape
            .batch_norm(
                x,
                NormStats::Running {
                    mean: &[0.0, 0.0],
                    var: &[1.0, 1.0],
                },
            )
            .unwrap();
        assert!(m.is_none());
        let scale = 1.0 / (1.0f32 + 1e-5).sqrt();
        assert_eq!(tape.value(y).data(), &[0.5 * scale, -2.0 * scale]);
    }

    #[test]
    fn matmul_gradients() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(t(&[1, 2], &[1.0, 2.0]), true);
        let b = tape.leaf(t(&[2, 1], &[3.0, 4.0]), true);
        let p = tape.matmul(a, b).unwrap();
        let l = tape.sum(p).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(&tape, a).unwrap().data(), &[3.0, 4.0]);
        assert_eq!(g.get(&tape, b).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::from_vec(vec![f32::MAX, f32::MAX]));
        assert!(matches!(tape.scale(x, 10.0), Err(Error::NonFinite(_))));
    }
}
