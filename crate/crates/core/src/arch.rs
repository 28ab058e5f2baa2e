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

//! Network builders: the VGG-like Conv-2/4/6/8 family and a small MLP.
//!
//! Conv-d stacks `d/2` blocks of two 3×3 convolutions (pad 1, no bias), each
//! followed by non-affine batch norm and ReLU, with 2×2 max pooling after
//! every block. The head is three bias-free linear layers, 256-256-classes.
//! Block widths are 64, 128, 256, 512. Width factor `w` scales every hidden
//! width as `max(1, floor(base·w))`.

use std::fmt;

use crate::autodiff::{BatchMoments, NormStats, Tape, Var};
use crate::error::{Error, Result};
use crate::init::{kaiming_uniform_scores, InitScheme};
use crate::reweight::WeightEdit;
use crate::rng::{RngStream, StreamKind};
use crate::subnet::{kept_count, ScoredTensor};
use crate::tensor::{Scalar, Tensor};

const CONV_WIDTHS: [usize; 4] = [64, 128, 256, 512];
const FC_WIDTH: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// VGG-like `Conv-depth` for depth in {2, 4, 6, 8}.
    Conv { depth: usize },
    /// Fully connected net with the given (unscaled) hidden widths.
    Mlp { hidden: Vec<usize>, batch_norm: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub family: Family,
    pub width: f64,
    pub num_classes: usize,
    /// Per-sample input shape, `[C, H, W]` for conv nets or `[features]`.
    pub input: Vec<usize>,
}

impl ArchSpec {
    pub fn conv(depth: usize, width: f64) -> Self {
        ArchSpec {
            family: Family::Conv { depth },
            width,
            num_classes: 10,
            input: vec![3, 32, 32],
        }
    }

    pub fn mlp(input_dim: usize, hidden: Vec<usize>, num_classes: usize) -> Self {
        ArchSpec {
            family: Family::Mlp {
                hidden,
                batch_norm: false,
            },
            width: 1.0,
            num_classes,
            input: vec![input_dim],
        }
    }

    pub fn scaled(&self, base: usize) -> usize {
        ((base as f64 * self.width).floor() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.width <= 1.0) {
            return Err(Error::invalid(format!("width factor {} outside (0,1]", self.width)));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        match &self.family {
            Family::Conv { depth } => {
                if ![2, 4, 6, 8].contains(depth) {
                    return Err(Error::invalid(format!("unknown conv depth {depth}")));
                }
                if self.input.len() != 3 {
                    return Err(Error::invalid("conv nets take [C,H,W] inputs"));
                }
                let shrink = 1usize << (depth / 2);
                if self.input[1] < shrink || self.input[2] < shrink {
                    return Err(Error::invalid(format!(
                        "input {:?} too small for {} pooling stages",
                        self.input,
                        depth / 2
                    )));
                }
            }
            Family::Mlp { hidden, .. } => {
                if hidden.is_empty() || hidden.contains(&0) {
                    return Err(Error::invalid("mlp hidden widths must be non-empty and positive"));
                }
                if self.input.iter().product::<usize>() == 0 {
                    return Err(Error::invalid("empty input shape"));
                }
            }
        }
        Ok(())
    }

    /// Shapes of every scored layer in forward order, with fan-ins.
    pub fn layer_shapes(&self) -> Result<Vec<(Vec<usize>, usize)>> {
        self.validate()?;
        let mut out = Vec::new();
        match &self.family {
            Family::Conv { depth } => {
                let mut c = self.input[0];
                let (mut h, mut w) = (self.input[1], self.input[2]);
                for &base in &CONV_WIDTHS[..depth / 2] {
                    let f = self.scaled(base);
                    out.push((vec![f, c, 3, 3], c * 9));
                    out.push((vec![f, f, 3, 3], f * 9));
                    c = f;
                    h /= 2;
                    w /= 2;
                }
                let hidden = self.scaled(FC_WIDTH);
                let flat = c * h * w;
                out.push((vec![hidden, flat], flat));
                out.push((vec![hidden, hidden], hidden));
                out.push((vec![self.num_classes, hidden], hidden));
            }
            Family::Mlp { hidden, .. } => {
                let mut prev = self.input.iter().product();
                for &hw in hidden {
                    let hw = self.scaled(hw);
                    out.push((vec![hw, prev], prev));
                    prev = hw;
                }
                out.push((vec![self.num_classes, prev], prev));
            }
        }
        Ok(out)
    }

    /// Total number of scored weights.
    pub fn param_count(&self) -> Result<usize> {
        Ok(self
            .layer_shapes()?
            .iter()
            .map(|(s, _)| s.iter().product::<usize>())
            .sum())
    }

    /// `Σ_l round((1−p)·j_l)`, without building the model.
    pub fn kept_params(&self, prune_rate: f64) -> Result<usize> {
        Ok(self
            .layer_shapes()?
            .iter()
            .map(|(s, _)| kept_count(s.iter().product(), prune_rate))
            .sum())
    }
}

impl fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::Conv { depth } => write!(f, "conv{} w={}", depth, self.width),
            Family::Mlp { hidden, .. } => write!(f, "mlp{:?} w={}", hidden, self.width),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerOp {
    Conv { param: usize },
    Linear { param: usize },
    BatchNorm { slot: usize },
    Relu,
    MaxPool,
    Flatten,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }

    /// Exponential update with momentum 0.1. The running variance uses the
    /// unbiased batch estimate.
    pub fn update<T: Scalar>(&mut self, m: &BatchMoments<T>) {
        const MOMENTUM: f64 = 0.1;
        let correction = if m.count > 1 {
            m.count as f64 / (m.count - 1) as f64
        } else {
            1.0
        };
        for c in 0..self.mean.len() {
            let mean = m.mean[c].as_f64();
            let var = m.var[c].as_f64() * correction;
            self.mean[c] = ((1.0 - MOMENTUM) * self.mean[c] as f64 + MOMENTUM * mean) as f32;
            self.var[c] = ((1.0 - MOMENTUM) * self.var[c] as f64 + MOMENTUM * var) as f32;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// How to draw the frozen weights and the initial scores of a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    pub weight_init: InitScheme,
    pub weight_seed: u64,
    pub score_seed: u64,
}

/// A built network: scored layers plus the op sequence that wires them.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ArchSpec,
    pub layers: Vec<ScoredTensor>,
    pub ops: Vec<LayerOp>,
    pub norms: Vec<RunningStats>,
    pub options: BuildOptions,
    /// Every weight edit applied since build, in order.
    pub edit_log: Vec<WeightEdit>,
}

/// Seed of the stream that draws layer `layer`'s frozen weights.
pub fn layer_weight_seed(weight_seed: u64, layer: usize) -> u64 {
    crate::rng::derive_seed(weight_seed, StreamKind::Weights, layer as u64)
}

/// Regenerates the pristine frozen weights of one layer.
pub fn initial_weights(
    shape: &[usize],
    fan_in: usize,
    scheme: &InitScheme,
    weight_seed: u64,
    layer: usize,
) -> Result<Tensor> {
    let mut rng = RngStream::new(layer_weight_seed(weight_seed, layer));
    scheme.tensor(shape, fan_in, &mut rng)
}

impl Model {
    pub fn build(spec: &ArchSpec, options: &BuildOptions) -> Result<Model> {
        let shapes = spec.layer_shapes()?;
        let mut layers = Vec::with_capacity(shapes.len());
        for (i, (shape, fan_in)) in shapes.iter().enumerate() {
            let weights = initial_weights(shape, *fan_in, &options.weight_init, options.weight_seed, i)?;
            let mut srng = RngStream::derived(options.score_seed, StreamKind::Scores, i as u64);
            let scores = kaiming_uniform_scores(shape, *fan_in, &mut srng)?;
            layers.push(ScoredTensor::new(weights, scores, *fan_in, i)?);
        }

        let mut ops = Vec::new();
        let mut norms = Vec::new();
        let last = layers.len() - 1;
        match &spec.family {
            Family::Conv { depth } => {
                for block in 0..depth / 2 {
                    for half in 0..2 {
                        let param = 2 * block + half;
                        ops.push(LayerOp::Conv { param });
                        ops.push(LayerOp::BatchNorm { slot: norms.len() });
                        norms.push(RunningStats::new(layers[param].shape()[0]));
                        ops.push(LayerOp::Relu);
                    }
                    ops.push(LayerOp::MaxPool);
                }
                ops.push(LayerOp::Flatten);
                for param in *depth..=last {
                    ops.push(LayerOp::Linear { param });
                    if param != last {
                        ops.push(LayerOp::Relu);
                    }
                }
            }
            Family::Mlp { batch_norm, .. } => {
                ops.push(LayerOp::Flatten);
                for param in 0..=last {
                    ops.push(LayerOp::Linear { param });
                    if param != last {
                        if *batch_norm {
                            ops.push(LayerOp::BatchNorm { slot: norms.len() });
                            norms.push(RunningStats::new(layers[param].shape()[0]));
                        }
                        ops.push(LayerOp::Relu);
                    }
                }
            }
        }

        Ok(Model {
            spec: spec.clone(),
            layers,
            ops,
            norms,
            options: *options,
            edit_log: Vec::new(),
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ScoredTensor::len).sum()
    }

    /// `Σ_l round((1−p)·j_l)`.
    pub fn kept_params(&self, prune_rate: f64) -> usize {
        self.layers.iter().map(|l| kept_count(l.len(), prune_rate)).sum()
    }

    pub fn input_shape(&self, batch: usize) -> Vec<usize> {
        let mut s = vec![batch];
        s.extend_from_slice(&self.spec.input);
        s
    }

    /// Runs the network on `input` using one weight variable per scored
    /// layer. In training mode the batch moments of every norm layer are
    /// returned, in order, for the caller to fold into running statistics.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        input: Var,
        weights: &[Var],
        mode: Mode,
    ) -> Result<(Var, Vec<BatchMoments<T>>)> {
        if weights.len() != self.layers.len() {
            return Err(Error::shape(format!(
                "{} weight variables for {} layers",
                weights.len(),
                self.layers.len()
            )));
        }
        let mut x = input;
        let mut moments = Vec::new();
        for op in &self.ops {
            x = match *op {
                LayerOp::Conv { param } => tape.conv2d(x, weights[param], 1, 1)?,
                LayerOp::Linear { param } => tape.linear(x, weights[param])?,
                LayerOp::Relu => tape.relu(x)?,
                LayerOp::MaxPool => tape.maxpool2(x)?,
                LayerOp::Flatten => tape.flatten(x)?,
                LayerOp::BatchNorm { slot } => match mode {
                    Mode::Train => {
                        let (y, m) = tape.batch_norm(x, NormStats::Batch)?;
                        moments.extend(m);
                        y
                    }
                    Mode::Eval => {
                        let stats = &self.norms[slot];
                        let mean: Vec<T> = stats.mean.iter().map(|&v| T::from_f64(v as f64)).collect();
                        let var: Vec<T> = stats.var.iter().map(|&v| T::from_f64(v as f64)).collect();
                        tape.batch_norm(x, NormStats::Running { mean: &mean, var: &var })?.0
                    }
                },
            };
        }
        Ok((x, moments))
    }

    /// SHA-256 over every layer's frozen weights, in layer order.
    pub fn weights_digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for l in &self.layers {
            h.update(l.weights.to_le_bytes());
        }
        h.finalize().into()
    }

    pub fn update_running_stats<T: Scalar>(&mut self, moments: &[BatchMoments<T>]) {
        for (stats, m) in self.norms.iter_mut().zip(moments) {
            stats.update(m);
        }
    }
}
