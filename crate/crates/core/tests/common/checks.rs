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

//! Gradient checks shared by the gradient tests and the acceptance suite.

use super::normals;
use supermask::arch::{ArchSpec, BuildOptions, Mode, Model};
use supermask::autodiff::{Tape, Var};
use supermask::init::{InitKind, InitScheme};
use supermask::rng::RngStream;
use supermask::subnet::{
    binary_sign, compute_alpha, compute_mask, effective_weights, score_gradient, Algorithm, ScoredTensor,
};
use supermask::tensor::Tensor;

fn t32(shape: &[usize], v: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), v.iter().map(|&x| x as f32).collect()).unwrap()
}

/// Loss `Σ δ⊙y` with `y = x·W_effᵀ`, so `∂L/∂W_eff = δᵀx`.
/// Also returns, per entry, `Σ_b |δ_b x_b| · |v|`: the scale that bounds
/// f32 rounding in the summed product.
pub fn linear_score_grad(alg: Algorithm, seed: u64) -> (Tensor, Vec<f64>, Vec<f64>) {
    let (n, din, dout) = (5, 9, 6);
    let mut rng = RngStream::new(seed);
    let x = normals(&mut rng, n * din);
    let delta = normals(&mut rng, n * dout);
    let theta = normals(&mut rng, dout * din);
    let scores = normals(&mut rng, dout * din);
    let layer = ScoredTensor::new(t32(&[dout, din], &theta), t32(&[dout, din], &scores), din, 0).unwrap();
    let mask = compute_mask(&layer.scores, 0.5).unwrap();
    let alpha = (alg == Algorithm::Biprop).then(|| compute_alpha(&layer.weights, &mask).unwrap());
    let w_eff = effective_weights(&layer, &mask, alg, alpha).unwrap();

    let mut tape = Tape::<f32>::new();
    let xv = tape.constant(t32(&[n, din], &x));
    let wv = tape.leaf(w_eff, true);
    let y = tape.linear(xv, wv).unwrap();
    let dv = tape.constant(t32(&[n, dout], &delta));
    let prod = tape.mul(y, dv).unwrap();
    let loss = tape.sum(prod).unwrap();
    let g = tape.backward(loss).unwrap().get(&tape, wv).unwrap();
    let ds = score_gradient(&g, &layer, alg, alpha).unwrap();

    // analytic (δᵀx) ⊙ v over every position, pruned ones included
    let mut want = vec![0.0; dout * din];
    let mut scale = vec![0.0; dout * din];
    for o in 0..dout {
        for i in 0..din {
            let terms: Vec<f64> = (0..n)
                .map(|b| (delta[b * dout + o] as f32 as f64) * (x[b * din + i] as f32 as f64))
                .collect();
            let outer: f64 = terms.iter().sum();
            let magnitude: f64 = terms.iter().map(|t| t.abs()).sum();
            let th = theta[o * din + i] as f32;
            let v = match alg {
                Algorithm::EdgePopup => th as f64,
                Algorithm::Biprop => alpha.unwrap().0 as f64 * binary_sign(th) as f64,
            };
            want[o * din + i] = outer * v;
            scale[o * din + i] = magnitude * v.abs();
        }
    }
    (ds, want, scale)
}

/// Worst relative error of the score gradient against `(δᵀx) ⊙ v` over
/// `trials` random layers. Each error is taken relative to the summand
/// scale, so entries where the batch sum nearly cancels are not judged
/// against a value smaller than their own rounding noise.
pub fn ste_worst_error(alg: Algorithm, trials: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..trials {
        let (ds, want, scale) = linear_score_grad(alg, seed);
        for ((g, w), s) in ds.data().iter().zip(&want).zip(&scale) {
            worst = worst.max((*g as f64 - w).abs() / w.abs().max(*s).max(f64::MIN_POSITIVE));
        }
    }
    worst
}

fn tiny_conv() -> Model {
    let spec = ArchSpec {
        input: vec![3, 8, 8],
        num_classes: 5,
        ..ArchSpec::conv(2, 0.0625)
    };
    Model::build(
        &spec,
        &BuildOptions {
            weight_init: InitScheme::new(InitKind::KaimingNormal),
            weight_seed: 7,
            score_seed: 8,
        },
    )
    .unwrap()
}

fn conv_loss(model: &Model, x: &Tensor<f64>, weights: &[Tensor<f64>], labels: &[usize]) -> (f64, Vec<Tensor<f64>>) {
    let mut tape = Tape::<f64>::new();
    let xv = tape.constant(x.clone());
    let wv: Vec<Var> = weights.iter().map(|w| tape.leaf(w.clone(), true)).collect();
    let (out, _) = model.forward(&mut tape, xv, &wv, Mode::Train).unwrap();
    let loss = tape.cross_entropy(out, labels).unwrap();
    let v = tape.value(loss).data()[0];
    let g = tape.backward(loss).unwrap();
    (v, wv.iter().map(|&w| g.get(&tape, w).unwrap()).collect())
}

/// Central differences of the loss against every layer's effective
/// weights on a small Conv-2 in f64 with batch-statistics normalisation.
/// Returns `(probes, worst relative error)`; the relative error has an
/// absolute floor of 1e-6 for gradients that are essentially zero.
pub fn conv_fd_check(probes_per_layer: usize) -> (usize, f64, String) {
    let model = tiny_conv();
    let mut rng = RngStream::new(21);
    let x = Tensor::new(vec![4, 3, 8, 8], normals(&mut rng, 4 * 192)).unwrap();
    let labels = [0, 1, 4, 2];
    let weights: Vec<Tensor<f64>> = model
        .layers
        .iter()
        .map(|l| {
            let mask = compute_mask(&l.scores, 0.5).unwrap();
            effective_weights(l, &mask, Algorithm::EdgePopup, None).unwrap().cast()
        })
        .collect();
    let (_, grads) = conv_loss(&model, &x, &weights, &labels);

    let h = 1e-6;
    let mut probes = 0;
    let mut worst = (0.0f64, String::new());
    for layer in 0..weights.len() {
        for _ in 0..probes_per_layer {
            let i = rng.below(weights[layer].len() as u64) as usize;
            let mut plus = weights.clone();
            plus[layer].data_mut()[i] += h;
            let mut minus = weights.clone();
            minus[layer].data_mut()[i] -= h;
            let fd = (conv_loss(&model, &x, &plus, &labels).0 - conv_loss(&model, &x, &minus, &labels).0) / (2.0 * h);
            let g = grads[layer].data()[i];
            let err = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
            if err > worst.0 {
                worst = (err, format!("layer {layer} index {i}: backward {g:e} vs fd {fd:e}"));
            }
            probes += 1;
        }
    }
    (probes, worst.0, worst.1)
}
