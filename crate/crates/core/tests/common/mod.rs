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

//! Shared oracles and fixtures for the integration tests. Every oracle here
//! is a deliberately naive re-derivation that shares no code with the
//! library routine it checks.

#![allow(dead_code)]

pub mod checks;

use supermask::config::{ArchKind, DatasetSpec, RunConfig};
use supermask::init::InitKind;
use supermask::reweight::RecycleVariant;
use supermask::rng::RngStream;
use supermask::subnet::Algorithm;

pub fn normals(rng: &mut RngStream, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.next_normal()).collect()
}

/// Triple loop, accumulating in f64.
pub fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = s;
        }
    }
    out
}

/// Direct six-loop cross-correlation with zero padding.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv2d(
    x: &[f64],
    w: &[f64],
    n: usize,
    c: usize,
    h: usize,
    wd: usize,
    f: usize,
    kk: usize,
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let ho = (h + 2 * pad - kk) / stride + 1;
    let wo = (wd + 2 * pad - kk) / stride + 1;
    let mut out = vec![0.0; n * f * ho * wo];
    for b in 0..n {
        for o in 0..f {
            for y in 0..ho {
                for xo in 0..wo {
                    let mut s = 0.0;
                    for ci in 0..c {
                        for ky in 0..kk {
                            for kx in 0..kk {
                                let iy = (y * stride + ky) as isize - pad as isize;
                                let ix = (xo * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                s += x[((b * c + ci) * h + iy as usize) * wd + ix as usize]
                                    * w[((o * c + ci) * kk + ky) * kk + kx];
                            }
                        }
                    }
                    out[((b * f + o) * ho + y) * wo + xo] = s;
                }
            }
        }
    }
    (out, ho, wo)
}

/// Mean cross-entropy, computed with log-sum-exp in f64.
pub fn naive_cross_entropy(logits: &[f64], labels: &[usize], classes: usize) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.chunks(classes).zip(labels) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / labels.len() as f64
}

/// Mask by full sort: order indices by |S| descending, lower index first
/// on ties, keep the first `round((1−p)·j)`.
pub fn sort_oracle_mask(scores: &[f32], p: f64) -> Vec<bool> {
    let j = scores.len();
    let k = ((1.0 - p) * j as f64).round() as usize;
    let mut idx: Vec<usize> = (0..j).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .abs()
            .partial_cmp(&scores[a].abs())
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut bits = vec![false; j];
    for &i in &idx[..k] {
        bits[i] = true;
    }
    bits
}

/// Rank of every index under ascending |S|, higher index first on ties
/// (the reverse of the keep order).
pub fn ascending_ranks(scores: &[f32]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[a]
            .abs()
            .partial_cmp(&scores[b].abs())
            .unwrap()
            .then(b.cmp(&a))
    });
    idx
}

/// Score vector with deliberate duplicate magnitudes.
pub fn scores_with_ties(rng: &mut RngStream, j: usize) -> Vec<f32> {
    let levels = 1 + rng.below(j as u64 / 2 + 1) as usize;
    (0..j)
        .map(|_| {
            let v = if rng.next_f64() < 0.5 {
                (rng.below(levels as u64) as f32 + 1.0) * 0.125
            } else {
                rng.uniform(0.0, 2.0) as f32
            };
            if rng.next_f64() < 0.5 {
                -v
            } else {
                v
            }
        })
        .collect()
}

/// The desk-scale blobs task: 4 classes in 16 dimensions, 4000/1000 split.
pub fn blobs_config(algorithm: Algorithm, variant: RecycleVariant, epochs: usize) -> RunConfig {
    RunConfig {
        algorithm,
        variant,
        arch: ArchKind::Mlp {
            hidden: vec![64, 64],
            batch_norm: false,
        },
        width: 1.0,
        prune_rate: 0.5,
        epochs,
        dataset: DatasetSpec::Blobs {
            train: 4000,
            test: 1000,
            classes: 4,
            dim: 16,
            spread: 1.0,
        },
        ..RunConfig::default()
    }
}

/// Wider blobs MLP for the norm study: real-valued Gaussian weights so the
/// kept and pruned sets can differ in magnitude.
pub fn norm_study_config(epochs: usize) -> RunConfig {
    RunConfig {
        arch: ArchKind::Mlp {
            hidden: vec![256, 256],
            batch_norm: false,
        },
        weight_init: Some(InitKind::KaimingNormal),
        ..blobs_config(Algorithm::EdgePopup, RecycleVariant::None, epochs)
    }
}

/// Writes CIFAR-10 binary files (`n_train` split evenly over five batches)
/// holding random pixels and labels.
pub fn write_fake_cifar(dir: &std::path::Path, n_train: usize, n_test: usize, seed: u64) {
    let mut rng = RngStream::new(seed);
    let mut record = |n: usize| -> Vec<u8> {
        let mut out = Vec::with_capacity(n * 3073);
        for _ in 0..n {
            out.push(rng.below(10) as u8);
            out.extend((0..3072).map(|_| rng.below(256) as u8));
        }
        out
    };
    for b in 1..=5 {
        std::fs::write(dir.join(format!("data_batch_{b}.bin")), record(n_train / 5)).unwrap();
    }
    std::fs::write(dir.join("test_batch.bin"), record(n_test)).unwrap();
}
