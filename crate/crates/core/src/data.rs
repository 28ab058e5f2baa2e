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

//! Datasets: the CIFAR-10 binary format and a seeded Gaussian-blob
//! generator for fast experiments.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamKind};
use crate::tensor::Tensor;

pub const CIFAR_MEAN: [f32; 3] = [0.4914, 0.4822, 0.4465];
pub const CIFAR_STD: [f32; 3] = [0.2470, 0.2435, 0.2616];
pub const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;
pub const CIFAR_TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const CIFAR_TEST_FILE: &str = "test_batch.bin";

/// Distance of each blob centre from the origin (centres sit on the scaled
/// standard simplex `radius·e_c`).
pub const BLOB_RADIUS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `[N, ...]` normalised samples.
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, num_classes: usize, split: Split) -> Result<Self> {
        if images.shape().first() != Some(&labels.len()) {
            return Err(Error::Data(format!(
                "{} labels for images of shape {:?}",
                labels.len(),
                images.shape()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Data(format!("label {bad} >= {num_classes} classes")));
        }
        Ok(Dataset {
            images,
            labels,
            num_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape().iter().product()
    }

    /// Copies the given samples into a batch tensor.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let per = self.sample_len();
        let src = self.images.data();
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend_from_slice(&src[i * per..(i + 1) * per]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.sample_shape());
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (Tensor::new(shape, data).expect("gather shape"), labels)
    }

    /// First `n` samples.
    pub fn prefix(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        let (images, labels) = self.gather(&idx);
        Dataset {
            images,
            labels,
            num_classes: self.num_classes,
            split: self.split,
        }
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}

/// Splits raw CIFAR-10 bytes into labels and `[N,3,32,32]` pixel planes.
pub fn parse_cifar_records(bytes: &[u8]) -> Result<(Vec<u8>, Vec<u8>)> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::Data(format!(
            "CIFAR-10 file of {} bytes is not a multiple of {}",
            bytes.len(),
            CIFAR_RECORD
        )));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * (CIFAR_RECORD - 1));
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        if rec[0] > 9 {
            return Err(Error::Data(format!("label byte {} > 9", rec[0])));
        }
        labels.push(rec[0]);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok((labels, pixels))
}

/// Scales to [0,1] then standardises each colour plane.
pub fn normalize_cifar(pixels: &[u8]) -> Vec<f32> {
    let plane = 32 * 32;
    pixels
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let c = (i / plane) % 3;
            (p as f32 / 255.0 - CIFAR_MEAN[c]) / CIFAR_STD[c]
        })
        .collect()
}

/// Inverse of [`normalize_cifar`], rounded back to bytes.
pub fn denormalize_cifar(values: &[f32]) -> Vec<u8> {
    let plane = 32 * 32;
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = (i / plane) % 3;
            ((v * CIFAR_STD[c] + CIFAR_MEAN[c]) * 255.0).round().clamp(0.0, 255.0) as u8
        })
        .collect()
}

fn cifar_dataset(bytes: &[u8], split: Split, limit: Option<usize>) -> Result<Dataset> {
    let (labels, pixels) = parse_cifar_records(bytes)?;
    let n = limit.map_or(labels.len(), |l| l.min(labels.len()));
    let images = Tensor::new(vec![n, 3, 32, 32], normalize_cifar(&pixels[..n * 3072]))?;
    Dataset::new(
        images,
        labels[..n].iter().map(|&l| l as usize).collect(),
        10,
        split,
    )
}

/// Loads the five training batches and the test batch from `dir`.
/// `train_subset` keeps only the first records of the training split.
pub fn load_cifar10(dir: &Path, train_subset: Option<usize>) -> Result<(Dataset, Dataset)> {
    let mut train_bytes = Vec::new();
    for name in CIFAR_TRAIN_FILES {
        let path = dir.join(name);
        let mut f = fs::File::open(&path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let mut buf = Vec::new();
        f.read_to_end(&mut buf)?;
        if buf.len() % CIFAR_RECORD != 0 {
            return Err(Error::Data(format!(
                "{} has {} bytes, not a multiple of {}",
                path.display(),
                buf.len(),
                CIFAR_RECORD
            )));
        }
        train_bytes.extend_from_slice(&buf);
        if let Some(n) = train_subset {
            if train_bytes.len() >= n * CIFAR_RECORD {
                break;
            }
        }
    }
    let test_path = dir.join(CIFAR_TEST_FILE);
    let test_bytes = fs::read(&test_path)
        .map_err(|e| Error::Data(format!("{}: {e}", test_path.display())))?;
    Ok((
        cifar_dataset(&train_bytes, Split::Train, train_subset)?,
        cifar_dataset(&test_bytes, Split::Test, None)?,
    ))
}

/// `n` samples from `classes` isotropic Gaussians of standard deviation
/// `spread` centred at `BLOB_RADIUS·e_c`. Sample `i` has class `i % classes`.
pub fn synth_blobs(n: usize, classes: usize, dim: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::Data(format!("need at least 2 classes, got {classes}")));
    }
    if classes > dim {
        return Err(Error::Data(format!("{classes} classes do not fit in {dim} dimensions")));
    }
    if !n.is_multiple_of(classes) {
        return Err(Error::Data(format!("{n} samples not divisible by {classes} classes")));
    }
    let mut rng = RngStream::derived(seed, StreamKind::Synthetic, 0);
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        for d in 0..dim {
            let centre = if d == c { BLOB_RADIUS } else { 0.0 };
            data.push((centre + spread * rng.next_normal()) as f32);
        }
        labels.push(c);
    }
    Dataset::new(Tensor::new(vec![n, dim], data)?, labels, classes, Split::Train)
}

/// Train/test pair of blob datasets drawn from disjoint streams.
pub fn synth_blobs_split(
    n_train: usize,
    n_test: usize,
    classes: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let train = synth_blobs(n_train, classes, dim, spread, seed)?;
    let mut test = synth_blobs(n_test, classes, dim, spread, seed ^ 0x7E57_7E57_7E57_7E57)?;
    test.split = Split::Test;
    Ok((train, test))
}

/// Index batches for one epoch. The permutation depends only on
/// `(seed, epoch)`; the final short batch is kept.
pub fn minibatches(len: usize, batch: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    assert!(batch >= 1, "batch size must be positive");
    let mut order: Vec<usize> = (0..len).collect();
    RngStream::derived(seed, StreamKind::Shuffle, epoch as u64).shuffle(&mut order);
    order.chunks(batch).map(<[usize]>::to_vec).collect()
}

const SBLB_MAGIC: &[u8; 4] = b"SBLB";

/// Writes a flat feature dataset: magic, u32 n/classes/dim, f32 features,
/// u8 labels, all little-endian.
pub fn write_sblb<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    if ds.images.ndim() != 2 {
        return Err(Error::Data("SBLB export needs [N, dim] features".into()));
    }
    if ds.num_classes > 256 {
        return Err(Error::Data("SBLB labels are bytes".into()));
    }
    out.write_all(SBLB_MAGIC)?;
    for v in [ds.len(), ds.num_classes, ds.sample_len()] {
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    for &v in ds.images.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    let labels: Vec<u8> = ds.labels.iter().map(|&l| l as u8).collect();
    out.write_all(&labels)?;
    Ok(())
}

pub fn read_sblb(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < 16 || &bytes[..4] != SBLB_MAGIC {
        return Err(Error::Data("not an SBLB file".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (n, classes, dim) = (u32_at(4), u32_at(8), u32_at(12));
    let expect = 16 + n * dim * 4 + n;
    if bytes.len() != expect {
        return Err(Error::Data(format!(
            "SBLB size {} does not match header (expected {expect})",
            bytes.len()
        )));
    }
    let feats: Vec<f32> = bytes[16..16 + n * dim * 4]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let labels = bytes[16 + n * dim * 4..].iter().map(|&l| l as usize).collect();
    Dataset::new(Tensor::new(vec![n, dim], feats)?, labels, classes, Split::Train)
}
