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

//! Binary checkpoints: enough to rebuild a trained subnetwork's effective
//! weights bit-exactly without storing a single weight value.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "SNFG" | u16 version
//! u32 len | config text (canonical key = value form)
//! u32 layers, each:
//!     u8 ndim | u32 dims.. | u32 fan_in
//!     u8 init id | u8 scale_fan | f64 init prune rate | u64 layer weight seed
//!     f64 mask prune rate | packed mask bits (ceil(j/8) bytes, bit i at byte i/8, bit i%8)
//!     u8 has_alpha | f32 alpha
//! u32 norms, each: u32 channels | f32 mean.. | f32 var..
//! u32 edits, each: u8 kind | u32 layer | u32 count
//!     kind 1 (recycle):     count × (u32 dst, u32 src)
//!     kind 2 (rerandomize): count × u32 index | u64 value seed
//! SHA-256 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::arch::{layer_weight_seed, Model, RunningStats};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::init::{InitKind, InitScheme};
use crate::reweight::{RecyclePatch, RerandomizePatch, WeightEdit};
use crate::rng::RngStream;
use crate::subnet::{effective_weights, LayerAlpha, Mask, ScoredTensor};
use crate::tensor::Tensor;
use crate::trainer::subnetwork;

pub const MAGIC: &[u8; 4] = b"SNFG";
pub const VERSION: u16 = 1;
const HASH_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub shape: Vec<usize>,
    pub fan_in: usize,
    pub init: InitScheme,
    /// Seed of this layer's weight stream (already derived per layer).
    pub weight_seed: u64,
    pub mask: Mask,
    pub alpha: Option<LayerAlpha>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u16,
    pub config_text: String,
    pub layers: Vec<LayerRecord>,
    pub norms: Vec<RunningStats>,
    pub edits: Vec<WeightEdit>,
}

impl Checkpoint {
    /// Snapshots the subnetwork `model` currently selects.
    pub fn from_model(model: &Model, config: &RunConfig) -> Result<Self> {
        let sub = subnetwork(model, config.algorithm, config.prune_rate)?;
        let layers = model
            .layers
            .iter()
            .zip(sub.masks.into_iter().zip(sub.alphas))
            .enumerate()
            .map(|(i, (l, (mask, alpha)))| LayerRecord {
                shape: l.shape().to_vec(),
                fan_in: l.fan_in,
                init: model.options.weight_init,
                weight_seed: layer_weight_seed(model.options.weight_seed, i),
                mask,
                alpha,
            })
            .collect();
        Ok(Checkpoint {
            version: VERSION,
            config_text: config.to_text(),
            layers,
            norms: model.norms.clone(),
            edits: model.edit_log.clone(),
        })
    }

    pub fn config(&self) -> Result<RunConfig> {
        RunConfig::parse(&self.config_text)
    }

    pub fn masks(&self) -> Vec<Mask> {
        self.layers.iter().map(|l| l.mask.clone()).collect()
    }

    /// Frozen weights: regenerated from the seeds, then every logged edit
    /// replayed in order.
    pub fn reconstruct_weights(&self) -> Result<Vec<Tensor>> {
        let mut out = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let mut rng = RngStream::new(l.weight_seed);
            out.push(l.init.tensor(&l.shape, l.fan_in, &mut rng)?);
        }
        for e in &self.edits {
            let li = e.layer();
            let layer = self
                .layers
                .get(li)
                .ok_or_else(|| Error::Checkpoint(format!("edit for missing layer {li}")))?;
            match e {
                WeightEdit::Recycle(p) => p.apply(&mut out[li])?,
                WeightEdit::Rerandomize(p) => p.apply(&mut out[li], &layer.init, layer.fan_in)?,
            }
        }
        Ok(out)
    }

    /// Effective weights of the stored subnetwork.
    pub fn effective_weights(&self) -> Result<Vec<Tensor>> {
        let alg = self.config()?.algorithm;
        let thetas = self.reconstruct_weights()?;
        self.layers
            .iter()
            .zip(thetas)
            .enumerate()
            .map(|(i, (l, theta))| {
                let scored = ScoredTensor::new(theta, Tensor::zeros(&l.shape), l.fan_in, i)?;
                effective_weights(&scored, &l.mask, alg, l.alpha)
            })
            .collect()
    }

    /// A model with the checkpoint's frozen weights and running statistics,
    /// ready for eval-mode inference with [`Checkpoint::effective_weights`].
    /// Its scores are freshly initialised and carry no information.
    pub fn restore_model(&self) -> Result<Model> {
        let config = self.config()?;
        let mut model = config.build_model()?;
        if model.layers.len() != self.layers.len() {
            return Err(Error::ArchMismatch(format!(
                "config builds {} layers, checkpoint holds {}",
                model.layers.len(),
                self.layers.len()
            )));
        }
        for (m, l) in model.layers.iter().zip(&self.layers) {
            if m.shape() != l.shape.as_slice() {
                return Err(Error::ArchMismatch(format!(
                    "layer {} shape {:?} vs {:?}",
                    m.layer,
                    m.shape(),
                    l.shape
                )));
            }
        }
        for (m, w) in model.layers.iter_mut().zip(self.reconstruct_weights()?) {
            m.weights = w;
        }
        model.norms = self.norms.clone();
        model.edit_log = self.edits.clone();
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        w.extend_from_slice(&self.version.to_le_bytes());
        put_u32(&mut w, self.config_text.len());
        w.extend_from_slice(self.config_text.as_bytes());

        put_u32(&mut w, self.layers.len());
        for l in &self.layers {
            w.push(l.shape.len() as u8);
            for &d in &l.shape {
                put_u32(&mut w, d);
            }
            put_u32(&mut w, l.fan_in);
            w.push(l.init.kind.id());
            w.push(l.init.scale_fan as u8);
            w.extend_from_slice(&l.init.prune_rate.to_le_bytes());
            w.extend_from_slice(&l.weight_seed.to_le_bytes());
            w.extend_from_slice(&l.mask.prune_rate().to_le_bytes());
            w.extend_from_slice(&l.mask.to_packed_bytes());
            w.push(l.alpha.is_some() as u8);
            w.extend_from_slice(&l.alpha.map_or(0.0, |a| a.0).to_le_bytes());
        }

        put_u32(&mut w, self.norms.len());
        for n in &self.norms {
            put_u32(&mut w, n.mean.len());
            for v in n.mean.iter().chain(&n.var) {
                w.extend_from_slice(&v.to_le_bytes());
            }
        }

        put_u32(&mut w, self.edits.len());
        for e in &self.edits {
            match e {
                WeightEdit::Recycle(p) => {
                    w.push(1);
                    put_u32(&mut w, p.layer);
                    put_u32(&mut w, p.pairs.len());
                    for &(d, s) in &p.pairs {
                        put_u32(&mut w, d);
                        put_u32(&mut w, s);
                    }
                }
                WeightEdit::Rerandomize(p) => {
                    w.push(2);
                    put_u32(&mut w, p.layer);
                    put_u32(&mut w, p.indices.len());
                    for &i in &p.indices {
                        put_u32(&mut w, i);
                    }
                    w.extend_from_slice(&p.value_seed.to_le_bytes());
                }
            }
        }

        let digest = Sha256::digest(&w);
        w.extend_from_slice(&digest);
        w
    }

    /// Parses a checkpoint. The trailing hash is verified before any field
    /// is decoded, so a damaged file never yields a partial model.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 2 + HASH_LEN {
            return Err(Error::Checkpoint(format!(
                "hash mismatch: file of {} bytes is too short to hold a digest",
                bytes.len()
            )));
        }
        let (body, stored) = bytes.split_at(bytes.len() - HASH_LEN);
        if Sha256::digest(body).as_slice() != stored {
            return Err(Error::Checkpoint("hash mismatch: file is truncated or corrupt".into()));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unknown checkpoint version {version}")));
        }
        let n = r.u32()?;
        let config_text = String::from_utf8(r.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("config block is not UTF-8".into()))?;

        let mut layers = Vec::new();
        for _ in 0..r.u32()? {
            let ndim = r.u8()? as usize;
            let shape = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let fan_in = r.u32()?;
            let id = r.u8()?;
            let kind = InitKind::from_id(id)
                .ok_or_else(|| Error::Checkpoint(format!("unknown init scheme id {id}")))?;
            let scale_fan = r.u8()? != 0;
            let init = InitScheme {
                kind,
                scale_fan,
                prune_rate: r.f64()?,
            };
            let weight_seed = r.u64()?;
            let mask_p = r.f64()?;
            let len: usize = shape.iter().product();
            let mask = Mask::from_packed_bytes(r.take(len.div_ceil(8))?, len, mask_p)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
            let has_alpha = r.u8()? != 0;
            let alpha = f32::from_le_bytes(r.array()?);
            layers.push(LayerRecord {
                shape,
                fan_in,
                init,
                weight_seed,
                mask,
                alpha: has_alpha.then_some(LayerAlpha(alpha)),
            });
        }

        let mut norms = Vec::new();
        for _ in 0..r.u32()? {
            let c = r.u32()?;
            let mean = (0..c).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            let var = (0..c).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            norms.push(RunningStats { mean, var });
        }

        let mut edits = Vec::new();
        for _ in 0..r.u32()? {
            let kind = r.u8()?;
            let layer = r.u32()?;
            let count = r.u32()?;
            edits.push(match kind {
                1 => WeightEdit::Recycle(RecyclePatch {
                    layer,
                    pairs: (0..count)
                        .map(|_| Ok((r.u32()?, r.u32()?)))
                        .collect::<Result<Vec<_>>>()?,
                }),
                2 => WeightEdit::Rerandomize(RerandomizePatch {
                    layer,
                    indices: (0..count).map(|_| r.u32()).collect::<Result<Vec<_>>>()?,
                    value_seed: r.u64()?,
                }),
                k => return Err(Error::Checkpoint(format!("unknown edit kind {k}"))),
            });
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(Checkpoint {
            version,
            config_text,
            layers,
            norms,
            edits,
        })
    }

    pub fn save(&self, path: &Path) -> Result<[u8; 32]> {
        let bytes = self.to_bytes();
        fs::write(path, &bytes)?;
        Ok(bytes[bytes.len() - HASH_LEN..].try_into().expect("digest length"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Hex form of a digest.
pub fn hex(digest: &[u8]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn put_u32(w: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("checkpoint field exceeds u32");
    w.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("record runs past end of file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.array()?) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}
