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

//! Periodic edits of the frozen weight population: iterative weight
//! recycling, its second-tier ablation, and IteRand-style rerandomisation.
//!
//! Every edit returns a patch record so a checkpoint can replay it on top of
//! seed-regenerated weights.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::init::InitScheme;
use crate::rng::RngStream;
use crate::subnet::{bottom_k_indices, top_k_indices, Mask, ScoredTensor};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecycleVariant {
    None,
    /// Lowest-`|S|` weights take the values of highest-`|S|` weights.
    Iwr,
    /// Ablation: lowest block takes values from the second-lowest block.
    IwrSecondTier,
    /// Resample a fraction of the pruned weights.
    IteRand,
}

impl fmt::Display for RecycleVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecycleVariant::None => "none",
            RecycleVariant::Iwr => "iwr",
            RecycleVariant::IwrSecondTier => "iwr_second_tier",
            RecycleVariant::IteRand => "iterand",
        })
    }
}

impl FromStr for RecycleVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(RecycleVariant::None),
            "iwr" => Ok(RecycleVariant::Iwr),
            "iwr_second_tier" => Ok(RecycleVariant::IwrSecondTier),
            "iterand" => Ok(RecycleVariant::IteRand),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecycleSpec {
    /// Fraction of a layer edited per trigger.
    pub rate: f64,
    /// Epochs between recycling events, or triggers per epoch for IteRand.
    pub period: usize,
    pub variant: RecycleVariant,
}

impl RecycleSpec {
    pub fn none() -> Self {
        RecycleSpec {
            rate: 0.0,
            period: 1,
            variant: RecycleVariant::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::invalid(format!("recycle rate {} outside [0,1]", self.rate)));
        }
        if self.period == 0 {
            return Err(Error::invalid("recycle period must be positive"));
        }
        Ok(())
    }
}

/// Number of weights a recycling event touches: `floor(r·j)`.
pub fn recycle_count(len: usize, rate: f64) -> usize {
    (rate * len as f64).floor() as usize
}

/// `(destination, source)` index pairs applied to one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecyclePatch {
    pub layer: usize,
    pub pairs: Vec<(usize, usize)>,
}

impl RecyclePatch {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Checks distinct destinations, distinct sources, and no overlap.
    pub fn validate(&self, len: usize) -> Result<()> {
        let mut dst = HashSet::with_capacity(self.pairs.len());
        let mut src = HashSet::with_capacity(self.pairs.len());
        for &(d, s) in &self.pairs {
            if d >= len || s >= len {
                return Err(Error::invalid(format!(
                    "patch pair ({d},{s}) out of range for layer of {len}"
                )));
            }
            if !dst.insert(d) || !src.insert(s) {
                return Err(Error::invalid("patch repeats an index"));
            }
        }
        if !dst.is_disjoint(&src) {
            return Err(Error::invalid("patch destinations overlap its sources"));
        }
        Ok(())
    }

    pub fn apply(&self, weights: &mut Tensor) -> Result<()> {
        self.validate(weights.len())?;
        let w = weights.data_mut();
        for &(d, s) in &self.pairs {
            w[d] = w[s];
        }
        Ok(())
    }
}

/// Pruned weights resampled by one rerandomisation event. The values are
/// regenerated from `value_seed`, so only indices and a seed are stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RerandomizePatch {
    pub layer: usize,
    pub indices: Vec<usize>,
    pub value_seed: u64,
}

impl RerandomizePatch {
    pub fn apply(&self, weights: &mut Tensor, scheme: &InitScheme, fan_in: usize) -> Result<()> {
        if let Some(&bad) = self.indices.iter().find(|&&i| i >= weights.len()) {
            return Err(Error::invalid(format!("rerandomize index {bad} out of range")));
        }
        let mut rng = RngStream::new(self.value_seed);
        let values = scheme.sample(self.indices.len(), fan_in, &mut rng)?;
        let w = weights.data_mut();
        for (&i, v) in self.indices.iter().zip(values) {
            w[i] = v;
        }
        Ok(())
    }
}

/// One entry of a model's weight-edit log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightEdit {
    Recycle(RecyclePatch),
    Rerandomize(RerandomizePatch),
}

impl WeightEdit {
    pub fn layer(&self) -> usize {
        match self {
            WeightEdit::Recycle(p) => p.layer,
            WeightEdit::Rerandomize(p) => p.layer,
        }
    }
}

/// Low and high index sets for recycling: the `k = floor(r·j)` smallest
/// `|S|` in ascending order, and the `k` largest in descending order.
pub fn select_low_high(scores: &Tensor, rate: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    let j = scores.len();
    let k = recycle_count(j, rate);
    if k == 0 {
        return Err(Error::invalid(format!("recycle rate {rate} selects nothing in a layer of {j}")));
    }
    if 2 * k > j {
        return Err(Error::invalid(format!(
            "k={k} exceeds half the layer ({j}); low and high sets would overlap"
        )));
    }
    Ok((
        bottom_k_indices(scores.data(), k),
        top_k_indices(scores.data(), k),
    ))
}

fn expect_variant(spec: &RecycleSpec, want: RecycleVariant) -> Result<()> {
    if spec.variant != want {
        return Err(Error::invalid(format!(
            "expected variant {want}, got {}",
            spec.variant
        )));
    }
    Ok(())
}

/// Copies the weight of the i-th highest score into the slot of the i-th
/// lowest score. Scores are left untouched. Layers where `floor(r·j) = 0`
/// get an empty patch.
pub fn recycle_weights(layer: &mut ScoredTensor, spec: &RecycleSpec) -> Result<RecyclePatch> {
    expect_variant(spec, RecycleVariant::Iwr)?;
    let mut patch = RecyclePatch {
        layer: layer.layer,
        pairs: Vec::new(),
    };
    if recycle_count(layer.len(), spec.rate) == 0 {
        return Ok(patch);
    }
    let (low, high) = select_low_high(&layer.scores, spec.rate)?;
    patch.pairs = low.into_iter().zip(high).collect();
    patch.apply(&mut layer.weights)?;
    Ok(patch)
}

/// Ablation of [`recycle_weights`]: sources are ranks `k+1..=2k` in
/// ascending `|S|`, paired positionally with the lowest `k`.
pub fn recycle_second_tier(layer: &mut ScoredTensor, spec: &RecycleSpec) -> Result<RecyclePatch> {
    expect_variant(spec, RecycleVariant::IwrSecondTier)?;
    let j = layer.len();
    let k = recycle_count(j, spec.rate);
    let mut patch = RecyclePatch {
        layer: layer.layer,
        pairs: Vec::new(),
    };
    if k == 0 {
        return Ok(patch);
    }
    if 2 * k > j {
        return Err(Error::invalid(format!(
            "second-tier recycling needs 2k <= j, got k={k}, j={j}"
        )));
    }
    let ranked = bottom_k_indices(layer.scores.data(), 2 * k);
    let (low, second) = ranked.split_at(k);
    patch.pairs = low.iter().copied().zip(second.iter().copied()).collect();
    patch.apply(&mut layer.weights)?;
    Ok(patch)
}

/// Resamples `⌈r·#pruned⌉` pruned weights, chosen uniformly without
/// replacement, from `scheme`. Kept weights are not touched.
pub fn rerandomize_pruned(
    layer: &mut ScoredTensor,
    mask: &Mask,
    rate: f64,
    scheme: &InitScheme,
    rng: &mut RngStream,
) -> Result<RerandomizePatch> {
    if mask.len() != layer.len() {
        return Err(Error::shape(format!(
            "mask of {} for layer of {}",
            mask.len(),
            layer.len()
        )));
    }
    let pruned = mask.pruned_indices();
    if pruned.is_empty() {
        return Err(Error::invalid("no pruned weights to rerandomize"));
    }
    let count = ((rate * pruned.len() as f64).ceil() as usize).min(pruned.len());
    let indices: Vec<usize> = rng
        .sample_without_replacement(pruned.len(), count)
        .into_iter()
        .map(|i| pruned[i])
        .collect();
    // the new values come from their own stream, so the patch replays
    // from the seed alone
    let patch = RerandomizePatch {
        layer: layer.layer,
        indices,
        value_seed: rng.next_u64(),
    };
    patch.apply(&mut layer.weights, scheme, layer.fan_in)?;
    Ok(patch)
}

/// Whether a weight edit fires after batch `batch` (0-based) of epoch
/// `epoch` (1-based).
///
/// Recycling variants fire after the last batch of every `period`-th epoch.
/// IteRand fires `period` times per epoch at evenly spaced batches, the last
/// one always on the final batch.
pub fn should_trigger(
    epoch: usize,
    batch: usize,
    batches_per_epoch: usize,
    spec: &RecycleSpec,
) -> bool {
    if batches_per_epoch == 0 || batch >= batches_per_epoch || spec.period == 0 {
        return false;
    }
    match spec.variant {
        RecycleVariant::None => false,
        RecycleVariant::Iwr | RecycleVariant::IwrSecondTier => {
            batch + 1 == batches_per_epoch && epoch > 0 && epoch.is_multiple_of(spec.period)
        }
        RecycleVariant::IteRand => {
            let per = spec.period.min(batches_per_epoch);
            // slot i fires at ceil((i+1)·nb/per) − 1
            (0..per).any(|i| ((i + 1) * batches_per_epoch).div_ceil(per) - 1 == batch)
        }
    }
}
