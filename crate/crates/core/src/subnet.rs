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

//! Scored layers: top-k masks over `|S|`, effective weights for Edge-Popup
//! and Biprop, the Biprop scale `α`, and straight-through score gradients.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Real-valued frozen weights, `W = θ ⊙ M`.
    EdgePopup,
    /// Binarised frozen weights, `W = α · sign(θ) ⊙ M`.
    Biprop,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::EdgePopup => "edge_popup",
            Algorithm::Biprop => "biprop",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edge_popup" => Ok(Algorithm::EdgePopup),
            "biprop" => Ok(Algorithm::Biprop),
            other => Err(Error::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Frozen random weights paired with trainable scores for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTensor {
    pub weights: Tensor,
    pub scores: Tensor,
    pub fan_in: usize,
    pub layer: usize,
}

impl ScoredTensor {
    pub fn new(weights: Tensor, scores: Tensor, fan_in: usize, layer: usize) -> Result<Self> {
        if weights.shape() != scores.shape() {
            return Err(Error::shape(format!(
                "weights {:?} vs scores {:?}",
                weights.shape(),
                scores.shape()
            )));
        }
        Ok(ScoredTensor {
            weights,
            scores,
            fan_in,
            layer,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn shape(&self) -> &[usize] {
        self.weights.shape()
    }
}

/// Orders indices by `|S|` with a fixed tie-break: among equal magnitudes the
/// lower flat index counts as larger. `Greater` means "more important".
#[inline]
pub fn importance_cmp(scores: &[f32], a: usize, b: usize) -> Ordering {
    scores[a]
        .abs()
        .total_cmp(&scores[b].abs())
        .then_with(|| b.cmp(&a))
}

/// Indices of the `k` most important scores, most important first.
pub fn top_k_indices(scores: &[f32], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let by_desc = |a: &usize, b: &usize| importance_cmp(scores, *b, *a);
    if k < idx.len() && k > 0 {
        idx.select_nth_unstable_by(k - 1, by_desc);
    }
    idx.truncate(k);
    idx.sort_unstable_by(by_desc);
    idx
}

/// Indices of the `k` least important scores, least important first.
pub fn bottom_k_indices(scores: &[f32], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let by_asc = |a: &usize, b: &usize| importance_cmp(scores, *a, *b);
    if k < idx.len() && k > 0 {
        idx.select_nth_unstable_by(k - 1, by_asc);
    }
    idx.truncate(k);
    idx.sort_unstable_by(by_asc);
    idx
}

/// Number of weights kept in a layer of `len` weights at prune rate `p`:
/// `round((1−p)·len)`.
pub fn kept_count(len: usize, prune_rate: f64) -> usize {
    ((1.0 - prune_rate) * len as f64).round() as usize
}

/// A per-layer binary mask stored as a packed bitset.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    words: Vec<u64>,
    len: usize,
    kept: usize,
    prune_rate: f64,
}

impl Mask {
    pub fn from_bools(bits: &[bool]) -> Self {
        let mut words = vec![0u64; bits.len().div_ceil(64)];
        let mut kept = 0;
        for (i, &b) in bits.iter().enumerate() {
            if b {
                words[i / 64] |= 1 << (i % 64);
                kept += 1;
            }
        }
        let prune_rate = if bits.is_empty() {
            0.0
        } else {
            1.0 - kept as f64 / bits.len() as f64
        };
        Mask {
            words,
            len: bits.len(),
            kept,
            prune_rate,
        }
    }

    fn from_indices(len: usize, indices: &[usize], prune_rate: f64) -> Self {
        let mut words = vec![0u64; len.div_ceil(64)];
        for &i in indices {
            words[i / 64] |= 1 << (i % 64);
        }
        Mask {
            words,
            len,
            kept: indices.len(),
            prune_rate,
        }
    }

    pub fn ones(len: usize) -> Self {
        Mask::from_bools(&vec![true; len])
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of set bits (`k`).
    pub fn kept(&self) -> usize {
        self.kept
    }

    pub fn pruned(&self) -> usize {
        self.len - self.kept
    }

    pub fn prune_rate(&self) -> f64 {
        self.prune_rate
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        (0..self.len).filter(|&i| self.get(i)).collect()
    }

    pub fn pruned_indices(&self) -> Vec<usize> {
        (0..self.len).filter(|&i| !self.get(i)).collect()
    }

    /// Bit `i` lives in byte `i/8` at position `i%8`.
    pub fn to_packed_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.len.div_ceil(8)];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = (self.words[i / 8] >> ((i % 8) * 8)) as u8;
        }
        out
    }

    pub fn from_packed_bytes(bytes: &[u8], len: usize, prune_rate: f64) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::invalid(format!(
                "{} packed bytes for a mask of {} bits",
                bytes.len(),
                len
            )));
        }
        let mut words = vec![0u64; len.div_ceil(64)];
        for (i, &b) in bytes.iter().enumerate() {
            words[i / 8] |= (b as u64) << ((i % 8) * 8);
        }
        if !len.is_multiple_of(64) {
            let tail = words[len / 64] >> (len % 64);
            if tail != 0 {
                return Err(Error::invalid("mask has bits set past its length"));
            }
        }
        let kept = words.iter().map(|w| w.count_ones() as usize).sum();
        Ok(Mask {
            words,
            len,
            kept,
            prune_rate,
        })
    }
}

/// Keeps the `round((1−p)·j)` scores of largest magnitude.
pub fn compute_mask(scores: &Tensor, prune_rate: f64) -> Result<Mask> {
    if !(0.0..1.0).contains(&prune_rate) {
        return Err(Error::invalid(format!(
            "prune rate must lie in [0,1), got {prune_rate}"
        )));
    }
    let k = kept_count(scores.len(), prune_rate);
    if k == 0 {
        return Err(Error::invalid(format!(
            "prune rate {prune_rate} removes every weight of a {}-weight layer",
            scores.len()
        )));
    }
    let keep = top_k_indices(scores.data(), k);
    Ok(Mask::from_indices(scores.len(), &keep, prune_rate))
}

/// Biprop's per-layer scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerAlpha(pub f32);

impl LayerAlpha {
    pub fn value(self) -> f32 {
        self.0
    }
}

/// `α = ‖M⊙θ‖₁ / ‖M‖₁`, accumulated in `f64`.
pub fn compute_alpha(weights: &Tensor, mask: &Mask) -> Result<LayerAlpha> {
    if weights.len() != mask.len() {
        return Err(Error::shape(format!(
            "{} weights vs mask of {}",
            weights.len(),
            mask.len()
        )));
    }
    if mask.kept() == 0 {
        return Err(Error::invalid("alpha of an empty mask"));
    }
    let l1: f64 = weights
        .data()
        .iter()
        .enumerate()
        .filter(|&(i, _)| mask.get(i))
        .map(|(_, &w)| w.abs() as f64)
        .sum();
    Ok(LayerAlpha((l1 / mask.kept() as f64) as f32))
}

/// `sign` with `sign(0) = +1`.
#[inline]
pub fn binary_sign(v: f32) -> f32 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Per-weight value that the mask multiplies: `θ` or `α·sign(θ)`.
fn masked_values(
    layer: &ScoredTensor,
    alg: Algorithm,
    alpha: Option<LayerAlpha>,
) -> Result<Vec<f32>> {
    match alg {
        Algorithm::EdgePopup => Ok(layer.weights.data().to_vec()),
        Algorithm::Biprop => {
            let a = alpha
                .ok_or_else(|| Error::invalid("biprop needs a layer alpha"))?
                .0;
            Ok(layer.weights.data().iter().map(|&w| a * binary_sign(w)).collect())
        }
    }
}

/// Weights the forward pass actually uses.
pub fn effective_weights(
    layer: &ScoredTensor,
    mask: &Mask,
    alg: Algorithm,
    alpha: Option<LayerAlpha>,
) -> Result<Tensor> {
    if mask.len() != layer.len() {
        return Err(Error::shape(format!(
            "mask of {} for a layer of {}",
            mask.len(),
            layer.len()
        )));
    }
    let mut vals = masked_values(layer, alg, alpha)?;
    for (i, v) in vals.iter_mut().enumerate() {
        if !mask.get(i) {
            *v = 0.0;
        }
    }
    Tensor::new(layer.shape().to_vec(), vals)
}

/// Straight-through gradient for the scores: the mask is treated as the
/// identity, so every position (pruned ones included) receives
/// `∂L/∂W_eff · v` with `v = θ` or `α·sign(θ)`.
pub fn score_gradient(
    grad_effective: &Tensor,
    layer: &ScoredTensor,
    alg: Algorithm,
    alpha: Option<LayerAlpha>,
) -> Result<Tensor> {
    if grad_effective.shape() != layer.shape() {
        return Err(Error::shape(format!(
            "gradient {:?} vs layer {:?}",
            grad_effective.shape(),
            layer.shape()
        )));
    }
    let vals = masked_values(layer, alg, alpha)?;
    let data = grad_effective
        .data()
        .iter()
        .zip(&vals)
        .map(|(&g, &v)| g * v)
        .collect();
    Tensor::new(layer.shape().to_vec(), data)
}

/// Chains a gradient taken with respect to the ranked magnitudes `|S|`
/// back to the signed scores: `∂L/∂S = sign(S)·∂L/∂|S|`, with `sign(0) = +1`.
pub fn chain_through_abs(grad_magnitude: &mut Tensor, scores: &Tensor) -> Result<()> {
    if grad_magnitude.shape() != scores.shape() {
        return Err(Error::shape(format!(
            "gradient {:?} vs scores {:?}",
            grad_magnitude.shape(),
            scores.shape()
        )));
    }
    for (g, &s) in grad_magnitude.data_mut().iter_mut().zip(scores.data()) {
        *g *= binary_sign(s);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f32]) -> Tensor {
        Tensor::from_vec(v.to_vec())
    }

    fn bits(m: &Mask) -> Vec<u8> {
        m.iter().map(|b| b as u8).collect()
    }

    fn layer(theta: &[f32]) -> ScoredTensor {
        ScoredTensor::new(t(theta), Tensor::zeros(&[theta.len()]), 1, 0).unwrap()
    }

    #[test]
    fn mask_examples() {
        let s = t(&[0.3, -0.5, 0.1, 0.9]);
        assert_eq!(bits(&compute_mask(&s, 0.5).unwrap()), vec![0, 1, 0, 1]);
        assert_eq!(bits(&compute_mask(&s, 0.75).unwrap()), vec![0, 0, 0, 1]);
        assert_eq!(bits(&compute_mask(&s, 0.0).unwrap()), vec![1, 1, 1, 1]);
    }

    #[test]
    fn mask_errors() {
        let s = t(&[0.3, -0.5, 0.1, 0.9]);
        assert!(compute_mask(&s, 1.0).is_err());
        assert!(compute_mask(&s, -0.1).is_err());
        assert!(compute_mask(&s, 0.9).is_err()); // round(0.4) == 0
    }

    #[test]
    fn ties_go_to_lower_index() {
        let s = t(&[0.5, -0.5, 0.5, 0.1]);
        assert_eq!(bits(&compute_mask(&s, 0.5).unwrap()), vec![1, 1, 0, 0]);
        assert_eq!(bottom_k_indices(s.data(), 2), vec![3, 2]);
    }

    #[test]
    fn packed_bytes_round_trip() {
        let m = Mask::from_bools(&[true, false, true, true, false, false, false, false, true, false]);
        let bytes = m.to_packed_bytes();
        assert_eq!(bytes, vec![0b0000_1101, 0b0000_0001]);
        let back = Mask::from_packed_bytes(&bytes, 10, m.prune_rate()).unwrap();
        assert_eq!(back, m);
        assert!(Mask::from_packed_bytes(&[0, 0b100], 10, 0.0).is_err());
    }

    #[test]
    fn effective_weights_examples() {
        let m = Mask::from_bools(&[true, false, true]);
        let ep = effective_weights(&layer(&[1.0, 2.0, 3.0]), &m, Algorithm::EdgePopup, None).unwrap();
        assert_eq!(ep.data(), &[1.0, 0.0, 3.0]);

        let l = layer(&[0.2, -0.4, 0.6]);
        let bp = effective_weights(&l, &m, Algorithm::Biprop, Some(LayerAlpha(0.4))).unwrap();
        assert_eq!(bp.data(), &[0.4, 0.0, 0.4]);

        let l = layer(&[1.0, -1.0]);
        let bp = effective_weights(&l, &Mask::ones(2), Algorithm::Biprop, Some(LayerAlpha(1.0))).unwrap();
        assert_eq!(bp.data(), &[1.0, -1.0]);

        assert!(effective_weights(&l, &Mask::ones(2), Algorithm::Biprop, None).is_err());
    }

    #[test]
    fn sign_of_zero_is_positive() {
        let l = layer(&[0.0, -0.0, -2.0]);
        let bp = effective_weights(&l, &Mask::ones(3), Algorithm::Biprop, Some(LayerAlpha(0.5))).unwrap();
        assert_eq!(bp.data(), &[0.5, 0.5, -0.5]);
    }

    #[test]
    fn alpha_examples() {
        let m = Mask::from_bools(&[true, false, true]);
        let a = compute_alpha(&t(&[0.2, -0.4, 0.6]), &m).unwrap();
        assert!((a.0 - 0.4).abs() < 1e-7);
        let a = compute_alpha(&t(&[3.0, -4.0]), &Mask::ones(2)).unwrap();
        assert_eq!(a.0, 3.5);
        let c = t(&[-0.7; 5]);
        let m = Mask::from_bools(&[false, true, false, true, true]);
        assert_eq!(compute_alpha(&c, &m).unwrap().0, 0.7);
        assert!(compute_alpha(&c, &Mask::from_bools(&[false; 5])).is_err());
    }

    #[test]
    fn score_gradient_examples() {
        let l = layer(&[0.5, -1.0]);
        let g = score_gradient(&t(&[1.0, 2.0]), &l, Algorithm::EdgePopup, None).unwrap();
        assert_eq!(g.data(), &[0.5, -2.0]);
        let g = score_gradient(&t(&[0.0, 0.0]), &l, Algorithm::EdgePopup, None).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0]);
        let g = score_gradient(&t(&[1.0, 2.0]), &l, Algorithm::Biprop, Some(LayerAlpha(0.25))).unwrap();
        assert_eq!(g.data(), &[0.25, -0.5]);
        assert!(score_gradient(&t(&[1.0]), &l, Algorithm::EdgePopup, None).is_err());
    }

    #[test]
    fn kept_count_rounds_to_nearest() {
        assert_eq!(kept_count(10, 0.25), 8); // 7.5 rounds up
        assert_eq!(kept_count(1728, 0.2), 1382);
        assert_eq!(kept_count(65536, 0.2), 52429);
        assert_eq!(kept_count(7, 0.0), 7);
    }

    #[test]
    fn abs_chain_flips_negative_scores_only() {
        let mut g = t(&[1.0, 2.0, -3.0]);
        chain_through_abs(&mut g, &t(&[-0.5, 0.0, 0.25])).unwrap();
        assert_eq!(g.data(), &[-1.0, 2.0, -3.0]);
    }
}
