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

//! Mask similarity, kept/pruned norm splits and the random-mask baseline.
//!
//! Global similarity over a network is computed from pooled confusion
//! counts across layers, never as a mean of per-layer values.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::subnet::Mask;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Smc,
    Jaccard,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Smc => "smc",
            Metric::Jaccard => "jaccard",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smc" => Ok(Metric::Smc),
            "jaccard" | "ji" => Ok(Metric::Jaccard),
            _ => Err(Error::invalid(format!("unknown metric '{s}' (smc|jaccard)"))),
        }
    }
}

/// Joint bit counts of two equal-length masks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub m11: u64,
    pub m10: u64,
    pub m01: u64,
    pub m00: u64,
}

impl ConfusionCounts {
    pub fn of(a: &Mask, b: &Mask) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::shape(format!("mask lengths {} vs {}", a.len(), b.len())));
        }
        let mut c = ConfusionCounts::default();
        for (&x, &y) in a.words().iter().zip(b.words()) {
            c.m11 += (x & y).count_ones() as u64;
            c.m10 += (x & !y).count_ones() as u64;
            c.m01 += (!x & y).count_ones() as u64;
        }
        // Tail bits beyond `len` are zero in both masks, so M00 follows.
        c.m00 = a.len() as u64 - c.m11 - c.m10 - c.m01;
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.m11 + self.m10 + self.m01 + self.m00
    }

    pub fn merge(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            m11: self.m11 + o.m11,
            m10: self.m10 + o.m10,
            m01: self.m01 + o.m01,
            m00: self.m00 + o.m00,
        }
    }

    pub fn metric(&self, metric: Metric) -> Result<f64> {
        match metric {
            Metric::Smc => {
                if self.total() == 0 {
                    return Err(Error::invalid("SMC of empty masks"));
                }
                Ok((self.m11 + self.m00) as f64 / self.total() as f64)
            }
            Metric::Jaccard => {
                let union = self.m11 + self.m10 + self.m01;
                if union == 0 {
                    return Err(Error::invalid("Jaccard index undefined: both masks are empty"));
                }
                Ok(self.m11 as f64 / union as f64)
            }
        }
    }
}

pub fn mask_similarity(a: &Mask, b: &Mask, metric: Metric) -> Result<f64> {
    ConfusionCounts::of(a, b)?.metric(metric)
}

/// Per-layer values plus the value over all layers pooled.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSimilarity {
    pub per_layer: Vec<f64>,
    pub global: f64,
}

pub fn layerwise_similarity(a: &[Mask], b: &[Mask], metric: Metric) -> Result<LayerSimilarity> {
    if a.len() != b.len() {
        return Err(Error::ArchMismatch(format!("{} layers vs {}", a.len(), b.len())));
    }
    let mut pooled = ConfusionCounts::default();
    let mut per_layer = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(b) {
        let c = ConfusionCounts::of(x, y)?;
        per_layer.push(c.metric(metric)?);
        pooled = pooled.merge(c);
    }
    Ok(LayerSimilarity {
        per_layer,
        global: pooled.metric(metric)?,
    })
}

/// `(‖θ⊙M‖_F, ‖θ⊙(1−M)‖_F)`.
pub fn frobenius_split(weights: &Tensor, mask: &Mask) -> Result<(f64, f64)> {
    if weights.len() != mask.len() {
        return Err(Error::shape(format!("{} weights, mask of {}", weights.len(), mask.len())));
    }
    let (mut kept, mut pruned) = (0.0f64, 0.0f64);
    for (i, &w) in weights.data().iter().enumerate() {
        let sq = (w as f64) * (w as f64);
        if mask.get(i) {
            kept += sq;
        } else {
            pruned += sq;
        }
    }
    Ok((kept.sqrt(), pruned.sqrt()))
}

/// One norm-report row. RMS of an empty set is reported as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NormRow {
    pub layer: String,
    pub norm_kept: f64,
    pub norm_pruned: f64,
    pub rms_kept: f64,
    pub rms_pruned: f64,
    pub kept: usize,
    pub pruned: usize,
}

impl NormRow {
    pub fn new(layer: impl Into<String>, norm_kept: f64, norm_pruned: f64, kept: usize, pruned: usize) -> Self {
        let rms = |n: f64, c: usize| if c == 0 { 0.0 } else { n / (c as f64).sqrt() };
        NormRow {
            layer: layer.into(),
            norm_kept,
            norm_pruned,
            rms_kept: rms(norm_kept, kept),
            rms_pruned: rms(norm_pruned, pruned),
            kept,
            pruned,
        }
    }
}

/// One row per layer and a pooled `all` row.
pub fn norm_rows(weights: &[&Tensor], masks: &[Mask]) -> Result<Vec<NormRow>> {
    if weights.len() != masks.len() {
        return Err(Error::ArchMismatch(format!("{} layers vs {} masks", weights.len(), masks.len())));
    }
    let mut rows = Vec::with_capacity(weights.len() + 1);
    let (mut sk, mut sp, mut ck, mut cp) = (0.0, 0.0, 0, 0);
    for (i, (w, m)) in weights.iter().zip(masks).enumerate() {
        let (k, p) = frobenius_split(w, m)?;
        sk += k * k;
        sp += p * p;
        ck += m.kept();
        cp += m.pruned();
        rows.push(NormRow::new(i.to_string(), k, p, m.kept(), m.pruned()));
    }
    rows.push(NormRow::new("all", sk.sqrt(), sp.sqrt(), ck, cp));
    Ok(rows)
}

pub fn norm_csv(rows: &[NormRow]) -> String {
    let mut s = String::from("layer,norm_kept,norm_pruned,rms_kept,rms_pruned\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.9},{:.9},{:.9},{:.9}",
            r.layer, r.norm_kept, r.norm_pruned, r.rms_kept, r.rms_pruned
        );
    }
    s
}

/// Expected Jaccard index of two independent uniformly random `k`-subsets
/// of `j` positions, using `E[overlap] = k²/j` in the ratio:
/// `(k²/j) / (2k − k²/j)`.
pub fn random_mask_ji_baseline(j: usize, k: usize) -> Result<f64> {
    if k == 0 || k > j {
        return Err(Error::invalid(format!("need 1 <= k <= j, got k={k}, j={j}")));
    }
    let overlap = (k as f64) * (k as f64) / j as f64;
    Ok(overlap / (2.0 * k as f64 - overlap))
}

/// Pairwise similarity of several networks' masks.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityReport {
    pub models: Vec<String>,
    pub metric: Metric,
    /// Global (pooled) value for every ordered pair.
    pub matrix: Vec<Vec<f64>>,
    /// Per unordered pair `(a, b)` with `a < b`, the per-layer values.
    pub pairs: Vec<(usize, usize, LayerSimilarity)>,
}

/// Summary of one layer across all pairs of distinct models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl SimilarityReport {
    pub fn build(models: Vec<String>, masks: &[Vec<Mask>], metric: Metric) -> Result<Self> {
        if models.len() != masks.len() {
            return Err(Error::invalid("one name per mask set"));
        }
        let n = masks.len();
        let mut matrix = vec![vec![1.0; n]; n];
        let mut pairs = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let s = layerwise_similarity(&masks[a], &masks[b], metric)?;
                matrix[a][b] = s.global;
                matrix[b][a] = s.global;
                pairs.push((a, b, s));
            }
        }
        // The diagonal is a self-comparison; it is still checked for a defined value.
        for m in masks {
            layerwise_similarity(m, m, metric)?;
        }
        Ok(SimilarityReport { models, metric, matrix, pairs })
    }

    pub fn layer_summaries(&self) -> Vec<LayerSummary> {
        let layers = self.pairs.first().map_or(0, |p| p.2.per_layer.len());
        (0..layers)
            .map(|l| {
                let vals: Vec<f64> = self.pairs.iter().map(|p| p.2.per_layer[l]).collect();
                LayerSummary {
                    mean: vals.iter().sum::<f64>() / vals.len() as f64,
                    min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                    max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                }
            })
            .collect()
    }

    /// Rows `model_a,model_b,layer,metric,value`; layer `all` is the pooled value.
    pub fn pairs_csv(&self) -> String {
        let mut s = String::from("model_a,model_b,layer,metric,value\n");
        for (a, b, sim) in &self.pairs {
            let (na, nb) = (&self.models[*a], &self.models[*b]);
            for (l, v) in sim.per_layer.iter().enumerate() {
                let _ = writeln!(s, "{na},{nb},{l},{},{v:.9}", self.metric);
            }
            let _ = writeln!(s, "{na},{nb},all,{},{:.9}", self.metric, sim.global);
        }
        s
    }

    /// Square matrix with a header row and column of model names.
    pub fn matrix_csv(&self) -> String {
        let mut s = String::from(self.metric.to_string().as_str());
        for m in &self.models {
            let _ = write!(s, ",{m}");
        }
        s.push('\n');
        for (name, row) in self.models.iter().zip(&self.matrix) {
            s.push_str(name);
            for v in row {
                let _ = write!(s, ",{v:.9}");
            }
            s.push('\n');
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("layer,metric,mean,min,max\n");
        for (l, m) in self.layer_summaries().iter().enumerate() {
            let _ = writeln!(s, "{l},{},{:.9},{:.9},{:.9}", self.metric, m.mean, m.min, m.max);
        }
        s
    }
}
