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

//! Iterative weight recycling: the lowest-score weights take the values of
//! the highest-score ones. Shows one edit on a toy layer, then compares
//! Biprop with and without recycling on blobs.
//!
//!     cargo run --release --example weight_recycling

use supermask::config::RunConfig;
use supermask::reweight::{recycle_weights, RecycleSpec, RecycleVariant};
use supermask::subnet::ScoredTensor;
use supermask::tensor::Tensor;
use supermask::trainer::{evaluate, train};

fn main() -> supermask::Result<()> {
    let theta = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
    let scores = Tensor::from_vec(vec![0.5, -0.1, 0.9, 0.05, -0.7, 0.2, 0.3, -0.02, 0.8, 0.4]);
    let mut layer = ScoredTensor::new(theta, scores, 10, 0)?;
    let spec = RecycleSpec {
        rate: 0.2,
        period: 10,
        variant: RecycleVariant::Iwr,
    };
    let patch = recycle_weights(&mut layer, &spec)?;
    println!("(dst, src) pairs {:?}", patch.pairs);
    println!("weights now {:?}", layer.weights.data());

    let base = RunConfig::parse(include_str!("configs/blobs_biprop_iwr.conf"))?;
    for variant in [RecycleVariant::None, RecycleVariant::Iwr, RecycleVariant::IwrSecondTier] {
        let config = RunConfig { variant, ..base.clone() };
        let (tr, te) = config.load_datasets()?;
        let mut model = config.build_model()?;
        let h = train(&mut model, &config, &tr, Some(&te))?;
        let events = h.records.iter().map(|r| r.recycle_events).sum::<usize>();
        let acc = evaluate(&model, config.algorithm, config.prune_rate, &te, 500)?;
        println!("{:<16} test {acc:.4}  events {events}  logged edits {}", variant.to_string(), model.edit_log.len());
    }
    Ok(())
}
