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

//! Biprop turns the kept weights into ±α, with α the mean magnitude of the
//! kept weights, and trains scores through a straight-through gradient.
//!
//!     cargo run --release --example biprop_binary

use supermask::config::RunConfig;
use supermask::init::{InitKind, InitScheme};
use supermask::rng::RngStream;
use supermask::subnet::{compute_alpha, compute_mask, effective_weights, Algorithm, ScoredTensor};
use supermask::trainer::{evaluate, subnetwork, train};

fn main() -> supermask::Result<()> {
    let mut rng = RngStream::new(3);
    let theta = InitScheme::new(InitKind::KaimingNormal).tensor(&[2, 4], 4, &mut rng)?;
    let scores = InitScheme::new(InitKind::KaimingNormal).tensor(&[2, 4], 4, &mut rng)?;
    let layer = ScoredTensor::new(theta, scores, 4, 0)?;
    let mask = compute_mask(&layer.scores, 0.5)?;
    let alpha = compute_alpha(&layer.weights, &mask)?;
    let w = effective_weights(&layer, &mask, Algorithm::Biprop, Some(alpha))?;
    println!("theta {:?}", layer.weights.data());
    println!("alpha {:.4}", alpha.0);
    println!("w_eff {:?}", w.data());

    let config = RunConfig::parse(&format!(
        "{}algorithm = biprop\nepochs = 60\n",
        include_str!("configs/blobs_edge_popup.conf").replace("algorithm = edge_popup\n", "").replace("epochs = 200\n", "")
    ))?;
    let (tr, te) = config.load_datasets()?;
    let mut model = config.build_model()?;
    train(&mut model, &config, &tr, Some(&te))?;
    let sub = subnetwork(&model, Algorithm::Biprop, config.prune_rate)?;
    for (l, (a, w)) in sub.alphas.iter().zip(&sub.weights).enumerate() {
        let distinct = {
            let mut v: Vec<u32> = w.data().iter().map(|x| x.to_bits()).collect();
            v.sort_unstable();
            v.dedup();
            v.len()
        };
        println!("layer {l}: alpha {:.4}, {distinct} distinct values (0, +alpha, -alpha)", a.map_or(f32::NAN, |a| a.0));
    }
    println!("test accuracy {:.4}", evaluate(&model, Algorithm::Biprop, config.prune_rate, &te, 500)?);
    Ok(())
}
