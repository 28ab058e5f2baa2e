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

//! Several supermasks in one frozen network: fix the weights, vary the
//! score seed, and measure how much the masks overlap.
//!
//!     cargo run --release --example mpt_diversity [seeds]

use supermask::analysis::{random_mask_ji_baseline, Metric, SimilarityReport};
use supermask::config::RunConfig;
use supermask::trainer::{evaluate, subnetwork, train};

fn main() -> supermask::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let base = RunConfig::parse(include_str!("configs/blobs_mpt.conf"))?;
    let (tr, te) = base.load_datasets()?;
    let mut names = Vec::new();
    let mut masks = Vec::new();
    for s in 0..seeds {
        let config = RunConfig { score_seed: s, ..base.clone() };
        let mut model = config.build_model()?;
        train(&mut model, &config, &tr, Some(&te))?;
        let acc = evaluate(&model, config.algorithm, config.prune_rate, &te, 500)?;
        println!("score_seed {s}: test {acc:.4}");
        names.push(format!("seed{s}"));
        masks.push(subnetwork(&model, config.algorithm, config.prune_rate)?.masks);
    }
    let j: usize = masks[0].iter().map(|m| m.len()).sum();
    let k: usize = masks[0].iter().map(|m| m.kept()).sum();
    for metric in [Metric::Jaccard, Metric::Smc] {
        let report = SimilarityReport::build(names.clone(), &masks, metric)?;
        print!("{}", report.matrix_csv());
        for (l, s) in report.layer_summaries().iter().enumerate() {
            println!("  layer {l}: mean {:.3} min {:.3} max {:.3}", s.mean, s.min, s.max);
        }
    }
    println!("independent random masks: JI {:.3}", random_mask_ji_baseline(j, k)?);
    Ok(())
}
