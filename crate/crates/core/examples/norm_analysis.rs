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

//! Compares the norms of kept and pruned weights before and after score
//! training. At initialisation the two sets are statistically alike; after
//! training the kept set leans toward larger magnitudes.
//!
//!     cargo run --release --example norm_analysis

use supermask::analysis::{norm_csv, norm_rows};
use supermask::config::{ArchKind, DatasetSpec, RunConfig};
use supermask::init::InitKind;
use supermask::tensor::Tensor;
use supermask::trainer::{subnetwork, train};

fn report(config: &RunConfig) -> supermask::Result<()> {
    let (tr, te) = config.load_datasets()?;
    let mut model = config.build_model()?;
    train(&mut model, config, &tr, Some(&te))?;
    let sub = subnetwork(&model, config.algorithm, config.prune_rate)?;
    let ws: Vec<&Tensor> = model.layers.iter().map(|l| &l.weights).collect();
    print!("{}", norm_csv(&norm_rows(&ws, &sub.masks)?));
    Ok(())
}

fn main() -> supermask::Result<()> {
    let config = RunConfig {
        arch: ArchKind::Mlp {
            hidden: vec![256, 256],
            batch_norm: false,
        },
        weight_init: Some(InitKind::KaimingNormal),
        dataset: DatasetSpec::Blobs {
            train: 4000,
            test: 1000,
            classes: 4,
            dim: 16,
            spread: 2.5,
        },
        ..RunConfig::default()
    };
    println!("untrained");
    report(&RunConfig { epochs: 0, ..config.clone() })?;
    println!("after 100 epochs");
    report(&RunConfig { epochs: 100, ..config })?;
    Ok(())
}
