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

//! Checkpoints hold seeds, masks and an edit log, not weights. Loading one
//! regenerates the frozen weights and replays every recycling edit.
//!
//!     cargo run --release --example checkpoint_roundtrip

use supermask::checkpoint::{hex, Checkpoint};
use supermask::config::RunConfig;
use supermask::trainer::{evaluate, evaluate_weights, train};

fn main() -> supermask::Result<()> {
    let config = RunConfig {
        epochs: 30,
        k_per: Some(5),
        ..RunConfig::parse(include_str!("configs/blobs_biprop_iwr.conf"))?
    };
    let (tr, te) = config.load_datasets()?;
    let mut model = config.build_model()?;
    train(&mut model, &config, &tr, Some(&te))?;

    let dir = std::env::temp_dir().join("supermask-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("checkpoint.snfg");
    let digest = Checkpoint::from_model(&model, &config)?.save(&path)?;
    let size = std::fs::metadata(&path)?.len();
    println!("{} ({size} bytes, {} weights) sha256 {}", path.display(), model.param_count(), hex(&digest));

    let ck = Checkpoint::load(&path)?;
    println!("{} edits in the log", ck.edits.len());
    // scores are not stored; the saved masks and alphas drive inference
    let restored = ck.restore_model()?;
    assert_eq!(restored.weights_digest(), model.weights_digest());
    let a = evaluate(&model, config.algorithm, config.prune_rate, &te, 500)?;
    let b = evaluate_weights(&restored, &ck.effective_weights()?, &te, 500)?;
    println!("test accuracy live {a:.4}, restored {b:.4}");

    let mut bytes = std::fs::read(&path)?;
    bytes[10] ^= 1;
    println!("flipped one bit: {}", Checkpoint::from_bytes(&bytes).unwrap_err());
    Ok(())
}
