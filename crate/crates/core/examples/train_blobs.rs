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

//! Trains an Edge-Popup supermask over a frozen random MLP on Gaussian
//! blobs. The weights never change; only which half of them is used.
//!
//!     cargo run --release --example train_blobs [epochs]

use supermask::config::RunConfig;
use supermask::trainer::{evaluate, train_with_progress};

fn main() -> supermask::Result<()> {
    let mut config = RunConfig::parse(include_str!("configs/blobs_edge_popup.conf"))?;
    if let Some(e) = std::env::args().nth(1) {
        config.epochs = e.parse().map_err(|_| supermask::Error::Config(format!("bad epochs '{e}'")))?;
    }
    let (train, test) = config.load_datasets()?;
    let mut model = config.build_model()?;
    println!("{} weights, {} kept at p={}", model.param_count(), model.kept_params(config.prune_rate), config.prune_rate);

    let before = model.weights_digest();
    train_with_progress(&mut model, &config, &train, Some(&test), |r| {
        if r.epoch % 20 == 0 || r.epoch == 1 {
            println!(
                "epoch {:>3}  loss {:.4}  train {:.3}  test {:.3}  lr {:.4}",
                r.epoch,
                r.loss,
                r.train_acc,
                r.test_acc.unwrap_or(f64::NAN),
                r.lr
            );
        }
    })?;
    assert_eq!(before, model.weights_digest(), "frozen weights moved");

    let acc = |d| evaluate(&model, config.algorithm, config.prune_rate, d, 500);
    println!("final: train {:.4}  test {:.4}", acc(&train)?, acc(&test)?);
    Ok(())
}
