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

//! Conv-2 on CIFAR-10 at desk scale. Needs the binary dataset:
//!
//!     CIFAR10_DIR=path/to/cifar-10-batches-bin \
//!         cargo run --release --example cifar_conv2 [config]
//!
//! Defaults to `configs/cifar_conv2_desk.conf`; pass `configs/cifar_conv2_full.conf`
//! for the full-width 250-epoch schedule.

use std::path::PathBuf;

use supermask::config::{DatasetSpec, RunConfig};
use supermask::trainer::train_with_progress;

fn main() -> supermask::Result<()> {
    let Ok(dir) = std::env::var("CIFAR10_DIR") else {
        eprintln!("set CIFAR10_DIR to the cifar-10-batches-bin directory");
        std::process::exit(2);
    };
    let text = match std::env::args().nth(1) {
        Some(p) => std::fs::read_to_string(p)?,
        None => include_str!("configs/cifar_conv2_desk.conf").to_string(),
    };
    let mut config = RunConfig::parse(&text)?;
    if let DatasetSpec::Cifar10 { dir: d, .. } = &mut config.dataset {
        *d = PathBuf::from(dir);
    }
    let (tr, te) = config.load_datasets()?;
    let mut model = config.build_model()?;
    println!("{} train / {} test images, {} weights", tr.len(), te.len(), model.param_count());
    train_with_progress(&mut model, &config, &tr, Some(&te), |r| {
        println!(
            "epoch {:>3}  loss {:.4}  train {:.3}  test {:.3}  recycle events {}",
            r.epoch,
            r.loss,
            r.train_acc,
            r.test_acc.unwrap_or(f64::NAN),
            r.recycle_events
        );
    })?;
    Ok(())
}
