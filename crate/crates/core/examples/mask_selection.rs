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

//! Top-k mask selection by score magnitude, including how ties resolve.
//!
//!     cargo run --example mask_selection

use supermask::rng::RngStream;
use supermask::subnet::compute_mask;
use supermask::tensor::Tensor;

fn show(scores: &[f32], p: f64) -> supermask::Result<()> {
    let mask = compute_mask(&Tensor::from_vec(scores.to_vec()), p)?;
    let bits: String = mask.iter().map(|b| if b { '1' } else { '.' }).collect();
    println!("p={p:<4} kept {:>2}/{}  {bits}", mask.kept(), mask.len());
    Ok(())
}

fn main() -> supermask::Result<()> {
    // magnitude ranks, so -0.9 outranks 0.5
    let scores = [0.1, -0.9, 0.5, 0.3, -0.3, 0.3, 0.0, 0.7];
    println!("scores {scores:?}");
    for p in [0.25, 0.5, 0.75] {
        show(&scores, p)?;
    }
    // at p=0.5 the fourth slot is a three-way tie on |0.3|; the lowest index wins

    let mut rng = RngStream::new(1);
    let big: Vec<f32> = (0..10_000).map(|_| rng.next_f64() as f32 - 0.5).collect();
    for p in [0.5, 0.9, 0.99] {
        let m = compute_mask(&Tensor::from_vec(big.clone()), p)?;
        println!("j=10000 p={p}: {} kept", m.kept());
    }
    Ok(())
}
