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

//! Weight counts of the Conv-2/4/6/8 family across widths and prune rates.
//!
//!     cargo run --example model_sizes

use supermask::arch::ArchSpec;

fn main() -> supermask::Result<()> {
    println!("{:<6} {:>5} {:>10} {:>10} {:>10}", "arch", "width", "total", "p=0.5", "p=0.9");
    for d in [2, 4, 6, 8] {
        for w in [0.1, 0.25, 0.5, 1.0] {
            let spec = ArchSpec::conv(d, w);
            println!(
                "conv{d:<2} {w:>5} {:>10} {:>10} {:>10}",
                spec.param_count()?,
                spec.kept_params(0.5)?,
                spec.kept_params(0.9)?
            );
        }
    }
    let spec = ArchSpec::conv(2, 1.0);
    for (i, (shape, fan_in)) in spec.layer_shapes()?.iter().enumerate() {
        println!("conv2 layer {i}: {shape:?} fan_in {fan_in}");
    }
    Ok(())
}
