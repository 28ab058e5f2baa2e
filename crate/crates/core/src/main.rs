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

//! `supermask` command-line tool. Exit codes: 0 ok, 2 usage or config
//! error, 3 numeric failure during training.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use supermask::analysis::Metric;
use supermask::checkpoint::hex;
use supermask::cli;
use supermask::trainer::EpochRecord;
use supermask::Result;

#[derive(Parser)]
#[command(name = "supermask", version, about = "Train and analyse supermasks of frozen random networks")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Smc,
    Jaccard,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Train scores for one config; writes checkpoint.snfg, history.csv, config.txt.
    Train {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override a config key, e.g. --set epochs=5 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        quiet: bool,
    },
    /// Pairwise mask similarity of checkpoints sharing one architecture.
    CompareMasks {
        #[arg(required = true, num_args = 2..)]
        checkpoints: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        metric: MetricArg,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Kept/pruned Frobenius norms and RMS per layer of a checkpoint.
    NormReport {
        checkpoint: PathBuf,
        #[arg(long, default_value = "norms.csv")]
        out: PathBuf,
    },
    /// Write synthetic Gaussian-blob train/test sets.
    SynthData {
        #[arg(long, default_value_t = 4000)]
        train: usize,
        #[arg(long, default_value_t = 1000)]
        test: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        spread: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Train once per value of one config key, e.g. --key score_seed --values 0..3.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        key: String,
        /// Comma list or half-open integer range `a..b`.
        #[arg(long)]
        values: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also compare the masks of all runs (both metrics).
        #[arg(long)]
        compare: bool,
        #[arg(long)]
        quiet: bool,
    },
}

fn progress(prefix: &str, r: &EpochRecord) {
    let test = r.test_acc.map_or(String::new(), |a| format!(" test_acc {a:.4}"));
    eprintln!(
        "{prefix}epoch {:>4} loss {:.4} train_acc {:.4}{test} lr {:.5} edits {}",
        r.epoch, r.loss, r.train_acc, r.lr, r.recycle_events
    );
}

fn run(args: Args) -> Result<()> {
    match args.command {
        Command::Train {
            config,
            out,
            overrides,
            quiet,
        } => {
            let cfg = cli::load_config(&config, &cli::parse_overrides(&overrides)?)?;
            let o = cli::run_train(&cfg, &out, |r| {
                if !quiet {
                    progress("", r)
                }
            })?;
            println!("{} sha256 {}", o.checkpoint.display(), hex(&o.digest));
        }
        Command::CompareMasks {
            checkpoints,
            metric,
            out,
        } => {
            let metrics = match metric {
                MetricArg::Smc => vec![Metric::Smc],
                MetricArg::Jaccard => vec![Metric::Jaccard],
                MetricArg::Both => vec![Metric::Jaccard, Metric::Smc],
            };
            for r in cli::compare_masks(&checkpoints, &metrics, &out)? {
                print!("{}", r.matrix_csv());
            }
        }
        Command::NormReport { checkpoint, out } => {
            let rows = cli::norm_report(&checkpoint)?;
            cli::write_norm_report(&rows, &out)?;
            print!("{}", supermask::analysis::norm_csv(&rows));
        }
        Command::SynthData {
            train,
            test,
            classes,
            dim,
            spread,
            seed,
            out,
        } => {
            let (a, b) = cli::synth_data(train, test, classes, dim, spread, seed, &out)?;
            println!("{}\n{}", a.display(), b.display());
        }
        Command::Sweep {
            config,
            key,
            values,
            overrides,
            out,
            compare,
            quiet,
        } => {
            let cfg = cli::load_config(&config, &cli::parse_overrides(&overrides)?)?;
            let values = cli::parse_values(&values)?;
            let runs = cli::sweep(&cfg, &key, &values, &out, |v, r| {
                if !quiet {
                    progress(&format!("[{key}={v}] "), r)
                }
            })?;
            for r in &runs {
                println!("{key}={} sha256 {}", r.value, hex(&r.outcome.digest));
            }
            if compare && runs.len() >= 2 {
                let paths: Vec<PathBuf> = runs.iter().map(|r| r.outcome.checkpoint.clone()).collect();
                for r in cli::compare_masks(&paths, &[Metric::Jaccard, Metric::Smc], &out)? {
                    print!("{}", r.matrix_csv());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
