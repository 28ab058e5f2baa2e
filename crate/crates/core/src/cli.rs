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

//! Experiment runners behind the command-line tool. Every function here is
//! deterministic in its inputs and writes only CSV or checkpoint files.

use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{norm_csv, norm_rows, Metric, NormRow, SimilarityReport};
use crate::checkpoint::{hex, Checkpoint};
use crate::config::RunConfig;
use crate::data::{synth_blobs_split, write_sblb};
use crate::error::{Error, Result};
use crate::trainer::{train_with_progress, EpochRecord, TrainHistory};

pub const CHECKPOINT_FILE: &str = "checkpoint.snfg";
pub const HISTORY_FILE: &str = "history.csv";
pub const CONFIG_FILE: &str = "config.txt";

/// Process exit code for an error: 3 for numeric failure, 2 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Diverged { .. } | Error::NonFinite(_) => 3,
        _ => 2,
    }
}

/// Parses `key=value` override strings.
pub fn parse_overrides(items: &[String]) -> Result<Vec<(String, String)>> {
    items
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Config(format!("override '{s}' is not key=value")))
        })
        .collect()
}

pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let config = RunConfig::parse(&text)?.with_overrides(overrides)?;
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub history: TrainHistory,
    pub digest: [u8; 32],
}

/// Trains one config and writes `checkpoint.snfg`, `history.csv` and the
/// resolved `config.txt` into `out_dir`.
pub fn run_train(
    config: &RunConfig,
    out_dir: &Path,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    let (train_set, test_set) = config.load_datasets()?;
    let mut model = config.build_model()?;
    let history = train_with_progress(&mut model, config, &train_set, Some(&test_set), on_epoch)?;
    fs::create_dir_all(out_dir)?;
    let checkpoint = out_dir.join(CHECKPOINT_FILE);
    let digest = Checkpoint::from_model(&model, config)?.save(&checkpoint)?;
    fs::write(out_dir.join(HISTORY_FILE), history.to_csv())?;
    fs::write(out_dir.join(CONFIG_FILE), config.to_text())?;
    Ok(TrainOutcome {
        checkpoint,
        history,
        digest,
    })
}

/// Loads checkpoints and checks that they share one architecture.
pub fn load_comparable(paths: &[PathBuf]) -> Result<Vec<Checkpoint>> {
    let cks = paths
        .iter()
        .map(|p| Checkpoint::load(p))
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = cks.first() {
        let shapes = |c: &Checkpoint| c.layers.iter().map(|l| l.shape.clone()).collect::<Vec<_>>();
        let want = shapes(first);
        for (p, c) in paths.iter().zip(&cks) {
            if shapes(c) != want {
                return Err(Error::ArchMismatch(format!(
                    "{} has a different architecture from {}",
                    p.display(),
                    paths[0].display()
                )));
            }
        }
    }
    Ok(cks)
}

/// Model name used in reports: the checkpoint's parent directory name, or
/// its file stem when the file lies directly in the working directory.
pub fn model_name(path: &Path) -> String {
    path.parent()
        .and_then(|d| d.file_name())
        .or_else(|| path.file_stem())
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Pairwise mask similarity. Writes `similarity_<metric>_pairs.csv`,
/// `similarity_<metric>_matrix.csv` and `similarity_<metric>_layers.csv`.
pub fn compare_masks(paths: &[PathBuf], metrics: &[Metric], out_dir: &Path) -> Result<Vec<SimilarityReport>> {
    if paths.len() < 2 {
        return Err(Error::invalid("compare-masks needs at least two checkpoints"));
    }
    let cks = load_comparable(paths)?;
    let names: Vec<String> = paths.iter().map(|p| model_name(p)).collect();
    let masks: Vec<_> = cks.iter().map(Checkpoint::masks).collect();
    fs::create_dir_all(out_dir)?;
    let mut reports = Vec::new();
    for &metric in metrics {
        let r = SimilarityReport::build(names.clone(), &masks, metric)?;
        fs::write(out_dir.join(format!("similarity_{metric}_pairs.csv")), r.pairs_csv())?;
        fs::write(out_dir.join(format!("similarity_{metric}_matrix.csv")), r.matrix_csv())?;
        fs::write(out_dir.join(format!("similarity_{metric}_layers.csv")), r.summary_csv())?;
        reports.push(r);
    }
    Ok(reports)
}

/// Kept/pruned norms of a checkpoint's reconstructed frozen weights.
pub fn norm_report(path: &Path) -> Result<Vec<NormRow>> {
    let ck = Checkpoint::load(path)?;
    let weights = ck.reconstruct_weights()?;
    norm_rows(&weights.iter().collect::<Vec<_>>(), &ck.masks())
}

pub fn write_norm_report(rows: &[NormRow], out: &Path) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(out, norm_csv(rows))?;
    Ok(())
}

/// Writes `train.sblb` and `test.sblb` blob datasets into `out_dir`.
pub fn synth_data(
    n_train: usize,
    n_test: usize,
    classes: usize,
    dim: usize,
    spread: f64,
    seed: u64,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let (train, test) = synth_blobs_split(n_train, n_test, classes, dim, spread, seed)?;
    fs::create_dir_all(out_dir)?;
    let paths = (out_dir.join("train.sblb"), out_dir.join("test.sblb"));
    write_sblb(&train, fs::File::create(&paths.0)?)?;
    write_sblb(&test, fs::File::create(&paths.1)?)?;
    Ok(paths)
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub value: String,
    pub outcome: TrainOutcome,
}

/// One training run per value of `key`, each in `out_dir/<key>_<value>`,
/// plus `sweep.csv` summarising the final epoch of every run.
pub fn sweep(
    base: &RunConfig,
    key: &str,
    values: &[String],
    out_dir: &Path,
    mut on_epoch: impl FnMut(&str, &EpochRecord),
) -> Result<Vec<SweepRun>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut runs = Vec::with_capacity(values.len());
    let mut csv = String::from("key,value,epochs,loss,train_acc,test_acc,checkpoint_sha256\n");
    for v in values {
        let config = base.with_overrides(&[(key.to_string(), v.clone())])?;
        let dir = out_dir.join(format!("{key}_{v}"));
        let outcome = run_train(&config, &dir, |r| on_epoch(v, r))?;
        let last = outcome.history.records.last();
        csv.push_str(&format!(
            "{key},{v},{},{},{},{},{}\n",
            outcome.history.records.len(),
            last.map_or(String::new(), |r| format!("{:.6}", r.loss)),
            last.map_or(String::new(), |r| format!("{:.6}", r.train_acc)),
            last.and_then(|r| r.test_acc).map_or(String::new(), |a| format!("{a:.6}")),
            hex(&outcome.digest)
        ));
        runs.push(SweepRun {
            value: v.clone(),
            outcome,
        });
    }
    fs::write(out_dir.join("sweep.csv"), csv)?;
    Ok(runs)
}

/// Expands `a..b` (exclusive) or a comma list into sweep values.
pub fn parse_values(spec: &str) -> Result<Vec<String>> {
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| Error::Config(format!("bad range '{spec}'")))?;
        let b: u64 = b.trim().parse().map_err(|_| Error::Config(format!("bad range '{spec}'")))?;
        return Ok((a..b).map(|v| v.to_string()).collect());
    }
    Ok(spec
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect())
}
