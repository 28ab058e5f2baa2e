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

//! Run configuration in a flat `key = value` text format.
//!
//! Blank lines and `#` comments are ignored. Unknown or repeated keys are
//! errors. [`RunConfig::to_text`] writes every key in a fixed order, so a
//! config serialised into a checkpoint is byte-stable.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::arch::{ArchSpec, BuildOptions, Family, Model};
use crate::data::{load_cifar10, synth_blobs_split, Dataset};
use crate::error::{Error, Result};
use crate::init::{InitKind, InitScheme};
use crate::reweight::{RecycleSpec, RecycleVariant};
use crate::subnet::Algorithm;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Cifar10 {
        dir: PathBuf,
        train_subset: Option<usize>,
    },
    Blobs {
        train: usize,
        test: usize,
        classes: usize,
        dim: usize,
        spread: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArchKind {
    Conv(usize),
    Mlp { hidden: Vec<usize>, batch_norm: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub variant: RecycleVariant,
    pub arch: ArchKind,
    pub width: f64,
    pub prune_rate: f64,
    /// `None` resolves to the variant's default (0.2 recycling, 0.1 IteRand).
    pub recycle_rate: Option<f64>,
    /// `None` resolves to the variant's default (10 recycling, 1 IteRand).
    pub k_per: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub weight_seed: u64,
    pub score_seed: u64,
    pub data_seed: u64,
    pub dataset: DatasetSpec,
    /// `None` picks signed constant for Edge-Popup, Kaiming normal for Biprop.
    pub weight_init: Option<InitKind>,
    /// `None` enables scale-fan only for plain Biprop.
    pub scale_fan: Option<bool>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            algorithm: Algorithm::EdgePopup,
            variant: RecycleVariant::None,
            arch: ArchKind::Conv(2),
            width: 1.0,
            prune_rate: 0.5,
            recycle_rate: None,
            k_per: None,
            epochs: 250,
            batch_size: 128,
            lr: 0.1,
            weight_decay: 1e-4,
            momentum: 0.9,
            weight_seed: 0,
            score_seed: 0,
            data_seed: 0,
            dataset: DatasetSpec::Cifar10 {
                dir: PathBuf::from("data/cifar-10-batches-bin"),
                train_subset: None,
            },
            weight_init: None,
            scale_fan: None,
        }
    }
}

const KEYS: &[&str] = &[
    "algorithm",
    "variant",
    "arch",
    "mlp_hidden",
    "mlp_batch_norm",
    "width",
    "prune_rate",
    "recycle_rate",
    "k_per",
    "epochs",
    "batch_size",
    "lr",
    "weight_decay",
    "momentum",
    "weight_seed",
    "score_seed",
    "data_seed",
    "dataset",
    "data_dir",
    "train_subset",
    "blobs_train",
    "blobs_test",
    "blobs_classes",
    "blobs_dim",
    "blobs_spread",
    "weight_init",
    "scale_fan",
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value '{v}' for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{key} must be true or false, got '{v}'"))),
    }
}

impl RunConfig {
    pub fn recycle_spec(&self) -> RecycleSpec {
        let (rate, period) = match self.variant {
            RecycleVariant::None => (0.0, 1),
            RecycleVariant::IteRand => (0.1, 1),
            RecycleVariant::Iwr | RecycleVariant::IwrSecondTier => (0.2, 10),
        };
        RecycleSpec {
            rate: self.recycle_rate.unwrap_or(rate),
            period: self.k_per.unwrap_or(period),
            variant: self.variant,
        }
    }

    pub fn weight_scheme(&self) -> InitScheme {
        let kind = self.weight_init.unwrap_or(match self.algorithm {
            Algorithm::EdgePopup => InitKind::SignedConstant,
            Algorithm::Biprop => InitKind::KaimingNormal,
        });
        let scale_fan = self.scale_fan.unwrap_or(
            self.algorithm == Algorithm::Biprop && self.variant == RecycleVariant::None,
        );
        InitScheme {
            kind,
            scale_fan,
            prune_rate: if scale_fan { self.prune_rate } else { 0.0 },
        }
    }

    pub fn num_classes(&self) -> usize {
        match &self.dataset {
            DatasetSpec::Cifar10 { .. } => 10,
            DatasetSpec::Blobs { classes, .. } => *classes,
        }
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match &self.dataset {
            DatasetSpec::Cifar10 { .. } => vec![3, 32, 32],
            DatasetSpec::Blobs { dim, .. } => vec![*dim],
        }
    }

    pub fn arch_spec(&self) -> ArchSpec {
        let family = match &self.arch {
            ArchKind::Conv(depth) => Family::Conv { depth: *depth },
            ArchKind::Mlp { hidden, batch_norm } => Family::Mlp {
                hidden: hidden.clone(),
                batch_norm: *batch_norm,
            },
        };
        ArchSpec {
            family,
            width: self.width,
            num_classes: self.num_classes(),
            input: self.input_shape(),
        }
    }

    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            weight_init: self.weight_scheme(),
            weight_seed: self.weight_seed,
            score_seed: self.score_seed,
        }
    }

    /// Validates and builds the untrained model this config describes.
    pub fn build_model(&self) -> Result<Model> {
        self.validate()?;
        Model::build(&self.arch_spec(), &self.build_options())
    }

    /// Loads or synthesises the (train, test) splits.
    pub fn load_datasets(&self) -> Result<(Dataset, Dataset)> {
        match &self.dataset {
            DatasetSpec::Cifar10 { dir, train_subset } => load_cifar10(dir, *train_subset),
            DatasetSpec::Blobs { train, test, classes, dim, spread } => {
                synth_blobs_split(*train, *test, *classes, *dim, *spread, self.data_seed)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..1.0).contains(&self.prune_rate) {
            return bad(format!("prune_rate {} outside [0,1)", self.prune_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lr >= 0.0 && self.weight_decay >= 0.0 && (0.0..1.0).contains(&self.momentum)) {
            return bad("lr, weight_decay must be >= 0 and momentum in [0,1)".into());
        }
        self.recycle_spec()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.variant == RecycleVariant::IteRand && self.prune_rate == 0.0 {
            return bad("iterand needs pruned weights (prune_rate > 0)".into());
        }
        if matches!(self.arch, ArchKind::Conv(_)) && !matches!(self.dataset, DatasetSpec::Cifar10 { .. }) {
            return bad("conv architectures need image data (dataset = cifar10)".into());
        }
        self.weight_scheme()
            .effective_fan(1)
            .map_err(|e| Error::Config(e.to_string()))?;
        self.arch_spec()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key '{k}'", lineno + 1)));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: repeated key '{k}'", lineno + 1)));
            }
        }
        Self::from_map(&map)
    }

    fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| map.get(k).map(String::as_str);
        let mut c = RunConfig::default();
        if let Some(v) = get("algorithm") {
            c.algorithm = v.parse()?;
        }
        if let Some(v) = get("variant") {
            c.variant = v.parse()?;
        }
        let batch_norm = get("mlp_batch_norm")
            .map(|v| parse_bool("mlp_batch_norm", v))
            .transpose()?
            .unwrap_or(false);
        match get("arch").unwrap_or("conv2") {
            "conv2" => c.arch = ArchKind::Conv(2),
            "conv4" => c.arch = ArchKind::Conv(4),
            "conv6" => c.arch = ArchKind::Conv(6),
            "conv8" => c.arch = ArchKind::Conv(8),
            "mlp" => {
                let hidden = get("mlp_hidden")
                    .ok_or_else(|| Error::Config("arch = mlp needs mlp_hidden".into()))?
                    .split(',')
                    .map(|s| parse_num::<usize>("mlp_hidden", s.trim()))
                    .collect::<Result<Vec<_>>>()?;
                c.arch = ArchKind::Mlp { hidden, batch_norm };
            }
            other => return Err(Error::Config(format!("unknown arch '{other}'"))),
        }
        if !matches!(c.arch, ArchKind::Mlp { .. })
            && (get("mlp_hidden").is_some() || get("mlp_batch_norm").is_some())
        {
            return Err(Error::Config("mlp_* keys need arch = mlp".into()));
        }
        macro_rules! num {
            ($key:literal, $field:expr) => {
                if let Some(v) = get($key) {
                    $field = parse_num($key, v)?;
                }
            };
        }
        num!("width", c.width);
        num!("prune_rate", c.prune_rate);
        num!("epochs", c.epochs);
        num!("batch_size", c.batch_size);
        num!("lr", c.lr);
        num!("weight_decay", c.weight_decay);
        num!("momentum", c.momentum);
        num!("weight_seed", c.weight_seed);
        num!("score_seed", c.score_seed);
        num!("data_seed", c.data_seed);
        c.recycle_rate = get("recycle_rate").map(|v| parse_num("recycle_rate", v)).transpose()?;
        c.k_per = get("k_per").map(|v| parse_num("k_per", v)).transpose()?;
        c.weight_init = get("weight_init").map(str::parse).transpose()?;
        c.scale_fan = get("scale_fan").map(|v| parse_bool("scale_fan", v)).transpose()?;

        let cifar_keys = ["data_dir", "train_subset"];
        let blob_keys = ["blobs_train", "blobs_test", "blobs_classes", "blobs_dim", "blobs_spread"];
        match get("dataset").unwrap_or("cifar10") {
            "cifar10" => {
                if let Some(k) = blob_keys.iter().find(|k| get(k).is_some()) {
                    return Err(Error::Config(format!("{k} needs dataset = blobs")));
                }
                let mut dir = PathBuf::from("data/cifar-10-batches-bin");
                if let Some(v) = get("data_dir") {
                    dir = PathBuf::from(v);
                }
                let train_subset = get("train_subset")
                    .map(|v| parse_num("train_subset", v))
                    .transpose()?;
                c.dataset = DatasetSpec::Cifar10 { dir, train_subset };
            }
            "blobs" => {
                if let Some(k) = cifar_keys.iter().find(|k| get(k).is_some()) {
                    return Err(Error::Config(format!("{k} needs dataset = cifar10")));
                }
                let (mut train, mut test, mut classes, mut dim, mut spread) =
                    (4000usize, 1000usize, 4usize, 16usize, 1.0f64);
                num!("blobs_train", train);
                num!("blobs_test", test);
                num!("blobs_classes", classes);
                num!("blobs_dim", dim);
                num!("blobs_spread", spread);
                c.dataset = DatasetSpec::Blobs {
                    train,
                    test,
                    classes,
                    dim,
                    spread,
                };
            }
            other => return Err(Error::Config(format!("unknown dataset '{other}'"))),
        }
        c.validate()?;
        Ok(c)
    }

    /// Canonical text form; every optional value is written resolved so the
    /// text alone reproduces the run.
    pub fn to_text(&self) -> String {
        self.render(true)
    }

    fn render(&self, resolve: bool) -> String {
        let mut lines = vec![
            format!("algorithm = {}", self.algorithm),
            format!("variant = {}", self.variant),
        ];
        match &self.arch {
            ArchKind::Conv(d) => lines.push(format!("arch = conv{d}")),
            ArchKind::Mlp { hidden, batch_norm } => {
                lines.push("arch = mlp".into());
                let h: Vec<String> = hidden.iter().map(usize::to_string).collect();
                lines.push(format!("mlp_hidden = {}", h.join(",")));
                lines.push(format!("mlp_batch_norm = {batch_norm}"));
            }
        }
        let spec = self.recycle_spec();
        let scheme = self.weight_scheme();
        lines.extend([
            format!("width = {:?}", self.width),
            format!("prune_rate = {:?}", self.prune_rate),
        ]);
        if resolve || self.recycle_rate.is_some() {
            lines.push(format!("recycle_rate = {:?}", spec.rate));
        }
        if resolve || self.k_per.is_some() {
            lines.push(format!("k_per = {}", spec.period));
        }
        lines.extend([
            format!("epochs = {}", self.epochs),
            format!("batch_size = {}", self.batch_size),
            format!("lr = {:?}", self.lr),
            format!("weight_decay = {:?}", self.weight_decay),
            format!("momentum = {:?}", self.momentum),
            format!("weight_seed = {}", self.weight_seed),
            format!("score_seed = {}", self.score_seed),
            format!("data_seed = {}", self.data_seed),
        ]);
        match &self.dataset {
            DatasetSpec::Cifar10 { dir, train_subset } => {
                lines.push("dataset = cifar10".into());
                lines.push(format!("data_dir = {}", dir.display()));
                if let Some(n) = train_subset {
                    lines.push(format!("train_subset = {n}"));
                }
            }
            DatasetSpec::Blobs {
                train,
                test,
                classes,
                dim,
                spread,
            } => {
                lines.extend([
                    "dataset = blobs".to_string(),
                    format!("blobs_train = {train}"),
                    format!("blobs_test = {test}"),
                    format!("blobs_classes = {classes}"),
                    format!("blobs_dim = {dim}"),
                    format!("blobs_spread = {spread:?}"),
                ]);
            }
        }
        if resolve || self.weight_init.is_some() {
            lines.push(format!("weight_init = {}", scheme.kind));
        }
        if resolve || self.scale_fan.is_some() {
            lines.push(format!("scale_fan = {}", scheme.scale_fan));
        }
        let mut s = lines.join("\n");
        s.push('\n');
        s
    }

    /// Applies `key=value` overrides on top of this config.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self> {
        let mut text = String::new();
        let base = self.render(false);
        for line in base.lines() {
            let key = line.split('=').next().unwrap_or("").trim();
            if !overrides.iter().any(|(k, _)| k == key) {
                text.push_str(line);
                text.push('\n');
            }
        }
        for (k, v) in overrides {
            text.push_str(&format!("{k} = {v}\n"));
        }
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BLOBS: &str = "
        # desk-scale run
        algorithm = biprop
        variant = iwr
        arch = mlp
        mlp_hidden = 64, 64
        dataset = blobs
        epochs = 5
    ";

    #[test]
    fn defaults_follow_recipe() {
        let c = RunConfig::default();
        assert_eq!((c.lr, c.epochs, c.batch_size), (0.1, 250, 128));
        assert_eq!((c.weight_decay, c.momentum), (1e-4, 0.9));
        let iwr = RunConfig { variant: RecycleVariant::Iwr, ..RunConfig::default() };
        let s = iwr.recycle_spec();
        assert_eq!((s.rate, s.period), (0.2, 10));
        let itr = RunConfig { variant: RecycleVariant::IteRand, ..RunConfig::default() };
        let s = itr.recycle_spec();
        assert_eq!((s.rate, s.period), (0.1, 1));
    }

    #[test]
    fn init_defaults_per_algorithm() {
        let ep = RunConfig::default().weight_scheme();
        assert_eq!((ep.kind, ep.scale_fan), (InitKind::SignedConstant, false));
        let bp = RunConfig { algorithm: Algorithm::Biprop, ..RunConfig::default() }.weight_scheme();
        assert_eq!((bp.kind, bp.scale_fan, bp.prune_rate), (InitKind::KaimingNormal, true, 0.5));
        let bpi = RunConfig {
            algorithm: Algorithm::Biprop,
            variant: RecycleVariant::Iwr,
            ..RunConfig::default()
        }
        .weight_scheme();
        assert!(!bpi.scale_fan);
    }

    #[test]
    fn parse_and_canonical_round_trip() {
        let c = RunConfig::parse(BLOBS).unwrap();
        assert_eq!(c.algorithm, Algorithm::Biprop);
        assert_eq!(c.arch, ArchKind::Mlp { hidden: vec![64, 64], batch_norm: false });
        let text = c.to_text();
        let again = RunConfig::parse(&text).unwrap();
        assert_eq!(again.to_text(), text);
        assert_eq!(again.recycle_spec(), c.recycle_spec());
        assert_eq!(again.weight_scheme(), c.weight_scheme());
    }

    #[test]
    fn rejects_unknown_and_repeated_keys() {
        assert!(matches!(RunConfig::parse("colour = red"), Err(Error::Config(_))));
        assert!(RunConfig::parse("epochs = 1\nepochs = 2").is_err());
        assert!(RunConfig::parse("epochs = many").is_err());
        assert!(RunConfig::parse("just words").is_err());
        assert!(RunConfig::parse("dataset = blobs\ndata_dir = x\narch = mlp\nmlp_hidden = 4").is_err());
        assert!(RunConfig::parse("arch = conv2\ndataset = blobs").is_err());
        assert!(RunConfig::parse("prune_rate = 1.0").is_err());
    }

    #[test]
    fn overrides_replace_keys() {
        let c = RunConfig::parse(BLOBS).unwrap();
        let d = c
            .with_overrides(&[("score_seed".into(), "7".into())])
            .unwrap();
        assert_eq!(d.score_seed, 7);
        assert_eq!(d.weight_seed, c.weight_seed);
        // defaults that depend on the algorithm stay unresolved
        let e = RunConfig::default()
            .with_overrides(&[("algorithm".into(), "biprop".into())])
            .unwrap();
        assert_eq!(e.weight_scheme().kind, InitKind::KaimingNormal);
    }
}
