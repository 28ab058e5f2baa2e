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

//! Training-loop contracts: determinism, schedule, weight freezing,
//! evaluation rules and divergence reporting.

mod common;

use common::blobs_config;
use supermask::checkpoint::Checkpoint;
use supermask::config::{ArchKind, DatasetSpec, RunConfig};
use supermask::data::{Dataset, Split};
use supermask::error::Error;
use supermask::reweight::{RecycleVariant, WeightEdit};
use supermask::subnet::Algorithm;
use supermask::tensor::Tensor;
use supermask::trainer::{accuracy_of, cosine_lr, evaluate, evaluate_weights, subnetwork, train};

fn small(alg: Algorithm, variant: RecycleVariant, epochs: usize) -> RunConfig {
    RunConfig {
        dataset: DatasetSpec::Blobs {
            train: 400,
            test: 100,
            classes: 4,
            dim: 16,
            spread: 1.0,
        },
        batch_size: 32,
        ..blobs_config(alg, variant, epochs)
    }
}

fn run(c: &RunConfig) -> (supermask::arch::Model, supermask::trainer::TrainHistory) {
    let (tr, te) = c.load_datasets().unwrap();
    let mut m = c.build_model().unwrap();
    let h = train(&mut m, c, &tr, Some(&te)).unwrap();
    (m, h)
}

#[test]
fn zero_epochs_change_nothing() {
    let c = small(Algorithm::EdgePopup, RecycleVariant::None, 0);
    let (m, h) = run(&c);
    assert!(h.records.is_empty());
    assert_eq!(m, c.build_model().unwrap());
}

#[test]
fn identical_configs_give_identical_runs() {
    for (alg, variant) in [
        (Algorithm::EdgePopup, RecycleVariant::IteRand),
        (Algorithm::Biprop, RecycleVariant::Iwr),
    ] {
        let c = RunConfig {
            k_per: Some(2),
            ..small(alg, variant, 4)
        };
        let (m1, h1) = run(&c);
        let (m2, h2) = run(&c);
        assert_eq!(h1, h2);
        assert_eq!(
            subnetwork(&m1, alg, c.prune_rate).unwrap().masks,
            subnetwork(&m2, alg, c.prune_rate).unwrap().masks
        );
        assert_eq!(
            Checkpoint::from_model(&m1, &c).unwrap().to_bytes(),
            Checkpoint::from_model(&m2, &c).unwrap().to_bytes()
        );
    }
}

#[test]
fn history_lr_is_the_cosine_schedule() {
    let c = small(Algorithm::EdgePopup, RecycleVariant::None, 7);
    let (_, h) = run(&c);
    let epochs: Vec<usize> = h.records.iter().map(|r| r.epoch).collect();
    assert_eq!(epochs, (1..=7).collect::<Vec<_>>());
    for r in &h.records {
        assert_eq!(r.lr, cosine_lr(r.epoch - 1, 7, c.lr).unwrap());
    }
}

#[test]
fn weights_are_frozen_without_a_weight_edit() {
    let c = small(Algorithm::Biprop, RecycleVariant::None, 3);
    let before = c.build_model().unwrap();
    let (after, h) = run(&c);
    assert_eq!(before.weights_digest(), after.weights_digest());
    assert!(after.edit_log.is_empty());
    assert!(h.records.iter().all(|r| r.recycle_events == 0));
    assert_ne!(
        before.layers[0].scores, after.layers[0].scores,
        "scores should have trained"
    );
}

#[test]
fn iwr_edits_only_at_trigger_epochs_and_replays_exactly() {
    let c = RunConfig {
        k_per: Some(3),
        ..small(Algorithm::Biprop, RecycleVariant::Iwr, 7)
    };
    let before = c.build_model().unwrap();
    let (after, h) = run(&c);
    let events: Vec<usize> = h.records.iter().map(|r| r.recycle_events).collect();
    assert_eq!(events, vec![0, 0, 1, 0, 0, 1, 0]);
    assert_ne!(before.weights_digest(), after.weights_digest());
    // 3 layers per event, each a recycle patch
    assert_eq!(after.edit_log.len(), 2 * after.layers.len());
    assert!(after.edit_log.iter().all(|e| matches!(e, WeightEdit::Recycle(_))));
    let replayed = Checkpoint::from_model(&after, &c).unwrap().reconstruct_weights().unwrap();
    for (l, w) in after.layers.iter().zip(replayed) {
        assert_eq!(l.weights, w);
    }
}

#[test]
fn evaluation_ignores_batch_size() {
    let c = RunConfig {
        arch: ArchKind::Mlp {
            hidden: vec![32],
            batch_norm: true,
        },
        ..small(Algorithm::EdgePopup, RecycleVariant::None, 2)
    };
    let (m, _) = run(&c);
    let (_, te) = c.load_datasets().unwrap();
    let a1 = evaluate(&m, c.algorithm, c.prune_rate, &te, 1).unwrap();
    let a128 = evaluate(&m, c.algorithm, c.prune_rate, &te, 128).unwrap();
    assert_eq!(a1, a128);
}

#[test]
fn oracle_and_constant_logits() {
    let labels: Vec<usize> = (0..50).map(|i| i % 10).collect();
    let mut onehot = vec![0.0f32; 500];
    for (i, &l) in labels.iter().enumerate() {
        onehot[i * 10 + l] = 3.0;
    }
    assert_eq!(accuracy_of(&Tensor::new(vec![50, 10], onehot).unwrap(), &labels), 1.0);

    // zero weights give constant logits: ties go to class 0, so accuracy is its share
    let c = RunConfig {
        dataset: DatasetSpec::Blobs {
            train: 100,
            test: 1000,
            classes: 10,
            dim: 16,
            spread: 1.0,
        },
        ..small(Algorithm::EdgePopup, RecycleVariant::None, 1)
    };
    let m = c.build_model().unwrap();
    let zeros: Vec<Tensor> = m.layers.iter().map(|l| Tensor::zeros(l.shape())).collect();
    let (_, te) = c.load_datasets().unwrap();
    assert_eq!(evaluate_weights(&m, &zeros, &te, 64).unwrap(), 0.1);

    let empty = Dataset::new(Tensor::zeros(&[0, 16]), vec![], 10, Split::Test).unwrap();
    assert!(evaluate_weights(&m, &zeros, &empty, 64).is_err());
}

#[test]
fn divergence_reports_epoch_and_batch() {
    let c = RunConfig {
        dataset: DatasetSpec::Blobs {
            train: 64,
            test: 8,
            classes: 4,
            dim: 16,
            spread: 1e38,
        },
        ..small(Algorithm::EdgePopup, RecycleVariant::None, 2)
    };
    let (tr, te) = c.load_datasets().unwrap();
    let mut m = c.build_model().unwrap();
    match train(&mut m, &c, &tr, Some(&te)) {
        Err(Error::Diverged { epoch, batch, .. }) => assert_eq!((epoch, batch), (1, 0)),
        other => panic!("expected divergence, got {other:?}"),
    }
}
