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

//! Score-only training: SGD with heavy-ball momentum and weight decay on the
//! scores, a per-epoch cosine learning rate, and weight-edit hooks.
//!
//! Each batch recomputes every mask (and `α` for Biprop) from the current
//! scores, runs forward/backward on the effective weights, maps the weight
//! gradient to the scores through the straight-through rule, and steps.
//! The frozen weights change only through the configured weight edit.

use std::fmt::Write as _;

use crate::arch::{Mode, Model};
use crate::autodiff::{Tape, Var};
use crate::config::RunConfig;
use crate::data::{minibatches, Dataset};
use crate::error::{Error, Result};
use crate::reweight::{
    recycle_second_tier, recycle_weights, rerandomize_pruned, should_trigger, RecycleSpec,
    RecycleVariant, WeightEdit,
};
use crate::rng::{derive_seed, RngStream, StreamKind};
use crate::subnet::{
    chain_through_abs, compute_alpha, compute_mask, effective_weights, score_gradient, Algorithm, LayerAlpha, Mask,
};
use crate::tensor::Tensor;

/// `0.5·lr₀·(1 + cos(π·t/T))`.
pub fn cosine_lr(epoch: usize, total: usize, lr0: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::invalid("cosine schedule over zero epochs"));
    }
    if epoch > total {
        return Err(Error::invalid(format!("epoch {epoch} past schedule end {total}")));
    }
    Ok(0.5 * lr0 * (1.0 + (std::f64::consts::PI * epoch as f64 / total as f64).cos()))
}

/// Momentum buffers for every score tensor. Frozen weights never appear here.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub buffers: Vec<Vec<f32>>,
    pub momentum: f32,
    pub weight_decay: f32,
}

impl OptimState {
    pub fn new(model: &Model, momentum: f64, weight_decay: f64) -> Self {
        OptimState {
            buffers: model.layers.iter().map(|l| vec![0.0; l.len()]).collect(),
            momentum: momentum as f32,
            weight_decay: weight_decay as f32,
        }
    }
}

/// One heavy-ball step: `g ← ∇ + λ·S`, `b ← μ·b + g`, `S ← S − lr·b`.
pub fn sgd_step(
    scores: &mut Tensor,
    grads: &Tensor,
    buffer: &mut [f32],
    lr: f32,
    momentum: f32,
    weight_decay: f32,
) -> Result<()> {
    if scores.shape() != grads.shape() || buffer.len() != scores.len() {
        return Err(Error::shape(format!(
            "scores {:?}, grads {:?}, buffer {}",
            scores.shape(),
            grads.shape(),
            buffer.len()
        )));
    }
    if !grads.all_finite() {
        return Err(Error::NonFinite("score gradient".into()));
    }
    for ((s, &g), b) in scores.data_mut().iter_mut().zip(grads.data()).zip(buffer.iter_mut()) {
        let g = g + weight_decay * *s;
        *b = momentum * *b + g;
        *s -= lr * *b;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
    /// Running accuracy of the training batches as they were trained on
    /// (train-mode statistics, scores changing within the epoch).
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    pub lr: f64,
    pub recycle_events: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,train_acc,test_acc,lr,recycle_events\n");
        for r in &self.records {
            let test = r.test_acc.map_or(String::new(), |a| format!("{a:.6}"));
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{},{:.8},{}",
                r.epoch, r.loss, r.train_acc, test, r.lr, r.recycle_events
            );
        }
        s
    }
}

/// Masks, scales and effective weights of every layer at the current scores.
#[derive(Debug, Clone)]
pub struct Subnetwork {
    pub masks: Vec<Mask>,
    pub alphas: Vec<Option<LayerAlpha>>,
    pub weights: Vec<Tensor>,
}

pub fn subnetwork(model: &Model, alg: Algorithm, prune_rate: f64) -> Result<Subnetwork> {
    let mut out = Subnetwork {
        masks: Vec::with_capacity(model.layers.len()),
        alphas: Vec::with_capacity(model.layers.len()),
        weights: Vec::with_capacity(model.layers.len()),
    };
    for layer in &model.layers {
        let mask = compute_mask(&layer.scores, prune_rate)?;
        let alpha = match alg {
            Algorithm::EdgePopup => None,
            Algorithm::Biprop => Some(compute_alpha(&layer.weights, &mask)?),
        };
        out.weights.push(effective_weights(layer, &mask, alg, alpha)?);
        out.masks.push(mask);
        out.alphas.push(alpha);
    }
    Ok(out)
}

/// Eval-mode logits for a batch, given explicit effective weights.
pub fn logits(model: &Model, weights: &[Tensor], images: Tensor) -> Result<Tensor> {
    let mut tape = Tape::<f32>::new();
    let x = tape.constant(images);
    let ws: Vec<Var> = weights.iter().map(|w| tape.constant(w.clone())).collect();
    let (y, _) = model.forward(&mut tape, x, &ws, Mode::Eval)?;
    Ok(tape.value(y).clone())
}

/// Row-wise argmax; the lowest class index wins ties.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy_of(logits: &Tensor, labels: &[usize]) -> f64 {
    let hits = argmax_rows(logits)
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    hits as f64 / labels.len() as f64
}

/// Accuracy of fixed effective weights over a whole split (eval-mode norms).
pub fn evaluate_weights(model: &Model, weights: &[Tensor], data: &Dataset, batch: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Data("evaluate on an empty dataset".into()));
    }
    let mut hits = 0usize;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let (x, labels) = data.gather(chunk);
        let preds = argmax_rows(&logits(model, weights, x)?);
        hits += preds.iter().zip(&labels).filter(|(p, l)| p == l).count();
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Accuracy of the subnetwork selected by the current scores.
pub fn evaluate(model: &Model, alg: Algorithm, prune_rate: f64, data: &Dataset, batch: usize) -> Result<f64> {
    let sub = subnetwork(model, alg, prune_rate)?;
    evaluate_weights(model, &sub.weights, data, batch)
}

fn diverged(epoch: usize, batch: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(what) => Error::Diverged { epoch, batch, what },
        other => other,
    }
}

/// Applies the configured weight edit to every layer and logs the patches.
/// Returns the number of layers actually edited.
fn apply_weight_edit(
    model: &mut Model,
    spec: &RecycleSpec,
    alg: Algorithm,
    prune_rate: f64,
    event: u64,
) -> Result<usize> {
    let scheme = model.options.weight_init;
    let event_seed = derive_seed(model.options.weight_seed, StreamKind::Rerandomize, event);
    let mut edited = 0;
    let masks = match spec.variant {
        RecycleVariant::IteRand => Some(subnetwork(model, alg, prune_rate)?.masks),
        _ => None,
    };
    for (i, layer) in model.layers.iter_mut().enumerate() {
        let edit = match spec.variant {
            RecycleVariant::None => return Ok(0),
            RecycleVariant::Iwr => WeightEdit::Recycle(recycle_weights(layer, spec)?),
            RecycleVariant::IwrSecondTier => WeightEdit::Recycle(recycle_second_tier(layer, spec)?),
            RecycleVariant::IteRand => {
                let mask = &masks.as_ref().expect("masks computed for iterand")[i];
                if mask.pruned() == 0 {
                    continue;
                }
                let mut rng = RngStream::derived(event_seed, StreamKind::Rerandomize, i as u64);
                WeightEdit::Rerandomize(rerandomize_pruned(layer, mask, spec.rate, &scheme, &mut rng)?)
            }
        };
        let empty = match &edit {
            WeightEdit::Recycle(p) => p.is_empty(),
            WeightEdit::Rerandomize(p) => p.indices.is_empty(),
        };
        if !empty {
            model.edit_log.push(edit);
            edited += 1;
        }
    }
    Ok(edited)
}

/// Trains `model`'s scores per `config`. `test` is evaluated after every
/// epoch when given.
pub fn train(
    model: &mut Model,
    config: &RunConfig,
    train_set: &Dataset,
    test: Option<&Dataset>,
) -> Result<TrainHistory> {
    train_with_progress(model, config, train_set, test, |_| {})
}

/// [`train`], calling `on_epoch` after each epoch's record is complete.
pub fn train_with_progress(
    model: &mut Model,
    config: &RunConfig,
    train_set: &Dataset,
    test: Option<&Dataset>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainHistory> {
    let mut history = TrainHistory::default();
    if config.epochs == 0 {
        return Ok(history);
    }
    if train_set.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let alg = config.algorithm;
    let p = config.prune_rate;
    let spec = config.recycle_spec();
    let mut state = OptimState::new(model, config.momentum, config.weight_decay);
    let mut events = 0u64;

    for epoch in 1..=config.epochs {
        let lr = cosine_lr(epoch - 1, config.epochs, config.lr)?;
        let batches = minibatches(train_set.len(), config.batch_size, config.data_seed, epoch - 1);
        let nb = batches.len();
        let mut loss_sum = 0.0f64;
        let mut epoch_events = 0;
        let mut hits = 0usize;

        for (b, idx) in batches.iter().enumerate() {
            let (x, labels) = train_set.gather(idx);
            let sub = subnetwork(model, alg, p)?;

            let mut tape = Tape::<f32>::new();
            let xv = tape.constant(x);
            let wv: Vec<Var> = sub.weights.into_iter().map(|w| tape.leaf(w, true)).collect();
            let step = (|| {
                let (out, moments) = model.forward(&mut tape, xv, &wv, Mode::Train)?;
                let loss = tape.cross_entropy(out, &labels)?;
                let grads = tape.backward(loss)?;
                Ok::<_, Error>((out, loss, moments, grads))
            })();
            let (out, loss, moments, mut grads) = step.map_err(|e| diverged(epoch, b, e))?;
            loss_sum += tape.value(loss).data()[0] as f64 * idx.len() as f64;
            hits += argmax_rows(tape.value(out))
                .iter()
                .zip(&labels)
                .filter(|(p, l)| p == l)
                .count();

            for (i, &w) in wv.iter().enumerate() {
                let g = grads.take(&tape, w)?;
                let layer = &mut model.layers[i];
                let mut ds = score_gradient(&g, layer, alg, sub.alphas[i])?;
                chain_through_abs(&mut ds, &layer.scores)?;
                sgd_step(
                    &mut layer.scores,
                    &ds,
                    &mut state.buffers[i],
                    lr as f32,
                    state.momentum,
                    state.weight_decay,
                )
                .map_err(|e| diverged(epoch, b, e))?;
            }
            model.update_running_stats(&moments);

            if should_trigger(epoch, b, nb, &spec) {
                apply_weight_edit(model, &spec, alg, p, events)?;
                events += 1;
                epoch_events += 1;
            }
        }

        let train_acc = hits as f64 / train_set.len() as f64;
        let test_acc = test
            .map(|t| evaluate(model, alg, p, t, config.batch_size.max(256)))
            .transpose()?;
        history.records.push(EpochRecord {
            epoch,
            loss: loss_sum / train_set.len() as f64,
            train_acc,
            test_acc,
            lr,
            recycle_events: epoch_events,
        });
        on_epoch(history.records.last().expect("just pushed"));
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_lr(0, 10, 0.1).unwrap(), 0.1);
        assert!(cosine_lr(10, 10, 0.1).unwrap().abs() < 1e-17);
        assert!((cosine_lr(5, 10, 0.1).unwrap() - 0.05).abs() < 1e-15);
        assert!(cosine_lr(0, 0, 0.1).is_err());
        assert!(cosine_lr(11, 10, 0.1).is_err());
    }

    #[test]
    fn sgd_vanilla_step() {
        let mut s = Tensor::from_vec(vec![1.0f32]);
        let mut buf = [0.0f32];
        sgd_step(&mut s, &Tensor::from_vec(vec![2.0]), &mut buf, 0.1, 0.0, 0.0).unwrap();
        assert_eq!(s.data(), &[0.8]);
    }

    #[test]
    fn sgd_zero_grad_is_noop() {
        let mut s = Tensor::from_vec(vec![1.5f32, -2.0]);
        let mut buf = [0.0f32; 2];
        sgd_step(&mut s, &Tensor::zeros(&[2]), &mut buf, 0.1, 0.9, 0.0).unwrap();
        assert_eq!(s.data(), &[1.5, -2.0]);
    }

    #[test]
    fn sgd_two_momentum_steps_match_hand_recurrence() {
        let (lr, mu, wd) = (0.1f32, 0.9f32, 0.01f32);
        let (g1, g2) = (0.5f32, -0.25f32);
        let mut s = Tensor::from_vec(vec![1.0f32]);
        let mut buf = [0.0f32];
        sgd_step(&mut s, &Tensor::from_vec(vec![g1]), &mut buf, lr, mu, wd).unwrap();
        sgd_step(&mut s, &Tensor::from_vec(vec![g2]), &mut buf, lr, mu, wd).unwrap();

        let s0 = 1.0f32;
        let b1 = g1 + wd * s0;
        let s1 = s0 - lr * b1;
        let b2 = mu * b1 + (g2 + wd * s1);
        let s2 = s1 - lr * b2;
        assert_eq!(s.data()[0], s2);
        assert_eq!(buf[0], b2);
    }

    #[test]
    fn sgd_rejects_nan() {
        let mut s = Tensor::from_vec(vec![1.0f32]);
        let mut buf = [0.0f32];
        assert!(sgd_step(&mut s, &Tensor::from_vec(vec![f32::NAN]), &mut buf, 0.1, 0.9, 0.0).is_err());
    }

    #[test]
    fn argmax_ties_take_lowest_class() {
        let t = Tensor::new(vec![2, 3], vec![1.0, 3.0, 3.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(argmax_rows(&t), vec![1, 0]);
    }

    #[test]
    fn history_csv_layout() {
        let h = TrainHistory {
            records: vec![EpochRecord {
                epoch: 1,
                loss: 0.5,
                train_acc: 0.75,
                test_acc: None,
                lr: 0.1,
                recycle_events: 0,
            }],
        };
        assert_eq!(
            h.to_csv(),
            "epoch,loss,train_acc,test_acc,lr,recycle_events\n1,0.500000,0.750000,,0.10000000,0\n"
        );
    }
}
