use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ForwardOptions, Network};
use crate::error::{Error, Result};
use crate::optim::Momentum;
use crate::seed;
use crate::tensor::{softmax_cross_entropy, Element, Tensor};

/// Loss, top-1 hit and parameter gradients of one training pass.
type PassResult<T> = (f64, bool, BTreeMap<String, Tensor<T>>);

/// Minibatch SGD settings for [`train_classifier`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    pub augment_hflip: bool,
    /// Epochs (0-based) at whose start the learning rate is multiplied by `lr_decay`.
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 55,
            batch: 32,
            lr: 0.01,
            momentum: 0.9,
            seed: 0,
            augment_hflip: true,
            lr_decay_epochs: vec![35, 48],
            lr_decay: 0.1,
            weight_decay: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Mean cross-entropy over the epoch's training passes.
    pub loss: f64,
    /// Fraction of training passes whose logits ranked the label first.
    pub accuracy: f64,
}

fn argmax<T: Element>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Trains a classifier network with momentum SGD on minibatches of images.
///
/// Returns the trained copy and one [`EpochStats`] per epoch. Identical
/// inputs and seed give bitwise-identical weights.
pub fn train_classifier<T: Element>(
    net: &Network<T>,
    images: &[Tensor<T>],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(Network<T>, Vec<EpochStats>)> {
    let classes = net
        .spec()
        .classes()
        .ok_or_else(|| Error::invalid("network has no softmax head"))?;
    if images.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if images.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    if cfg.batch == 0 || cfg.batch > images.len() {
        return Err(Error::invalid(format!(
            "batch size {} must lie in 1..={}",
            cfg.batch,
            images.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!(
            "label {bad} exceeds head width {classes}"
        )));
    }

    let mut net = net.clone();
    let mut trace = Vec::with_capacity(cfg.epochs);
    if cfg.epochs == 0 {
        return Ok((net, trace));
    }
    let logits_at = net.spec().layers.len() - 2;
    let names: Vec<String> = net.params().keys().cloned().collect();
    let mut velocity: BTreeMap<String, Momentum<T>> = names
        .iter()
        .map(|n| {
            (
                n.clone(),
                Momentum::new(cfg.momentum, net.params()[n].len()),
            )
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut lr = cfg.lr;

    for epoch in 0..cfg.epochs {
        if cfg.lr_decay_epochs.contains(&epoch) {
            lr *= cfg.lr_decay;
        }
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (bi, batch) in order.chunks(cfg.batch).enumerate() {
            let jobs: Vec<(usize, bool, u64)> = batch
                .iter()
                .enumerate()
                .map(|(k, &i)| {
                    let flip = cfg.augment_hflip && rng.random::<bool>();
                    (
                        i,
                        flip,
                        seed::derive(cfg.seed, &[epoch as u64, bi as u64, k as u64]),
                    )
                })
                .collect();
            let results: Vec<Result<PassResult<T>>> = jobs
                .par_iter()
                .map(|&(i, flip, s)| {
                    let img = if flip {
                        images[i].hflip()?
                    } else {
                        images[i].clone()
                    };
                    let opts = ForwardOptions {
                        training: true,
                        seed: s,
                        until: Some(logits_at),
                    };
                    let tr = net.forward(&img, opts)?;
                    let ce = softmax_cross_entropy(tr.last().data(), labels[i])?;
                    let hit = argmax(tr.last().data()) == labels[i];
                    let g = Tensor::vector(ce.grad)?;
                    let grads = net.backward(&tr, &BTreeMap::from([(logits_at, g)]), true)?;
                    Ok((ce.loss.to_f64().unwrap_or(f64::NAN), hit, grads.params))
                })
                .collect();
            let mut total: Option<BTreeMap<String, Tensor<T>>> = None;
            for r in results {
                let (loss, hit, grads) = r?;
                loss_sum += loss;
                correct += hit as usize;
                match total.as_mut() {
                    None => total = Some(grads),
                    Some(acc) => {
                        for (k, g) in grads {
                            acc.get_mut(&k)
                                .expect("same parameter set")
                                .add_assign(&g)?;
                        }
                    }
                }
            }
            let scale = T::one() / T::lit(batch.len() as f64);
            let wd = T::lit(cfg.weight_decay);
            for (name, mut g) in total.expect("non-empty batch") {
                g.scale(scale);
                let p = net.params_mut().get_mut(&name).expect("parameter");
                if cfg.weight_decay != 0.0 && name.ends_with(".weight") {
                    g.add_scaled(p, wd)?;
                }
                velocity
                    .get_mut(&name)
                    .expect("velocity")
                    .step(p.data_mut(), g.data(), lr);
            }
        }
        let loss = loss_sum / images.len() as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
        trace.push(EpochStats {
            epoch,
            lr,
            loss,
            accuracy: correct as f64 / images.len() as f64,
        });
    }
    Ok((net, trace))
}

/// Top-1 accuracy of a classifier in inference mode.
pub fn evaluate_accuracy<T: Element>(
    net: &Network<T>,
    images: &[Tensor<T>],
    labels: &[usize],
) -> Result<f64> {
    if images.is_empty() || images.len() != labels.len() {
        return Err(Error::invalid("need matching, non-empty images and labels"));
    }
    let hits = images
        .par_iter()
        .zip(labels)
        .map(|(img, &l)| net.predict(img).map(|p| (argmax(&p) == l) as usize))
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / images.len() as f64)
}
