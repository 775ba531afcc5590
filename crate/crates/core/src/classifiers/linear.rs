use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, check_labels, FeatureMatrix, Normalizer};
use crate::error::{Error, Result};
use crate::network::TensorContainer;
use crate::optim::{Adam, AdamParams};
use crate::tensor::{gemm, softmax, softmax_cross_entropy, Strides, Tensor};

/// Minibatch Adam settings for [`train_linear`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub adam: AdamParams,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Coefficient of `½‖W‖²` added to the mean cross-entropy.
    pub l2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            adam: AdamParams::default(),
            epochs: 55,
            batch: 32,
            seed: 0,
            l2: 0.0,
        }
    }
}

/// Softmax regression `softmax(W x + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    /// `C × d`.
    pub weights: Tensor<f32>,
    pub bias: Tensor<f32>,
    /// Applied to inputs before the affine map when present.
    pub normalizer: Option<Normalizer>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearPrediction {
    pub labels: Vec<usize>,
    /// One row of class probabilities per sample.
    pub probabilities: Vec<Vec<f32>>,
}

impl LinearModel {
    pub fn zeros(classes: usize, features: usize) -> Self {
        LinearModel {
            weights: Tensor::zeros(&[classes, features]),
            bias: Tensor::zeros(&[classes]),
            normalizer: None,
        }
    }

    pub fn classes(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn features(&self) -> usize {
        self.weights.shape()[1]
    }

    /// Row-major `n × C` logits.
    pub fn logits(&self, x: &FeatureMatrix) -> Result<Vec<f32>> {
        if x.cols() != self.features() {
            return Err(Error::shape(
                "linear model",
                format!("{} features, model expects {}", x.cols(), self.features()),
            ));
        }
        let normalized;
        let x = match &self.normalizer {
            Some(s) => {
                normalized = super::apply_normalizer(s, x)?;
                &normalized
            }
            None => x,
        };
        Ok(affine(x.data(), x.rows(), &self.weights, &self.bias))
    }

    pub fn to_container(&self) -> TensorContainer {
        let mut c = TensorContainer::default();
        c.push("weights", self.weights.clone());
        c.push("bias", self.bias.clone());
        if let Some(s) = &self.normalizer {
            c.push(
                "norm_mean",
                Tensor::vector(s.mean.clone()).expect("non-empty"),
            );
            c.push(
                "norm_std",
                Tensor::vector(s.std.clone()).expect("non-empty"),
            );
        }
        c
    }

    pub fn from_container(c: &TensorContainer) -> Result<Self> {
        let get = |name: &str| {
            c.get(name)
                .cloned()
                .ok_or_else(|| Error::Data(format!("linear model lacks tensor `{name}`")))
        };
        let weights = get("weights")?;
        let bias = get("bias")?;
        if weights.rank() != 2 || bias.shape() != [weights.shape()[0]] {
            return Err(Error::shape(
                "linear model",
                "weights must be C×d with a bias of C",
            ));
        }
        let normalizer = match (c.get("norm_mean"), c.get("norm_std")) {
            (Some(m), Some(s)) if m.len() == weights.shape()[1] && s.len() == m.len() => {
                Some(Normalizer {
                    mean: m.data().to_vec(),
                    std: s.data().to_vec(),
                })
            }
            (None, None) => None,
            _ => return Err(Error::Data("inconsistent normalizer tensors".into())),
        };
        Ok(LinearModel {
            weights,
            bias,
            normalizer,
        })
    }
}

fn affine(x: &[f32], rows: usize, w: &Tensor<f32>, b: &Tensor<f32>) -> Vec<f32> {
    let (c, d) = (w.shape()[0], w.shape()[1]);
    let mut out = vec![0.0; rows * c];
    gemm(
        rows,
        d,
        c,
        x,
        Strides::row_major(d),
        w.data(),
        Strides::transposed(d),
        &mut out,
        false,
    );
    for row in out.chunks_exact_mut(c) {
        for (o, &bi) in row.iter_mut().zip(b.data()) {
            *o += bi;
        }
    }
    out
}

/// Fits a zero-initialised softmax regression with Adam.
///
/// `classes` fixes the head width; labels must lie below it. Returns the
/// model and the mean training loss of each epoch.
pub fn train_linear(
    x: &FeatureMatrix,
    labels: &[usize],
    classes: usize,
    cfg: &AdamConfig,
) -> Result<(LinearModel, Vec<f64>)> {
    let needed = check_labels(x, labels)?;
    if classes < 2 || needed > classes {
        return Err(Error::invalid(format!(
            "{classes} classes cannot hold labels up to {}",
            needed - 1
        )));
    }
    if cfg.batch == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let (n, d) = (x.rows(), x.cols());
    let mut model = LinearModel::zeros(classes, d);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut opt_w = Adam::<f32>::new(cfg.adam, classes * d)?;
    let mut opt_b = Adam::<f32>::new(cfg.adam, classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let l2 = cfg.l2 as f32;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        for batch in order.chunks(cfg.batch) {
            let xb = x.select_rows(batch);
            let logits = affine(xb.data(), batch.len(), &model.weights, &model.bias);
            let mut dlogits = Vec::with_capacity(logits.len());
            for (row, &label) in logits
                .chunks_exact(classes)
                .zip(batch.iter().map(|&i| &labels[i]))
            {
                let ce = softmax_cross_entropy(row, label)?;
                loss_sum += ce.loss as f64;
                dlogits.extend(ce.grad);
            }
            let inv = 1.0 / batch.len() as f32;
            dlogits.iter_mut().for_each(|g| *g *= inv);

            let mut gw = vec![0.0f32; classes * d];
            gemm(
                classes,
                batch.len(),
                d,
                &dlogits,
                Strides::transposed(classes),
                xb.data(),
                Strides::row_major(d),
                &mut gw,
                false,
            );
            if l2 != 0.0 {
                for (g, &w) in gw.iter_mut().zip(model.weights.data()) {
                    *g += l2 * w;
                }
                let sq: f64 = model
                    .weights
                    .data()
                    .iter()
                    .map(|&w| (w as f64) * (w as f64))
                    .sum();
                loss_sum += 0.5 * cfg.l2 * sq * batch.len() as f64;
            }
            let mut gb = vec![0.0f32; classes];
            for row in dlogits.chunks_exact(classes) {
                for (g, &v) in gb.iter_mut().zip(row) {
                    *g += v;
                }
            }
            opt_w.step(model.weights.data_mut(), &gw);
            opt_b.step(model.bias.data_mut(), &gb);
        }
        let loss = loss_sum / n as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "linear training loss at epoch {epoch}"
            )));
        }
        trace.push(loss);
    }
    Ok((model, trace))
}

/// Argmax of `softmax(W x + b)` per row, lowest class index on ties.
pub fn predict_linear(model: &LinearModel, x: &FeatureMatrix) -> Result<LinearPrediction> {
    let logits = model.logits(x)?;
    let c = model.classes();
    let mut labels = Vec::with_capacity(x.rows());
    let mut probabilities = Vec::with_capacity(x.rows());
    for row in logits.chunks_exact(c) {
        labels.push(argmax(row));
        probabilities.push(softmax(row));
    }
    Ok(LinearPrediction {
        labels,
        probabilities,
    })
}
