//! Barnes-Hut t-SNE for two-dimensional maps of style features.

pub mod affinities;
pub mod quadtree;

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use affinities::{perplexity_affinities, JointAffinities};
use quadtree::QuadTree;

use crate::classifiers::{pca_fit, pca_transform, FeatureMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    /// Barnes-Hut opening threshold; 0 gives the exact gradient.
    pub theta: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Iteration at which the momentum switches to `final_momentum`.
    pub momentum_switch: usize,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    /// Standard deviation of the Gaussian initial coordinates.
    pub init_std: f64,
    /// Reduce inputs to this many principal components first.
    pub pca_dims: Option<usize>,
    /// KL divergence is recorded every this many iterations.
    pub kl_every: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            theta: 0.5,
            iterations: 1000,
            learning_rate: 200.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            init_std: 1e-2,
            pca_dims: None,
            kl_every: 50,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.perplexity >= 1.0 && self.perplexity < (n as f64 - 1.0) / 3.0) {
            return Err(Error::invalid(format!(
                "perplexity {} must lie in [1, (n − 1) / 3) for n = {n}",
                self.perplexity
            )));
        }
        if !(0.0..1.0).contains(&self.theta) {
            return Err(Error::invalid("theta must lie in [0, 1)"));
        }
        if self.iterations == 0 || self.kl_every == 0 {
            return Err(Error::invalid(
                "iterations and KL interval must be positive",
            ));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub coords: Vec<[f64; 2]>,
    pub kl: f64,
    /// `(iteration, KL)` samples; iteration `t` means after `t` updates.
    pub kl_trace: Vec<(usize, f64)>,
}

impl Embedding {
    /// KL recorded at `iteration`, if sampled.
    pub fn kl_at(&self, iteration: usize) -> Option<f64> {
        self.kl_trace.iter().find(|e| e.0 == iteration).map(|e| e.1)
    }
}

/// `KL(P ‖ Q)` for the Student-t similarities of `y`.
pub fn kl_divergence(p: &JointAffinities, y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let z: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| 1.0 / (1.0 + sq(y[i], y[j])))
                .sum();
            let kl: f64 = p
                .row(i)
                .filter(|&(_, v)| v > 0.0)
                .map(|(j, v)| v * (v * (1.0 + sq(y[i], y[j]))).ln())
                .sum();
            (z, kl)
        })
        .collect();
    let z: f64 = rows.iter().map(|r| r.0).sum();
    let kl: f64 = rows.iter().map(|r| r.1).sum();
    // Σ P log(P / (w / Z)) = Σ P log(P / w) + log Z, with Σ P = 1.
    (kl + p.sum() * z.ln()).max(0.0)
}

fn sq(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Gradient of `KL(exaggeration · P ‖ Q)` with Barnes-Hut repulsion.
pub fn bh_gradient(
    p: &JointAffinities,
    y: &[[f64; 2]],
    theta: f64,
    exaggeration: f64,
) -> Vec<[f64; 2]> {
    let tree = QuadTree::build(y);
    let parts: Vec<([f64; 2], quadtree::Repulsion)> = (0..y.len())
        .into_par_iter()
        .map(|i| {
            let mut attr = [0.0; 2];
            for (j, pij) in p.row(i) {
                let (dx, dy) = (y[i][0] - y[j][0], y[i][1] - y[j][1]);
                let w = pij / (1.0 + dx * dx + dy * dy);
                attr[0] += w * dx;
                attr[1] += w * dy;
            }
            (attr, tree.repulsion(y, i, theta))
        })
        .collect();
    let z: f64 = parts.iter().map(|(_, r)| r.z).sum();
    parts
        .iter()
        .map(|(a, r)| {
            [
                4.0 * (exaggeration * a[0] - r.force[0] / z),
                4.0 * (exaggeration * a[1] - r.force[1] / z),
            ]
        })
        .collect()
}

/// Gaussian initial coordinates.
pub fn initial_coords(n: usize, std: f64, seed: u64) -> Result<Vec<[f64; 2]>> {
    let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)])
        .collect())
}

/// Embeds the rows of `x` in the plane.
pub fn tsne_embed(x: &FeatureMatrix, cfg: &TsneConfig) -> Result<Embedding> {
    cfg.validate(x.rows())?;
    let reduced;
    let x = match cfg.pca_dims {
        Some(k) if k < x.cols() => {
            let model = pca_fit(x, 1.0)?.truncated(k);
            reduced = pca_transform(&model, x)?;
            &reduced
        }
        _ => x,
    };
    let p = perplexity_affinities(x, cfg.perplexity)?;
    embed_affinities(&p, cfg)
}

/// Gradient descent with momentum and per-coordinate gains on precomputed `P`.
pub fn embed_affinities(p: &JointAffinities, cfg: &TsneConfig) -> Result<Embedding> {
    let n = p.n();
    cfg.validate(n)?;
    let mut y = initial_coords(n, cfg.init_std, cfg.seed)?;
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl_trace = vec![(0, kl_divergence(p, &y))];

    for it in 0..cfg.iterations {
        let exaggeration = if it < cfg.exaggeration_iters {
            cfg.exaggeration
        } else {
            1.0
        };
        let momentum = if it < cfg.momentum_switch {
            cfg.initial_momentum
        } else {
            cfg.final_momentum
        };
        let grad = bh_gradient(p, &y, cfg.theta, exaggeration);
        if grad.iter().any(|g| !g[0].is_finite() || !g[1].is_finite()) {
            return Err(Error::NonFinite(format!(
                "t-SNE gradient at iteration {it}"
            )));
        }
        for i in 0..n {
            for a in 0..2 {
                let g = grad[i][a];
                let gain = &mut gains[i][a];
                *gain = if (g > 0.0) != (update[i][a] > 0.0) {
                    *gain + 0.2
                } else {
                    (*gain * 0.8).max(0.01)
                };
                update[i][a] = momentum * update[i][a] - cfg.learning_rate * *gain * g;
                y[i][a] += update[i][a];
            }
        }
        let mean = [
            y.iter().map(|v| v[0]).sum::<f64>() / n as f64,
            y.iter().map(|v| v[1]).sum::<f64>() / n as f64,
        ];
        for v in &mut y {
            v[0] -= mean[0];
            v[1] -= mean[1];
        }
        let done = it + 1;
        if done % cfg.kl_every == 0 || done == cfg.iterations {
            kl_trace.push((done, kl_divergence(p, &y)));
            log::debug!(
                "t-SNE iteration {done}: KL {}",
                kl_trace.last().expect("pushed").1
            );
        }
    }
    let kl = kl_trace.last().expect("non-empty").1;
    Ok(Embedding {
        coords: y,
        kl,
        kl_trace,
    })
}

/// Mean silhouette coefficient of labelled points.
pub fn silhouette_score(points: &[[f64; 2]], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() || points.is_empty() {
        return Err(Error::invalid("need matching, non-empty points and labels"));
    }
    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let sizes = labels.iter().fold(vec![0usize; classes], |mut s, &l| {
        s[l] += 1;
        s
    });
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::invalid("silhouette needs at least two clusters"));
    }
    let s: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut sum = vec![0.0; classes];
            for (j, p) in points.iter().enumerate() {
                if j != i {
                    sum[labels[j]] += sq(points[i], *p).sqrt();
                }
            }
            let own = labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let a = sum[own] / (sizes[own] - 1) as f64;
            let b = (0..classes)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sum[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            if a.max(b) == 0.0 {
                0.0
            } else {
                (b - a) / a.max(b)
            }
        })
        .collect();
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// One output row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub label: Option<u32>,
}

/// Writes `id,x,y,label`; unlabeled rows leave `label` empty.
pub fn write_embedding_csv(
    path: impl AsRef<Path>,
    ids: &[String],
    labels: &[Option<u32>],
    e: &Embedding,
) -> Result<()> {
    if ids.len() != e.coords.len() || labels.len() != ids.len() {
        return Err(Error::invalid(
            "ids, labels and coordinates differ in length",
        ));
    }
    let mut w = csv::Writer::from_path(path)?;
    for ((id, &label), c) in ids.iter().zip(labels).zip(&e.coords) {
        w.serialize(EmbeddingRow {
            id: id.clone(),
            x: c[0],
            y: c[1],
            label,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embedding_csv(path: impl AsRef<Path>) -> Result<Vec<EmbeddingRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config: TsneConfig,
    pub points: usize,
    pub final_kl: f64,
    pub kl_trace: Vec<(usize, f64)>,
    /// Feature block the embedding was computed from.
    pub layer: Option<String>,
}

pub fn write_run_metadata(path: impl AsRef<Path>, meta: &RunMetadata) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(meta)? + "\n")?;
    Ok(())
}
