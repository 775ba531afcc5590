use rayon::prelude::*;

use crate::classifiers::FeatureMatrix;
use crate::error::{Error, Result};

/// Bisection stops once the row entropy is this close to the target, in bits.
pub const ENTROPY_TOL: f64 = 1e-5;
const MAX_BISECTIONS: usize = 200;

/// Per-point Gaussian conditionals `p_{j|i}` over the nearest neighbours.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalAffinities {
    pub neighbors: Vec<Vec<usize>>,
    pub probs: Vec<Vec<f64>>,
    /// Precision `1 / (2σ²)` chosen for each row.
    pub beta: Vec<f64>,
}

/// Symmetric joint affinities in compressed sparse rows.
#[derive(Clone, Debug, PartialEq)]
pub struct JointAffinities {
    pub row_start: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<f64>,
}

impl JointAffinities {
    pub fn n(&self) -> usize {
        self.row_start.len() - 1
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_start[i]..self.row_start[i + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Number of neighbours used per row.
pub fn neighbor_count(n: usize, perplexity: f64) -> usize {
    ((3.0 * perplexity).floor() as usize).min(n.saturating_sub(1))
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Entropy in bits of `exp(−β d) / Σ`, and the distribution itself.
pub fn row_entropy(dists: &[f64], beta: f64) -> (f64, Vec<f64>) {
    let d0 = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = dists.iter().map(|&d| (-beta * (d - d0)).exp()).collect();
    let z: f64 = w.iter().sum();
    let p: Vec<f64> = w.iter().map(|&v| v / z).collect();
    let h = -p
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.log2())
        .sum::<f64>();
    (h, p)
}

/// Bisects on `β` until the row entropy matches `log2(perplexity)`.
/// Rows whose distances are all equal get uniform probabilities.
pub fn calibrate_row(dists: &[f64], perplexity: f64) -> (f64, Vec<f64>) {
    let target = perplexity.log2();
    let lo_d = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_d = dists.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi_d - lo_d <= f64::EPSILON * hi_d.abs().max(1.0) {
        return (0.0, vec![1.0 / dists.len() as f64; dists.len()]);
    }
    let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
    let (mut h, mut p) = row_entropy(dists, beta);
    for _ in 0..MAX_BISECTIONS {
        if (h - target).abs() < ENTROPY_TOL {
            break;
        }
        if h > target {
            lo = beta;
            beta = if hi.is_finite() {
                (beta + hi) / 2.0
            } else {
                beta * 2.0
            };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
        (h, p) = row_entropy(dists, beta);
    }
    (beta, p)
}

/// Exact nearest-neighbour scan and per-row bandwidth calibration.
///
/// Uses `k = min(n − 1, floor(3 · perplexity))` neighbours and requires
/// `k ≥ perplexity`.
pub fn conditional_affinities(x: &FeatureMatrix, perplexity: f64) -> Result<ConditionalAffinities> {
    let n = x.rows();
    if perplexity.is_nan() || perplexity < 1.0 {
        return Err(Error::invalid(format!(
            "perplexity must be at least 1, got {perplexity}"
        )));
    }
    let k = neighbor_count(n, perplexity);
    if (k as f64) < perplexity {
        return Err(Error::invalid(format!(
            "{n} points allow {k} neighbours, fewer than perplexity {perplexity}"
        )));
    }
    let rows: Vec<(Vec<usize>, Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(xi, x.row(j)), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.truncate(k);
            let dists: Vec<f64> = d.iter().map(|e| e.0).collect();
            let (beta, p) = calibrate_row(&dists, perplexity);
            (d.into_iter().map(|e| e.1).collect(), p, beta)
        })
        .collect();
    let mut out = ConditionalAffinities {
        neighbors: Vec::with_capacity(n),
        probs: Vec::with_capacity(n),
        beta: Vec::with_capacity(n),
    };
    for (nb, p, b) in rows {
        out.neighbors.push(nb);
        out.probs.push(p);
        out.beta.push(b);
    }
    Ok(out)
}

/// `P_ij = (p_{j|i} + p_{i|j}) / 2n`.
pub fn symmetrize(cond: &ConditionalAffinities) -> JointAffinities {
    let n = cond.neighbors.len();
    let mut entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for (&j, &p) in cond.neighbors[i].iter().zip(&cond.probs[i]) {
            entries[i].push((j, p));
            entries[j].push((i, p));
        }
    }
    let scale = 1.0 / (2.0 * n as f64);
    let mut row_start = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut values = Vec::new();
    row_start.push(0);
    for mut row in entries {
        row.sort_by_key(|e| e.0);
        let mut it = row.into_iter().peekable();
        while let Some((j, mut v)) = it.next() {
            while let Some(&(j2, v2)) = it.peek() {
                if j2 != j {
                    break;
                }
                v += v2;
                it.next();
            }
            cols.push(j);
            values.push(v * scale);
        }
        row_start.push(cols.len());
    }
    JointAffinities {
        row_start,
        cols,
        values,
    }
}

pub fn perplexity_affinities(x: &FeatureMatrix, perplexity: f64) -> Result<JointAffinities> {
    Ok(symmetrize(&conditional_affinities(x, perplexity)?))
}
