use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};

/// Per-feature z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f32>,
    /// Sample standard deviation; 0 marks a constant feature.
    pub std: Vec<f32>,
}

pub fn fit_normalizer(x: &FeatureMatrix) -> Result<Normalizer> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 samples to fit a normalizer, got {n}"
        )));
    }
    let stats: Vec<(f32, f32)> = (0..x.cols())
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = x.iter_rows().map(|r| r[j] as f64).collect();
            let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
            for &v in &col {
                lo = lo.min(v);
                hi = hi.max(v);
                sum += v;
            }
            let mean = sum / n as f64;
            if lo == hi {
                return (mean as f32, 0.0);
            }
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            (mean as f32, (ss / (n - 1) as f64).sqrt() as f32)
        })
        .collect();
    let (mean, std) = stats.into_iter().unzip();
    Ok(Normalizer { mean, std })
}

pub fn apply_normalizer(stats: &Normalizer, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    if stats.mean.len() != x.cols() {
        return Err(Error::shape(
            "normalize",
            format!("{} statistics for {} features", stats.mean.len(), x.cols()),
        ));
    }
    let data = x
        .iter_rows()
        .flat_map(|r| {
            r.iter()
                .zip(&stats.mean)
                .zip(&stats.std)
                .map(|((&v, &m), &s)| {
                    if s == 0.0 {
                        0.0
                    } else {
                        ((v as f64 - m as f64) / s as f64) as f32
                    }
                })
        })
        .collect();
    FeatureMatrix::new(x.rows(), x.cols(), data)
}
