//! Style classifiers and dimensionality reduction over flattened Gram features.

mod forest;
mod linear;
mod normalize;
mod pca;

pub use forest::{
    predict_forest, train_forest, ForestConfig, ForestModel, ForestPrediction, Node, Tree,
};
pub use linear::{predict_linear, train_linear, AdamConfig, LinearModel, LinearPrediction};
pub use normalize::{apply_normalizer, fit_normalizer, Normalizer};
pub use pca::{pca_fit, pca_transform, PcaModel};

use crate::error::{Error, Result};

/// `n × d` row-major sample matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::shape(
                "features",
                format!("{} values for {rows}×{cols}", data.len()),
            ));
        }
        Ok(FeatureMatrix { rows, cols, data })
    }

    /// Stacks equal-length rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(
                    "features",
                    format!("row {i} has {} values, row 0 has {cols}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(FeatureMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        // chunks_exact(0) panics
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn column(&self, j: usize) -> Vec<f32> {
        self.iter_rows().map(|r| r[j]).collect()
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of predictions equal to the truth.
pub fn top1_accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::invalid(format!(
            "need matching, non-empty label lists (got {} and {})",
            predicted.len(),
            truth.len()
        )));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Recall of each class `0..classes`; `None` where the class never occurs.
pub fn per_class_recall(
    predicted: &[usize],
    truth: &[usize],
    classes: usize,
) -> Result<Vec<Option<f64>>> {
    if predicted.len() != truth.len() {
        return Err(Error::invalid("prediction and truth lengths differ"));
    }
    let mut seen = vec![0usize; classes];
    let mut hit = vec![0usize; classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if t >= classes {
            return Err(Error::invalid(format!(
                "label {t} outside {classes} classes"
            )));
        }
        seen[t] += 1;
        hit[t] += usize::from(p == t);
    }
    Ok(seen
        .iter()
        .zip(&hit)
        .map(|(&s, &h)| (s > 0).then(|| h as f64 / s as f64))
        .collect())
}

pub(crate) fn check_labels(x: &FeatureMatrix, labels: &[usize]) -> Result<usize> {
    if x.rows() == 0 {
        return Err(Error::invalid("empty feature matrix"));
    }
    if labels.len() != x.rows() {
        return Err(Error::invalid(format!(
            "{} rows but {} labels",
            x.rows(),
            labels.len()
        )));
    }
    Ok(labels.iter().copied().max().unwrap_or(0) + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(top1_accuracy(&[0, 1], &[0, 1]).unwrap(), 1.0);
        let a = top1_accuracy(&[1, 2, 3], &[1, 2, 0]).unwrap();
        assert!((a - 0.6667).abs() < 1e-4);
        assert!(top1_accuracy(&[], &[]).is_err());
    }

    #[test]
    fn recall_per_class() {
        let r = per_class_recall(&[0, 0, 1, 1], &[0, 1, 1, 1], 3).unwrap();
        assert_eq!(r, vec![Some(1.0), Some(2.0 / 3.0), None]);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0f32; 4]), 0);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(FeatureMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
