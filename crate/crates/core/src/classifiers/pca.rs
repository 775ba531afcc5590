use nalgebra::{DMatrix, SymmetricEigen};

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::network::TensorContainer;
use crate::tensor::{gemm, Strides, Tensor};

/// Principal axes retained to reach a target fraction of variance.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    /// `k × d`, orthonormal rows in decreasing variance order.
    pub components: Tensor<f32>,
    pub mean: Tensor<f32>,
    /// Fraction of total variance along each component.
    pub ratios: Tensor<f32>,
}

/// Eigenvalues relative to the largest below this count as zero.
const RANK_TOL: f64 = 1e-10;

/// Fits PCA on the rows of `x`, keeping the fewest components whose
/// variance ratios sum to at least `variance_fraction`.
///
/// The eigenproblem is solved on the smaller of the `n × n` sample Gram
/// matrix and the `d × d` scatter matrix.
pub fn pca_fit(x: &FeatureMatrix, variance_fraction: f64) -> Result<PcaModel> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        return Err(Error::invalid(format!(
            "PCA needs at least 2 samples, got {n}"
        )));
    }
    if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
        return Err(Error::invalid("variance fraction must lie in (0, 1]"));
    }
    let mut mean = vec![0.0f64; d];
    for r in x.iter_rows() {
        for (m, &v) in mean.iter_mut().zip(r) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut xc = Vec::with_capacity(n * d);
    for r in x.iter_rows() {
        xc.extend(r.iter().zip(&mean).map(|(&v, &m)| v as f64 - m));
    }

    let small = n.min(d);
    let mut scatter = vec![0.0f64; small * small];
    if n <= d {
        gemm(
            n,
            d,
            n,
            &xc,
            Strides::row_major(d),
            &xc,
            Strides::transposed(d),
            &mut scatter,
            false,
        );
    } else {
        gemm(
            d,
            n,
            d,
            &xc,
            Strides::transposed(d),
            &xc,
            Strides::row_major(d),
            &mut scatter,
            false,
        );
    }
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(small, small, &scatter));
    let mut order: Vec<usize> = (0..small).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let top = eig.eigenvalues[order[0]].max(0.0);
    let total: f64 = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).sum();
    let rank = order
        .iter()
        .take_while(|&&i| top > 0.0 && eig.eigenvalues[i] > RANK_TOL * top)
        .count();
    if rank == 0 {
        return Err(Error::Data(
            "all samples are identical; no principal components".into(),
        ));
    }

    let mut k = 0;
    let mut cum = 0.0;
    while k < rank {
        cum += eig.eigenvalues[order[k]] / total;
        k += 1;
        if cum >= variance_fraction - 1e-9 {
            break;
        }
    }

    let mut components = Vec::with_capacity(k * d);
    let mut ratios = Vec::with_capacity(k);
    for &i in &order[..k] {
        let lambda = eig.eigenvalues[i];
        let u = eig.eigenvectors.column(i);
        let mut v: Vec<f64> = if n <= d {
            (0..d)
                .map(|j| (0..n).map(|s| xc[s * d + j] * u[s]).sum())
                .collect()
        } else {
            u.iter().copied().collect()
        };
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |p, a| if a.abs() > p.abs() { a } else { p });
        let s = pivot.signum() / norm;
        v.iter_mut().for_each(|a| *a *= s);
        components.extend(v.iter().map(|&a| a as f32));
        ratios.push((lambda / total) as f32);
    }
    Ok(PcaModel {
        components: Tensor::new(vec![k, d], components)?,
        mean: Tensor::vector(mean.iter().map(|&m| m as f32).collect())?,
        ratios: Tensor::vector(ratios)?,
    })
}

/// `(x − mean) · componentsᵀ`.
pub fn pca_transform(model: &PcaModel, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    let (k, d) = (model.components.shape()[0], model.components.shape()[1]);
    if x.cols() != d {
        return Err(Error::shape(
            "pca",
            format!("{} features, model expects {d}", x.cols()),
        ));
    }
    let mut centered = Vec::with_capacity(x.rows() * d);
    for r in x.iter_rows() {
        centered.extend(r.iter().zip(model.mean.data()).map(|(&v, &m)| v - m));
    }
    let mut out = vec![0.0f32; x.rows() * k];
    gemm(
        x.rows(),
        d,
        k,
        &centered,
        Strides::row_major(d),
        model.components.data(),
        Strides::transposed(d),
        &mut out,
        false,
    );
    FeatureMatrix::new(x.rows(), k, out)
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.shape()[0]
    }

    /// The leading `k` components only.
    pub fn truncated(&self, k: usize) -> Self {
        let k = k.min(self.k());
        let d = self.components.shape()[1];
        PcaModel {
            components: Tensor::new(vec![k, d], self.components.data()[..k * d].to_vec())
                .expect("prefix of rows"),
            mean: self.mean.clone(),
            ratios: Tensor::new(vec![k], self.ratios.data()[..k].to_vec()).expect("prefix"),
        }
    }

    /// Maps reduced coordinates back to feature space.
    pub fn reconstruct(&self, reduced: &FeatureMatrix) -> Result<FeatureMatrix> {
        let (k, d) = (self.k(), self.components.shape()[1]);
        if reduced.cols() != k {
            return Err(Error::shape(
                "pca",
                format!("{} coordinates for {k} components", reduced.cols()),
            ));
        }
        let mut out = vec![0.0f32; reduced.rows() * d];
        gemm(
            reduced.rows(),
            k,
            d,
            reduced.data(),
            Strides::row_major(k),
            self.components.data(),
            Strides::row_major(d),
            &mut out,
            false,
        );
        for row in out.chunks_exact_mut(d) {
            for (o, &m) in row.iter_mut().zip(self.mean.data()) {
                *o += m;
            }
        }
        FeatureMatrix::new(reduced.rows(), d, out)
    }

    pub fn to_container(&self) -> TensorContainer {
        let mut c = TensorContainer::default();
        c.push("components", self.components.clone());
        c.push("mean", self.mean.clone());
        c.push("ratios", self.ratios.clone());
        c
    }

    pub fn from_container(c: &TensorContainer) -> Result<Self> {
        let get = |name: &str| {
            c.get(name)
                .cloned()
                .ok_or_else(|| Error::Data(format!("PCA model lacks tensor `{name}`")))
        };
        let m = PcaModel {
            components: get("components")?,
            mean: get("mean")?,
            ratios: get("ratios")?,
        };
        let s = m.components.shape();
        if s.len() != 2 || m.mean.len() != s[1] || m.ratios.len() != s[0] {
            return Err(Error::shape("pca", "components, mean and ratios disagree"));
        }
        Ok(m)
    }
}
