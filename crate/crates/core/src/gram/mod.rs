//! The style representation: Gram matrices of feature maps and their
//! symmetric flattening into classifier-ready vectors.

pub mod store;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::{gemm, Element, Strides, Tensor};

/// Spatial sizes above this use compensated summation for Gram entries.
const COMPENSATE_ABOVE: usize = 4096;

/// Which entries of a symmetric Gram matrix a flattened vector keeps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlattenMode {
    /// Entries with `i < j`: `N (N - 1) / 2` values.
    #[default]
    StrictUpper,
    /// Entries with `i <= j`: `N (N + 1) / 2` values.
    WithDiagonal,
}

/// Length of a flattened `n × n` Gram matrix.
pub fn symmetric_len(n: usize, mode: FlattenMode) -> usize {
    match mode {
        FlattenMode::StrictUpper => n * n.saturating_sub(1) / 2,
        FlattenMode::WithDiagonal => n * (n + 1) / 2,
    }
}

/// `G = F Fᵀ` for a feature map reshaped to `channels × positions`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix<T = f32> {
    layer: String,
    channels: usize,
    positions: usize,
    values: Vec<T>,
}

fn dot_plain<T: Element>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Neumaier-compensated dot product.
fn dot_compensated<T: Element>(a: &[T], b: &[T]) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let p = x * y;
        let t = sum + p;
        if sum.abs() >= p.abs() {
            comp += (sum - t) + p;
        } else {
            comp += (p - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Unnormalised Gram matrix of a CHW feature map.
///
/// Each unordered channel pair is computed once and mirrored, so the result
/// is exactly symmetric.
pub fn gram_matrix<T: Element>(feature_map: &Tensor<T>) -> Result<GramMatrix<T>> {
    let (n, h, w) = feature_map.chw()?;
    let m = h * w;
    let f = feature_map.data();
    let dot = if m > COMPENSATE_ABOVE {
        dot_compensated::<T>
    } else {
        dot_plain::<T>
    };
    let upper: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ri = &f[i * m..(i + 1) * m];
            (i..n).map(|j| dot(ri, &f[j * m..(j + 1) * m])).collect()
        })
        .collect();
    let mut values = vec![T::zero(); n * n];
    for (i, row) in upper.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            let j = i + k;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(GramMatrix {
        layer: String::new(),
        channels: n,
        positions: m,
        values,
    })
}

/// Gradient with respect to `F` of an objective with gradient `grad_gram`
/// with respect to `G = F Fᵀ`: `(dG + dGᵀ) F`.
pub fn gram_backward<T: Element>(feature_map: &Tensor<T>, grad_gram: &[T]) -> Result<Tensor<T>> {
    let (n, h, w) = feature_map.chw()?;
    if grad_gram.len() != n * n {
        return Err(Error::shape(
            "gram_backward",
            format!("gradient of {} entries for {n} channels", grad_gram.len()),
        ));
    }
    let m = h * w;
    let mut sym = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            sym[i * n + j] = grad_gram[i * n + j] + grad_gram[j * n + i];
        }
    }
    let mut out = vec![T::zero(); n * m];
    gemm(
        n,
        n,
        m,
        &sym,
        Strides::row_major(n),
        feature_map.data(),
        Strides::row_major(m),
        &mut out,
        false,
    );
    Tensor::new(feature_map.shape().to_vec(), out)
}

impl<T: Element> GramMatrix<T> {
    pub fn with_layer(mut self, layer: impl Into<String>) -> Self {
        self.layer = layer.into();
        self
    }

    pub fn layer(&self) -> &str {
        &self.layer
    }

    /// `N`, the channel count.
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `M`, the number of spatial positions summed over.
    pub fn positions(&self) -> usize {
        self.positions
    }

    /// Row-major `N × N` values.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.channels + j]
    }

    pub fn trace(&self) -> T {
        (0..self.channels).map(|i| self.get(i, i)).sum()
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.channels).map(|i| self.get(i, i)).collect()
    }

    /// Strict upper triangle in row-major order.
    pub fn flatten_symmetric(&self) -> Vec<T> {
        self.flatten(FlattenMode::StrictUpper)
    }

    pub fn flatten(&self, mode: FlattenMode) -> Vec<T> {
        let n = self.channels;
        let skip = usize::from(mode == FlattenMode::StrictUpper);
        let mut out = Vec::with_capacity(symmetric_len(n, mode));
        for i in 0..n {
            out.extend_from_slice(&self.values[i * n + i + skip..(i + 1) * n]);
        }
        out
    }

    /// Rebuilds a Gram matrix from its strict upper triangle and diagonal.
    pub fn from_flattened(
        layer: impl Into<String>,
        upper: &[T],
        diagonal: &[T],
        positions: usize,
    ) -> Result<Self> {
        let n = diagonal.len();
        if upper.len() != symmetric_len(n, FlattenMode::StrictUpper) {
            return Err(Error::shape(
                "unflatten",
                format!(
                    "{} upper entries do not match {n} diagonal entries",
                    upper.len()
                ),
            ));
        }
        let mut values = vec![T::zero(); n * n];
        let mut it = upper.iter();
        for i in 0..n {
            values[i * n + i] = diagonal[i];
            for j in i + 1..n {
                let v = *it.next().expect("length checked");
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Ok(GramMatrix {
            layer: layer.into(),
            channels: n,
            positions,
            values,
        })
    }
}

/// Flattened Gram vector of one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerVector {
    pub layer: String,
    pub values: Vec<f32>,
}

/// The style representation of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleFeature {
    pub image_id: String,
    pub grams: Vec<GramMatrix<f32>>,
    pub flattened: Vec<LayerVector>,
}

impl StyleFeature {
    /// All flattened layers joined in tap order.
    pub fn concatenated(&self) -> Vec<f32> {
        self.flattened
            .iter()
            .flat_map(|l| l.values.iter().copied())
            .collect()
    }

    pub fn layer(&self, name: &str) -> Option<&LayerVector> {
        self.flattened
            .iter()
            .find(|l| l.layer.eq_ignore_ascii_case(name))
    }
}

/// One forward pass, then a Gram matrix and flattened vector per tap.
pub fn extract_style_features(
    net: &Network<f32>,
    image: &Tensor<f32>,
    taps: &[&str],
    mode: FlattenMode,
    image_id: impl Into<String>,
) -> Result<StyleFeature> {
    let maps = net.forward_taps(image, taps)?;
    let mut grams = Vec::with_capacity(taps.len());
    let mut flattened = Vec::with_capacity(taps.len());
    for tap in taps {
        let name = net.spec().canonical_name(tap)?;
        let g = gram_matrix(&maps[name])?.with_layer(name);
        flattened.push(LayerVector {
            layer: name.to_string(),
            values: g.flatten(mode),
        });
        grams.push(g);
    }
    Ok(StyleFeature {
        image_id: image_id.into(),
        grams,
        flattened,
    })
}
