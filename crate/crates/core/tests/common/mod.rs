//! Reference implementations and helpers shared by the integration tests.
#![allow(dead_code)]

pub mod cli;
pub mod gradcheck;

use gramstyle::tsne::JointAffinities;
use gramstyle::{Element, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or 0 when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn to_f64<T: Element>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64().unwrap()).collect()
}

/// Central differences of `f` at `x`.
pub fn numeric_grad(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Direct convolution by definition; `kernels` is OIHW, zero padding.
pub fn naive_conv(
    input: &[f64],
    [c, h, w]: [usize; 3],
    kernels: &[f64],
    [o, kh, kw]: [usize; 3],
    bias: &[f64],
    stride: usize,
    pad: usize,
) -> (Vec<f64>, [usize; 3]) {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; o * oh * ow];
    for oc in 0..o {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = bias[oc];
                for ic in 0..c {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (y * stride + ky) as isize - pad as isize;
                            let ix = (x * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            acc += kernels[((oc * c + ic) * kh + ky) * kw + kx]
                                * input[(ic * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out[(oc * oh + y) * ow + x] = acc;
            }
        }
    }
    (out, [o, oh, ow])
}

/// `G_ij = Σ_k F_ik F_jk` by triple loop over a `channels × positions` map.
pub fn naive_gram(f: &[f64], channels: usize) -> Vec<f64> {
    let m = f.len() / channels;
    let mut g = vec![0.0; channels * channels];
    for i in 0..channels {
        for j in 0..channels {
            let mut s = 0.0;
            for k in 0..m {
                s += f[i * m + k] * f[j * m + k];
            }
            g[i * channels + j] = s;
        }
    }
    g
}

/// Exact O(n²) t-SNE gradient with Student-t kernel.
pub fn exact_tsne_grad(p: &JointAffinities, y: &[[f64; 2]], exaggeration: f64) -> Vec<[f64; 2]> {
    let n = y.len();
    let kernel = |i: usize, j: usize| {
        let dx = y[i][0] - y[j][0];
        let dy = y[i][1] - y[j][1];
        1.0 / (1.0 + dx * dx + dy * dy)
    };
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                z += kernel(i, j);
            }
        }
    }
    (0..n)
        .map(|i| {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = kernel(i, j);
                let coef = (exaggeration * p.get(i, j) - w / z) * w;
                g[0] += 4.0 * coef * (y[i][0] - y[j][0]);
                g[1] += 4.0 * coef * (y[i][1] - y[j][1]);
            }
            g
        })
        .collect()
}

/// Two isotropic Gaussian clusters whose means differ by `separation`
/// standard deviations along the first axis; labels alternate.
pub fn two_clusters(n: usize, d: usize, separation: f64, seed: u64) -> (Vec<f32>, Vec<usize>) {
    use rand_distr::{Distribution, StandardNormal};
    let mut r = rng(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let mut data = Vec::with_capacity(n * d);
    for &l in &labels {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut r);
            let shift = if j == 0 && l == 1 { separation } else { 0.0 };
            data.push((z + shift) as f32);
        }
    }
    (data, labels)
}
