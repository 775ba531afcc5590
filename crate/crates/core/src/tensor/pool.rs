use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{conv::conv_output_extent, debug_check_finite, Element, Tensor};
use crate::error::{Error, Result};

/// Flat input index that won each output element of a max-pooling layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolSwitches {
    input_shape: Vec<usize>,
    winners: Vec<usize>,
}

impl PoolSwitches {
    pub fn winners(&self) -> &[usize] {
        &self.winners
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }
}

/// Routes each output gradient to the input position that won its window.
pub fn pool_backward<T: Element>(
    switches: &PoolSwitches,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if grad_out.len() != switches.winners.len() {
        return Err(Error::shape(
            "pool_backward",
            format!(
                "{} output gradients for {} pooled outputs",
                grad_out.len(),
                switches.winners.len()
            ),
        ));
    }
    let mut grad = Tensor::zeros(&switches.input_shape);
    for (&w, &g) in switches.winners.iter().zip(grad_out.data()) {
        grad.data_mut()[w] += g;
    }
    Ok(grad)
}

/// Max over a rectangular window; first index in raster order wins ties.
#[inline]
fn window_max<T: Element>(
    plane: &[T],
    width: usize,
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
) -> (T, usize) {
    let mut best = T::neg_infinity();
    let mut at = rows.start * width + cols.start;
    for y in rows {
        for x in cols.clone() {
            let v = plane[y * width + x];
            if v > best {
                best = v;
                at = y * width + x;
            }
        }
    }
    (best, at)
}

/// Square-window max pooling of a CHW tensor (no padding).
pub fn max_pool<T: Element>(
    input: &Tensor<T>,
    k: usize,
    stride: usize,
) -> Result<(Tensor<T>, PoolSwitches)> {
    if k == 0 || stride == 0 {
        return Err(Error::invalid(format!(
            "max_pool window and stride must be positive, got k={k} stride={stride}"
        )));
    }
    let (c, h, w) = input.chw()?;
    let (Some(oh), Some(ow)) = (
        conv_output_extent(h, k, stride, 0),
        conv_output_extent(w, k, stride, 0),
    ) else {
        return Err(Error::shape(
            "max_pool",
            format!("input {h}x{w} smaller than window {k}"),
        ));
    };
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut winners = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = &input.data()[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let (v, at) = window_max(
                    plane,
                    w,
                    oy * stride..oy * stride + k,
                    ox * stride..ox * stride + k,
                );
                out.push(v);
                winners.push(ch * h * w + at);
            }
        }
    }
    let out = Tensor::new(vec![c, oh, ow], out)?;
    debug_check_finite("max_pool", &out)?;
    Ok((
        out,
        PoolSwitches {
            input_shape: input.shape().to_vec(),
            winners,
        },
    ))
}

/// Disjoint pooling regions of a fractional max-pooling layer.
///
/// `rows` and `cols` hold region boundaries: region `i` along an axis covers
/// `[b[i], b[i + 1])`. Consecutive boundaries differ by 1 or 2 and the last
/// boundary equals the input extent, so the regions tile the input exactly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolRegions {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

impl PoolRegions {
    /// Pseudorandom regions for an `height × width` input reduced by `ratio`.
    pub fn generate(height: usize, width: usize, ratio: f64, seed: u64) -> Result<Self> {
        if !(ratio > 1.0 && ratio <= 2.0) {
            return Err(Error::invalid(format!(
                "fractional pooling ratio must lie in (1, 2], got {ratio}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = boundaries(height, ratio, rng.random::<f64>())?;
        let cols = boundaries(width, ratio, rng.random::<f64>())?;
        Ok(PoolRegions { rows, cols })
    }

    pub fn output_shape(&self) -> (usize, usize) {
        (self.rows.len() - 1, self.cols.len() - 1)
    }

    /// Every region as `(row_range, col_range)` in raster order.
    pub fn iter(
        &self,
    ) -> impl Iterator<Item = (std::ops::Range<usize>, std::ops::Range<usize>)> + '_ {
        self.rows
            .windows(2)
            .flat_map(move |r| self.cols.windows(2).map(move |c| (r[0]..r[1], c[0]..c[1])))
    }
}

/// Increment sequence `b_i = floor((i + u) a) - floor(u a)` with `a = n_in / n_out`.
fn boundaries(extent: usize, ratio: f64, u: f64) -> Result<Vec<usize>> {
    let out = (extent as f64 / ratio).floor() as usize;
    if out == 0 {
        return Err(Error::shape(
            "fractional_max_pool",
            format!("extent {extent} pooled by {ratio} leaves no output"),
        ));
    }
    if extent > 2 * out {
        return Err(Error::shape(
            "fractional_max_pool",
            format!("extent {extent} cannot be tiled by {out} regions of width 1 or 2"),
        ));
    }
    let alpha = extent as f64 / out as f64;
    let offset = (u * alpha).floor();
    let mut b: Vec<usize> = (0..=out)
        .map(|i| ((i as f64 + u) * alpha).floor() - offset)
        .map(|v| v.max(0.0) as usize)
        .collect();
    // guard the telescoping end point against rounding in `alpha`
    b[0] = 0;
    b[out] = extent;
    for i in 1..out {
        b[i] = b[i].clamp(b[i - 1] + 1, b[i - 1] + 2);
    }
    debug_assert!(b.windows(2).all(|w| (1..=2).contains(&(w[1] - w[0]))));
    Ok(b)
}

/// Output of a fractional max-pooling layer together with the regions used.
#[derive(Clone, Debug)]
pub struct FractionalPool<T> {
    pub value: Tensor<T>,
    pub regions: PoolRegions,
    pub switches: PoolSwitches,
}

/// Fractional max pooling with pseudorandom disjoint regions drawn from `seed`.
///
/// The output extent along each axis is `floor(extent / ratio)`.
pub fn fractional_max_pool<T: Element>(
    input: &Tensor<T>,
    ratio: f64,
    seed: u64,
) -> Result<FractionalPool<T>> {
    let (_, h, w) = input.chw()?;
    let regions = PoolRegions::generate(h, w, ratio, seed)?;
    fractional_max_pool_with_regions(input, regions)
}

/// Max over each of the given regions.
pub fn fractional_max_pool_with_regions<T: Element>(
    input: &Tensor<T>,
    regions: PoolRegions,
) -> Result<FractionalPool<T>> {
    let (c, h, w) = input.chw()?;
    if regions.rows.last() != Some(&h) || regions.cols.last() != Some(&w) {
        return Err(Error::shape(
            "fractional_max_pool",
            format!("regions do not tile a {h}x{w} input"),
        ));
    }
    let (oh, ow) = regions.output_shape();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut winners = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = &input.data()[ch * h * w..(ch + 1) * h * w];
        for (rows, cols) in regions.iter() {
            let (v, at) = window_max(plane, w, rows, cols);
            out.push(v);
            winners.push(ch * h * w + at);
        }
    }
    let value = Tensor::new(vec![c, oh, ow], out)?;
    debug_check_finite("fractional_max_pool", &value)?;
    Ok(FractionalPool {
        value,
        regions,
        switches: PoolSwitches {
            input_shape: input.shape().to_vec(),
            winners,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_of_two_by_two() {
        let x = Tensor::<f32>::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, sw) = max_pool(&x, 2, 2).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(sw.winners(), &[3]);
    }

    #[test]
    fn constant_input_pools_to_constant() {
        let x = Tensor::<f32>::full(&[2, 6, 5], 1.5);
        let (y, _) = max_pool(&x, 2, 2).unwrap();
        assert_eq!(y.shape(), &[2, 3, 2]);
        assert!(y.data().iter().all(|&v| v == 1.5));
        let f = fractional_max_pool(&x, std::f64::consts::SQRT_2, 3).unwrap();
        assert_eq!(f.value.shape(), &[2, 4, 3]);
        assert!(f.value.data().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn ties_go_to_first_raster_index() {
        let x = Tensor::<f32>::full(&[1, 2, 2], 0.0);
        let (_, sw) = max_pool(&x, 2, 2).unwrap();
        assert_eq!(sw.winners(), &[0]);
    }

    #[test]
    fn rejects_nonpositive_window() {
        let x = Tensor::<f32>::zeros(&[1, 4, 4]);
        assert!(matches!(max_pool(&x, 0, 2), Err(Error::InvalidArgument(_))));
        assert!(matches!(max_pool(&x, 2, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn increasing_raster_picks_bottom_right() {
        let x = Tensor::<f32>::from_fn(&[1, 11, 9], |i| i as f32);
        let f = fractional_max_pool(&x, 1.5, 42).unwrap();
        for (k, (rows, cols)) in f.regions.iter().enumerate() {
            let bottom_right = (rows.end - 1) * 9 + cols.end - 1;
            assert_eq!(f.value.data()[k], bottom_right as f32);
        }
    }

    #[test]
    fn same_seed_same_regions() {
        let a = PoolRegions::generate(30, 17, 1.414, 9).unwrap();
        let b = PoolRegions::generate(30, 17, 1.414, 9).unwrap();
        assert_eq!(a, b);
        let outs: std::collections::HashSet<_> = (0..20)
            .map(|s| PoolRegions::generate(30, 30, 1.414, s).unwrap().rows)
            .collect();
        assert!(outs.len() > 1, "seeds should vary the regions");
    }

    #[test]
    fn ratio_outside_range_is_rejected() {
        assert!(PoolRegions::generate(8, 8, 1.0, 0).is_err());
        assert!(PoolRegions::generate(8, 8, 2.5, 0).is_err());
        assert!(PoolRegions::generate(1, 8, 1.5, 0).is_err());
    }

    #[test]
    fn backward_routes_to_winner() {
        let x = Tensor::<f64>::new(vec![1, 2, 4], vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 9.0, 1.0])
            .unwrap();
        let (_, sw) = max_pool(&x, 2, 2).unwrap();
        let g = Tensor::<f64>::new(vec![1, 1, 2], vec![10.0, 20.0]).unwrap();
        let dx = pool_backward(&sw, &g).unwrap();
        assert_eq!(dx.data(), &[0.0, 10.0, 0.0, 0.0, 0.0, 0.0, 20.0, 0.0]);
    }
}
