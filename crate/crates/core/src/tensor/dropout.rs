use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Per-element multipliers applied by a training-mode dropout pass:
/// `0` for dropped elements, `1 / (1 - rate)` for survivors.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask<T> {
    scale: Vec<T>,
}

impl<T: Element> DropoutMask<T> {
    pub fn kept(&self) -> usize {
        self.scale.iter().filter(|s| **s != T::zero()).count()
    }
}

/// Inverted dropout. Identity (and no mask) when not training or `rate == 0`.
pub fn dropout<T: Element>(
    input: &Tensor<T>,
    rate: f64,
    seed: u64,
    training: bool,
) -> Result<(Tensor<T>, Option<DropoutMask<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale: Vec<T> = (0..input.len())
        .map(|_| {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    let data = input
        .data()
        .iter()
        .zip(&scale)
        .map(|(&x, &s)| x * s)
        .collect();
    Ok((
        Tensor::new(input.shape().to_vec(), data)?,
        Some(DropoutMask { scale }),
    ))
}

pub fn dropout_backward<T: Element>(
    mask: Option<&DropoutMask<T>>,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let Some(mask) = mask else {
        return Ok(grad_out.clone());
    };
    if mask.scale.len() != grad_out.len() {
        return Err(Error::shape(
            "dropout_backward",
            format!(
                "mask of {} for gradient of {}",
                mask.scale.len(),
                grad_out.len()
            ),
        ));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(&mask.scale)
        .map(|(&g, &s)| g * s)
        .collect();
    Tensor::new(grad_out.shape().to_vec(), data)
}
