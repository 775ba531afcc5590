use super::{debug_check_finite, Element, Tensor};
use crate::error::{Error, Result};

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid(format!(
            "leaky ReLU slope must lie in [0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// `x` for `x >= 0`, `alpha * x` otherwise. `alpha = 0` is a plain ReLU.
pub fn leaky_relu<T: Element>(input: &Tensor<T>, alpha: T) -> Result<Tensor<T>> {
    check_alpha(alpha.to_f64().unwrap_or(f64::NAN))?;
    let out = input.map(|x| if x >= T::zero() { x } else { alpha * x });
    debug_check_finite("leaky_relu", &out)?;
    Ok(out)
}

pub fn leaky_relu_backward<T: Element>(
    input: &Tensor<T>,
    alpha: T,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    input.check_same_shape("leaky_relu_backward", grad_out)?;
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x >= T::zero() { g } else { alpha * g })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}
