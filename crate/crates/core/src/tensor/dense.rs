use super::{debug_check_finite, gemm, Element, Strides, Tensor};
use crate::error::{Error, Result};

fn dense_dims<T: Element>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<(usize, usize)> {
    let [m, n] = weights.shape()[..] else {
        return Err(Error::shape(
            "dense",
            format!("weights must be a matrix, got {:?}", weights.shape()),
        ));
    };
    if input.len() != n {
        return Err(Error::shape(
            "dense",
            format!("input has {} entries, weights expect {n}", input.len()),
        ));
    }
    Ok((m, n))
}

/// Fully-connected layer `W x + b` on a flat input.
pub fn dense<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (m, n) = dense_dims(input, weights)?;
    if bias.len() != m {
        return Err(Error::shape(
            "dense",
            format!("bias has {} entries for {m} outputs", bias.len()),
        ));
    }
    let mut out = bias.data().to_vec();
    gemm(
        m,
        n,
        1,
        weights.data(),
        Strides::row_major(n),
        input.data(),
        Strides::row_major(1),
        &mut out,
        true,
    );
    let out = Tensor::vector(out)?;
    debug_check_finite("dense", &out)?;
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn dense_backward<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    want_params: bool,
) -> Result<DenseGrads<T>> {
    let (m, n) = dense_dims(input, weights)?;
    if grad_out.len() != m {
        return Err(Error::shape(
            "dense_backward",
            format!(
                "output gradient has {} entries for {m} outputs",
                grad_out.len()
            ),
        ));
    }
    let mut grad_in = vec![T::zero(); n];
    gemm(
        n,
        m,
        1,
        weights.data(),
        Strides::transposed(n),
        grad_out.data(),
        Strides::row_major(1),
        &mut grad_in,
        false,
    );
    let mut grad_w = Tensor::zeros(&[m, n]);
    if want_params {
        for (row, &g) in grad_w.data_mut().chunks_mut(n).zip(grad_out.data()) {
            for (w, &x) in row.iter_mut().zip(input.data()) {
                *w = g * x;
            }
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(input.shape().to_vec(), grad_in)?,
        weights: grad_w,
        bias: Tensor::vector(grad_out.data().to_vec())?,
    })
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Element>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Loss, class probabilities and logit gradient of softmax cross-entropy.
#[derive(Clone, Debug)]
pub struct SoftmaxCrossEntropy<T> {
    pub loss: T,
    pub probabilities: Vec<T>,
    /// `softmax(logits) - one_hot(label)`.
    pub grad: Vec<T>,
}

pub fn softmax_cross_entropy<T: Element>(
    logits: &[T],
    label: usize,
) -> Result<SoftmaxCrossEntropy<T>> {
    if logits.len() < 2 {
        return Err(Error::invalid(format!(
            "softmax needs at least 2 classes, got {}",
            logits.len()
        )));
    }
    if label >= logits.len() {
        return Err(Error::invalid(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let log_total = logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
    let loss = log_total - (logits[label] - max);
    let probabilities = softmax(logits);
    let mut grad = probabilities.clone();
    grad[label] -= T::one();
    if cfg!(debug_assertions) && !loss.is_finite() {
        return Err(Error::NonFinite("softmax_cross_entropy".into()));
    }
    Ok(SoftmaxCrossEntropy {
        loss,
        probabilities,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_input_through() {
        let x = Tensor::<f32>::vector(vec![1.0, -2.0, 3.0]).unwrap();
        let w = Tensor::<f32>::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        let y = dense(&x, &w, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn hand_arithmetic() {
        let x = Tensor::<f32>::vector(vec![2.0, 3.0]).unwrap();
        let w = Tensor::<f32>::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let b = Tensor::<f32>::vector(vec![1.0]).unwrap();
        assert_eq!(dense(&x, &w, &b).unwrap().data(), &[6.0]);
    }

    #[test]
    fn dense_shape_errors() {
        let x = Tensor::<f32>::vector(vec![2.0, 3.0]).unwrap();
        let w = Tensor::<f32>::zeros(&[1, 3]);
        assert!(matches!(
            dense(&x, &w, &Tensor::zeros(&[1])),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn uniform_logits_give_log_class_count() {
        let ce = softmax_cross_entropy(&[0.25f64; 70], 12).unwrap();
        assert!((ce.loss - 70f64.ln()).abs() < 1e-12);
        assert!((ce.loss - 4.2485).abs() < 1e-4);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let ce = softmax_cross_entropy(&[1000.0f32, 0.0], 0).unwrap();
        assert!(ce.loss.abs() < 1e-6);
        assert!(ce.probabilities.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn label_out_of_range() {
        assert!(softmax_cross_entropy(&[0.0f32, 1.0], 2).is_err());
        assert!(softmax_cross_entropy(&[0.0f32], 0).is_err());
    }
}
