//! First-order optimizers over flat parameter slices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Element;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            step: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        if self.eps <= 0.0 || self.step <= 0.0 {
            return Err(Error::invalid("Adam step and epsilon must be positive"));
        }
        Ok(())
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    params: AdamParams,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Element> Adam<T> {
    pub fn new(params: AdamParams, len: usize) -> Result<Self> {
        params.validate()?;
        Ok(Adam {
            params,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        })
    }

    pub fn params(&self) -> &AdamParams {
        &self.params
    }

    /// Folds a gradient into the moment estimates and advances the step count.
    pub fn observe(&mut self, grad: &[T]) {
        assert_eq!(grad.len(), self.m.len(), "Adam gradient length");
        let (b1, b2) = (T::lit(self.params.beta1), T::lit(self.params.beta2));
        for ((m, v), &g) in self.m.iter_mut().zip(&mut self.v).zip(grad) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
        }
        self.t += 1;
    }

    /// Writes `params - step * m_hat / (sqrt(v_hat) + eps)` into `out`.
    pub fn propose(&self, params: &[T], step: f64, out: &mut [T]) {
        let c1 = T::one() - T::lit(self.params.beta1).powi(self.t);
        let c2 = T::one() - T::lit(self.params.beta2).powi(self.t);
        let (step, eps) = (T::lit(step), T::lit(self.params.eps));
        for (((o, &p), &m), &v) in out.iter_mut().zip(params).zip(&self.m).zip(&self.v) {
            *o = p - step * (m / c1) / ((v / c2).sqrt() + eps);
        }
    }

    /// One full update in place.
    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        self.observe(grad);
        let current = params.to_vec();
        self.propose(&current, self.params.step, params);
    }
}

/// SGD with classical momentum: `v = mu v - lr g; p += v`.
#[derive(Clone, Debug)]
pub struct Momentum<T> {
    velocity: Vec<T>,
    momentum: T,
}

impl<T: Element> Momentum<T> {
    pub fn new(momentum: f64, len: usize) -> Self {
        Momentum {
            velocity: vec![T::zero(); len],
            momentum: T::lit(momentum),
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T], lr: f64) {
        let lr = T::lit(lr);
        for ((p, v), &g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = self.momentum * *v - lr * g;
            *p += *v;
        }
    }
}
