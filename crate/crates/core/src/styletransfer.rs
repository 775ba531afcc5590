//! Image synthesis by matching feature maps (content) and Gram matrices
//! (style) of a fixed extractor network.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::{gram_backward, gram_matrix, GramMatrix};
use crate::network::{ForwardOptions, Network, VGG_STYLE_TAPS};
use crate::optim::{Adam, AdamParams};
use crate::tensor::{Element, Tensor};

/// Starting point of the pixel optimization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// I.i.d. uniform pixels over the displayable range.
    #[default]
    Noise,
    ContentCopy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub content_layers: Vec<String>,
    pub style_layers: Vec<String>,
    pub content_weight: f64,
    pub style_weight: f64,
    /// Multipliers for the style layers, in order; empty means all 1.
    pub style_layer_weights: Vec<f64>,
    pub iterations: usize,
    pub adam: AdamParams,
    /// Rejected steps are retried at half size at most this many times.
    pub max_halvings: usize,
    pub seed: u64,
    pub init: InitMode,
    /// Per-channel mean subtracted from `[0, 1]` pixels by the input convention.
    pub channel_mean: Vec<f64>,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            content_layers: vec!["ReLU4_1".into()],
            style_layers: VGG_STYLE_TAPS.iter().map(|s| s.to_string()).collect(),
            content_weight: 1.0,
            style_weight: 1000.0,
            style_layer_weights: Vec::new(),
            iterations: 500,
            adam: AdamParams {
                step: 0.02,
                ..AdamParams::default()
            },
            max_halvings: 30,
            seed: 0,
            init: InitMode::Noise,
            channel_mean: Vec::new(),
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.content_weight >= 0.0 && self.style_weight >= 0.0) {
            return Err(Error::invalid("loss weights must be nonnegative"));
        }
        if self.content_layers.is_empty() && self.style_layers.is_empty() {
            return Err(Error::invalid("no content or style layers selected"));
        }
        if !self.style_layer_weights.is_empty()
            && self.style_layer_weights.len() != self.style_layers.len()
        {
            return Err(Error::invalid("one weight per style layer expected"));
        }
        self.adam.validate()
    }
}

/// Weighted loss components; `total = content + style`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub content: f64,
    pub style: f64,
}

/// `Σ_l Σ (F − P)² / (N_l M_l)` and its gradient with respect to each `F`.
pub fn content_loss<T: Element>(
    x_maps: &[Tensor<T>],
    p_maps: &[Tensor<T>],
) -> Result<(T, Vec<Tensor<T>>)> {
    if x_maps.len() != p_maps.len() {
        return Err(Error::shape(
            "content_loss",
            format!("{} maps against {} targets", x_maps.len(), p_maps.len()),
        ));
    }
    let mut loss = T::zero();
    let mut grads = Vec::with_capacity(x_maps.len());
    for (f, p) in x_maps.iter().zip(p_maps) {
        let (n, h, w) = f.chw()?;
        f.check_same_shape("content_loss", p)?;
        let norm = T::lit((n * h * w) as f64);
        let two = T::lit(2.0);
        let mut g = Vec::with_capacity(f.len());
        let mut sq = T::zero();
        for (&a, &b) in f.data().iter().zip(p.data()) {
            let d = a - b;
            sq += d * d;
            g.push(two * d / norm);
        }
        loss += sq / norm;
        grads.push(Tensor::new(f.shape().to_vec(), g)?);
    }
    Ok((loss, grads))
}

/// `Σ_l Σ (G − A)² / (N_l² M_l²)` and its gradient with respect to each `G`.
///
/// `N_l` and `M_l` are taken from the generated image's Gram matrices.
pub fn style_loss<T: Element>(
    x_grams: &[GramMatrix<T>],
    a_grams: &[GramMatrix<T>],
) -> Result<(T, Vec<Vec<T>>)> {
    if x_grams.len() != a_grams.len() {
        return Err(Error::shape(
            "style_loss",
            format!(
                "{} Gram matrices against {} targets",
                x_grams.len(),
                a_grams.len()
            ),
        ));
    }
    let mut loss = T::zero();
    let mut grads = Vec::with_capacity(x_grams.len());
    for (g, a) in x_grams.iter().zip(a_grams) {
        if g.channels() != a.channels() {
            return Err(Error::shape(
                "style_loss",
                format!("{} channels against {}", g.channels(), a.channels()),
            ));
        }
        let nm = (g.channels() * g.positions()) as f64;
        let norm = T::lit(nm * nm);
        let two = T::lit(2.0);
        let mut grad = Vec::with_capacity(g.values().len());
        let mut sq = T::zero();
        for (&x, &y) in g.values().iter().zip(a.values()) {
            let d = x - y;
            sq += d * d;
            grad.push(two * d / norm);
        }
        loss += sq / norm;
        grads.push(grad);
    }
    Ok((loss, grads))
}

/// The weighted transfer objective over pixels, with targets precomputed.
pub struct StyleObjective<'a, T: Element> {
    net: &'a Network<T>,
    content_idx: Vec<usize>,
    style_idx: Vec<usize>,
    content_targets: Vec<Tensor<T>>,
    style_targets: Vec<GramMatrix<T>>,
    style_layer_weights: Vec<f64>,
    content_weight: f64,
    style_weight: f64,
    deepest: usize,
}

impl<'a, T: Element> StyleObjective<'a, T> {
    pub fn new(
        net: &'a Network<T>,
        content: &Tensor<T>,
        style: &Tensor<T>,
        cfg: &TransferConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if net.spec().is_classifier() {
            return Err(Error::invalid(
                "style transfer needs a feature extractor without a softmax head",
            ));
        }
        let spec = net.spec();
        let content_idx = cfg
            .content_layers
            .iter()
            .map(|l| spec.layer_index(l))
            .collect::<Result<Vec<_>>>()?;
        let style_idx = cfg
            .style_layers
            .iter()
            .map(|l| spec.layer_index(l))
            .collect::<Result<Vec<_>>>()?;
        let deepest = content_idx
            .iter()
            .chain(&style_idx)
            .copied()
            .max()
            .expect("validated");

        let names = |idx: &[usize]| -> Vec<&str> {
            idx.iter().map(|&i| spec.layers[i].name.as_str()).collect()
        };
        let content_names = names(&content_idx);
        let style_names = names(&style_idx);
        let p = net.forward_taps(content, &content_names)?;
        let a = net.forward_taps(style, &style_names)?;
        let content_targets = content_names.iter().map(|n| p[*n].clone()).collect();
        let style_targets = style_names
            .iter()
            .map(|n| gram_matrix(&a[*n]).map(|g| g.with_layer(*n)))
            .collect::<Result<Vec<_>>>()?;
        let style_layer_weights = if cfg.style_layer_weights.is_empty() {
            vec![1.0; style_idx.len()]
        } else {
            cfg.style_layer_weights.clone()
        };
        Ok(StyleObjective {
            net,
            content_idx,
            style_idx,
            content_targets,
            style_targets,
            style_layer_weights,
            content_weight: cfg.content_weight,
            style_weight: cfg.style_weight,
            deepest,
        })
    }

    fn layer_name(&self, i: usize) -> &str {
        &self.net.spec().layers[i].name
    }

    /// Weighted losses at `x` and the gradient of the total with respect to `x`.
    pub fn evaluate(&self, x: &Tensor<T>) -> Result<(LossBreakdown, Tensor<T>)> {
        let opts = ForwardOptions {
            until: Some(self.deepest),
            ..ForwardOptions::default()
        };
        let trace = self.net.forward(x, opts)?;
        let mut injected: BTreeMap<usize, Tensor<T>> = BTreeMap::new();
        let mut inject = |i: usize, g: Tensor<T>| -> Result<()> {
            match injected.get_mut(&i) {
                Some(acc) => acc.add_assign(&g),
                None => {
                    injected.insert(i, g);
                    Ok(())
                }
            }
        };

        let mut content = 0.0;
        for (k, &i) in self.content_idx.iter().enumerate() {
            let f = trace.output(i).expect("layer ran");
            let (l, mut g) = content_loss(
                std::slice::from_ref(f),
                std::slice::from_ref(&self.content_targets[k]),
            )?;
            let l = l.to_f64().unwrap_or(f64::NAN);
            if !l.is_finite() {
                return Err(Error::NonFinite(format!(
                    "content loss at layer {}",
                    self.layer_name(i)
                )));
            }
            content += self.content_weight * l;
            let mut g = g.pop().expect("one layer");
            g.scale(T::lit(self.content_weight));
            inject(i, g)?;
        }

        let mut style = 0.0;
        for (k, &i) in self.style_idx.iter().enumerate() {
            let f = trace.output(i).expect("layer ran");
            let gram = gram_matrix(f)?;
            let (l, dg) = style_loss(
                std::slice::from_ref(&gram),
                std::slice::from_ref(&self.style_targets[k]),
            )?;
            let l = l.to_f64().unwrap_or(f64::NAN);
            if !l.is_finite() {
                return Err(Error::NonFinite(format!(
                    "style loss at layer {}",
                    self.layer_name(i)
                )));
            }
            let w = self.style_weight * self.style_layer_weights[k];
            style += w * l;
            let mut g = gram_backward(f, &dg[0])?;
            g.scale(T::lit(w));
            inject(i, g)?;
        }

        let grad = self.net.backward(&trace, &injected, false)?.input;
        if !grad.all_finite() {
            return Err(Error::NonFinite("pixel gradient".into()));
        }
        Ok((
            LossBreakdown {
                total: content + style,
                content,
                style,
            },
            grad,
        ))
    }
}

#[derive(Clone, Debug)]
pub struct TransferResult<T> {
    /// Final pixels clamped to the displayable range.
    pub image: Tensor<T>,
    /// Final pixels as optimized.
    pub raw: Tensor<T>,
    /// Loss before the first step and after each iteration.
    pub trace: Vec<LossBreakdown>,
    /// Adam step size in effect at the end.
    pub final_step: f64,
}

/// Clamps each channel to `[−mean, 1 − mean]`.
pub fn clamp_displayable<T: Element>(image: &Tensor<T>, channel_mean: &[f64]) -> Result<Tensor<T>> {
    let (c, h, w) = image.chw()?;
    let mut out = image.clone();
    for ch in 0..c {
        let m = channel_mean.get(ch).copied().unwrap_or(0.0);
        let (lo, hi) = (T::lit(-m), T::lit(1.0 - m));
        for v in &mut out.data_mut()[ch * h * w..(ch + 1) * h * w] {
            *v = v.max(lo).min(hi);
        }
    }
    Ok(out)
}

/// White noise over the displayable range.
pub fn noise_image<T: Element>(
    shape: &[usize],
    channel_mean: &[f64],
    seed: u64,
) -> Result<Tensor<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = Tensor::<T>::zeros(shape);
    let (_, h, w) = t.chw()?;
    Ok(Tensor::from_fn(shape, |i| {
        let m = channel_mean.get(i / (h * w)).copied().unwrap_or(0.0);
        T::lit(rng.random::<f64>() - m)
    }))
}

/// Minimizes `content_weight · L_content + style_weight · L_style` over pixels.
///
/// Each iteration takes one Adam step. A step that would raise the loss is
/// rejected and retried at half the step size, so the loss trace never
/// increases; accepted steps double the size again up to the configured
/// step. When no halving descends, the moment estimates are restarted.
pub fn transfer<T: Element>(
    net: &Network<T>,
    content: &Tensor<T>,
    style: &Tensor<T>,
    cfg: &TransferConfig,
) -> Result<TransferResult<T>> {
    let objective = StyleObjective::new(net, content, style, cfg)?;
    let mut x = match cfg.init {
        InitMode::ContentCopy => content.clone(),
        InitMode::Noise => noise_image(content.shape(), &cfg.channel_mean, cfg.seed)?,
    };
    let (mut loss, mut grad) = objective.evaluate(&x)?;
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    trace.push(loss);
    let mut adam = Adam::new(cfg.adam, x.len())?;
    adam.observe(grad.data());
    let mut step = cfg.adam.step;
    let mut candidate = x.clone();

    for it in 0..cfg.iterations {
        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            adam.propose(x.data(), step, candidate.data_mut());
            let (l, g) = objective.evaluate(&candidate)?;
            if l.total <= loss.total {
                std::mem::swap(&mut x, &mut candidate);
                loss = l;
                grad = g;
                accepted = true;
                step = (step * 2.0).min(cfg.adam.step);
                break;
            }
            step *= 0.5;
            log::debug!(
                "iteration {it}: loss rose to {}, step halved to {step}",
                l.total
            );
        }
        if !accepted {
            log::debug!(
                "iteration {it}: no descent within {} halvings, moments reset",
                cfg.max_halvings
            );
            adam = Adam::new(cfg.adam, x.len())?;
            step = cfg.adam.step;
        }
        adam.observe(grad.data());
        trace.push(loss);
    }
    Ok(TransferResult {
        image: clamp_displayable(&x, &cfg.channel_mean)?,
        raw: x,
        trace,
        final_step: step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_hand_case() {
        let f = Tensor::<f64>::new(vec![1, 1, 1], vec![1.0]).unwrap();
        let p = Tensor::<f64>::zeros(&[1, 1, 1]);
        let (l, g) = content_loss(std::slice::from_ref(&f), &[p]).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g[0].data(), &[2.0]);
        let (l, g) = content_loss(std::slice::from_ref(&f), std::slice::from_ref(&f)).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g[0].data(), &[0.0]);
    }

    #[test]
    fn style_hand_case() {
        let f = Tensor::<f64>::new(vec![1, 1, 1], vec![2.0]).unwrap();
        let g = gram_matrix(&f).unwrap();
        let a = GramMatrix::from_flattened("", &[], &[0.0], 1).unwrap();
        let (l, grad) = style_loss(std::slice::from_ref(&g), &[a]).unwrap();
        assert_eq!(l, 16.0);
        assert_eq!(grad[0], vec![8.0]);
        assert_eq!(style_loss(std::slice::from_ref(&g), std::slice::from_ref(&g)).unwrap().0, 0.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let f = Tensor::<f32>::zeros(&[1, 2, 2]);
        let p = Tensor::<f32>::zeros(&[1, 2, 3]);
        assert!(content_loss(&[f], &[p]).is_err());
    }

    #[test]
    fn clamp_uses_channel_mean() {
        let t = Tensor::<f32>::new(vec![2, 1, 1], vec![-1.0, 1.0]).unwrap();
        let c = clamp_displayable(&t, &[0.5, 0.25]).unwrap();
        assert_eq!(c.data(), &[-0.5, 0.75]);
    }

    #[test]
    fn invalid_configs() {
        let cfg = TransferConfig {
            style_weight: -1.0,
            ..TransferConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TransferConfig {
            content_layers: vec![],
            style_layers: vec![],
            ..TransferConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
