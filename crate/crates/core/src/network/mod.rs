//! Network construction, weight binding, forward passes with named activation
//! taps, backward passes, and classifier training.

pub(crate) mod container;
mod spec;
mod train;

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::{
    conv2d, conv2d_backward, dense, dense_backward, dropout, dropout_backward, fractional_max_pool,
    leaky_relu, leaky_relu_backward, max_pool, pool_backward, softmax, DropoutMask, Element,
    PoolSwitches, Tensor,
};

pub use container::TensorContainer;
pub use spec::{
    baseline_cnn_spec, small_extractor_spec, vgg19_extractor_spec, Activation, LayerKind,
    LayerSpec, NetworkSpec, SpecBuilder, BASELINE_ALPHA, BASELINE_DROPOUT, BASELINE_WIDTHS,
    FMP_RATIO, VGG_STYLE_TAPS,
};
pub use train::{evaluate_accuracy, train_classifier, EpochStats, TrainConfig};

/// Seed used for fractional pooling regions when no training seed is given.
const INFERENCE_SEED: u64 = 0x5EED;

/// A [`NetworkSpec`] with every parameter bound.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T: Element = f32> {
    spec: NetworkSpec,
    params: BTreeMap<String, Tensor<T>>,
}

/// Controls a recorded forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardOptions {
    /// Enables dropout and per-pass fractional pooling regions.
    pub training: bool,
    pub seed: u64,
    /// Index of the last layer to run.
    pub until: Option<usize>,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions {
            training: false,
            seed: INFERENCE_SEED,
            until: None,
        }
    }
}

#[derive(Clone, Debug)]
enum LayerCache<T> {
    Plain,
    Switches(PoolSwitches),
    Dropout(Option<DropoutMask<T>>),
}

/// Everything a forward pass recorded for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    input: Tensor<T>,
    outputs: Vec<Tensor<T>>,
    caches: Vec<LayerCache<T>>,
}

impl<T: Element> ForwardTrace<T> {
    /// Output of layer `index`.
    pub fn output(&self, index: usize) -> Option<&Tensor<T>> {
        self.outputs.get(index)
    }

    pub fn last(&self) -> &Tensor<T> {
        self.outputs.last().unwrap_or(&self.input)
    }

    pub fn layers_run(&self) -> usize {
        self.outputs.len()
    }

    fn input_of(&self, index: usize) -> &Tensor<T> {
        if index == 0 {
            &self.input
        } else {
            &self.outputs[index - 1]
        }
    }
}

/// Gradients from [`Network::backward`].
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub input: Tensor<T>,
    /// Keyed like [`Network::params`]; empty unless parameters were requested.
    pub params: BTreeMap<String, Tensor<T>>,
}

fn pool_seed(base: u64, layer: usize) -> u64 {
    seed::derive(base, &[layer as u64])
}

impl<T: Element> Network<T> {
    /// Binds parameters to a spec. Missing, surplus and misshapen tensors are errors.
    pub fn new(spec: NetworkSpec, params: BTreeMap<String, Tensor<T>>) -> Result<Self> {
        spec.validate()?;
        let expected = spec.parameter_shapes();
        let missing: Vec<&str> = expected
            .iter()
            .filter(|(n, _)| !params.contains_key(n))
            .map(|(n, _)| n.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Data(format!(
                "unbound parameters: {}",
                missing.join(", ")
            )));
        }
        let surplus: Vec<&str> = params
            .keys()
            .filter(|k| !expected.iter().any(|(n, _)| n == *k))
            .map(String::as_str)
            .collect();
        if !surplus.is_empty() {
            return Err(Error::Data(format!(
                "surplus tensors: {}",
                surplus.join(", ")
            )));
        }
        for (name, shape) in &expected {
            let got = params[name].shape();
            if got != shape.as_slice() {
                return Err(Error::shape(
                    "load_weights",
                    format!("`{name}` has shape {got:?}, expected {shape:?}"),
                ));
            }
        }
        Ok(Network { spec, params })
    }

    /// He-normal weights and zero biases drawn from `seed`.
    pub fn random(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        for (name, shape) in spec.parameter_shapes() {
            let t = if name.ends_with(".bias") {
                Tensor::zeros(&shape)
            } else {
                let fan_in: usize = shape[1..].iter().product();
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
                Tensor::from_fn(&shape, |_| T::lit(normal.sample(&mut rng)))
            };
            params.insert(name, t);
        }
        Network::new(spec, params)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor<T>> {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name)
    }

    /// Replaces one parameter tensor, keeping its shape.
    pub fn set_param(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let slot = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("no parameter `{name}`")))?;
        slot.check_same_shape("set_param", &value)?;
        *slot = value;
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> &mut BTreeMap<String, Tensor<T>> {
        &mut self.params
    }

    pub fn cast<U: Element>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    fn weight(&self, layer: &str) -> (&Tensor<T>, &Tensor<T>) {
        (
            &self.params[&format!("{layer}.weight")],
            &self.params[&format!("{layer}.bias")],
        )
    }

    fn check_input(&self, image: &Tensor<T>) -> Result<()> {
        let (c, _, _) = image.chw()?;
        if c != self.spec.input[0] {
            return Err(Error::shape(
                "forward",
                format!(
                    "network takes {} channels, image has {c}",
                    self.spec.input[0]
                ),
            ));
        }
        Ok(())
    }

    fn run_layer(
        &self,
        index: usize,
        x: &Tensor<T>,
        opts: &ForwardOptions,
        record: bool,
    ) -> Result<(Tensor<T>, LayerCache<T>)> {
        let layer = &self.spec.layers[index];
        Ok(match layer.kind {
            LayerKind::Conv { stride, pad, .. } => {
                let (w, b) = self.weight(&layer.name);
                (conv2d(x, w, b, stride, pad)?, LayerCache::Plain)
            }
            LayerKind::LeakyRelu { alpha } => (leaky_relu(x, T::lit(alpha))?, LayerCache::Plain),
            LayerKind::MaxPool { kernel, stride } => {
                let (y, sw) = max_pool(x, kernel, stride)?;
                (
                    y,
                    if record {
                        LayerCache::Switches(sw)
                    } else {
                        LayerCache::Plain
                    },
                )
            }
            LayerKind::FractionalMaxPool { ratio } => {
                let p = fractional_max_pool(x, ratio, pool_seed(opts.seed, index))?;
                (
                    p.value,
                    if record {
                        LayerCache::Switches(p.switches)
                    } else {
                        LayerCache::Plain
                    },
                )
            }
            LayerKind::Dense { .. } => {
                let (w, b) = self.weight(&layer.name);
                (dense(x, w, b)?, LayerCache::Plain)
            }
            LayerKind::Dropout { rate } => {
                let (y, mask) = dropout(x, rate, pool_seed(opts.seed, index), opts.training)?;
                (y, LayerCache::Dropout(mask))
            }
            LayerKind::Flatten => (x.clone().reshape(vec![x.len()])?, LayerCache::Plain),
            LayerKind::SoftmaxHead { .. } => {
                (Tensor::vector(softmax(x.data()))?, LayerCache::Plain)
            }
        })
    }

    /// Activations at the requested taps from one deterministic forward pass.
    ///
    /// Execution stops after the deepest requested tap. An empty tap list
    /// still validates the image.
    pub fn forward_taps(
        &self,
        image: &Tensor<T>,
        taps: &[&str],
    ) -> Result<BTreeMap<String, Tensor<T>>> {
        self.check_input(image)?;
        let mut wanted = BTreeMap::new();
        for t in taps {
            let i = self.spec.layer_index(t)?;
            wanted.insert(i, self.spec.layers[i].name.clone());
        }
        let Some(&last) = wanted.keys().next_back() else {
            return Ok(BTreeMap::new());
        };
        let opts = ForwardOptions::default();
        let mut out = BTreeMap::new();
        let mut x = image.clone();
        for i in 0..=last {
            x = self.run_layer(i, &x, &opts, false)?.0;
            if let Some(name) = wanted.get(&i) {
                out.insert(name.clone(), x.clone());
            }
        }
        Ok(out)
    }

    /// Class probabilities of a classifier network in inference mode.
    pub fn predict(&self, image: &Tensor<T>) -> Result<Vec<T>> {
        if !self.spec.is_classifier() {
            return Err(Error::invalid("network has no softmax head"));
        }
        let trace = self.forward(image, ForwardOptions::default())?;
        Ok(trace.last().data().to_vec())
    }

    /// Forward pass recording what [`Network::backward`] needs.
    pub fn forward(&self, image: &Tensor<T>, opts: ForwardOptions) -> Result<ForwardTrace<T>> {
        self.check_input(image)?;
        let last = opts.until.unwrap_or(self.spec.layers.len() - 1);
        if last >= self.spec.layers.len() {
            return Err(Error::invalid(format!("layer index {last} out of range")));
        }
        let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(last + 1);
        let mut caches = Vec::with_capacity(last + 1);
        for i in 0..=last {
            let x = outputs.last().unwrap_or(image);
            let (y, cache) = self.run_layer(i, x, &opts, true)?;
            outputs.push(y);
            caches.push(cache);
        }
        Ok(ForwardTrace {
            input: image.clone(),
            outputs,
            caches,
        })
    }

    /// Back-propagates gradients injected at layer outputs down to the input.
    ///
    /// `injected` maps layer index to the gradient of the objective with
    /// respect to that layer's output. Gradients cannot flow through a softmax
    /// head; inject at the layer feeding it instead.
    pub fn backward(
        &self,
        trace: &ForwardTrace<T>,
        injected: &BTreeMap<usize, Tensor<T>>,
        want_params: bool,
    ) -> Result<Gradients<T>> {
        if let Some((&i, _)) = injected.iter().find(|(&i, _)| i >= trace.layers_run()) {
            return Err(Error::invalid(format!(
                "gradient injected at layer {i}, which did not run"
            )));
        }
        let mut params = BTreeMap::new();
        let mut grad: Option<Tensor<T>> = None;
        for i in (0..trace.layers_run()).rev() {
            if let Some(g) = injected.get(&i) {
                match grad.as_mut() {
                    Some(acc) => acc.add_assign(g)?,
                    None => {
                        trace.outputs[i].check_same_shape("backward", g)?;
                        grad = Some(g.clone())
                    }
                }
            }
            let Some(g) = grad.take() else { continue };
            let layer = &self.spec.layers[i];
            let x = trace.input_of(i);
            let gin = match (&layer.kind, &trace.caches[i]) {
                (&LayerKind::Conv { stride, pad, .. }, _) => {
                    let (w, _) = self.weight(&layer.name);
                    let gr = conv2d_backward(x, w, stride, pad, &g, want_params)?;
                    if want_params {
                        params.insert(format!("{}.weight", layer.name), gr.kernels);
                        params.insert(format!("{}.bias", layer.name), gr.bias);
                    }
                    gr.input
                }
                (&LayerKind::Dense { .. }, _) => {
                    let (w, _) = self.weight(&layer.name);
                    let gr = dense_backward(x, w, &g, want_params)?;
                    if want_params {
                        params.insert(format!("{}.weight", layer.name), gr.weights);
                        params.insert(format!("{}.bias", layer.name), gr.bias);
                    }
                    gr.input
                }
                (&LayerKind::LeakyRelu { alpha }, _) => leaky_relu_backward(x, T::lit(alpha), &g)?,
                (
                    LayerKind::MaxPool { .. } | LayerKind::FractionalMaxPool { .. },
                    LayerCache::Switches(sw),
                ) => pool_backward(sw, &g)?,
                (LayerKind::Dropout { .. }, LayerCache::Dropout(mask)) => {
                    dropout_backward(mask.as_ref(), &g)?
                }
                (LayerKind::Flatten, _) => g.reshape(x.shape().to_vec())?,
                (LayerKind::SoftmaxHead { .. }, _) => {
                    return Err(Error::invalid(
                        "cannot back-propagate through the softmax head; inject at the logits",
                    ))
                }
                (kind, _) => {
                    return Err(Error::invalid(format!(
                        "missing forward record for {kind:?}"
                    )))
                }
            };
            grad = Some(gin);
        }
        if want_params {
            for (name, shape) in self.spec.parameter_shapes() {
                params.entry(name).or_insert_with(|| Tensor::zeros(&shape));
            }
        }
        Ok(Gradients {
            input: grad.unwrap_or_else(|| Tensor::zeros(trace.input.shape())),
            params,
        })
    }
}

impl Network<f32> {
    /// All parameters as an NSW1 container, in spec order.
    pub fn to_container(&self) -> TensorContainer {
        TensorContainer {
            tensors: self
                .spec
                .parameter_shapes()
                .into_iter()
                .map(|(n, _)| {
                    let t = self.params[&n].clone();
                    (n, t)
                })
                .collect(),
        }
    }

    pub fn save_weights(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn from_container(spec: NetworkSpec, container: TensorContainer) -> Result<Self> {
        let mut params = BTreeMap::new();
        for (name, t) in container.tensors {
            if params.insert(name.clone(), t).is_some() {
                return Err(Error::format(
                    "NSW1",
                    format!("tensor `{name}` appears twice"),
                ));
            }
        }
        Network::new(spec, params)
    }
}

/// Reads an NSW1 container and binds it to `spec`.
pub fn load_weights(spec: NetworkSpec, path: impl AsRef<Path>) -> Result<Network<f32>> {
    Network::from_container(spec, TensorContainer::read(path)?)
}
