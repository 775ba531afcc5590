use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::conv_output_extent;

/// Leaky-ReLU slope of the baseline classifier.
pub const BASELINE_ALPHA: f64 = 0.333;
/// Dropout applied before the baseline classifier's fully-connected layer.
pub const BASELINE_DROPOUT: f64 = 0.10;
/// Convolution widths of the baseline classifier, input channels first.
pub const BASELINE_WIDTHS: [usize; 7] = [3, 32, 96, 128, 160, 192, 224];
/// Default fractional pooling ratio.
pub const FMP_RATIO: f64 = std::f64::consts::SQRT_2;

/// The five style taps of the VGG-19 extractor.
pub const VGG_STYLE_TAPS: [&str; 5] = ["ReLU1_1", "ReLU2_1", "ReLU3_1", "ReLU4_1", "ReLU5_1"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    LeakyRelu {
        alpha: f64,
    },
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    FractionalMaxPool {
        ratio: f64,
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Dropout {
        rate: f64,
    },
    Flatten,
    SoftmaxHead {
        classes: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
}

/// Ordered layer list plus the nominal CHW input shape.
///
/// A spec ending in [`LayerKind::SoftmaxHead`] is a classifier; anything else
/// is a feature extractor whose convolutional trunk accepts any spatial size
/// at least [`NetworkSpec::min_input_extent`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

/// Shape of the activation flowing between layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Map {
        channels: usize,
        height: usize,
        width: usize,
    },
    Flat(usize),
}

impl Activation {
    pub fn dims(self) -> Vec<usize> {
        match self {
            Activation::Map {
                channels,
                height,
                width,
            } => vec![channels, height, width],
            Activation::Flat(n) => vec![n],
        }
    }
}

pub(crate) fn fmp_extent(extent: usize, ratio: f64) -> Option<usize> {
    let out = (extent as f64 / ratio).floor() as usize;
    (out >= 1 && extent <= 2 * out).then_some(out)
}

impl NetworkSpec {
    pub fn classes(&self) -> Option<usize> {
        match self.layers.last()?.kind {
            LayerKind::SoftmaxHead { classes } => Some(classes),
            _ => None,
        }
    }

    pub fn is_classifier(&self) -> bool {
        self.classes().is_some()
    }

    /// Resolves a layer name. Exact matches win; otherwise the match is
    /// case-insensitive, so `relu3_1` finds `ReLU3_1`.
    pub fn layer_index(&self, name: &str) -> Result<usize> {
        if let Some(i) = self.layers.iter().position(|l| l.name == name) {
            return Ok(i);
        }
        self.layers
            .iter()
            .position(|l| l.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::UnknownTap(name.to_string()))
    }

    /// Canonical spelling of a layer name.
    pub fn canonical_name(&self, name: &str) -> Result<&str> {
        Ok(&self.layers[self.layer_index(name)?].name)
    }

    /// Activation shape after every layer for a given input.
    pub fn shapes_for(&self, input: [usize; 3]) -> Result<Vec<Activation>> {
        let [c, h, w] = input;
        let mut cur = Activation::Map {
            channels: c,
            height: h,
            width: w,
        };
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let fail = |detail: String| {
                Error::shape("network", format!("layer `{}`: {detail}", layer.name))
            };
            cur = match (&layer.kind, cur) {
                (
                    &LayerKind::Conv {
                        in_channels,
                        out_channels,
                        kernel,
                        stride,
                        pad,
                    },
                    Activation::Map {
                        channels,
                        height,
                        width,
                    },
                ) => {
                    if channels != in_channels {
                        return Err(fail(format!(
                            "expects {in_channels} channels, receives {channels}"
                        )));
                    }
                    match (
                        conv_output_extent(height, kernel, stride, pad),
                        conv_output_extent(width, kernel, stride, pad),
                    ) {
                        (Some(height), Some(width)) if out_channels > 0 => Activation::Map {
                            channels: out_channels,
                            height,
                            width,
                        },
                        _ => {
                            return Err(fail(format!(
                                "input {height}x{width} too small for kernel {kernel}"
                            )))
                        }
                    }
                }
                (
                    &LayerKind::MaxPool { kernel, stride },
                    Activation::Map {
                        channels,
                        height,
                        width,
                    },
                ) => {
                    match (
                        conv_output_extent(height, kernel, stride, 0),
                        conv_output_extent(width, kernel, stride, 0),
                    ) {
                        (Some(height), Some(width)) => Activation::Map {
                            channels,
                            height,
                            width,
                        },
                        _ => {
                            return Err(fail(format!(
                                "input {height}x{width} too small for window {kernel}"
                            )))
                        }
                    }
                }
                (
                    &LayerKind::FractionalMaxPool { ratio },
                    Activation::Map {
                        channels,
                        height,
                        width,
                    },
                ) => {
                    if !(ratio > 1.0 && ratio <= 2.0) {
                        return Err(fail(format!("ratio {ratio} outside (1, 2]")));
                    }
                    match (fmp_extent(height, ratio), fmp_extent(width, ratio)) {
                        (Some(height), Some(width)) => Activation::Map {
                            channels,
                            height,
                            width,
                        },
                        _ => {
                            return Err(fail(format!(
                                "input {height}x{width} too small to pool by {ratio}"
                            )))
                        }
                    }
                }
                (&LayerKind::LeakyRelu { alpha }, a) => {
                    if !(0.0..1.0).contains(&alpha) {
                        return Err(fail(format!("slope {alpha} outside [0, 1)")));
                    }
                    a
                }
                (&LayerKind::Dropout { rate }, a) => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(fail(format!("rate {rate} outside [0, 1)")));
                    }
                    a
                }
                (LayerKind::Flatten, a) => Activation::Flat(a.dims().iter().product()),
                (&LayerKind::Dense { inputs, outputs }, Activation::Flat(n)) => {
                    if n != inputs {
                        return Err(fail(format!("expects {inputs} inputs, receives {n}")));
                    }
                    Activation::Flat(outputs)
                }
                (&LayerKind::SoftmaxHead { classes }, Activation::Flat(n)) => {
                    if i + 1 != self.layers.len() {
                        return Err(fail("softmax head must be the last layer".into()));
                    }
                    if classes < 2 || n != classes {
                        return Err(fail(format!("head of {classes} classes fed {n} logits")));
                    }
                    Activation::Flat(n)
                }
                (kind, a) => return Err(fail(format!("{kind:?} cannot consume {a:?}"))),
            };
            shapes.push(cur);
        }
        Ok(shapes)
    }

    /// Checks name uniqueness and channel chaining at the nominal input shape.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        let mut seen = HashSet::new();
        for l in &self.layers {
            if l.name.is_empty() || !seen.insert(l.name.to_ascii_lowercase()) {
                return Err(Error::invalid(format!(
                    "layer name `{}` is empty or repeated",
                    l.name
                )));
            }
        }
        self.shapes_for(self.input).map(|_| ())
    }

    /// Smallest square spatial extent the layers before the first flatten accept.
    pub fn min_input_extent(&self) -> usize {
        let trunk = NetworkSpec {
            input: self.input,
            layers: self
                .layers
                .iter()
                .take_while(|l| !matches!(l.kind, LayerKind::Flatten | LayerKind::Dense { .. }))
                .cloned()
                .collect(),
        };
        (1..=1 << 16)
            .find(|&s| trunk.shapes_for([self.input[0], s, s]).is_ok())
            .unwrap_or(usize::MAX)
    }

    /// `(name, shape)` of every parameter tensor in layer order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l.kind {
                LayerKind::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => {
                    out.push((
                        format!("{}.weight", l.name),
                        vec![out_channels, in_channels, kernel, kernel],
                    ));
                    out.push((format!("{}.bias", l.name), vec![out_channels]));
                }
                LayerKind::Dense { inputs, outputs } => {
                    out.push((format!("{}.weight", l.name), vec![outputs, inputs]));
                    out.push((format!("{}.bias", l.name), vec![outputs]));
                }
                _ => {}
            }
        }
        out
    }
}

/// Incremental construction of a [`NetworkSpec`] that tracks channel counts.
#[derive(Clone, Debug)]
pub struct SpecBuilder {
    input: [usize; 3],
    layers: Vec<LayerSpec>,
    channels: usize,
}

impl SpecBuilder {
    pub fn new(input: [usize; 3]) -> Self {
        SpecBuilder {
            input,
            layers: Vec::new(),
            channels: input[0],
        }
    }

    fn push(mut self, name: impl Into<String>, kind: LayerKind) -> Self {
        self.layers.push(LayerSpec {
            name: name.into(),
            kind,
        });
        self
    }

    /// Square convolution; `pad = kernel / 2` keeps the spatial size at stride 1.
    pub fn conv(mut self, name: impl Into<String>, out_channels: usize, kernel: usize) -> Self {
        let in_channels = self.channels;
        self.channels = out_channels;
        self.push(
            name,
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel,
                stride: 1,
                pad: kernel / 2,
            },
        )
    }

    pub fn relu(self, name: impl Into<String>) -> Self {
        self.leaky_relu(name, 0.0)
    }

    pub fn leaky_relu(self, name: impl Into<String>, alpha: f64) -> Self {
        self.push(name, LayerKind::LeakyRelu { alpha })
    }

    pub fn max_pool(self, name: impl Into<String>, kernel: usize, stride: usize) -> Self {
        self.push(name, LayerKind::MaxPool { kernel, stride })
    }

    pub fn fractional_max_pool(self, name: impl Into<String>, ratio: f64) -> Self {
        self.push(name, LayerKind::FractionalMaxPool { ratio })
    }

    pub fn flatten(self, name: impl Into<String>) -> Self {
        self.push(name, LayerKind::Flatten)
    }

    pub fn dropout(self, name: impl Into<String>, rate: f64) -> Self {
        self.push(name, LayerKind::Dropout { rate })
    }

    pub fn dense(self, name: impl Into<String>, inputs: usize, outputs: usize) -> Self {
        self.push(name, LayerKind::Dense { inputs, outputs })
    }

    pub fn softmax_head(self, name: impl Into<String>, classes: usize) -> Self {
        self.push(name, LayerKind::SoftmaxHead { classes })
    }

    /// Flatten then a dense layer sized from the current activation, then the head.
    pub fn classifier_head(self, classes: usize, dropout: Option<f64>) -> Result<NetworkSpec> {
        let trunk = NetworkSpec {
            input: self.input,
            layers: self.layers.clone(),
        };
        let flat: usize = trunk
            .shapes_for(self.input)?
            .last()
            .map(|a| a.dims().iter().product())
            .unwrap_or(self.input.iter().product());
        let mut b = self.flatten("flatten");
        if let Some(rate) = dropout {
            b = b.dropout("dropout", rate);
        }
        b.dense("fc", flat, classes)
            .softmax_head("softmax", classes)
            .build()
    }

    pub fn build(self) -> Result<NetworkSpec> {
        let spec = NetworkSpec {
            input: self.input,
            layers: self.layers,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// The 16-convolution VGG-19 feature trunk with plain ReLUs and a 2×2 max
/// pool between blocks. Every ReLU is a tap named `ReLU<block>_<index>`.
pub fn vgg19_extractor_spec() -> NetworkSpec {
    const BLOCKS: [(usize, usize); 5] = [(64, 2), (128, 2), (256, 4), (512, 4), (512, 4)];
    let mut b = SpecBuilder::new([3, 224, 224]);
    for (bi, &(width, convs)) in BLOCKS.iter().enumerate() {
        let block = bi + 1;
        if block > 1 {
            b = b.max_pool(format!("pool{}", block - 1), 2, 2);
        }
        for ci in 1..=convs {
            b = b
                .conv(format!("conv{block}_{ci}"), width, 3)
                .relu(format!("ReLU{block}_{ci}"));
        }
    }
    b.build().expect("VGG-19 trunk is well formed")
}

/// A three-convolution extractor in the VGG layout with widths 8, 16 and 32
/// and taps `ReLU1_1`, `ReLU2_1`, `ReLU3_1`, for small-scale experiments.
pub fn small_extractor_spec() -> NetworkSpec {
    SpecBuilder::new([3, 32, 32])
        .conv("conv1_1", 8, 3)
        .relu("ReLU1_1")
        .max_pool("pool1", 2, 2)
        .conv("conv2_1", 16, 3)
        .relu("ReLU2_1")
        .max_pool("pool2", 2, 2)
        .conv("conv3_1", 32, 3)
        .relu("ReLU3_1")
        .build()
        .expect("small extractor is well formed")
}

/// The baseline style classifier: 3×3 convolutions widening
/// 3→32→96→128→160→192→224, each followed by a leaky ReLU and a fractional
/// max pool, then flatten, 10% dropout, a fully-connected layer and a
/// `classes`-way softmax.
pub fn baseline_cnn_spec(classes: usize, input: [usize; 3]) -> Result<NetworkSpec> {
    if classes < 2 {
        return Err(Error::invalid(format!(
            "classifier needs at least 2 classes, got {classes}"
        )));
    }
    if input[0] != BASELINE_WIDTHS[0] {
        return Err(Error::invalid(format!(
            "baseline expects 3 input channels, got {}",
            input[0]
        )));
    }
    let mut b = SpecBuilder::new(input);
    for (i, &width) in BASELINE_WIDTHS.iter().enumerate().skip(1) {
        b = b
            .conv(format!("conv{i}"), width, 3)
            .leaky_relu(format!("lrelu{i}"), BASELINE_ALPHA)
            .fractional_max_pool(format!("fmp{i}"), FMP_RATIO);
    }
    let trunk = NetworkSpec {
        input,
        layers: b.layers.clone(),
    };
    let min = trunk.min_input_extent();
    if input[1] < min || input[2] < min {
        return Err(Error::invalid(format!(
            "input {}x{} too small for six fractional pooling stages; minimum extent is {min}",
            input[1], input[2]
        )));
    }
    b.classifier_head(classes, Some(BASELINE_DROPOUT))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taps_and_shapes(spec: &NetworkSpec, input: [usize; 3]) -> Vec<(String, Vec<usize>)> {
        let shapes = spec.shapes_for(input).unwrap();
        VGG_STYLE_TAPS
            .iter()
            .map(|t| {
                let i = spec.layer_index(t).unwrap();
                (t.to_string(), shapes[i].dims())
            })
            .collect()
    }

    #[test]
    fn vgg_tap_channels_and_extents() {
        let spec = vgg19_extractor_spec();
        spec.validate().unwrap();
        let got = taps_and_shapes(&spec, [3, 224, 224]);
        let expect = [(64, 224), (128, 112), (256, 56), (512, 28), (512, 14)];
        for ((_, dims), (c, s)) in got.iter().zip(expect) {
            assert_eq!(dims, &vec![c, s, s]);
        }
        assert_eq!(spec.parameter_shapes().len(), 32);
        assert!(!spec.is_classifier());
    }

    #[test]
    fn tap_lookup_is_case_insensitive() {
        let spec = vgg19_extractor_spec();
        assert_eq!(spec.canonical_name("relu3_1").unwrap(), "ReLU3_1");
        assert_eq!(spec.canonical_name("ReLu4_1").unwrap(), "ReLU4_1");
        assert!(matches!(
            spec.layer_index("relu9_9"),
            Err(Error::UnknownTap(_))
        ));
    }

    #[test]
    fn baseline_records_hyperparameters() {
        let spec = baseline_cnn_spec(70, [3, 64, 64]).unwrap();
        assert_eq!(spec.classes(), Some(70));
        let mut convs = 0;
        let mut pools = 0;
        for l in &spec.layers {
            match l.kind {
                LayerKind::LeakyRelu { alpha } => assert_eq!(alpha, 0.333),
                LayerKind::Dropout { rate } => assert_eq!(rate, 0.10),
                LayerKind::Conv { kernel, .. } => {
                    assert_eq!(kernel, 3);
                    convs += 1
                }
                LayerKind::FractionalMaxPool { .. } => pools += 1,
                _ => {}
            }
        }
        assert_eq!((convs, pools), (6, 6));
        let widths: Vec<usize> = spec
            .layers
            .iter()
            .filter_map(|l| match l.kind {
                LayerKind::Conv { out_channels, .. } => Some(out_channels),
                _ => None,
            })
            .collect();
        assert_eq!(widths, &BASELINE_WIDTHS[1..]);
    }

    #[test]
    fn baseline_too_small_names_minimum() {
        let err = baseline_cnn_spec(70, [3, 8, 8]).unwrap_err().to_string();
        assert!(err.contains("minimum extent is 17"), "{err}");
        assert!(baseline_cnn_spec(70, [3, 17, 17]).is_ok());
        assert!(baseline_cnn_spec(1, [3, 64, 64]).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let r = SpecBuilder::new([1, 4, 4])
            .conv("a", 2, 3)
            .relu("A")
            .build();
        assert!(r.is_err());
    }

    #[test]
    fn channel_chaining_checked() {
        let spec = NetworkSpec {
            input: [3, 8, 8],
            layers: vec![LayerSpec {
                name: "c".into(),
                kind: LayerKind::Conv {
                    in_channels: 4,
                    out_channels: 2,
                    kernel: 3,
                    stride: 1,
                    pad: 1,
                },
            }],
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = baseline_cnn_spec(5, [3, 32, 32]).unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        let back: NetworkSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
