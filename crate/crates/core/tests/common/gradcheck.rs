//! Analytic-versus-central-difference checks in f64. Each returns the
//! norm-wise relative error for one randomized instance.
#![allow(dead_code)]

use std::collections::BTreeMap;

use gramstyle::gram::{gram_backward, gram_matrix};
use gramstyle::network::{ForwardOptions, Network, SpecBuilder};
use gramstyle::styletransfer::{content_loss, style_loss, StyleObjective, TransferConfig};
use gramstyle::tensor::{
    conv2d, conv2d_backward, dense, dense_backward, fractional_max_pool_with_regions, leaky_relu,
    leaky_relu_backward, max_pool, pool_backward, softmax_cross_entropy, PoolRegions,
};
use gramstyle::Tensor;
use rand::Rng;

use super::{numeric_grad, rel_err, rng, uniform};

const H: f64 = 1e-6;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

/// `Σ r ⊙ out`, the scalar used to probe a vector-valued op.
fn probe(out: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

pub fn conv2d_errors(seed: u64) -> [f64; 3] {
    let mut g = rng(seed);
    let (c, o) = (g.random_range(1..=3), g.random_range(1..=3));
    let k = g.random_range(1..=3);
    let (stride, pad) = (g.random_range(1..=2), g.random_range(0..=1));
    let (h, w) = (g.random_range(k..=7), g.random_range(k..=7));
    let x = uniform(&mut g, &[c, h, w], -1.0, 1.0);
    let kern = uniform(&mut g, &[o, c, k, k], -1.0, 1.0);
    let b = uniform(&mut g, &[o], -1.0, 1.0);
    let out = conv2d(&x, &kern, &b, stride, pad).unwrap();
    let r = uniform(&mut g, out.shape(), -1.0, 1.0);
    let grads = conv2d_backward(&x, &kern, stride, pad, &r, true).unwrap();
    let f = |x: &Tensor<f64>, kern: &Tensor<f64>, b: &Tensor<f64>| {
        probe(&conv2d(x, kern, b, stride, pad).unwrap(), &r)
    };
    let nx = numeric_grad(x.data(), H, |v| f(&t(x.shape(), v), &kern, &b));
    let nk = numeric_grad(kern.data(), H, |v| f(&x, &t(kern.shape(), v), &b));
    let nb = numeric_grad(b.data(), H, |v| f(&x, &kern, &t(b.shape(), v)));
    [
        rel_err(grads.input.data(), &nx),
        rel_err(grads.kernels.data(), &nk),
        rel_err(grads.bias.data(), &nb),
    ]
}

pub fn dense_errors(seed: u64) -> [f64; 3] {
    let mut g = rng(seed);
    let (m, n) = (g.random_range(1..=12), g.random_range(1..=20));
    let x = uniform(&mut g, &[n], -1.0, 1.0);
    let w = uniform(&mut g, &[m, n], -1.0, 1.0);
    let b = uniform(&mut g, &[m], -1.0, 1.0);
    let r = uniform(&mut g, &[m], -1.0, 1.0);
    let grads = dense_backward(&x, &w, &r, true).unwrap();
    let f = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| probe(&dense(x, w, b).unwrap(), &r);
    let nx = numeric_grad(x.data(), H, |v| f(&t(&[n], v), &w, &b));
    let nw = numeric_grad(w.data(), H, |v| f(&x, &t(&[m, n], v), &b));
    let nb = numeric_grad(b.data(), H, |v| f(&x, &w, &t(&[m], v)));
    [
        rel_err(grads.input.data(), &nx),
        rel_err(grads.weights.data(), &nw),
        rel_err(grads.bias.data(), &nb),
    ]
}

pub fn leaky_relu_error(seed: u64) -> f64 {
    let mut g = rng(seed);
    let alpha = g.random_range(0.0..0.5);
    let x = uniform(&mut g, &[2, 5, 5], -1.0, 1.0);
    let r = uniform(&mut g, &[2, 5, 5], -1.0, 1.0);
    let analytic = leaky_relu_backward(&x, alpha, &r).unwrap();
    let num = numeric_grad(x.data(), H, |v| probe(&leaky_relu(&t(x.shape(), v), alpha).unwrap(), &r));
    rel_err(analytic.data(), &num)
}

pub fn max_pool_error(seed: u64) -> f64 {
    let mut g = rng(seed);
    let (k, stride) = (g.random_range(1..=3), g.random_range(1..=2));
    let shape = [g.random_range(1..=3), g.random_range(k..=8), g.random_range(k..=8)];
    let x = uniform(&mut g, &shape, -1.0, 1.0);
    let (out, sw) = max_pool(&x, k, stride).unwrap();
    let r = uniform(&mut g, out.shape(), -1.0, 1.0);
    let analytic = pool_backward(&sw, &r).unwrap();
    let num = numeric_grad(x.data(), H, |v| probe(&max_pool(&t(&shape, v), k, stride).unwrap().0, &r));
    rel_err(analytic.data(), &num)
}

pub fn fractional_pool_error(seed: u64) -> f64 {
    let mut g = rng(seed);
    let shape = [g.random_range(1..=3), g.random_range(4..=12), g.random_range(4..=12)];
    let ratio = g.random_range(1.2..1.5);
    let regions = PoolRegions::generate(shape[1], shape[2], ratio, seed).unwrap();
    let x = uniform(&mut g, &shape, -1.0, 1.0);
    let p = fractional_max_pool_with_regions(&x, regions.clone()).unwrap();
    let r = uniform(&mut g, p.value.shape(), -1.0, 1.0);
    let analytic = pool_backward(&p.switches, &r).unwrap();
    let num = numeric_grad(x.data(), H, |v| {
        probe(&fractional_max_pool_with_regions(&t(&shape, v), regions.clone()).unwrap().value, &r)
    });
    rel_err(analytic.data(), &num)
}

pub fn softmax_ce_error(seed: u64) -> f64 {
    let mut g = rng(seed);
    let n = g.random_range(2..=10);
    let logits: Vec<f64> = (0..n).map(|_| g.random_range(-3.0..3.0)).collect();
    let label = g.random_range(0..n);
    let analytic = softmax_cross_entropy(&logits, label).unwrap().grad;
    let num = numeric_grad(&logits, H, |v| softmax_cross_entropy(v, label).unwrap().loss);
    rel_err(&analytic, &num)
}

pub fn gram_error(seed: u64) -> f64 {
    let mut g = rng(seed);
    let shape = [g.random_range(1..=6), g.random_range(1..=6), g.random_range(1..=6)];
    let f = uniform(&mut g, &shape, -1.0, 1.0);
    let r: Vec<f64> = (0..shape[0] * shape[0]).map(|_| g.random_range(-1.0..1.0)).collect();
    let analytic = gram_backward(&f, &r).unwrap();
    let num = numeric_grad(f.data(), H, |v| {
        let gm = gram_matrix(&t(&shape, v)).unwrap();
        gm.values().iter().zip(&r).map(|(a, b)| a * b).sum()
    });
    rel_err(analytic.data(), &num)
}

pub fn content_loss_error(seed: u64) -> f64 {
    let mut g = rng(seed);
    let shape = [g.random_range(1..=4), g.random_range(1..=6), g.random_range(1..=6)];
    let x = uniform(&mut g, &shape, -1.0, 1.0);
    let p = uniform(&mut g, &shape, -1.0, 1.0);
    let (_, grads) = content_loss(std::slice::from_ref(&x), std::slice::from_ref(&p)).unwrap();
    let num = numeric_grad(x.data(), H, |v| {
        content_loss(&[t(&shape, v)], std::slice::from_ref(&p)).unwrap().0
    });
    rel_err(grads[0].data(), &num)
}

/// Style loss differentiated through the Gram matrix back to the feature map.
pub fn style_loss_error(seed: u64) -> f64 {
    let mut g = rng(seed);
    let shape = [g.random_range(1..=5), g.random_range(1..=6), g.random_range(1..=6)];
    let f = uniform(&mut g, &shape, -1.0, 1.0);
    let target = gram_matrix(&uniform(&mut g, &shape, -1.0, 1.0)).unwrap();
    let (_, dg) = style_loss(&[gram_matrix(&f).unwrap()], std::slice::from_ref(&target)).unwrap();
    let analytic = gram_backward(&f, &dg[0]).unwrap();
    let num = numeric_grad(f.data(), H, |v| {
        style_loss(&[gram_matrix(&t(&shape, v)).unwrap()], std::slice::from_ref(&target))
            .unwrap()
            .0
    });
    rel_err(analytic.data(), &num)
}

/// Pixel gradient of the weighted content-plus-style objective through a
/// conv / ReLU / max-pool extractor.
pub fn objective_error(seed: u64) -> f64 {
    let spec = SpecBuilder::new([3, 8, 8])
        .conv("conv1", 4, 3)
        .relu("ReLU1")
        .max_pool("pool1", 2, 2)
        .conv("conv2", 6, 3)
        .relu("ReLU2")
        .build()
        .unwrap();
    let net = Network::<f64>::random(spec, seed).unwrap();
    let mut g = rng(seed ^ 0xA5);
    let content = uniform(&mut g, &[3, 8, 8], -0.5, 0.5);
    let style = uniform(&mut g, &[3, 8, 8], -0.5, 0.5);
    let x = uniform(&mut g, &[3, 8, 8], -0.5, 0.5);
    let cfg = TransferConfig {
        content_layers: vec!["ReLU2".into()],
        style_layers: vec!["ReLU1".into(), "ReLU2".into()],
        style_weight: 10.0,
        ..TransferConfig::default()
    };
    let obj = StyleObjective::new(&net, &content, &style, &cfg).unwrap();
    let (_, grad) = obj.evaluate(&x).unwrap();
    let num = numeric_grad(x.data(), H, |v| obj.evaluate(&t(&[3, 8, 8], v)).unwrap().0.total);
    rel_err(grad.data(), &num)
}

/// Cross-entropy gradient of a small classifier with respect to every
/// parameter tensor and the input, worst case.
pub fn classifier_error(seed: u64) -> f64 {
    let spec = SpecBuilder::new([2, 9, 9])
        .conv("conv1", 3, 3)
        .leaky_relu("lrelu1", 0.333)
        .fractional_max_pool("fmp1", std::f64::consts::SQRT_2)
        .conv("conv2", 4, 3)
        .leaky_relu("lrelu2", 0.333)
        .max_pool("pool2", 2, 2)
        .classifier_head(3, None)
        .unwrap();
    let mut net = Network::<f64>::random(spec, seed).unwrap();
    let mut g = rng(seed ^ 0x5A);
    for (name, p) in net.params().clone() {
        if name.ends_with(".bias") {
            net.set_param(&name, uniform(&mut g, p.shape(), -0.1, 0.1)).unwrap();
        }
    }
    let x = uniform(&mut g, &[2, 9, 9], -1.0, 1.0);
    let label = g.random_range(0..3);
    let logits_at = net.spec().layers.len() - 2;
    let opts = ForwardOptions {
        until: Some(logits_at),
        ..ForwardOptions::default()
    };
    let loss = |net: &Network<f64>, x: &Tensor<f64>| {
        let tr = net.forward(x, opts).unwrap();
        softmax_cross_entropy(tr.last().data(), label).unwrap().loss
    };
    let tr = net.forward(&x, opts).unwrap();
    let ce = softmax_cross_entropy(tr.last().data(), label).unwrap();
    let inj = BTreeMap::from([(logits_at, Tensor::vector(ce.grad).unwrap())]);
    let grads = net.backward(&tr, &inj, true).unwrap();

    let mut worst = rel_err(
        grads.input.data(),
        &numeric_grad(x.data(), H, |v| loss(&net, &t(x.shape(), v))),
    );
    for (name, p) in net.params().clone() {
        let num = numeric_grad(p.data(), H, |v| {
            let mut probe_net = net.clone();
            probe_net.set_param(&name, t(p.shape(), v)).unwrap();
            loss(&probe_net, &x)
        });
        worst = worst.max(rel_err(grads.params[&name].data(), &num));
    }
    worst
}

/// f32 pixel gradient of the transfer objective against f64 central
/// differences of the same network.
pub fn objective_f32_error(seed: u64) -> f64 {
    let spec = SpecBuilder::new([3, 8, 8])
        .conv("conv1", 4, 3)
        .relu("ReLU1")
        .conv("conv2", 4, 3)
        .relu("ReLU2")
        .build()
        .unwrap();
    let net32 = Network::<f32>::random(spec, seed).unwrap();
    let net64 = net32.cast::<f64>();
    let mut g = rng(seed ^ 0x33);
    let content = uniform(&mut g, &[3, 8, 8], -0.5, 0.5).cast::<f32>();
    let style = uniform(&mut g, &[3, 8, 8], -0.5, 0.5).cast::<f32>();
    let x = uniform(&mut g, &[3, 8, 8], -0.5, 0.5).cast::<f32>();
    let cfg = TransferConfig {
        content_layers: vec!["ReLU2".into()],
        style_layers: vec!["ReLU1".into(), "ReLU2".into()],
        style_weight: 10.0,
        ..TransferConfig::default()
    };
    let obj32 = StyleObjective::new(&net32, &content, &style, &cfg).unwrap();
    let (_, grad) = obj32.evaluate(&x).unwrap();
    let obj64 = StyleObjective::new(&net64, &content.cast(), &style.cast(), &cfg).unwrap();
    let x64 = x.cast::<f64>();
    let num = numeric_grad(x64.data(), H, |v| obj64.evaluate(&t(&[3, 8, 8], v)).unwrap().0.total);
    rel_err(&super::to_f64(grad.data()), &num)
}
