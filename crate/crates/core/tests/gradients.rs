mod common;

use common::gradcheck::*;

const SEEDS: u64 = 20;
const TOL: f64 = 1e-4;

fn check(name: &str, err: impl Fn(u64) -> f64) {
    for seed in 0..SEEDS {
        let e = err(seed);
        assert!(e < TOL, "{name}, seed {seed}: relative error {e:e}");
    }
}

#[test]
fn conv2d_input_kernel_and_bias() {
    check("conv2d", |s| conv2d_errors(s).into_iter().fold(0.0, f64::max));
}

#[test]
fn dense_input_weights_and_bias() {
    check("dense", |s| dense_errors(s).into_iter().fold(0.0, f64::max));
}

#[test]
fn leaky_relu() {
    check("leaky_relu", leaky_relu_error);
}

#[test]
fn max_pooling() {
    check("max_pool", max_pool_error);
}

#[test]
fn fractional_max_pooling() {
    check("fractional_max_pool", fractional_pool_error);
}

#[test]
fn softmax_cross_entropy() {
    check("softmax_cross_entropy", softmax_ce_error);
}

#[test]
fn gram_matrix() {
    check("gram", gram_error);
}

#[test]
fn content_loss() {
    check("content_loss", content_loss_error);
}

#[test]
fn style_loss_through_gram() {
    check("style_loss", style_loss_error);
}

#[test]
fn transfer_objective_pixels() {
    check("objective", objective_error);
}

#[test]
fn classifier_parameters_and_input() {
    check("classifier", classifier_error);
}

#[test]
fn transfer_objective_in_single_precision() {
    for seed in 0..SEEDS {
        let e = objective_f32_error(seed);
        assert!(e < 1e-3, "f32 objective, seed {seed}: relative error {e:e}");
    }
}
