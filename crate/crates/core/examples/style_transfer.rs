//! Pixel-space style transfer through a small random-weight extractor.
//!
//! The synthesized image starts from noise and is optimized so that its
//! deepest activations match a striped content image while its Gram
//! matrices match a dotted style image.
//!
//! Run with `cargo run --release --example style_transfer [OUT.png]`.

use gramstyle::network::{Network, SpecBuilder};
use gramstyle::optim::AdamParams;
use gramstyle::pipeline::{rgb_to_tensor, save_png};
use gramstyle::styletransfer::{transfer, TransferConfig};
use gramstyle::synthetic::{texture, TextureKind};

fn main() -> gramstyle::Result<()> {
    let spec = SpecBuilder::new([3, 16, 16])
        .conv("conv1", 8, 3)
        .relu("ReLU1")
        .conv("conv2", 8, 3)
        .relu("ReLU2")
        .conv("conv3", 8, 3)
        .relu("ReLU3")
        .build()?;
    let net = Network::random(spec, 4)?;
    let mean = [0.5; 3];
    let content = rgb_to_tensor(&texture(TextureKind::Stripes, 16, 1), mean);
    let style = rgb_to_tensor(&texture(TextureKind::Dots, 16, 2), mean);

    let cfg = TransferConfig {
        content_layers: vec!["ReLU3".into()],
        style_layers: vec!["ReLU1".into(), "ReLU2".into(), "ReLU3".into()],
        style_weight: 1000.0,
        iterations: 200,
        adam: AdamParams {
            step: 0.02,
            ..AdamParams::default()
        },
        channel_mean: mean.to_vec(),
        ..TransferConfig::default()
    };
    let result = transfer(&net, &content, &style, &cfg)?;
    for (i, l) in result.trace.iter().enumerate().step_by(25) {
        println!(
            "iteration {i:>3}: total {:.4e} (content {:.4e}, style {:.4e})",
            l.total, l.content, l.style
        );
    }
    let (first, last) = (result.trace[0].total, result.trace[result.trace.len() - 1].total);
    println!("final loss is {:.3}% of the initial loss", 100.0 * last / first);

    if let Some(out) = std::env::args().nth(1) {
        save_png(&result.image, mean, &out)?;
        println!("wrote {out}");
    }
    Ok(())
}
