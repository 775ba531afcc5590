//! Style features of one image at the five VGG-19 taps.
//!
//! Each tap's Gram matrix is flattened to its strictly upper triangle, so a
//! layer with `N` channels contributes `N (N - 1) / 2` values.
//!
//! Run with `cargo run --release --example gram_features`.

use std::time::Instant;

use gramstyle::gram::{extract_style_features, FlattenMode};
use gramstyle::network::{vgg19_extractor_spec, Network, VGG_STYLE_TAPS};
use gramstyle::pipeline::{preprocess_image, PreprocessConfig};
use gramstyle::synthetic::{texture, TextureKind};

fn main() -> gramstyle::Result<()> {
    let net = Network::random(vgg19_extractor_spec(), 19)?;
    let img = texture(TextureKind::Stripes, 256, 1);
    let x = preprocess_image(&img, &PreprocessConfig::default())?;

    let start = Instant::now();
    let f = extract_style_features(&net, &x, &VGG_STYLE_TAPS, FlattenMode::StrictUpper, "stripes")?;
    for (g, v) in f.grams.iter().zip(&f.flattened) {
        println!(
            "{:<8} {:>3} channels x {:>5} positions -> {:>6} features",
            v.layer,
            g.channels(),
            g.positions(),
            v.values.len()
        );
    }
    println!("total: {} features in {:.1?}", f.concatenated().len(), start.elapsed());
    Ok(())
}
