//! Procedural texture corpora with known style labels.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TextureKind {
    Stripes,
    Dots,
    Noise,
}

impl TextureKind {
    pub const ALL: [TextureKind; 3] = [TextureKind::Stripes, TextureKind::Dots, TextureKind::Noise];

    pub fn name(self) -> &'static str {
        match self {
            TextureKind::Stripes => "stripes",
            TextureKind::Dots => "dots",
            TextureKind::Noise => "noise",
        }
    }
}

/// Two colours symmetric about a jittered grey, at a fixed distance, so
/// hue varies between images while contrast does not.
fn palette(rng: &mut ChaCha8Rng) -> ([f64; 3], [f64; 3]) {
    let center: [f64; 3] = std::array::from_fn(|_| 0.5 + rng.random_range(-0.1..0.1));
    let dir: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.2..1.0));
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let a = std::array::from_fn(|k| center[k] + 0.35 * dir[k] / norm);
    let b = std::array::from_fn(|k| center[k] - 0.35 * dir[k] / norm);
    (a, b)
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> Rgb<u8> {
    let c = |k: usize| ((a[k] * (1.0 - t) + b[k] * t).clamp(0.0, 1.0) * 255.0).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

/// One `size × size` texture; colours, scale and placement vary with `seed`.
pub fn texture(kind: TextureKind, size: u32, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = palette(&mut rng);
    match kind {
        TextureKind::Stripes => {
            let angle = rng.random_range(0.0..PI);
            let period = rng.random_range(4.0..10.0);
            let phase = rng.random_range(0.0..2.0 * PI);
            let (c, s) = (angle.cos(), angle.sin());
            RgbImage::from_fn(size, size, |x, y| {
                let u = x as f64 * c + y as f64 * s;
                mix(a, b, 0.5 + 0.5 * (2.0 * PI * u / period + phase).sin())
            })
        }
        TextureKind::Dots => {
            let spacing = rng.random_range(6.0..10.0);
            let radius = rng.random_range(1.5..3.0);
            let (ox, oy) = (
                rng.random_range(0.0..spacing),
                rng.random_range(0.0..spacing),
            );
            RgbImage::from_fn(size, size, |x, y| {
                let fx = (x as f64 - ox).rem_euclid(spacing) - spacing / 2.0;
                let fy = (y as f64 - oy).rem_euclid(spacing) - spacing / 2.0;
                let d = (fx * fx + fy * fy).sqrt();
                mix(a, b, (radius + 0.5 - d).clamp(0.0, 1.0))
            })
        }
        TextureKind::Noise => {
            let mut img = RgbImage::new(size, size);
            for p in img.pixels_mut() {
                *p = mix(a, b, rng.random());
            }
            img
        }
    }
}

/// Writes `per_class` textures of each kind as PNG files plus a
/// `labels.csv` with `filename,style` columns; returns the CSV path.
pub fn write_corpus(
    dir: impl AsRef<Path>,
    per_class: usize,
    size: u32,
    seed: u64,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let csv_path = dir.join("labels.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["filename", "style"])?;
    for (k, kind) in TextureKind::ALL.iter().enumerate() {
        for i in 0..per_class {
            let name = format!("{}_{i:04}.png", kind.name());
            let s = seed::derive(seed, &[k as u64, i as u64]);
            texture(*kind, size, s).save_with_format(dir.join(&name), image::ImageFormat::Png)?;
            w.write_record([name.as_str(), kind.name()])?;
        }
    }
    w.flush()?;
    Ok(csv_path)
}
