use std::path::Path;

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Target length of the shorter side after resizing.
    pub resize: u32,
    /// Side of the centred square crop.
    pub crop: u32,
    /// Per-channel mean subtracted from `[0, 1]` pixels.
    pub mean: [f64; 3],
    pub flip: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            resize: 256,
            crop: 224,
            mean: [0.0; 3],
            flip: false,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.crop == 0 || self.crop > self.resize {
            return Err(Error::invalid(format!(
                "crop {} must lie in 1..={}",
                self.crop, self.resize
            )));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("channel means must be finite"));
        }
        Ok(())
    }
}

/// Resize, centre crop, convert to CHW and subtract the mean.
pub fn preprocess_image(img: &RgbImage, cfg: &PreprocessConfig) -> Result<Tensor<f32>> {
    cfg.validate()?;
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::Data("empty image".into()));
    }
    let (nw, nh) = if w <= h {
        (
            cfg.resize,
            ((h as u64 * cfg.resize as u64 + w as u64 / 2) / w as u64).max(cfg.resize as u64)
                as u32,
        )
    } else {
        (
            ((w as u64 * cfg.resize as u64 + h as u64 / 2) / h as u64).max(cfg.resize as u64)
                as u32,
            cfg.resize,
        )
    };
    let resized = if (nw, nh) == (w, h) {
        img.clone()
    } else {
        imageops::resize(img, nw, nh, FilterType::Triangle)
    };
    let (x0, y0) = ((nw - cfg.crop) / 2, (nh - cfg.crop) / 2);
    let mut crop = imageops::crop_imm(&resized, x0, y0, cfg.crop, cfg.crop).to_image();
    if cfg.flip {
        imageops::flip_horizontal_in_place(&mut crop);
    }
    Ok(rgb_to_tensor(&crop, cfg.mean))
}

pub fn rgb_to_tensor(img: &RgbImage, mean: [f64; 3]) -> Tensor<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    Tensor::from_fn(&[3, h, w], |i| {
        let c = i / (h * w);
        let p = i % (h * w);
        let px = img.get_pixel((p % w) as u32, (p / w) as u32);
        (px[c] as f64 / 255.0 - mean[c]) as f32
    })
}

/// Decodes and preprocesses an image file.
pub fn preprocess(path: impl AsRef<Path>, cfg: &PreprocessConfig) -> Result<Tensor<f32>> {
    let img = image::open(path.as_ref())?.to_rgb8();
    preprocess_image(&img, cfg)
}

/// Adds the mean back and quantises to 8-bit RGB.
pub fn tensor_to_rgb(t: &Tensor<f32>, mean: [f64; 3]) -> Result<RgbImage> {
    let (c, h, w) = t.chw()?;
    if c != 3 {
        return Err(Error::shape(
            "tensor_to_rgb",
            format!("{c} channels, expected 3"),
        ));
    }
    let d = t.data();
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let at = |ch: usize| {
            let v = d[ch * h * w + y as usize * w + x as usize] as f64 + mean[ch];
            (v.clamp(0.0, 1.0) * 255.0).round() as u8
        };
        Rgb([at(0), at(1), at(2)])
    }))
}

pub fn save_png(t: &Tensor<f32>, mean: [f64; 3], path: impl AsRef<Path>) -> Result<()> {
    tensor_to_rgb(t, mean)?.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_at_mean_is_zero() {
        let img = RgbImage::from_pixel(40, 30, Rgb([128, 128, 128]));
        let m = 128.0 / 255.0;
        let cfg = PreprocessConfig {
            resize: 20,
            crop: 16,
            mean: [m; 3],
            flip: false,
        };
        let t = preprocess_image(&img, &cfg).unwrap();
        assert_eq!(t.shape(), &[3, 16, 16]);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flip_of_symmetric_image_is_identical() {
        let img = RgbImage::from_fn(8, 8, |x, _| {
            let v = (x.min(7 - x) * 30) as u8;
            Rgb([v, 0, 255 - v])
        });
        let cfg = PreprocessConfig {
            resize: 8,
            crop: 8,
            ..PreprocessConfig::default()
        };
        let a = preprocess_image(&img, &cfg).unwrap();
        let b = preprocess_image(&img, &PreprocessConfig { flip: true, ..cfg }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rgb_round_trip() {
        let img = RgbImage::from_fn(5, 3, |x, y| Rgb([(x * 40) as u8, (y * 70) as u8, 9]));
        let mean = [0.4, 0.5, 0.1];
        assert_eq!(
            tensor_to_rgb(&rgb_to_tensor(&img, mean), mean).unwrap(),
            img
        );
    }
}
