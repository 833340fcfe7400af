//! Training-time augmentation of (image, face boxes) samples.
//!
//! Stages run in a fixed order: photometric distortion, square crop,
//! resize to the training size, random horizontal flip, small-box filter.
//! Every stage draws from the caller's generator, so a seeded generator
//! reproduces the output bit for bit.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `(1, 3, h, w)` with values in `[0, 1]`.
    pub image: Tensor,
    pub boxes: Vec<BBox>,
    pub source: String,
}

impl Sample {
    pub fn width(&self) -> usize {
        self.image.shape().w
    }

    pub fn height(&self) -> usize {
        self.image.shape().h
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub crop_scale_range: (f32, f32),
    pub target_size: usize,
    pub flip_prob: f64,
    pub min_box_px: f32,
    pub brightness_delta: f32,
    pub contrast_range: (f32, f32),
    pub saturation_range: (f32, f32),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            crop_scale_range: (0.3, 1.0),
            target_size: 1024,
            flip_prob: 0.5,
            min_box_px: 20.0,
            brightness_delta: 0.125,
            contrast_range: (0.5, 1.5),
            saturation_range: (0.5, 1.5),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let range_ok = |(lo, hi): (f32, f32)| lo > 0.0 && lo <= hi;
        if !range_ok(self.crop_scale_range) || self.crop_scale_range.1 > 1.0 {
            return Err(Error::InvalidArgument(format!("bad crop range {:?}", self.crop_scale_range)));
        }
        if !range_ok(self.contrast_range) || !range_ok(self.saturation_range) {
            return Err(Error::InvalidArgument("color factor ranges must be positive and ordered".into()));
        }
        if self.target_size == 0 || !(0.0..=1.0).contains(&self.flip_prob) || self.brightness_delta < 0.0 {
            return Err(Error::InvalidArgument("bad target size, flip probability or brightness delta".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorOp {
    Brightness,
    Contrast,
    Saturation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorParams {
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
    pub order: [ColorOp; 3],
}

impl ColorParams {
    pub const IDENTITY: ColorParams = ColorParams {
        brightness: 0.0,
        contrast: 1.0,
        saturation: 1.0,
        order: [ColorOp::Brightness, ColorOp::Contrast, ColorOp::Saturation],
    };

    pub fn sample<R: Rng + ?Sized>(rng: &mut R, cfg: &AugmentConfig) -> Self {
        let brightness = if cfg.brightness_delta > 0.0 {
            rng.gen_range(-cfg.brightness_delta..=cfg.brightness_delta)
        } else {
            0.0
        };
        let contrast = rng.gen_range(cfg.contrast_range.0..=cfg.contrast_range.1);
        let saturation = rng.gen_range(cfg.saturation_range.0..=cfg.saturation_range.1);
        let mut order = [ColorOp::Brightness, ColorOp::Contrast, ColorOp::Saturation];
        order.shuffle(rng);
        ColorParams {
            brightness,
            contrast,
            saturation,
            order,
        }
    }
}

/// Applies the three photometric ops in `params.order`, clamping to `[0, 1]` after each.
pub fn apply_color(image: &Tensor, params: &ColorParams) -> Tensor {
    let mut out = image.clone();
    let s = out.shape();
    let plane = s.plane();
    for op in params.order {
        match op {
            ColorOp::Brightness if params.brightness != 0.0 => {
                for v in out.data_mut() {
                    *v = (*v + params.brightness).clamp(0.0, 1.0);
                }
            }
            ColorOp::Contrast if params.contrast != 1.0 => {
                let data = out.data_mut();
                let mean = (data.iter().map(|&v| v as f64).sum::<f64>() / data.len().max(1) as f64) as f32;
                for v in data {
                    *v = (mean + params.contrast * (*v - mean)).clamp(0.0, 1.0);
                }
            }
            ColorOp::Saturation if params.saturation != 1.0 && s.c == 3 => {
                for n in 0..s.n {
                    let base = n * 3 * plane;
                    let data = out.data_mut();
                    for i in 0..plane {
                        let (r, g, b) = (data[base + i], data[base + plane + i], data[base + 2 * plane + i]);
                        let gray = 0.299 * r + 0.587 * g + 0.114 * b;
                        for c in 0..3 {
                            let v = &mut data[base + c * plane + i];
                            *v = (gray + params.saturation * (*v - gray)).clamp(0.0, 1.0);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// Random brightness, contrast and saturation in random order; boxes are untouched.
pub fn color_distort<R: Rng + ?Sized>(image: &Tensor, rng: &mut R, cfg: &AugmentConfig) -> Tensor {
    let params = ColorParams::sample(rng, cfg);
    apply_color(image, &params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropPatch {
    pub x: usize,
    pub y: usize,
    pub side: usize,
}

/// Five square candidates: the largest centered square, then four random ones.
pub fn crop_candidates<R: Rng + ?Sized>(width: usize, height: usize, rng: &mut R, cfg: &AugmentConfig) -> [CropPatch; 5] {
    let short = width.min(height);
    let mut patches = [CropPatch {
        x: (width - short) / 2,
        y: (height - short) / 2,
        side: short,
    }; 5];
    for p in patches.iter_mut().skip(1) {
        let frac = rng.gen_range(cfg.crop_scale_range.0..=cfg.crop_scale_range.1);
        let side = ((frac * short as f32) as usize).clamp(1, short);
        *p = CropPatch {
            x: rng.gen_range(0..=width - side),
            y: rng.gen_range(0..=height - side),
            side,
        };
    }
    patches
}

/// Cuts `patch` out of the sample. Boxes whose center falls inside the patch are
/// clipped to it and shifted into patch coordinates; the rest are dropped.
pub fn apply_crop(sample: &Sample, patch: CropPatch) -> Result<Sample> {
    let s = sample.image.shape();
    if patch.side == 0 || patch.x + patch.side > s.w || patch.y + patch.side > s.h {
        return Err(Error::InvalidArgument(format!("crop {patch:?} outside {}x{} image", s.w, s.h)));
    }
    let mut image = Tensor::zeros(Shape::new(s.n, s.c, patch.side, patch.side));
    for n in 0..s.n {
        for c in 0..s.c {
            for y in 0..patch.side {
                let src = sample.image.index(n, c, patch.y + y, patch.x);
                let dst = image.index(n, c, y, 0);
                image.data_mut()[dst..dst + patch.side].copy_from_slice(&sample.image.data()[src..src + patch.side]);
            }
        }
    }
    let (x0, y0) = (patch.x as f32, patch.y as f32);
    let (x1, y1) = (x0 + patch.side as f32, y0 + patch.side as f32);
    let boxes = sample
        .boxes
        .iter()
        .filter(|b| {
            let (cx, cy) = b.center();
            cx >= x0 && cx < x1 && cy >= y0 && cy < y1
        })
        .map(|b| {
            BBox::new(b.x_min.max(x0), b.y_min.max(y0), b.x_max.min(x1), b.y_max.min(y1)).translate(-x0, -y0)
        })
        .collect();
    Ok(Sample {
        image,
        boxes,
        source: sample.source.clone(),
    })
}

/// Picks one of the five candidate patches uniformly and crops to it.
pub fn random_crop<R: Rng + ?Sized>(sample: &Sample, rng: &mut R, cfg: &AugmentConfig) -> Result<Sample> {
    if sample.image.shape().is_empty() {
        return Err(Error::InvalidArgument("cannot crop an empty image".into()));
    }
    let candidates = crop_candidates(sample.width(), sample.height(), rng, cfg);
    let chosen = candidates[rng.gen_range(0..candidates.len())];
    apply_crop(sample, chosen)
}

/// Bilinear resize with half-pixel centers.
pub fn resize_bilinear(image: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let s = image.shape();
    if out_h == 0 || out_w == 0 || s.is_empty() {
        return Err(Error::InvalidArgument(format!("cannot resize {s} to {out_w}x{out_h}")));
    }
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f32)> {
        let scale = inp as f32 / out as f32;
        (0..out)
            .map(|o| {
                let src = ((o as f32 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f32);
                let i0 = src as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, src - i0 as f32)
            })
            .collect()
    };
    let ys = taps(out_h, s.h);
    let xs = taps(out_w, s.w);
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, out_h, out_w));
    let mut dst = 0;
    for n in 0..s.n {
        for c in 0..s.c {
            let plane = &image.data()[(n * s.c + c) * s.plane()..(n * s.c + c + 1) * s.plane()];
            for &(y0, y1, ty) in &ys {
                for &(x0, x1, tx) in &xs {
                    let lerp = |a: f32, b: f32, t: f32| a + (b - a) * t;
                    let top = lerp(plane[y0 * s.w + x0], plane[y0 * s.w + x1], tx);
                    let bottom = lerp(plane[y1 * s.w + x0], plane[y1 * s.w + x1], tx);
                    out.data_mut()[dst] = lerp(top, bottom, ty);
                    dst += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Resizes a square sample to `target x target`, scaling its boxes.
pub fn resize_square(sample: &Sample, target: usize) -> Result<Sample> {
    let (w, h) = (sample.width(), sample.height());
    if w != h {
        return Err(Error::InvalidArgument(format!("resize_square needs a square image, got {w}x{h}")));
    }
    let image = resize_bilinear(&sample.image, target, target)?;
    let k = target as f32 / w as f32;
    Ok(Sample {
        image,
        boxes: sample.boxes.iter().map(|b| b.scale(k, k)).collect(),
        source: sample.source.clone(),
    })
}

/// Mirrors columns and boxes.
pub fn flip_horizontal(sample: &Sample) -> Sample {
    let s = sample.image.shape();
    let mut image = sample.image.clone();
    for row in image.data_mut().chunks_mut(s.w) {
        row.reverse();
    }
    let w = s.w as f32;
    Sample {
        image,
        boxes: sample
            .boxes
            .iter()
            .map(|b| BBox::new(w - b.x_max, b.y_min, w - b.x_min, b.y_max))
            .collect(),
        source: sample.source.clone(),
    }
}

/// Flips with probability `p`; also reports whether it did.
pub fn hflip<R: Rng + ?Sized>(sample: &Sample, rng: &mut R, p: f64) -> (Sample, bool) {
    if rng.gen_bool(p) {
        (flip_horizontal(sample), true)
    } else {
        (sample.clone(), false)
    }
}

/// Drops boxes narrower or shorter than `min_px`.
pub fn filter_boxes(sample: &Sample, min_px: f32) -> Sample {
    Sample {
        image: sample.image.clone(),
        boxes: sample
            .boxes
            .iter()
            .copied()
            .filter(|b| b.width() >= min_px && b.height() >= min_px)
            .collect(),
        source: sample.source.clone(),
    }
}

pub fn augment_pipeline<R: Rng + ?Sized>(sample: &Sample, rng: &mut R, cfg: &AugmentConfig) -> Result<Sample> {
    cfg.validate()?;
    let distorted = Sample {
        image: color_distort(&sample.image, rng, cfg),
        boxes: sample.boxes.clone(),
        source: sample.source.clone(),
    };
    let cropped = random_crop(&distorted, rng, cfg)?;
    let resized = resize_square(&cropped, cfg.target_size)?;
    let (flipped, _) = hflip(&resized, rng, cfg.flip_prob);
    Ok(filter_boxes(&flipped, cfg.min_box_px))
}
