//! Binary PPM (P6, maxval 255) images.

use std::fs;
use std::path::Path;

use faceboxes_core::tensor::{Shape, Tensor};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major.
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            pixels: vec![0; width * height * 3],
        }
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// `(1, 3, h, w)` tensor in `[0, 1]`.
    pub fn to_unit_tensor(&self) -> Tensor {
        self.to_tensor([0.0; 3])
    }

    /// `(1, 3, h, w)` tensor of `value / 255 - mean[c]`.
    pub fn to_tensor(&self, mean: [f32; 3]) -> Tensor {
        let plane = self.width * self.height;
        let mut data = vec![0.0f32; 3 * plane];
        for (i, px) in self.pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + i] = px[c] as f32 / 255.0 - mean[c];
            }
        }
        Tensor::from_vec(Shape::new(1, 3, self.height, self.width), data).expect("length matches shape")
    }

    /// Inverse of [`to_unit_tensor`](Self::to_unit_tensor) for the first batch item, rounding and clamping.
    pub fn from_unit_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.c != 3 {
            return Err(Error::Usage(format!("expected a 3-channel image tensor, got {s}")));
        }
        let plane = s.plane();
        let sample = t.sample(0);
        let mut img = RgbImage::new(s.w, s.h);
        for i in 0..plane {
            for c in 0..3 {
                img.pixels[i * 3 + c] = (sample[c * plane + i].clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
        Ok(img)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Reads the next whitespace-delimited header token, skipping `#` comments.
fn token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<RgbImage> {
    let bad = |msg: &str| Error::parse(path, 1, msg);
    let mut pos = 0;
    if token(bytes, &mut pos).as_deref() != Some("P6") {
        return Err(bad("not a binary PPM (missing P6 magic)"));
    }
    let mut num = |what: &str| -> Result<usize> {
        token(bytes, &mut pos)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(&format!("bad {what} in PPM header")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval != 255 {
        return Err(bad("only 8-bit PPM (maxval 255) is supported"));
    }
    if width == 0 || height == 0 {
        return Err(bad("empty image"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let len = width * height * 3;
    if bytes.len() < pos + len {
        return Err(bad("truncated pixel data"));
    }
    Ok(RgbImage {
        width,
        height,
        pixels: bytes[pos..pos + len].to_vec(),
    })
}

pub fn read(path: &Path) -> Result<RgbImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn write(path: &Path, image: &RgbImage) -> Result<()> {
    fs::write(path, image.encode()).map_err(|e| Error::io(path, e))
}
