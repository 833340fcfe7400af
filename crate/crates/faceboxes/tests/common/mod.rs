//! Shared fixtures: synthetic blob images and hand-set weights that detect them.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use faceboxes::core::bbox::BBox;
use faceboxes::core::network::{build_faceboxes, ModelWeights};
use faceboxes::ppm::RgbImage;

/// Half-width of the pyramid blob in pixels.
pub const BLOB_RADIUS: f32 = 64.0;

/// Anchor slot (within an Inception3 cell) of the 128-pixel anchor.
const LARGE_ANCHOR_SLOT: usize = 20;

/// Black image with one grey pyramid `1 - max(|dx|, |dy|) / 64` per center.
pub fn blob_image(width: usize, height: usize, centers: &[(f32, f32)]) -> RgbImage {
    let mut img = RgbImage::new(width, height);
    for y in 0..height {
        for x in 0..width {
            let v = centers
                .iter()
                .map(|&(cx, cy)| {
                    let d = (x as f32 + 0.5 - cx).abs().max((y as f32 + 0.5 - cy).abs());
                    (1.0 - d / BLOB_RADIUS).max(0.0)
                })
                .fold(0.0f32, f32::max);
            let g = (v * 255.0).round() as u8;
            img.put(x, y, [g, g, g]);
        }
    }
    img
}

/// The face box a blob at `(cx, cy)` stands for.
pub fn blob_box(cx: f32, cy: f32) -> BBox {
    BBox::from_center(cx, cy, 128.0, 128.0)
}

/// Weights wired by hand so the network fires on one blob centred on a stride-32 cell center.
///
/// Grey level is carried through channel 0 of every layer and sampled at the center of each
/// Inception3 cell; the 128-pixel anchor of a cell scores high when the 3x3 neighbourhood is bright.
pub fn blob_weights() -> ModelWeights {
    let desc = build_faceboxes();
    let mut w = ModelWeights::zeros(&desc);
    {
        let conv1 = w.get_mut("Conv1").unwrap();
        for c in 0..3 {
            conv1.weights.set(0, c, 3, 3, 1.0 / 3.0);
        }
        // undo the default mean subtraction on the grey average
        conv1.bias[0] = (0.4078 + 0.4588 + 0.4824) / 3.0;
    }
    w.get_mut("Conv2").unwrap().weights.set(0, 0, 4, 4, 1.0);
    for block in ["Inception1", "Inception2", "Inception3"] {
        w.get_mut(&format!("{block}/1x1")).unwrap().weights.set(0, 0, 0, 0, 1.0);
    }
    for head in ["Inception3/conf", "Conv3_2/conf", "Conv4_2/conf"] {
        let conf = w.get_mut(head).unwrap();
        let faces = conf.bias.len() / 2;
        for a in 0..faces {
            conf.bias[2 * a + 1] = -10.0;
        }
    }
    let conf = w.get_mut("Inception3/conf").unwrap();
    let face = 2 * LARGE_ANCHOR_SLOT + 1;
    for ky in 0..3 {
        for kx in 0..3 {
            conf.weights.set(face, 0, ky, kx, 4.0);
        }
    }
    conf.bias[face] = -26.0;
    w
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_faceboxes"))
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn faceboxes")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}
