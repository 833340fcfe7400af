//! Square anchor tiling with densification.
//!
//! A layer with stride `s` places one anchor of each scale at every cell
//! center. Densifying a scale `n` times replaces that single anchor by an
//! `n x n` grid of anchors spaced `s / n` apart and centered on the cell,
//! which multiplies the tiling density (scale over interval) by `n`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::network::{build_faceboxes, NetworkDescriptor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnchorScale {
    /// Anchor side in pixels.
    pub scale: usize,
    /// Densification factor; the cell holds `n * n` anchors of this scale.
    pub densify: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorLayerConfig {
    pub layer: String,
    pub stride: usize,
    pub scales: Vec<AnchorScale>,
}

impl AnchorLayerConfig {
    pub fn new(layer: &str, stride: usize, scales: &[(usize, usize)]) -> Self {
        AnchorLayerConfig {
            layer: layer.to_string(),
            stride,
            scales: scales
                .iter()
                .map(|&(scale, densify)| AnchorScale { scale, densify })
                .collect(),
        }
    }

    pub fn anchors_per_cell(&self) -> usize {
        self.scales.iter().map(|s| s.densify * s.densify).sum()
    }
}

/// 32/64/128 px on Inception3 (densified 4x, 2x, 1x), 256 px on Conv3_2, 512 px on Conv4_2.
pub fn default_configs() -> Vec<AnchorLayerConfig> {
    alloc::vec![
        AnchorLayerConfig::new("Inception3", 32, &[(32, 4), (64, 2), (128, 1)]),
        AnchorLayerConfig::new("Conv3_2", 64, &[(256, 1)]),
        AnchorLayerConfig::new("Conv4_2", 128, &[(512, 1)]),
    ]
}

/// Exact ratio `num / den` in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Density {
    pub num: u64,
    pub den: u64,
}

impl Density {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidArgument("tiling interval must be positive".into()));
        }
        let g = gcd(num, den);
        Ok(Density {
            num: num / g,
            den: den / g,
        })
    }

    pub fn integer(value: u64) -> Self {
        Density { num: value, den: 1 }
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// Anchor scale divided by tiling interval.
pub fn tiling_density(scale: u64, interval: u64) -> Result<Density> {
    Density::new(scale, interval)
}

/// Density after densifying `n` times: the interval shrinks to `stride / n`.
pub fn densified_density(scale: u64, stride: u64, n: u64) -> Result<Density> {
    Density::new(scale * n, stride)
}

/// `(cols, rows)` of the feature map hosting `layer` for an image of the given size.
pub fn feature_map_size(descriptor: &NetworkDescriptor, image_w: usize, image_h: usize, layer: &str) -> Result<(usize, usize)> {
    let (rows, cols) = descriptor.output_size(layer, image_w, image_h)?;
    Ok((cols, rows))
}

/// Centers of the `n x n` sub-anchors of one cell, row-major (y outer, x inner).
pub fn densified_centers(cell_row: usize, cell_col: usize, stride: usize, n: usize) -> Vec<(f32, f32)> {
    let step = stride as f32 / n as f32;
    let x0 = (cell_col * stride) as f32;
    let y0 = (cell_row * stride) as f32;
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            out.push((x0 + (i as f32 + 0.5) * step, y0 + (j as f32 + 0.5) * step));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub cx: f32,
    pub cy: f32,
    pub side: f32,
    pub layer: usize,
    pub row: usize,
    pub col: usize,
    pub scale: usize,
    /// Index within the `n x n` densification grid.
    pub sub_index: usize,
}

impl Anchor {
    pub fn to_box(&self) -> BBox {
        BBox::from_center(self.cx, self.cy, self.side, self.side)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub width: usize,
    pub height: usize,
    pub layers: Vec<String>,
    pub anchors: Vec<Anchor>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn boxes(&self) -> Vec<BBox> {
        self.anchors.iter().map(Anchor::to_box).collect()
    }
}

/// Anchors for the default FaceBoxes graph.
pub fn generate_anchors(image_w: usize, image_h: usize, configs: &[AnchorLayerConfig]) -> Result<AnchorSet> {
    generate_anchors_with(&build_faceboxes(), image_w, image_h, configs)
}

/// Tiles anchors in layer, row, column, scale, sub-anchor order. Anchors are not clipped.
pub fn generate_anchors_with(
    descriptor: &NetworkDescriptor,
    image_w: usize,
    image_h: usize,
    configs: &[AnchorLayerConfig],
) -> Result<AnchorSet> {
    let mut anchors = Vec::new();
    for (layer_index, cfg) in configs.iter().enumerate() {
        if cfg.scales.iter().any(|s| s.densify == 0) {
            return Err(Error::InvalidArgument("densification factor must be >= 1".into()));
        }
        let (cols, rows) = feature_map_size(descriptor, image_w, image_h, &cfg.layer)?;
        anchors.reserve(rows * cols * cfg.anchors_per_cell());
        for row in 0..rows {
            for col in 0..cols {
                for s in &cfg.scales {
                    for (sub_index, (cx, cy)) in densified_centers(row, col, cfg.stride, s.densify).into_iter().enumerate() {
                        anchors.push(Anchor {
                            cx,
                            cy,
                            side: s.scale as f32,
                            layer: layer_index,
                            row,
                            col,
                            scale: s.scale,
                            sub_index,
                        });
                    }
                }
            }
        }
    }
    Ok(AnchorSet {
        width: image_w,
        height: image_h,
        layers: configs.iter().map(|c| c.layer.clone()).collect(),
        anchors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_examples() {
        let cases = [(32, 32, 1), (64, 32, 2), (128, 32, 4), (256, 64, 4), (512, 128, 4), (32, 8, 4)];
        for (scale, interval, expected) in cases {
            assert_eq!(tiling_density(scale, interval).unwrap(), Density::integer(expected));
        }
        for s in [1, 17, 300] {
            assert_eq!(tiling_density(s, s).unwrap(), Density::integer(1));
        }
        assert!(tiling_density(32, 0).is_err());
        assert_eq!(tiling_density(3, 6).unwrap(), Density { num: 1, den: 2 });
    }

    #[test]
    fn densified_density_is_four_everywhere() {
        for cfg in default_configs() {
            for s in &cfg.scales {
                let d = densified_density(s.scale as u64, cfg.stride as u64, s.densify as u64).unwrap();
                assert_eq!(d, Density::integer(4), "{cfg:?}");
            }
        }
    }

    #[test]
    fn centers_examples() {
        assert_eq!(densified_centers(0, 0, 64, 1), [(32.0, 32.0)]);
        assert_eq!(
            densified_centers(0, 0, 32, 2),
            [(8.0, 8.0), (24.0, 8.0), (8.0, 24.0), (24.0, 24.0)]
        );
        let c = densified_centers(2, 3, 32, 4);
        assert_eq!(c.len(), 16);
        assert_eq!(c[1].0 - c[0].0, 8.0);
        assert_eq!(c[4].1 - c[0].1, 8.0);
        let (sx, sy) = c.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
        assert_eq!((sx / 16.0, sy / 16.0), (3.5 * 32.0, 2.5 * 32.0));
    }

    #[test]
    fn feature_maps() {
        let d = build_faceboxes();
        assert_eq!(feature_map_size(&d, 1024, 1024, "Inception3").unwrap(), (32, 32));
        assert_eq!(feature_map_size(&d, 640, 640, "Conv4_2").unwrap(), (5, 5));
        assert_eq!(feature_map_size(&d, 640, 480, "Inception3").unwrap(), (20, 15));
        assert!(feature_map_size(&d, 100, 640, "Conv4_2").is_err());
    }

    #[test]
    fn anchor_counts() {
        let cfg = default_configs();
        assert_eq!(generate_anchors(640, 640, &cfg).unwrap().len(), 8525);
        assert_eq!(generate_anchors(1024, 1024, &cfg).unwrap().len(), 21824);
        assert_eq!(generate_anchors(640, 480, &cfg).unwrap().len(), 6400);
        assert_eq!(cfg[0].anchors_per_cell(), 21);
    }

    #[test]
    fn ordering() {
        let set = generate_anchors(256, 256, &default_configs()).unwrap();
        let first: Vec<(usize, usize)> = set.anchors[..21].iter().map(|a| (a.scale, a.sub_index)).collect();
        assert_eq!(first[0], (32, 0));
        assert_eq!(first[15], (32, 15));
        assert_eq!(first[16], (64, 0));
        assert_eq!(first[20], (128, 0));
        assert_eq!((set.anchors[21].row, set.anchors[21].col), (0, 1));
        let a = set.anchors[20];
        assert_eq!((a.cx, a.cy, a.side), (16.0, 16.0, 128.0));
        // anchors are allowed to extend past the image
        assert!(set.anchors.iter().any(|a| a.to_box().x_min < 0.0));
    }
}
