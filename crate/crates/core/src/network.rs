//! The FaceBoxes layer graph, its parameters and the forward pass.
//!
//! The front end (Conv1, Pool1, Conv2, Pool2) shrinks the input 32 times with
//! C.ReLU after both convolutions. Three Inception blocks and two
//! 1x1/3x3 conv pairs follow; Inception3, Conv3_2 and Conv4_2 each feed a
//! pair of 3x3 heads (box offsets and face/background logits).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{self, output_size, ConvParams, Shape, Tensor};

/// Name used as the input reference of the first layer.
pub const IMAGE_INPUT: &str = "image";
/// Smallest image side for which every anchor-source map is non-degenerate.
pub const MIN_INPUT_SIDE: usize = 128;
pub const INCEPTION_CHANNELS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Loc,
    Conf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerKind {
    Conv {
        in_channels: usize,
        params: ConvParams,
        activation: Activation,
    },
    CRelu,
    Pool {
        kernel: usize,
        stride: usize,
    },
    /// Four-branch block; see [`inception_forward`].
    Inception,
    Head {
        in_channels: usize,
        anchors_per_cell: usize,
        kind: HeadKind,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub input: String,
}

/// Weight tensor shape `(out, in, kh, kw)` for one parameterized convolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSlot {
    pub name: String,
    pub shape: Shape,
    pub params: ConvParams,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorSource {
    pub layer: String,
    pub anchors_per_cell: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkDescriptor {
    pub layers: Vec<LayerSpec>,
    pub anchor_sources: Vec<AnchorSource>,
}

/// Inception branch convolutions: (suffix, input channels, kernel, output channels).
const INCEPTION_CONVS: [(&str, usize, usize, usize); 7] = [
    ("1x1", INCEPTION_CHANNELS, 1, 32),
    ("pool_1x1", INCEPTION_CHANNELS, 1, 32),
    ("3x3_reduce", INCEPTION_CHANNELS, 1, 24),
    ("3x3", 24, 3, 32),
    ("double_3x3_reduce", INCEPTION_CHANNELS, 1, 24),
    ("double_3x3_1", 24, 3, 32),
    ("double_3x3_2", 32, 3, 32),
];

fn conv(name: &str, input: &str, in_channels: usize, kernel: usize, stride: usize, out: usize, activation: Activation) -> LayerSpec {
    LayerSpec {
        name: name.to_string(),
        kind: LayerKind::Conv {
            in_channels,
            params: ConvParams::same(kernel, stride, out),
            activation,
        },
        input: input.to_string(),
    }
}

fn simple(name: &str, input: &str, kind: LayerKind) -> LayerSpec {
    LayerSpec {
        name: name.to_string(),
        kind,
        input: input.to_string(),
    }
}

pub fn head_name(source: &str, kind: HeadKind) -> String {
    match kind {
        HeadKind::Loc => format!("{source}/loc"),
        HeadKind::Conf => format!("{source}/conf"),
    }
}

/// The FaceBoxes graph with its default anchor layout (21, 1, 1 anchors per cell).
pub fn build_faceboxes() -> NetworkDescriptor {
    use Activation::*;
    let mut layers = vec![
        conv("Conv1", IMAGE_INPUT, 3, 7, 4, 24, Identity),
        simple("CReLU1", "Conv1", LayerKind::CRelu),
        simple("Pool1", "CReLU1", LayerKind::Pool { kernel: 3, stride: 2 }),
        conv("Conv2", "Pool1", 48, 5, 2, 64, Identity),
        simple("CReLU2", "Conv2", LayerKind::CRelu),
        simple("Pool2", "CReLU2", LayerKind::Pool { kernel: 3, stride: 2 }),
        simple("Inception1", "Pool2", LayerKind::Inception),
        simple("Inception2", "Inception1", LayerKind::Inception),
        simple("Inception3", "Inception2", LayerKind::Inception),
        conv("Conv3_1", "Inception3", 128, 1, 1, 128, Relu),
        conv("Conv3_2", "Conv3_1", 128, 3, 2, 256, Relu),
        conv("Conv4_1", "Conv3_2", 256, 1, 1, 128, Relu),
        conv("Conv4_2", "Conv4_1", 128, 3, 2, 256, Relu),
    ];
    let sources = [("Inception3", 128, 21), ("Conv3_2", 256, 1), ("Conv4_2", 256, 1)];
    for (source, in_channels, anchors_per_cell) in sources {
        for kind in [HeadKind::Loc, HeadKind::Conf] {
            layers.push(LayerSpec {
                name: head_name(source, kind),
                kind: LayerKind::Head {
                    in_channels,
                    anchors_per_cell,
                    kind,
                },
                input: source.to_string(),
            });
        }
    }
    NetworkDescriptor {
        layers,
        anchor_sources: sources
            .iter()
            .map(|&(layer, _, anchors_per_cell)| AnchorSource {
                layer: layer.to_string(),
                anchors_per_cell,
            })
            .collect(),
    }
}

impl NetworkDescriptor {
    pub fn layer(&self, name: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Checks unique names, back-references only (acyclic), and the anchor sources.
    pub fn validate(&self) -> Result<()> {
        for (i, layer) in self.layers.iter().enumerate() {
            if self.layers[..i].iter().any(|l| l.name == layer.name) {
                return Err(Error::InvalidArgument(format!("duplicate layer name {}", layer.name)));
            }
            if layer.input != IMAGE_INPUT && !self.layers[..i].iter().any(|l| l.name == layer.input) {
                return Err(Error::InvalidArgument(format!(
                    "layer {} reads {} which is not defined before it",
                    layer.name, layer.input
                )));
            }
        }
        let names: Vec<&str> = self.anchor_sources.iter().map(|s| s.layer.as_str()).collect();
        if names != ["Inception3", "Conv3_2", "Conv4_2"] {
            return Err(Error::InvalidArgument(format!("unexpected anchor sources {names:?}")));
        }
        Ok(())
    }

    /// Stride of the layer's output relative to the input image.
    pub fn cumulative_stride(&self, name: &str) -> Result<usize> {
        let mut stride = 1;
        for layer in self.chain_to(name)? {
            stride *= match layer.kind {
                LayerKind::Conv { params, .. } => params.stride,
                LayerKind::Pool { stride, .. } => stride,
                _ => 1,
            };
        }
        Ok(stride)
    }

    /// The layers from the image up to and including `name`.
    fn chain_to(&self, name: &str) -> Result<Vec<&LayerSpec>> {
        let mut chain = Vec::new();
        let mut current = name;
        while current != IMAGE_INPUT {
            let layer = self.layer(current).ok_or_else(|| Error::UnknownLayer(current.to_string()))?;
            chain.push(layer);
            current = &layer.input;
        }
        chain.reverse();
        Ok(chain)
    }

    /// Output `(rows, cols)` of a layer for an `width x height` image.
    ///
    /// Fails on the first layer along the path whose cumulative stride
    /// exceeds either image side.
    pub fn output_size(&self, name: &str, width: usize, height: usize) -> Result<(usize, usize)> {
        let (mut rows, mut cols) = (height, width);
        let mut stride = 1;
        for layer in self.chain_to(name)? {
            let (k, s) = match layer.kind {
                LayerKind::Conv { params, .. } => (params.kernel.0, params.stride),
                LayerKind::Pool { kernel, stride } => (kernel, stride),
                LayerKind::Head { .. } => (3, 1),
                LayerKind::CRelu | LayerKind::Inception => (1, 1),
            };
            stride *= s;
            if stride > width || stride > height {
                return Err(Error::DegenerateLayer {
                    layer: layer.name.clone(),
                    stride,
                    width,
                    height,
                });
            }
            let degenerate = || Error::DegenerateLayer {
                layer: layer.name.clone(),
                stride,
                width,
                height,
            };
            rows = output_size(rows, k, s, k / 2).ok_or_else(degenerate)?;
            cols = output_size(cols, k, s, k / 2).ok_or_else(degenerate)?;
        }
        Ok((rows, cols))
    }

    /// Checks that every layer is non-degenerate for this image size.
    pub fn check_input_size(&self, width: usize, height: usize) -> Result<()> {
        for layer in &self.layers {
            self.output_size(&layer.name, width, height)?;
        }
        Ok(())
    }

    /// Every parameterized convolution in canonical (serialization) order.
    pub fn conv_slots(&self) -> Vec<ConvSlot> {
        let mut slots = Vec::new();
        for layer in &self.layers {
            match &layer.kind {
                LayerKind::Conv {
                    in_channels, params, ..
                } => slots.push(ConvSlot {
                    name: layer.name.clone(),
                    shape: Shape::new(params.out_channels, *in_channels, params.kernel.0, params.kernel.1),
                    params: *params,
                }),
                LayerKind::Inception => {
                    for (suffix, cin, k, cout) in INCEPTION_CONVS {
                        slots.push(ConvSlot {
                            name: format!("{}/{}", layer.name, suffix),
                            shape: Shape::new(cout, cin, k, k),
                            params: ConvParams::same(k, 1, cout),
                        });
                    }
                }
                LayerKind::Head {
                    in_channels,
                    anchors_per_cell,
                    kind,
                } => {
                    let per_anchor = match kind {
                        HeadKind::Loc => 4,
                        HeadKind::Conf => 2,
                    };
                    let out = per_anchor * anchors_per_cell;
                    slots.push(ConvSlot {
                        name: layer.name.clone(),
                        shape: Shape::new(out, *in_channels, 3, 3),
                        params: ConvParams::same(3, 1, out),
                    });
                }
                LayerKind::CRelu | LayerKind::Pool { .. } => {}
            }
        }
        slots
    }

    pub fn parameter_count(&self) -> usize {
        self.conv_slots().iter().map(|s| s.shape.len() + s.shape.n).sum()
    }

    /// FNV-1a over a canonical text rendering of the graph.
    pub fn hash(&self) -> u64 {
        let mut h = Fnv1a::new();
        for layer in &self.layers {
            h.write(format!("{}<{}:{:?};", layer.name, layer.input, layer.kind).as_bytes());
        }
        for source in &self.anchor_sources {
            h.write(format!("@{}x{};", source.layer, source.anchors_per_cell).as_bytes());
        }
        h.finish()
    }
}

struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub name: String,
    pub weights: Tensor,
    pub bias: Vec<f32>,
}

/// Named convolution parameters, kept in the descriptor's canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub version: u32,
    pub descriptor_hash: u64,
    pub layers: Vec<ConvWeights>,
}

impl ModelWeights {
    pub fn get(&self, name: &str) -> Result<&ConvWeights> {
        self.layers
            .iter()
            .find(|l| l.name == name)
            .ok_or_else(|| Error::MissingWeights(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut ConvWeights> {
        self.layers
            .iter_mut()
            .find(|l| l.name == name)
            .ok_or_else(|| Error::MissingWeights(name.to_string()))
    }

    /// All-zero parameters for `descriptor`.
    pub fn zeros(descriptor: &NetworkDescriptor) -> Self {
        ModelWeights {
            version: crate::weights::FORMAT_VERSION,
            descriptor_hash: descriptor.hash(),
            layers: descriptor
                .conv_slots()
                .into_iter()
                .map(|slot| ConvWeights {
                    weights: Tensor::zeros(slot.shape),
                    bias: vec![0.0; slot.shape.n],
                    name: slot.name,
                })
                .collect(),
        }
    }

    pub fn validate(&self, descriptor: &NetworkDescriptor) -> Result<()> {
        let expected = descriptor.hash();
        if self.descriptor_hash != expected {
            return Err(Error::DescriptorMismatch {
                expected,
                found: self.descriptor_hash,
            });
        }
        let slots = descriptor.conv_slots();
        for slot in &slots {
            let entry = self.get(&slot.name)?;
            if entry.weights.shape() != slot.shape || entry.bias.len() != slot.shape.n {
                return Err(Error::ShapeMismatch(format!(
                    "layer {} has weights {} and {} biases, expected {}",
                    slot.name,
                    entry.weights.shape(),
                    entry.bias.len(),
                    slot.shape
                )));
            }
        }
        if self.layers.len() != slots.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weight entries for {} convolutions",
                self.layers.len(),
                slots.len()
            )));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.shape().len() + l.bias.len()).sum()
    }
}

/// Xavier-uniform weights, `U(-b, b)` with `b = sqrt(6 / (fan_in + fan_out))`, zero biases.
pub fn xavier_init(descriptor: &NetworkDescriptor, seed: u64) -> ModelWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ModelWeights::zeros(descriptor);
    for layer in &mut model.layers {
        let s = layer.weights.shape();
        let bound = xavier_bound(s);
        let dist = Uniform::new_inclusive(-bound, bound);
        for v in layer.weights.data_mut() {
            *v = dist.sample(&mut rng);
        }
    }
    model
}

pub fn xavier_bound(shape: Shape) -> f32 {
    let area = shape.h * shape.w;
    let fan_in = shape.c * area;
    let fan_out = shape.n * area;
    libm::sqrtf(6.0 / (fan_in + fan_out) as f32)
}

fn apply_conv(input: &Tensor, entry: &ConvWeights, params: &ConvParams, activation: Activation) -> Result<Tensor> {
    let out = tensor::conv2d(input, &entry.weights, &entry.bias, params)?;
    Ok(match activation {
        Activation::Identity => out,
        Activation::Relu => tensor::relu(&out),
    })
}

/// One Inception block named `prefix`: four stride-1 branches of 32 channels each.
///
/// Branches: 1x1; 3x3 max-pool then 1x1; 1x1(24) then 3x3; 1x1(24) then two 3x3.
pub fn inception_forward(input: &Tensor, weights: &ModelWeights, prefix: &str) -> Result<Tensor> {
    if input.shape().c != INCEPTION_CHANNELS {
        return Err(Error::ShapeMismatch(format!(
            "{prefix} expects {INCEPTION_CHANNELS} input channels, got {}",
            input.shape().c
        )));
    }
    let step = |x: &Tensor, suffix: &str| -> Result<Tensor> {
        let entry = weights.get(&format!("{prefix}/{suffix}"))?;
        let k = entry.weights.shape().h;
        let params = ConvParams::same(k, 1, entry.weights.shape().n);
        apply_conv(x, entry, &params, Activation::Relu)
    };
    let a = step(input, "1x1")?;
    let pooled = tensor::maxpool2d(input, (3, 3), 1, (1, 1))?;
    let b = step(&pooled, "pool_1x1")?;
    let c = step(&step(input, "3x3_reduce")?, "3x3")?;
    let d = step(&step(&step(input, "double_3x3_reduce")?, "double_3x3_1")?, "double_3x3_2")?;
    tensor::concat_channels(&[&a, &b, &c, &d])
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    pub layer: String,
    pub anchors_per_cell: usize,
    /// `(n, 4A, h, w)`
    pub loc: Tensor,
    /// `(n, 2A, h, w)`
    pub conf: Tensor,
}

/// Raw head tensors for every anchor-source layer, in descriptor order.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub layers: Vec<HeadOutput>,
}

/// Per-anchor predictions for one image, in anchor-set order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Predictions {
    /// `(background, face)` logits.
    pub conf: Vec<[f32; 2]>,
    /// Encoded box offsets `(tx, ty, tw, th)`.
    pub loc: Vec<[f32; 4]>,
}

impl Predictions {
    pub fn len(&self) -> usize {
        self.conf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conf.is_empty()
    }
}

impl HeadOutputs {
    pub fn batch(&self) -> usize {
        self.layers.first().map_or(0, |l| l.loc.shape().n)
    }

    /// Number of anchor slots per image.
    pub fn total_slots(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.loc.shape().plane() * l.anchors_per_cell)
            .sum()
    }

    /// Regroups channel-major head tensors into one row per anchor.
    ///
    /// Order: layer, then cell row, cell column, then anchor within the cell.
    pub fn predictions(&self, sample: usize) -> Predictions {
        let total = self.total_slots();
        let mut out = Predictions {
            conf: Vec::with_capacity(total),
            loc: Vec::with_capacity(total),
        };
        for layer in &self.layers {
            let s = layer.loc.shape();
            for y in 0..s.h {
                for x in 0..s.w {
                    for a in 0..layer.anchors_per_cell {
                        out.loc.push(core::array::from_fn(|k| layer.loc.at(sample, 4 * a + k, y, x)));
                        out.conf.push(core::array::from_fn(|k| layer.conf.at(sample, 2 * a + k, y, x)));
                    }
                }
            }
        }
        out
    }
}

/// Runs the full graph on an `(n, 3, h, w)` image batch.
pub fn forward(weights: &ModelWeights, descriptor: &NetworkDescriptor, image: &Tensor) -> Result<HeadOutputs> {
    let s = image.shape();
    if s.c != 3 {
        return Err(Error::ShapeMismatch(format!("expected a 3-channel image, got {s}")));
    }
    descriptor.check_input_size(s.w, s.h)?;
    weights.validate(descriptor)?;

    let mut outputs: Vec<(&str, Tensor)> = Vec::with_capacity(descriptor.layers.len());
    let mut heads: Vec<(&str, HeadKind, usize, Tensor)> = Vec::new();
    for layer in &descriptor.layers {
        let input = if layer.input == IMAGE_INPUT {
            image
        } else {
            &outputs
                .iter()
                .find(|(name, _)| *name == layer.input)
                .ok_or_else(|| Error::UnknownLayer(layer.input.clone()))?
                .1
        };
        match &layer.kind {
            LayerKind::Conv { params, activation, .. } => {
                let out = apply_conv(input, weights.get(&layer.name)?, params, *activation)?;
                outputs.push((&layer.name, out));
            }
            LayerKind::CRelu => {
                let out = tensor::crelu(input);
                outputs.push((&layer.name, out));
            }
            LayerKind::Pool { kernel, stride } => {
                let out = tensor::maxpool2d(input, (*kernel, *kernel), *stride, (kernel / 2, kernel / 2))?;
                outputs.push((&layer.name, out));
            }
            LayerKind::Inception => {
                let out = inception_forward(input, weights, &layer.name)?;
                outputs.push((&layer.name, out));
            }
            LayerKind::Head {
                anchors_per_cell, kind, ..
            } => {
                let entry = weights.get(&layer.name)?;
                let params = ConvParams::same(3, 1, entry.weights.shape().n);
                let out = apply_conv(input, entry, &params, Activation::Identity)?;
                heads.push((&layer.input, *kind, *anchors_per_cell, out));
            }
        }
    }

    let mut layers = Vec::with_capacity(descriptor.anchor_sources.len());
    for source in &descriptor.anchor_sources {
        let mut take = |kind: HeadKind| {
            heads
                .iter()
                .position(|(layer, k, _, _)| *layer == source.layer && *k == kind)
                .map(|i| heads.swap_remove(i).3)
                .ok_or_else(|| Error::MissingWeights(head_name(&source.layer, kind)))
        };
        let loc = take(HeadKind::Loc)?;
        let conf = take(HeadKind::Conf)?;
        layers.push(HeadOutput {
            layer: source.layer.clone(),
            anchors_per_cell: source.anchors_per_cell,
            loc,
            conf,
        });
    }
    Ok(HeadOutputs { layers })
}
