//! Dense NCHW tensors and the handful of operators the detector graph uses.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub const fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl core::fmt::Display for Shape {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Row-major 4-D tensor of `f32` (batch outermost, width innermost).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn full(shape: Shape, value: f32) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape} needs {} values, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let s = &self.shape;
        ((n * s.c + c) * s.h + y) * s.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, value: f32) {
        let i = self.index(n, c, y, x);
        self.data[i] = value;
    }

    /// Contiguous `c x h x w` block of one batch item.
    pub fn sample(&self, n: usize) -> &[f32] {
        let len = self.shape.c * self.shape.plane();
        &self.data[n * len..(n + 1) * len]
    }

    /// Copies one batch item out as a batch-of-one tensor.
    pub fn slice_batch(&self, n: usize) -> Tensor {
        Tensor {
            shape: Shape::new(1, self.shape.c, self.shape.h, self.shape.w),
            data: self.sample(n).to_vec(),
        }
    }

    /// Stacks batch-of-any tensors with identical `c, h, w` along the batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("stack of zero tensors".into()))?
            .shape;
        let mut data = Vec::new();
        let mut n = 0;
        for t in items {
            let s = t.shape;
            if (s.c, s.h, s.w) != (first.c, first.h, first.w) {
                return Err(Error::ShapeMismatch(format!("cannot stack {s} with {first}")));
            }
            n += s.n;
            data.extend_from_slice(&t.data);
        }
        Tensor::from_vec(Shape::new(n, first.c, first.h, first.w), data)
    }

    fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams {
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: (usize, usize),
    pub out_channels: usize,
}

impl ConvParams {
    /// Kernel with `floor(k/2)` padding on each axis.
    pub const fn same(kernel: usize, stride: usize, out_channels: usize) -> Self {
        ConvParams {
            kernel: (kernel, kernel),
            stride,
            padding: (kernel / 2, kernel / 2),
            out_channels,
        }
    }
}

/// `floor((size + 2p - k) / s) + 1`, or `None` when the kernel does not fit.
pub const fn output_size(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if stride == 0 || padded < kernel {
        None
    } else {
        Some((padded - kernel) / stride + 1)
    }
}

fn conv_output_shape(input: Shape, weights: Shape, bias_len: usize, params: &ConvParams) -> Result<Shape> {
    if params.stride == 0 {
        return Err(Error::InvalidArgument("convolution stride must be >= 1".into()));
    }
    if weights.c != input.c {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels but weights expect {}",
            input.c, weights.c
        )));
    }
    if (weights.h, weights.w) != params.kernel || weights.n != params.out_channels {
        return Err(Error::ShapeMismatch(format!(
            "weights {weights} do not match kernel {:?} with {} outputs",
            params.kernel, params.out_channels
        )));
    }
    if bias_len != weights.n {
        return Err(Error::ShapeMismatch(format!(
            "bias has {bias_len} entries for {} output channels",
            weights.n
        )));
    }
    let oh = output_size(input.h, weights.h, params.stride, params.padding.0);
    let ow = output_size(input.w, weights.w, params.stride, params.padding.1);
    match (oh, ow) {
        (Some(oh), Some(ow)) if oh > 0 && ow > 0 => Ok(Shape::new(input.n, weights.n, oh, ow)),
        _ => Err(Error::ShapeMismatch(format!(
            "kernel {:?} does not fit input {input} with padding {:?}",
            params.kernel, params.padding
        ))),
    }
}

/// Direct six-loop cross-correlation. Slow; kept as the reference the fast path is tested against.
pub fn conv2d_naive(input: &Tensor, weights: &Tensor, bias: &[f32], params: &ConvParams) -> Result<Tensor> {
    let out_shape = conv_output_shape(input.shape, weights.shape, bias.len(), params)?;
    let (kh, kw) = params.kernel;
    let (ph, pw) = params.padding;
    let s = params.stride;
    let mut out = Tensor::zeros(out_shape);
    for n in 0..out_shape.n {
        for (co, &b) in bias.iter().enumerate() {
            for oy in 0..out_shape.h {
                for ox in 0..out_shape.w {
                    let mut acc = b;
                    for ci in 0..input.shape.c {
                        for ky in 0..kh {
                            let iy = (oy * s + ky) as isize - ph as isize;
                            if iy < 0 || iy >= input.shape.h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * s + kx) as isize - pw as isize;
                                if ix < 0 || ix >= input.shape.w as isize {
                                    continue;
                                }
                                acc += input.at(n, ci, iy as usize, ix as usize) * weights.at(co, ci, ky, kx);
                            }
                        }
                    }
                    out.set(n, co, oy, ox, acc);
                }
            }
        }
    }
    Ok(out)
}

/// Unfolds one sample into a `(ci*kh*kw) x (oh*ow)` patch matrix.
fn im2col(sample: &[f32], input: Shape, params: &ConvParams, oh: usize, ow: usize) -> Vec<f32> {
    let (kh, kw) = params.kernel;
    let (ph, pw) = params.padding;
    let s = params.stride;
    let cols = oh * ow;
    let mut col = vec![0.0f32; input.c * kh * kw * cols];
    let mut row = 0;
    for ci in 0..input.c {
        let plane = &sample[ci * input.plane()..(ci + 1) * input.plane()];
        for ky in 0..kh {
            for kx in 0..kw {
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..oh {
                    let iy = (oy * s + ky) as isize - ph as isize;
                    if iy < 0 || iy >= input.h as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * input.w..(iy as usize + 1) * input.w];
                    let dst_row = &mut dst[oy * ow..(oy + 1) * ow];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * s + kx) as isize - pw as isize;
                        if ix >= 0 && (ix as usize) < input.w {
                            *d = src_row[ix as usize];
                        }
                    }
                }
                row += 1;
            }
        }
    }
    col
}

/// One output channel: `out = bias + sum_k w[k] * patches[k]`.
#[inline]
fn gemm_row(out: &mut [f32], weights: &[f32], bias: f32, patches: &[f32]) {
    let cols = out.len();
    out.fill(bias);
    for (k, &wk) in weights.iter().enumerate() {
        if wk == 0.0 {
            continue;
        }
        let src = &patches[k * cols..(k + 1) * cols];
        for (o, &p) in out.iter_mut().zip(src) {
            *o += wk * p;
        }
    }
}

/// Cross-correlation via patch gathering and a row-wise matrix multiply.
///
/// Output channels are computed independently, so results are bit-identical
/// whether or not the `parallel` feature distributes them across threads.
pub fn conv2d(input: &Tensor, weights: &Tensor, bias: &[f32], params: &ConvParams) -> Result<Tensor> {
    let out_shape = conv_output_shape(input.shape, weights.shape, bias.len(), params)?;
    let k = weights.shape.c * weights.shape.h * weights.shape.w;
    let cols = out_shape.plane();
    let pointwise = params.kernel == (1, 1) && params.stride == 1 && params.padding == (0, 0);
    let mut out = Tensor::zeros(out_shape);
    for n in 0..input.shape.n {
        let gathered;
        let patches: &[f32] = if pointwise {
            input.sample(n)
        } else {
            gathered = im2col(input.sample(n), input.shape, params, out_shape.h, out_shape.w);
            &gathered
        };
        let dst = &mut out.data[n * out_shape.c * cols..(n + 1) * out_shape.c * cols];
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            dst.par_chunks_mut(cols).enumerate().for_each(|(co, row)| {
                gemm_row(row, &weights.data[co * k..(co + 1) * k], bias[co], patches);
            });
        }
        #[cfg(not(feature = "parallel"))]
        for (co, row) in dst.chunks_mut(cols).enumerate() {
            gemm_row(row, &weights.data[co * k..(co + 1) * k], bias[co], patches);
        }
    }
    Ok(out)
}

/// Max pooling; padded cells never win.
pub fn maxpool2d(input: &Tensor, kernel: (usize, usize), stride: usize, padding: (usize, usize)) -> Result<Tensor> {
    if stride == 0 {
        return Err(Error::InvalidArgument("pooling stride must be >= 1".into()));
    }
    let s = input.shape;
    let (kh, kw) = kernel;
    let oh = output_size(s.h, kh, stride, padding.0);
    let ow = output_size(s.w, kw, stride, padding.1);
    let (oh, ow) = match (oh, ow) {
        (Some(oh), Some(ow)) if oh > 0 && ow > 0 => (oh, ow),
        _ => {
            return Err(Error::ShapeMismatch(format!(
                "pool window {kernel:?} does not fit input {s}"
            )))
        }
    };
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, oh, ow));
    let mut dst = 0;
    for n in 0..s.n {
        for c in 0..s.c {
            let plane = &input.data[(n * s.c + c) * s.plane()..(n * s.c + c + 1) * s.plane()];
            for oy in 0..oh {
                let y0 = (oy * stride) as isize - padding.0 as isize;
                let ys = y0.max(0) as usize..((y0 + kh as isize).min(s.h as isize)).max(0) as usize;
                for ox in 0..ow {
                    let x0 = (ox * stride) as isize - padding.1 as isize;
                    let xs = x0.max(0) as usize..((x0 + kw as isize).min(s.w as isize)).max(0) as usize;
                    if ys.is_empty() || xs.is_empty() {
                        return Err(Error::EmptyWindow { row: oy, col: ox });
                    }
                    let mut m = f32::NEG_INFINITY;
                    for y in ys.clone() {
                        for &v in &plane[y * s.w + xs.start..y * s.w + xs.end] {
                            if v > m {
                                m = v;
                            }
                        }
                    }
                    out.data[dst] = m;
                    dst += 1;
                }
            }
        }
    }
    Ok(out)
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// Concatenated ReLU: `[relu(x), relu(-x)]` along channels.
pub fn crelu(input: &Tensor) -> Tensor {
    let s = input.shape;
    let block = s.c * s.plane();
    let mut data = Vec::with_capacity(2 * s.len());
    for n in 0..s.n {
        let src = &input.data[n * block..(n + 1) * block];
        data.extend(src.iter().map(|&v| v.max(0.0)));
        data.extend(src.iter().map(|&v| (-v).max(0.0)));
    }
    Tensor {
        shape: Shape::new(s.n, 2 * s.c, s.h, s.w),
        data,
    }
}

pub fn concat_channels(inputs: &[&Tensor]) -> Result<Tensor> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?
        .shape;
    let mut channels = 0;
    for t in inputs {
        let s = t.shape;
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(Error::ShapeMismatch(format!("cannot concat {s} with {first}")));
        }
        channels += s.c;
    }
    let out_shape = Shape::new(first.n, channels, first.h, first.w);
    let mut data = Vec::with_capacity(out_shape.len());
    for n in 0..first.n {
        for t in inputs {
            data.extend_from_slice(t.sample(n));
        }
    }
    Ok(Tensor { shape: out_shape, data })
}

/// Two-way softmax over consecutive channel pairs `(background, face)`.
pub fn softmax_pairs(logits: &Tensor) -> Result<Tensor> {
    let s = logits.shape;
    if !s.c.is_multiple_of(2) {
        return Err(Error::ShapeMismatch(format!(
            "softmax_pairs needs an even channel count, got {}",
            s.c
        )));
    }
    let plane = s.plane();
    let mut out = logits.clone();
    for n in 0..s.n {
        for pair in 0..s.c / 2 {
            let a = (n * s.c + 2 * pair) * plane;
            let b = a + plane;
            for i in 0..plane {
                let (p0, p1) = softmax2(logits.data[a + i], logits.data[b + i]);
                out.data[a + i] = p0;
                out.data[b + i] = p1;
            }
        }
    }
    Ok(out)
}

/// Numerically stable softmax of two logits.
#[inline]
pub fn softmax2(l0: f32, l1: f32) -> (f32, f32) {
    let m = l0.max(l1);
    let e0 = libm::expf(l0 - m);
    let e1 = libm::expf(l1 - m);
    let z = e0 + e1;
    (e0 / z, e1 / z)
}
