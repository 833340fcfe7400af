//! FBXW binary weight format.
//!
//! ```text
//! "FBXW" | u32 version | u64 descriptor hash
//! repeated: u32 name_len | name | u32 dims[4] | f32 weights[..] | f32 bias[dims[0]]
//! ```
//!
//! All integers and floats are little-endian. Layers follow the
//! descriptor's canonical convolution order.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::network::{ConvWeights, ModelWeights, NetworkDescriptor};
use crate::tensor::{Shape, Tensor};

pub const MAGIC: [u8; 4] = *b"FBXW";
pub const FORMAT_VERSION: u32 = 1;

pub fn encoded_len(weights: &ModelWeights) -> usize {
    16 + weights
        .layers
        .iter()
        .map(|l| 4 + l.name.len() + 16 + 4 * (l.weights.shape().len() + l.bias.len()))
        .sum::<usize>()
}

pub fn encode(weights: &ModelWeights) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len(weights));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&weights.version.to_le_bytes());
    out.extend_from_slice(&weights.descriptor_hash.to_le_bytes());
    for layer in &weights.layers {
        out.extend_from_slice(&(layer.name.len() as u32).to_le_bytes());
        out.extend_from_slice(layer.name.as_bytes());
        for d in layer.weights.shape().dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in layer.weights.data().iter().chain(&layer.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Truncated);
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or(Error::Truncated)?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Parses an FBXW buffer without checking it against a descriptor.
pub fn decode_unchecked(bytes: &[u8]) -> Result<ModelWeights> {
    let mut r = Reader { bytes };
    if r.take(4).map_err(|_| Error::BadMagic)? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::BadVersion(version));
    }
    let descriptor_hash = r.u64()?;
    let mut layers = Vec::new();
    while !r.bytes.is_empty() {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::InvalidArgument("layer name is not UTF-8".into()))?;
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        let weights = Tensor::from_vec(shape, r.floats(shape.len())?)?;
        let bias = r.floats(shape.n)?;
        layers.push(ConvWeights { name, weights, bias });
    }
    Ok(ModelWeights {
        version,
        descriptor_hash,
        layers,
    })
}

/// Parses and validates an FBXW buffer against `descriptor`.
pub fn decode(bytes: &[u8], descriptor: &NetworkDescriptor) -> Result<ModelWeights> {
    let weights = decode_unchecked(bytes)?;
    weights.validate(descriptor)?;
    Ok(weights)
}
