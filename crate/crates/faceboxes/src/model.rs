//! FBXW weight files on disk.

use std::fs;
use std::path::Path;

use faceboxes_core::network::{ModelWeights, NetworkDescriptor};
use faceboxes_core::weights;

use crate::error::{Error, Result};

pub fn save_weights(model: &ModelWeights, path: &Path) -> Result<()> {
    fs::write(path, weights::encode(model)).map_err(|e| Error::io(path, e))
}

/// Reads and validates magic, version, descriptor hash and every layer shape.
pub fn load_weights(path: &Path, descriptor: &NetworkDescriptor) -> Result<ModelWeights> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(weights::decode(&bytes, descriptor)?)
}
