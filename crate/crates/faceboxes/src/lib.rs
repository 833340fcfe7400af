//! File formats, weight files, the end-to-end detector and the `faceboxes` CLI
//! on top of [`faceboxes_core`].

pub mod cli;
pub mod detector;
pub mod error;
pub mod formats;
pub mod model;
pub mod ppm;

pub use crate::detector::{Detector, Preprocess};
pub use crate::error::{Error, Result};
pub use faceboxes_core as core;
