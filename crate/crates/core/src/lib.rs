//! Building blocks of the FaceBoxes CPU face detector.
//!
//! The crate is `no_std` (with `alloc`) so the numeric core can be embedded
//! anywhere; file formats, images and the command-line tool live in the
//! companion `faceboxes` crate. With the `parallel` feature (on by default)
//! convolutions spread output channels over the rayon thread pool.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod anchors;
pub mod augment;
pub mod bbox;
pub mod error;
pub mod evaluate;
pub mod network;
pub mod postprocess;
pub mod targets;
pub mod tensor;
pub mod weights;

pub use crate::anchors::{generate_anchors, Anchor, AnchorLayerConfig, AnchorSet};
pub use crate::bbox::{jaccard, BBox};
pub use crate::error::{Error, Result};
pub use crate::network::{build_faceboxes, forward, xavier_init, HeadOutputs, ModelWeights, NetworkDescriptor};
pub use crate::postprocess::{run_postprocess, Detection, PostprocessConfig};
pub use crate::targets::{EncodeVariances, TrainingTargets};
pub use crate::tensor::{ConvParams, Shape, Tensor};
