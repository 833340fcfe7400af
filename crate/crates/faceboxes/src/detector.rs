//! Image in, detections out: preprocessing, forward pass, anchors and post-processing.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use faceboxes_core::anchors::{default_configs, generate_anchors_with, AnchorLayerConfig, AnchorSet};
use faceboxes_core::augment::resize_bilinear;
use faceboxes_core::network::{build_faceboxes, forward, HeadOutputs, ModelWeights, NetworkDescriptor};
use faceboxes_core::postprocess::{run_postprocess, Detection, PostprocessConfig, PostprocessStats};
use faceboxes_core::targets::EncodeVariances;
use faceboxes_core::tensor::Tensor;

use crate::error::{Error, Result};
use crate::ppm::RgbImage;

/// Per-channel mean subtracted from `[0, 1]` pixel values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preprocess {
    pub mean: [f32; 3],
}

impl Default for Preprocess {
    fn default() -> Self {
        // 104/117/123 over 255
        Preprocess {
            mean: [0.4078, 0.4588, 0.4824],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub preprocess: Duration,
    pub forward: Duration,
    pub postprocess: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectOutcome {
    pub detections: Vec<Detection>,
    pub stats: PostprocessStats,
    pub times: StageTimes,
}

pub struct Detector {
    pub descriptor: NetworkDescriptor,
    pub weights: ModelWeights,
    pub anchor_configs: Vec<AnchorLayerConfig>,
    pub variances: EncodeVariances,
    pub postprocess: PostprocessConfig,
    pub preprocess: Preprocess,
    anchor_cache: Mutex<HashMap<(usize, usize), Arc<AnchorSet>>>,
}

impl Detector {
    pub fn new(weights: ModelWeights) -> Result<Self> {
        let descriptor = build_faceboxes();
        weights.validate(&descriptor)?;
        Ok(Detector {
            descriptor,
            weights,
            anchor_configs: default_configs(),
            variances: EncodeVariances::default(),
            postprocess: PostprocessConfig::default(),
            preprocess: Preprocess::default(),
            anchor_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn anchors(&self, width: usize, height: usize) -> Result<Arc<AnchorSet>> {
        if let Some(set) = self.anchor_cache.lock().unwrap().get(&(width, height)) {
            return Ok(set.clone());
        }
        let set = Arc::new(generate_anchors_with(&self.descriptor, width, height, &self.anchor_configs)?);
        self.anchor_cache
            .lock()
            .unwrap()
            .insert((width, height), set.clone());
        Ok(set)
    }

    pub fn forward(&self, image: &Tensor) -> Result<HeadOutputs> {
        Ok(forward(&self.weights, &self.descriptor, image)?)
    }

    /// Runs on an already normalized `(1, 3, h, w)` tensor.
    pub fn detect_tensor(&self, input: &Tensor) -> Result<DetectOutcome> {
        let (w, h) = (input.shape().w, input.shape().h);
        let t0 = Instant::now();
        let heads = self.forward(input)?;
        let t1 = Instant::now();
        let anchors = self.anchors(w, h)?;
        if heads.total_slots() != anchors.len() {
            return Err(Error::Invariant(format!(
                "{} head slots but {} anchors for {w}x{h}",
                heads.total_slots(),
                anchors.len()
            )));
        }
        let out = run_postprocess(&heads.predictions(0), &anchors, w, h, self.variances, &self.postprocess)?;
        let t2 = Instant::now();
        Ok(DetectOutcome {
            detections: out.detections,
            stats: out.stats,
            times: StageTimes {
                preprocess: Duration::ZERO,
                forward: t1 - t0,
                postprocess: t2 - t1,
            },
        })
    }

    /// Full pipeline at native size, or after an explicit resize with boxes mapped back.
    pub fn detect_image(&self, image: &RgbImage, resize: Option<(usize, usize)>) -> Result<DetectOutcome> {
        let t0 = Instant::now();
        let mut input = image.to_tensor(self.preprocess.mean);
        if let Some((rw, rh)) = resize {
            input = resize_bilinear(&input, rh, rw)?;
        }
        let prep = t0.elapsed();
        let mut outcome = self.detect_tensor(&input)?;
        outcome.times.preprocess = prep;
        if let Some((rw, rh)) = resize {
            let (sx, sy) = (image.width as f32 / rw as f32, image.height as f32 / rh as f32);
            for d in &mut outcome.detections {
                d.bbox = d.bbox.scale(sx, sy).clip(image.width as f32, image.height as f32);
            }
        }
        Ok(outcome)
    }
}
