//! Decoding head outputs into scored boxes, greedy NMS and the inference chain.

use alloc::format;
use alloc::vec::Vec;

use crate::anchors::AnchorSet;
use crate::bbox::{jaccard, BBox};
use crate::error::{Error, Result};
use crate::network::Predictions;
use crate::targets::{decode_box, EncodeVariances};
use crate::tensor::softmax2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostprocessConfig {
    pub conf_threshold: f32,
    pub pre_nms_top_k: usize,
    pub nms_overlap: f32,
    pub post_nms_top_k: usize,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        PostprocessConfig {
            conf_threshold: 0.05,
            pre_nms_top_k: 400,
            nms_overlap: 0.3,
            post_nms_top_k: 200,
        }
    }
}

impl PostprocessConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f32| v > 0.0 && v < 1.0;
        if !unit(self.conf_threshold) || !unit(self.nms_overlap) {
            return Err(Error::InvalidArgument(format!(
                "thresholds must lie in (0, 1): conf {}, nms {}",
                self.conf_threshold, self.nms_overlap
            )));
        }
        if self.pre_nms_top_k == 0 || self.post_nms_top_k == 0 {
            return Err(Error::InvalidArgument("top-k limits must be positive".into()));
        }
        Ok(())
    }
}

/// One unclipped box and face probability per anchor, in anchor order.
pub fn decode_all(preds: &Predictions, anchors: &AnchorSet, v: EncodeVariances) -> Result<Vec<Detection>> {
    if preds.len() != anchors.len() || preds.loc.len() != anchors.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} head slots for {} anchors",
            preds.len(),
            anchors.len()
        )));
    }
    Ok(anchors
        .anchors
        .iter()
        .zip(preds.loc.iter().zip(&preds.conf))
        .map(|(anchor, (loc, conf))| Detection {
            bbox: decode_box(&anchor.to_box(), loc, v),
            score: softmax2(conf[0], conf[1]).1,
        })
        .collect())
}

/// Indices sorted by score descending; equal scores keep index order.
fn rank_by_score(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    order
}

/// Greedy suppression: keep the best remaining box, drop everything overlapping it by more than `overlap`.
pub fn nms_indices(dets: &[Detection], overlap: f32) -> Vec<usize> {
    let order = rank_by_score(dets);
    let mut suppressed = alloc::vec![false; order.len()];
    let mut keep = Vec::new();
    for i in 0..order.len() {
        if suppressed[i] {
            continue;
        }
        let kept = &dets[order[i]].bbox;
        keep.push(order[i]);
        for j in i + 1..order.len() {
            if !suppressed[j] && jaccard(kept, &dets[order[j]].bbox) > overlap {
                suppressed[j] = true;
            }
        }
    }
    keep
}

pub fn nms(dets: &[Detection], overlap: f32) -> Vec<Detection> {
    nms_indices(dets, overlap).into_iter().map(|i| dets[i]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PostprocessStats {
    pub decoded: usize,
    pub above_threshold: usize,
    /// Decoded boxes with non-positive (or non-finite) size, dropped before NMS.
    pub degenerate: usize,
    pub after_nms: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PostprocessOutput {
    pub detections: Vec<Detection>,
    pub stats: PostprocessStats,
}

/// Decode, threshold, top-k, NMS, top-k, clip. Output is sorted by score.
pub fn run_postprocess(
    preds: &Predictions,
    anchors: &AnchorSet,
    image_w: usize,
    image_h: usize,
    v: EncodeVariances,
    cfg: &PostprocessConfig,
) -> Result<PostprocessOutput> {
    let decoded = decode_all(preds, anchors, v)?;
    Ok(filter_detections(decoded, image_w, image_h, cfg))
}

/// The post-decode part of [`run_postprocess`].
pub fn filter_detections(decoded: Vec<Detection>, image_w: usize, image_h: usize, cfg: &PostprocessConfig) -> PostprocessOutput {
    let mut stats = PostprocessStats {
        decoded: decoded.len(),
        ..Default::default()
    };
    let mut candidates = Vec::new();
    for d in decoded {
        if d.score.is_nan() || d.score <= cfg.conf_threshold {
            continue;
        }
        stats.above_threshold += 1;
        let b = &d.bbox;
        if !(b.width() > 0.0 && b.height() > 0.0) || !b.is_valid() {
            stats.degenerate += 1;
            continue;
        }
        candidates.push(d);
    }
    let top: Vec<Detection> = rank_by_score(&candidates)
        .into_iter()
        .take(cfg.pre_nms_top_k)
        .map(|i| candidates[i])
        .collect();
    let mut kept = nms(&top, cfg.nms_overlap);
    stats.after_nms = kept.len();
    kept.truncate(cfg.post_nms_top_k);
    for d in &mut kept {
        d.bbox = d.bbox.clip(image_w as f32, image_h as f32);
    }
    PostprocessOutput { detections: kept, stats }
}
