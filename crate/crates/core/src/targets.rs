//! Training targets: anchor matching, box encoding, hard negative mining and the forward loss.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::anchors::AnchorSet;
use crate::bbox::{jaccard, BBox};
use crate::error::{Error, Result};
use crate::network::Predictions;

pub const DEFAULT_MATCH_THRESHOLD: f32 = 0.35;
/// Negatives kept per positive by hard negative mining.
pub const NEGATIVE_RATIO: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodeVariances {
    pub center: f32,
    pub size: f32,
}

impl Default for EncodeVariances {
    fn default() -> Self {
        EncodeVariances { center: 0.1, size: 0.2 }
    }
}

impl EncodeVariances {
    pub fn new(center: f32, size: f32) -> Result<Self> {
        if !(center > 0.0 && size > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "encode variances must be positive, got ({center}, {size})"
            )));
        }
        Ok(EncodeVariances { center, size })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTargets {
    pub labels: Vec<Label>,
    /// Ground-truth index for positives.
    pub assigned: Vec<Option<usize>>,
    /// Encoded offsets for positives, zero elsewhere.
    pub offsets: Vec<[f32; 4]>,
    pub selected_negatives: Vec<bool>,
}

impl TrainingTargets {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positive_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == Label::Positive).count()
    }

    pub fn selected_negative_count(&self) -> usize {
        self.selected_negatives.iter().filter(|&&s| s).count()
    }
}

/// Two-stage assignment of anchors to faces.
///
/// Stage 1: each face, in input order, claims its highest-overlap anchor
/// that no earlier face claimed (lowest index on ties, only if the overlap
/// is nonzero). Stage 2: every unclaimed anchor whose best overlap exceeds
/// `threshold` goes to that best face (lowest face index on ties).
pub fn match_boxes(anchors: &[BBox], gt: &[BBox], threshold: f32) -> Result<Vec<Option<usize>>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("match threshold {threshold} not in (0, 1)")));
    }
    let mut assigned = vec![None; anchors.len()];
    if gt.is_empty() {
        return Ok(assigned);
    }
    // overlaps[a * faces + f]
    let faces = gt.len();
    let overlaps: Vec<f32> = anchors
        .iter()
        .flat_map(|a| gt.iter().map(move |g| jaccard(a, g)))
        .collect();

    for f in 0..faces {
        let mut best: Option<(usize, f32)> = None;
        for a in 0..anchors.len() {
            if assigned[a].is_some() {
                continue;
            }
            let o = overlaps[a * faces + f];
            if o > 0.0 && best.is_none_or(|(_, b)| o > b) {
                best = Some((a, o));
            }
        }
        if let Some((a, _)) = best {
            assigned[a] = Some(f);
        }
    }
    let claimed: Vec<bool> = assigned.iter().map(Option::is_some).collect();
    for a in 0..anchors.len() {
        if claimed[a] {
            continue;
        }
        let row = &overlaps[a * faces..(a + 1) * faces];
        let mut best = 0;
        for f in 1..faces {
            if row[f] > row[best] {
                best = f;
            }
        }
        if row[best] > threshold {
            assigned[a] = Some(best);
        }
    }
    Ok(assigned)
}

/// Matches `gt` against the anchor set and encodes offsets for the positives.
pub fn match_anchors(anchors: &AnchorSet, gt: &[BBox], threshold: f32, variances: EncodeVariances) -> Result<TrainingTargets> {
    let boxes = anchors.boxes();
    let assigned = match_boxes(&boxes, gt, threshold)?;
    let mut offsets = vec![[0.0; 4]; boxes.len()];
    for (i, a) in assigned.iter().enumerate() {
        if let Some(f) = a {
            offsets[i] = encode_box(&boxes[i], &gt[*f], variances)?;
        }
    }
    Ok(TrainingTargets {
        labels: assigned
            .iter()
            .map(|a| if a.is_some() { Label::Positive } else { Label::Negative })
            .collect(),
        selected_negatives: vec![false; boxes.len()],
        assigned,
        offsets,
    })
}

/// Center offsets scaled by anchor size, log size ratios, each divided by its variance.
pub fn encode_box(anchor: &BBox, gt: &BBox, v: EncodeVariances) -> Result<[f32; 4]> {
    let (aw, ah) = (anchor.width(), anchor.height());
    let (gw, gh) = (gt.width(), gt.height());
    if !(aw > 0.0 && ah > 0.0) {
        return Err(Error::InvalidArgument(format!("anchor has non-positive size {aw}x{ah}")));
    }
    if !(gw > 0.0 && gh > 0.0) {
        return Err(Error::InvalidArgument(format!("ground truth has non-positive size {gw}x{gh}")));
    }
    let (ax, ay) = anchor.center();
    let (gx, gy) = gt.center();
    Ok([
        (gx - ax) / aw / v.center,
        (gy - ay) / ah / v.center,
        libm::logf(gw / aw) / v.size,
        libm::logf(gh / ah) / v.size,
    ])
}

pub fn decode_box(anchor: &BBox, offsets: &[f32; 4], v: EncodeVariances) -> BBox {
    let (aw, ah) = (anchor.width(), anchor.height());
    let (ax, ay) = anchor.center();
    let cx = ax + offsets[0] * v.center * aw;
    let cy = ay + offsets[1] * v.center * ah;
    let w = aw * libm::expf(offsets[2] * v.size);
    let h = ah * libm::expf(offsets[3] * v.size);
    BBox::from_center(cx, cy, w, h)
}

/// `-ln softmax(logits)[class]`, computed via log-sum-exp.
#[inline]
pub fn cross_entropy(logits: [f32; 2], class: usize) -> f32 {
    let m = logits[0].max(logits[1]);
    let lse = m + libm::logf(libm::expf(logits[0] - m) + libm::expf(logits[1] - m));
    lse - logits[class]
}

fn class_index(label: Label) -> usize {
    match label {
        Label::Negative => 0,
        Label::Positive => 1,
    }
}

/// Per-anchor classification loss against each anchor's own label.
pub fn classification_losses(preds: &Predictions, targets: &TrainingTargets) -> Result<Vec<f32>> {
    check_len(preds.len(), targets.len())?;
    Ok(preds
        .conf
        .iter()
        .zip(&targets.labels)
        .map(|(&logits, &label)| cross_entropy(logits, class_index(label)))
        .collect())
}

fn check_len(found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::ShapeMismatch(format!("{found} predictions for {expected} anchors")));
    }
    Ok(())
}

/// Picks the highest-loss negatives, at most three per positive (one when there are no positives).
pub fn hard_negative_mine(cls_loss: &[f32], targets: &TrainingTargets) -> Result<Vec<bool>> {
    check_len(cls_loss.len(), targets.len())?;
    let positives = targets.positive_count();
    let mut negatives: Vec<usize> = (0..targets.len())
        .filter(|&i| targets.labels[i] == Label::Negative)
        .collect();
    let quota = if positives == 0 { 1 } else { NEGATIVE_RATIO * positives }.min(negatives.len());
    // stable sort keeps lower indices first among equal losses
    negatives.sort_by(|&a, &b| cls_loss[b].total_cmp(&cls_loss[a]));
    let mut mask = vec![false; targets.len()];
    for &i in &negatives[..quota] {
        mask[i] = true;
    }
    Ok(mask)
}

/// Runs mining and stores the result in `targets`.
pub fn mine_targets(preds: &Predictions, targets: &mut TrainingTargets) -> Result<()> {
    let losses = classification_losses(preds, targets)?;
    targets.selected_negatives = hard_negative_mine(&losses, targets)?;
    Ok(())
}

/// `0.5 x^2` for `|x| < 1`, else `|x| - 0.5`.
#[inline]
pub fn smooth_l1(x: f32) -> f32 {
    let a = x.abs();
    if a < 1.0 {
        0.5 * x * x
    } else {
        a - 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionLoss {
    pub cls: f32,
    pub reg: f32,
    pub combined: f32,
}

/// Mean cross-entropy over positives and selected negatives plus mean smooth-L1 over positives.
pub fn detection_loss(preds: &Predictions, targets: &TrainingTargets) -> Result<DetectionLoss> {
    check_len(preds.len(), targets.len())?;
    let (mut cls_sum, mut cls_n) = (0.0f64, 0usize);
    let (mut reg_sum, mut reg_n) = (0.0f64, 0usize);
    for i in 0..targets.len() {
        let label = targets.labels[i];
        if label == Label::Positive || targets.selected_negatives[i] {
            cls_sum += cross_entropy(preds.conf[i], class_index(label)) as f64;
            cls_n += 1;
        }
        if label == Label::Positive {
            let t = &targets.offsets[i];
            reg_sum += preds.loc[i]
                .iter()
                .zip(t)
                .map(|(&p, &q)| smooth_l1(p - q) as f64)
                .sum::<f64>();
            reg_n += 1;
        }
    }
    let cls = if cls_n == 0 { 0.0 } else { (cls_sum / cls_n as f64) as f32 };
    let reg = if reg_n == 0 { 0.0 } else { (reg_sum / reg_n as f64) as f32 };
    Ok(DetectionLoss {
        cls,
        reg,
        combined: cls + reg,
    })
}
