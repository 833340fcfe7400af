//! Discrete detection evaluation: greedy matching, PR/AP and TPR at a false-positive budget.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::bbox::{jaccard, BBox};
use crate::error::{Error, Result};
use crate::postprocess::Detection;

pub const DEFAULT_IOU_THRESHOLD: f32 = 0.5;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruthSet {
    pub images: BTreeMap<String, Vec<BBox>>,
}

impl GroundTruthSet {
    pub fn total_faces(&self) -> usize {
        self.images.values().map(Vec::len).sum()
    }

    pub fn insert(&mut self, id: impl Into<String>, boxes: Vec<BBox>) -> Result<()> {
        let id = id.into();
        if self.images.contains_key(&id) {
            return Err(Error::InvalidArgument(format!("duplicate image id {id}")));
        }
        self.images.insert(id, boxes);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledDetection {
    pub score: f32,
    pub true_positive: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    /// Images in input order, detections in input order within each image.
    pub labeled: Vec<LabeledDetection>,
    /// Which ground-truth boxes were matched, per image.
    pub matched: BTreeMap<String, Vec<bool>>,
}

/// Greedy, score-ordered one-to-one matching per image.
///
/// A detection is a true positive when the unmatched ground truth it overlaps
/// most has IoU >= `iou_threshold`; that ground truth is then consumed.
pub fn match_detections(dets: &[(String, Vec<Detection>)], gts: &GroundTruthSet, iou_threshold: f32) -> Result<MatchResult> {
    let unknown: Vec<String> = dets
        .iter()
        .filter(|(id, _)| !gts.images.contains_key(id))
        .map(|(id, _)| id.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownImages(unknown));
    }
    let mut result = MatchResult {
        labeled: Vec::new(),
        matched: gts
            .images
            .iter()
            .map(|(id, boxes)| (id.clone(), vec![false; boxes.len()]))
            .collect(),
    };
    for (id, image_dets) in dets {
        let gt = &gts.images[id];
        let used = result.matched.get_mut(id).expect("all ids present");
        let mut order: Vec<usize> = (0..image_dets.len()).collect();
        order.sort_by(|&a, &b| image_dets[b].score.total_cmp(&image_dets[a].score));
        let mut tp = vec![false; image_dets.len()];
        for &d in &order {
            let mut best: Option<(usize, f32)> = None;
            for (g, gbox) in gt.iter().enumerate() {
                if used[g] {
                    continue;
                }
                let o = jaccard(&image_dets[d].bbox, gbox);
                if best.is_none_or(|(_, b)| o > b) {
                    best = Some((g, o));
                }
            }
            if let Some((g, o)) = best {
                if o >= iou_threshold {
                    used[g] = true;
                    tp[d] = true;
                }
            }
        }
        result.labeled.extend(image_dets.iter().zip(tp).map(|(d, t)| LabeledDetection {
            score: d.score,
            true_positive: t,
        }));
    }
    Ok(result)
}

/// Stable descending-score order over all images.
fn ranked(labeled: &[LabeledDetection]) -> Vec<LabeledDetection> {
    let mut v = labeled.to_vec();
    v.sort_by(|a, b| b.score.total_cmp(&a.score));
    v
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrCurve {
    /// `(recall, precision)` after each ranked detection.
    pub points: Vec<(f64, f64)>,
    pub average_precision: f64,
}

/// PR curve and all-points interpolated AP (area under the precision envelope).
pub fn precision_recall(labeled: &[LabeledDetection], total_faces: usize) -> Result<PrCurve> {
    if total_faces == 0 {
        return Err(Error::InvalidArgument("precision/recall needs at least one face".into()));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut points = Vec::with_capacity(labeled.len());
    for d in ranked(labeled) {
        if d.true_positive {
            tp += 1;
        } else {
            fp += 1;
        }
        points.push((tp as f64 / total_faces as f64, tp as f64 / (tp + fp) as f64));
    }
    // envelope: best precision at any recall >= r
    let mut envelope: Vec<f64> = points.iter().map(|p| p.1).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (i, &(recall, _)) in points.iter().enumerate() {
        if recall > prev_recall {
            ap += (recall - prev_recall) * envelope[i];
            prev_recall = recall;
        }
    }
    Ok(PrCurve {
        points,
        average_precision: ap,
    })
}

/// `(cumulative false positives, true positive rate)` after each ranked detection.
pub fn roc_points(labeled: &[LabeledDetection], total_faces: usize) -> Vec<(usize, f64)> {
    let (mut tp, mut fp) = (0usize, 0usize);
    ranked(labeled)
        .into_iter()
        .map(|d| {
            if d.true_positive {
                tp += 1;
            } else {
                fp += 1;
            }
            (fp, rate(tp, total_faces))
        })
        .collect()
}

fn rate(tp: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        tp as f64 / total as f64
    }
}

/// True positive rate reached before the cumulative false-positive count exceeds each budget.
pub fn tpr_at_fp(labeled: &[LabeledDetection], total_faces: usize, budgets: &[usize]) -> Vec<f64> {
    let ranked = ranked(labeled);
    budgets
        .iter()
        .map(|&budget| {
            let (mut tp, mut fp) = (0usize, 0usize);
            for d in &ranked {
                if d.true_positive {
                    tp += 1;
                } else {
                    fp += 1;
                    if fp > budget {
                        break;
                    }
                }
            }
            rate(tp, total_faces)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub pr: PrCurve,
    pub roc: Vec<(usize, f64)>,
    pub budgets: Vec<usize>,
    pub tpr_at_fp: Vec<f64>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub total_faces: usize,
}

pub fn evaluate(dets: &[(String, Vec<Detection>)], gts: &GroundTruthSet, iou_threshold: f32, budgets: &[usize]) -> Result<EvalResult> {
    let matched = match_detections(dets, gts, iou_threshold)?;
    let total = gts.total_faces();
    let tp = matched.labeled.iter().filter(|d| d.true_positive).count();
    Ok(EvalResult {
        pr: precision_recall(&matched.labeled, total)?,
        roc: roc_points(&matched.labeled, total),
        budgets: budgets.to_vec(),
        tpr_at_fp: tpr_at_fp(&matched.labeled, total, budgets),
        true_positives: tp,
        false_positives: matched.labeled.len() - tp,
        total_faces: total,
    })
}
