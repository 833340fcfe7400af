//! Slow, obviously-correct reference versions of the detector's combinatorial steps.
//!
//! Nothing here calls into the code paths it is used to check; only plain
//! data types are shared.

use faceboxes_core::bbox::BBox;
use faceboxes_core::postprocess::Detection;

/// Intersection over union written out from scratch.
pub fn iou(a: &BBox, b: &BBox) -> f32 {
    let iw = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let ih = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    let inter = if iw > 0.0 && ih > 0.0 { iw * ih } else { 0.0 };
    let area = |r: &BBox| (r.x_max - r.x_min).max(0.0) * (r.y_max - r.y_min).max(0.0);
    let union = area(a) + area(b) - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Index of the maximum of `f` over `items`, first index on ties, skipping `None`s.
fn argmax_first(values: impl Iterator<Item = Option<f32>>) -> Option<(usize, f32)> {
    let mut best: Option<(usize, f32)> = None;
    for (i, v) in values.enumerate() {
        if let Some(v) = v {
            match best {
                Some((_, b)) if v <= b => {}
                _ => best = Some((i, v)),
            }
        }
    }
    best
}

/// Exhaustive two-stage matcher: best anchor per face, then threshold scan.
pub fn match_brute_force(anchors: &[BBox], faces: &[BBox], threshold: f32) -> Vec<Option<usize>> {
    let mut out = vec![None; anchors.len()];
    for (f, face) in faces.iter().enumerate() {
        let best = argmax_first(anchors.iter().enumerate().map(|(a, anchor)| {
            let o = iou(anchor, face);
            (out[a].is_none() && o > 0.0).then_some(o)
        }));
        if let Some((a, _)) = best {
            out[a] = Some(f);
        }
    }
    let stage_one = out.clone();
    for (a, anchor) in anchors.iter().enumerate() {
        if stage_one[a].is_some() {
            continue;
        }
        if let Some((f, o)) = argmax_first(faces.iter().map(|face| Some(iou(anchor, face)))) {
            if o > threshold {
                out[a] = Some(f);
            }
        }
    }
    out
}

/// O(n^2) suppression: repeatedly take the best survivor and strike its neighbours.
pub fn nms_brute_force(dets: &[Detection], threshold: f32) -> Vec<usize> {
    let mut alive = vec![true; dets.len()];
    let mut keep = Vec::new();
    loop {
        let best = argmax_first(dets.iter().enumerate().map(|(i, d)| alive[i].then_some(d.score)));
        let Some((k, _)) = best else { break };
        keep.push(k);
        alive[k] = false;
        for (j, d) in dets.iter().enumerate() {
            if alive[j] && iou(&dets[k].bbox, &d.bbox) > threshold {
                alive[j] = false;
            }
        }
    }
    keep
}

/// Score-ordered greedy TP/FP labelling for one image, in input order.
pub fn greedy_match_brute_force(dets: &[Detection], gts: &[BBox], threshold: f32) -> Vec<bool> {
    let mut taken = vec![false; gts.len()];
    let mut done = vec![false; dets.len()];
    let mut tp = vec![false; dets.len()];
    for _ in 0..dets.len() {
        let (d, _) = argmax_first(dets.iter().enumerate().map(|(i, x)| (!done[i]).then_some(x.score))).unwrap();
        done[d] = true;
        if let Some((g, o)) = argmax_first(gts.iter().enumerate().map(|(g, b)| (!taken[g]).then(|| iou(&dets[d].bbox, b)))) {
            if o >= threshold {
                taken[g] = true;
                tp[d] = true;
            }
        }
    }
    tp
}

/// Output side of a conv/pool window chain: `floor((n + 2p - k) / s) + 1`.
pub fn window_output(n: usize, k: usize, s: usize, p: usize) -> usize {
    (n + 2 * p - k) / s + 1
}

/// Feature-map side at Inception3, Conv3_2 and Conv4_2 for one image side,
/// following the layer list by hand.
pub fn source_sides(side: usize) -> [usize; 3] {
    let conv1 = window_output(side, 7, 4, 3);
    let pool1 = window_output(conv1, 3, 2, 1);
    let conv2 = window_output(pool1, 5, 2, 2);
    let inception3 = window_output(conv2, 3, 2, 1);
    let conv3_2 = window_output(inception3, 3, 2, 1);
    let conv4_2 = window_output(conv3_2, 3, 2, 1);
    [inception3, conv3_2, conv4_2]
}

/// Anchor count from per-layer cells and anchors per cell (16 + 4 + 1, 1, 1).
pub fn anchor_count(width: usize, height: usize) -> usize {
    let (w, h) = (source_sides(width), source_sides(height));
    let per_cell = [4 * 4 + 2 * 2 + 1, 1, 1];
    (0..3).map(|i| w[i] * h[i] * per_cell[i]).sum()
}

/// All-points interpolated AP recomputed from a ranked TP/FP sequence.
pub fn average_precision(ranked_tp: &[bool], total: usize) -> f64 {
    let mut recall = vec![0.0];
    let mut precision = vec![0.0];
    let mut tp = 0;
    for (i, &t) in ranked_tp.iter().enumerate() {
        tp += t as usize;
        recall.push(tp as f64 / total as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    recall.push(1.0);
    precision.push(0.0);
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    (1..recall.len())
        .filter(|&i| recall[i] != recall[i - 1])
        .map(|i| (recall[i] - recall[i - 1]) * precision[i])
        .sum()
}
