use faceboxes_core::anchors::{default_configs, generate_anchors};
use faceboxes_core::bbox::BBox;
use faceboxes_core::network::Predictions;
use faceboxes_core::targets::{
    decode_box, detection_loss, encode_box, hard_negative_mine, match_anchors, match_boxes, EncodeVariances, Label,
};
use faceboxes_oracles::{iou, match_brute_force};
use proptest::prelude::*;

fn int_box() -> impl Strategy<Value = BBox> {
    (0u16..60, 0u16..60, 1u16..40, 1u16..40)
        .prop_map(|(x, y, w, h)| BBox::new(x as f32, y as f32, (x + w) as f32, (y + h) as f32))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matcher_equals_brute_force(
        anchors in prop::collection::vec(int_box(), 1..=20),
        faces in prop::collection::vec(int_box(), 0..=5),
        threshold in prop::sample::select(vec![0.2f32, 0.35, 0.5]),
    ) {
        let got = match_boxes(&anchors, &faces, threshold).unwrap();
        prop_assert_eq!(&got, &match_brute_force(&anchors, &faces, threshold));
        for (f, face) in faces.iter().enumerate() {
            let touches = anchors.iter().any(|a| iou(a, face) > 0.0);
            let claimed_anchors = got.iter().filter(|&&g| g.is_some()).count();
            if touches && claimed_anchors < anchors.len() {
                // a face can only lose out if every overlapping anchor was claimed first
                let has = got.contains(&Some(f));
                let all_taken = anchors.iter().enumerate().all(|(a, b)| iou(b, face) == 0.0 || got[a].is_some_and(|g| g < f));
                prop_assert!(has || all_taken);
            }
        }
    }

    #[test]
    fn encode_decode_round_trip(
        acx in -100.0f32..1100.0, acy in -100.0f32..1100.0, aside in 8.0f32..512.0,
        gcx in -100.0f32..1100.0, gcy in -100.0f32..1100.0, gw in 8.0f32..512.0, gh in 8.0f32..512.0,
    ) {
        let v = EncodeVariances::default();
        let anchor = BBox::from_center(acx, acy, aside, aside);
        let gt = BBox::from_center(gcx, gcy, gw, gh);
        let back = decode_box(&anchor, &encode_box(&anchor, &gt, v).unwrap(), v);
        for (a, b) in [(back.x_min, gt.x_min), (back.y_min, gt.y_min), (back.x_max, gt.x_max), (back.y_max, gt.y_max)] {
            prop_assert!((a - b).abs() < 1e-3, "{} vs {}", a, b);
        }
    }

    #[test]
    fn encoding_is_translation_invariant(dx in -64i32..64, dy in -64i32..64, side in 8u16..200, gx in 0u16..100, gy in 0u16..100, gs in 8u16..100) {
        let v = EncodeVariances::default();
        let anchor = BBox::from_center(100.0, 120.0, side as f32, side as f32);
        let gt = BBox::new(gx as f32, gy as f32, (gx + gs) as f32, (gy + gs) as f32);
        let a = encode_box(&anchor, &gt, v).unwrap();
        let b = encode_box(&anchor.translate(dx as f32, dy as f32), &gt.translate(dx as f32, dy as f32), v).unwrap();
        for k in 0..4 {
            prop_assert!((a[k] - b[k]).abs() < 1e-4);
        }
    }

    #[test]
    fn mining_respects_ratio(labels in prop::collection::vec(prop::bool::weighted(0.1), 1..200), seed in any::<u32>()) {
        let labels: Vec<Label> = labels.into_iter().map(|p| if p { Label::Positive } else { Label::Negative }).collect();
        let n = labels.len();
        let targets = faceboxes_core::targets::TrainingTargets {
            assigned: labels.iter().map(|&l| (l == Label::Positive).then_some(0)).collect(),
            offsets: vec![[0.0; 4]; n],
            selected_negatives: vec![false; n],
            labels,
        };
        let loss: Vec<f32> = (0..n).map(|i| ((i as u32).wrapping_mul(2654435761) ^ seed) as f32 / u32::MAX as f32).collect();
        let mask = hard_negative_mine(&loss, &targets).unwrap();
        let p = targets.positive_count();
        let negatives = n - p;
        let selected = mask.iter().filter(|&&m| m).count();
        let expected = if p == 0 { 1 } else { 3 * p }.min(negatives);
        prop_assert_eq!(selected, expected);
        for i in 0..n {
            if mask[i] {
                prop_assert_eq!(targets.labels[i], Label::Negative);
                for j in 0..n {
                    if targets.labels[j] == Label::Negative && !mask[j] {
                        prop_assert!(loss[j] <= loss[i]);
                    }
                }
            }
        }
    }
}

#[test]
fn anchor_set_matching_and_loss_are_finite() {
    let anchors = generate_anchors(640, 640, &default_configs()).unwrap();
    let faces = [BBox::new(100.0, 100.0, 160.0, 170.0), BBox::new(400.0, 300.0, 420.0, 318.0)];
    let mut t = match_anchors(&anchors, &faces, 0.35, EncodeVariances::default()).unwrap();
    for f in 0..faces.len() {
        assert!(t.assigned.contains(&Some(f)));
    }
    let preds = Predictions {
        conf: vec![[0.3, -0.2]; anchors.len()],
        loc: vec![[0.0; 4]; anchors.len()],
    };
    faceboxes_core::targets::mine_targets(&preds, &mut t).unwrap();
    assert_eq!(t.selected_negative_count(), 3 * t.positive_count());
    let loss = detection_loss(&preds, &t).unwrap();
    assert!(loss.cls > 0.0 && loss.reg >= 0.0 && loss.combined.is_finite());
}

#[test]
fn shifting_the_whole_scene_keeps_targets() {
    let v = EncodeVariances::default();
    let anchors = generate_anchors(256, 256, &default_configs()).unwrap();
    let faces = [BBox::new(40.0, 50.0, 100.0, 118.0)];
    let base = match_anchors(&anchors, &faces, 0.35, v).unwrap();
    // shift by one full Inception3 stride so every anchor lands on another anchor
    let mut shifted_anchors = anchors.clone();
    for a in &mut shifted_anchors.anchors {
        a.cx += 32.0;
        a.cy += 64.0;
    }
    let shifted = match_anchors(&shifted_anchors, &[faces[0].translate(32.0, 64.0)], 0.35, v).unwrap();
    assert_eq!(base.labels, shifted.labels);
    for (a, b) in base.offsets.iter().zip(&shifted.offsets) {
        for k in 0..4 {
            assert!((a[k] - b[k]).abs() < 1e-4);
        }
    }
}
