use faceboxes_core::anchors::{default_configs, generate_anchors};
use faceboxes_core::bbox::BBox;
use faceboxes_core::network::Predictions;
use faceboxes_core::postprocess::{decode_all, nms, nms_indices, run_postprocess, Detection, PostprocessConfig};
use faceboxes_core::targets::{decode_box, EncodeVariances};
use faceboxes_oracles::{iou, nms_brute_force};
use proptest::prelude::*;

fn det_strategy() -> impl Strategy<Value = Detection> {
    (0u16..200, 0u16..200, 1u16..60, 1u16..60, 0u8..20).prop_map(|(x, y, w, h, s)| Detection {
        bbox: BBox::new(x as f32, y as f32, (x + w) as f32, (y + h) as f32),
        // coarse scores force plenty of ties
        score: s as f32 / 20.0,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn nms_matches_brute_force(dets in prop::collection::vec(det_strategy(), 0..120), thr in prop::sample::select(vec![0.1f32, 0.3, 0.5, 0.7])) {
        let keep = nms_indices(&dets, thr);
        prop_assert_eq!(&keep, &nms_brute_force(&dets, thr));
        for (i, &a) in keep.iter().enumerate() {
            for &b in &keep[i + 1..] {
                prop_assert!(iou(&dets[a].bbox, &dets[b].bbox) <= thr);
                prop_assert!(dets[a].score >= dets[b].score);
            }
        }
    }

    #[test]
    fn raising_threshold_never_adds_detections(seed in any::<u64>(), lo in 0.05f32..0.5, bump in 0.0f32..0.4) {
        let anchors = generate_anchors(256, 256, &default_configs()).unwrap();
        let mut x = seed | 1;
        let mut next = || { x ^= x << 13; x ^= x >> 7; x ^= x << 17; (x % 1000) as f32 / 250.0 - 2.0 };
        let preds = Predictions {
            conf: (0..anchors.len()).map(|_| [next(), next()]).collect(),
            loc: (0..anchors.len()).map(|_| [next() * 0.5, next() * 0.5, next() * 0.5, next() * 0.5]).collect(),
        };
        let v = EncodeVariances::default();
        let base = PostprocessConfig { conf_threshold: lo, ..Default::default() };
        let higher = PostprocessConfig { conf_threshold: (lo + bump).min(0.99), ..Default::default() };
        let a = run_postprocess(&preds, &anchors, 256, 256, v, &base).unwrap();
        let b = run_postprocess(&preds, &anchors, 256, 256, v, &higher).unwrap();
        prop_assert!(a.detections.len() <= 200);
        prop_assert!(b.detections.len() <= a.detections.len());
        for d in &a.detections {
            prop_assert!(d.bbox.x_min >= 0.0 && d.bbox.x_max <= 256.0 && d.bbox.y_min >= 0.0 && d.bbox.y_max <= 256.0);
            prop_assert!((0.0..=1.0).contains(&d.score));
        }
    }
}

#[test]
fn decode_preserves_anchor_order() {
    let anchors = generate_anchors(320, 256, &default_configs()).unwrap();
    let v = EncodeVariances::default();
    let preds = Predictions {
        conf: (0..anchors.len()).map(|i| [0.0, (i % 7) as f32 - 3.0]).collect(),
        loc: (0..anchors.len()).map(|i| [(i % 5) as f32 * 0.1, 0.2, -0.1, (i % 3) as f32 * 0.05]).collect(),
    };
    let out = decode_all(&preds, &anchors, v).unwrap();
    for (i, d) in out.iter().enumerate() {
        assert_eq!(d.bbox, decode_box(&anchors.anchors[i].to_box(), &preds.loc[i], v));
    }
}

#[test]
fn below_threshold_everywhere_gives_nothing() {
    let anchors = generate_anchors(640, 640, &default_configs()).unwrap();
    let preds = Predictions {
        conf: vec![[5.0, -5.0]; anchors.len()],
        loc: vec![[0.0; 4]; anchors.len()],
    };
    let out = run_postprocess(&preds, &anchors, 640, 640, EncodeVariances::default(), &PostprocessConfig::default()).unwrap();
    assert!(out.detections.is_empty());
    assert_eq!(out.stats.decoded, 8525);
}

#[test]
fn identical_duplicates_collapse() {
    let d = Detection {
        bbox: BBox::new(1.0, 1.0, 5.0, 5.0),
        score: 0.4,
    };
    assert_eq!(nms(&[d; 10], 0.99), [d]);
}
