use faceboxes_core::bbox::BBox;
use faceboxes_core::evaluate::{match_detections, precision_recall, tpr_at_fp, GroundTruthSet, LabeledDetection};
use faceboxes_core::postprocess::Detection;
use faceboxes_oracles::{average_precision, greedy_match_brute_force};
use proptest::prelude::*;

fn det() -> impl Strategy<Value = Detection> {
    (0u8..30, 0u8..30, 5u8..20, 0u8..10).prop_map(|(x, y, s, score)| Detection {
        bbox: BBox::new(x as f32, y as f32, (x + s) as f32, (y + s) as f32),
        score: score as f32 / 10.0,
    })
}

fn gt() -> impl Strategy<Value = BBox> {
    (0u8..30, 0u8..30, 5u8..20).prop_map(|(x, y, s)| BBox::new(x as f32, y as f32, (x + s) as f32, (y + s) as f32))
}

fn labeled() -> impl Strategy<Value = Vec<LabeledDetection>> {
    prop::collection::vec((0u16..1000, any::<bool>()), 0..60).prop_map(|v| {
        v.into_iter()
            .map(|(s, t)| LabeledDetection {
                score: s as f32 / 1000.0,
                true_positive: t,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn greedy_matcher_equals_brute_force(dets in prop::collection::vec(det(), 0..=6), gts in prop::collection::vec(gt(), 0..=4)) {
        let mut set = GroundTruthSet::default();
        set.insert("img", gts.clone()).unwrap();
        let m = match_detections(&[("img".to_string(), dets.clone())], &set, 0.5).unwrap();
        let got: Vec<bool> = m.labeled.iter().map(|d| d.true_positive).collect();
        prop_assert_eq!(got, greedy_match_brute_force(&dets, &gts, 0.5));
        prop_assert!(m.matched["img"].iter().filter(|&&u| u).count() <= gts.len());
    }

    #[test]
    fn ap_matches_reference_and_ignores_monotone_rescaling(l in labeled(), extra in 0usize..5) {
        let tps = l.iter().filter(|d| d.true_positive).count();
        let total = tps + extra + 1;
        let pr = precision_recall(&l, total).unwrap();
        let mut ranked = l.clone();
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
        let reference = average_precision(&ranked.iter().map(|d| d.true_positive).collect::<Vec<_>>(), total);
        prop_assert!((pr.average_precision - reference).abs() < 1e-12);
        let warped: Vec<LabeledDetection> = l.iter().map(|d| LabeledDetection { score: d.score * d.score * 3.0 + 1.0, ..*d }).collect();
        prop_assert!((precision_recall(&warped, total).unwrap().average_precision - pr.average_precision).abs() < 1e-12);
        for w in pr.points.windows(2) {
            prop_assert!(w[1].0 >= w[0].0);
        }
    }

    #[test]
    fn trailing_false_positive_keeps_saturated_budgets(l in labeled(), budget in 1usize..40) {
        let total = l.len() + 1;
        let before = tpr_at_fp(&l, total, &[budget])[0];
        let mut more = l.clone();
        more.push(LabeledDetection { score: -1.0, true_positive: false });
        let after = tpr_at_fp(&more, total, &[budget])[0];
        prop_assert_eq!(before, after);
        prop_assert!((0.0..=1.0).contains(&after));
    }
}
