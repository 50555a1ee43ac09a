use lsenet::metrics::{binary_collapse, iou_per_class, miou, report, binary_class_names, ConfusionMatrix};
use proptest::prelude::*;

fn mask_pair() -> impl Strategy<Value = (usize, Vec<u8>, Vec<u8>)> {
    (2usize..=6, 1usize..=16, 1usize..=16).prop_flat_map(|(k, h, w)| {
        (Just(k), prop::collection::vec(0..k as u8, h * w), prop::collection::vec(0..k as u8, h * w))
    })
}

fn matrix(k: usize, pred: &[u8], truth: &[u8]) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::new(k);
    cm.accumulate(pred, truth).unwrap();
    cm
}

/// Intersection and union of the pixel sets, counted directly.
fn brute(k: usize, pred: &[u8], truth: &[u8]) -> Vec<Option<(u64, u64)>> {
    (0..k as u8)
        .map(|c| {
            let inter = pred.iter().zip(truth).filter(|(p, t)| **p == c && **t == c).count() as u64;
            let union = pred.iter().zip(truth).filter(|(p, t)| **p == c || **t == c).count() as u64;
            (union > 0).then_some((inter, union))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn iou_equals_pixel_sets((k, pred, truth) in mask_pair()) {
        let cm = matrix(k, &pred, &truth);
        let want = brute(k, &pred, &truth);
        prop_assert_eq!(cm.iou_fractions(), want.clone());
        let defined: Vec<(u64, u64)> = want.into_iter().flatten().collect();
        let m = defined.iter().map(|&(i, u)| i as f64 / u as f64).sum::<f64>() / defined.len() as f64;
        prop_assert_eq!(miou(&cm), Some(m));
    }

    #[test]
    fn collapse_commutes_with_scoring((k, pred, truth) in mask_pair()) {
        let collapsed = matrix(2, &binary_collapse(&pred), &binary_collapse(&truth));
        prop_assert_eq!(matrix(k, &pred, &truth).collapse(), collapsed);
    }

    #[test]
    fn accumulation_order_is_irrelevant((k, pred, truth) in mask_pair(), cut in 0usize..256) {
        let cut = cut.min(pred.len());
        let mut a = matrix(k, &pred[..cut], &truth[..cut]);
        a.accumulate(&pred[cut..], &truth[cut..]).unwrap();
        let mut b = matrix(k, &pred[cut..], &truth[cut..]);
        b.merge(&matrix(k, &pred[..cut], &truth[..cut])).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a, matrix(k, &pred, &truth));
    }
}

#[test]
fn spot_value_half() {
    // class 1: TP 2, FP 1, FN 1
    let cm = matrix(2, &[1, 1, 1, 0, 0], &[1, 1, 0, 1, 0]);
    assert_eq!(iou_per_class(&cm)[1], Some(0.5));
}

#[test]
fn self_evaluation_is_perfect() {
    let truth: Vec<u8> = (0..200).map(|i| (i * 7 % 12) as u8).collect();
    assert_eq!(miou(&matrix(12, &truth, &truth)), Some(1.0));
    let r = report(&matrix(12, &truth, &truth).collapse(), &binary_class_names()).unwrap();
    assert_eq!(r.miou, Some(100.0));
}

#[test]
fn mismatched_masks_are_rejected() {
    let mut cm = ConfusionMatrix::new(3);
    assert!(cm.accumulate(&[0, 1], &[0]).is_err());
    assert!(cm.accumulate(&[5], &[0]).is_err());
    assert!(cm.merge(&ConfusionMatrix::new(2)).is_err());
}
