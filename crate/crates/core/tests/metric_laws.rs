mod common;

use ndarray::Array1;
use proptest::prelude::*;
use resvpr_core::metrics::{accuracy, is_match_frames, pr_auc, recall_at_n};
use resvpr_core::{MatchContext, PredictionRecord};

fn records_strategy() -> impl Strategy<Value = (Vec<PredictionRecord>, f64)> {
    (2usize..12, 1usize..40, 0u32..3).prop_flat_map(|(classes, queries, tol)| {
        let row = (prop::collection::vec(0u8..6, classes), 0..classes);
        prop::collection::vec(row, queries).prop_map(move |rows| {
            let records = rows
                .into_iter()
                .enumerate()
                .map(|(q, (s, truth))| {
                    // Coarse scores so that ties actually occur.
                    let scores = Array1::from_iter(s.iter().map(|&v| v as f64 / 5.0));
                    PredictionRecord::from_scores(q, scores.view(), classes, truth).unwrap()
                })
                .collect();
            (records, tol as f64)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn recall_is_monotone_and_starts_at_accuracy((records, tol) in records_strategy()) {
        let ctx = MatchContext::frames(tol);
        let classes = records[0].classes;
        let acc = accuracy(&records, &ctx).unwrap();
        prop_assert_eq!(recall_at_n(&records, 1, &ctx).unwrap(), acc);
        let mut prev = acc;
        for n in 2..=classes {
            let r = recall_at_n(&records, n, &ctx).unwrap();
            prop_assert!(r >= prev);
            prev = r;
        }
        prop_assert_eq!(prev, 1.0);
        prop_assert!(recall_at_n(&records, classes + 1, &ctx).is_err());
    }

    #[test]
    fn auc_matches_brute_force((records, tol) in records_strategy()) {
        let ctx = MatchContext::frames(tol);
        let auc = pr_auc(&records, &ctx).unwrap();
        let conf: Vec<f64> = records.iter().map(|r| r.confidence).collect();
        let correct: Vec<bool> = records.iter().map(|r| (r.top1() as f64 - r.truth as f64).abs() <= tol).collect();
        prop_assert!((0.0..=1.0).contains(&auc));
        prop_assert!((auc - common::brute_pr_auc(&conf, &correct)).abs() < 1e-12);
    }

    #[test]
    fn auc_invariant_under_monotone_confidence_map((records, tol) in records_strategy()) {
        let ctx = MatchContext::frames(tol);
        let mapped: Vec<PredictionRecord> = records
            .iter()
            .cloned()
            .map(|mut r| {
                r.confidence = (3.0 * r.confidence).exp() - 7.0;
                r
            })
            .collect();
        prop_assert_eq!(pr_auc(&records, &ctx).unwrap(), pr_auc(&mapped, &ctx).unwrap());
    }

    #[test]
    fn frame_tolerance_is_symmetric(a in 0usize..500, b in 0usize..500, tol in 0u32..20) {
        prop_assert_eq!(
            is_match_frames(a, b, tol as f64).unwrap(),
            is_match_frames(b, a, tol as f64).unwrap()
        );
    }
}

#[test]
fn all_correct_gives_unit_auc() {
    let records: Vec<PredictionRecord> = (0..20)
        .map(|q| {
            let mut s = Array1::zeros(20);
            s[q] = 0.5 + q as f64 / 100.0;
            PredictionRecord::from_scores(q, s.view(), 5, q).unwrap()
        })
        .collect();
    let ctx = MatchContext::frames(0.0);
    assert_eq!(pr_auc(&records, &ctx).unwrap(), 1.0);
    assert_eq!(accuracy(&records, &ctx).unwrap(), 1.0);
}
