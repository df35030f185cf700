use adep::metrics::{
    aggregate, auprc, auroc, binary_auprc, binary_auroc, classification_metrics, confusion,
    evaluate_scores, render_table, ConfusionMatrix, TableColumns,
};
use adep::nn::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// O(B^2) pairwise count.
fn brute_auroc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let (mut concordant, mut ties, mut pairs) = (0u64, 0u64, 0u64);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if positive[i] && !positive[j] {
                pairs += 1;
                if scores[i] > scores[j] {
                    concordant += 1;
                } else if scores[i] == scores[j] {
                    ties += 1;
                }
            }
        }
    }
    (pairs > 0).then(|| (concordant as f64 + 0.5 * ties as f64) / pairs as f64)
}

/// For each positive, precision over everything scored at least as high;
/// visited in descending score order.
fn rank_walk_ap(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut positives: Vec<usize> = (0..scores.len()).filter(|&i| positive[i]).collect();
    positives.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    if positives.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for &i in &positives {
        let at_least = (0..scores.len())
            .filter(|&j| scores[j] >= scores[i])
            .count();
        let hits = positives
            .iter()
            .filter(|&&j| scores[j] >= scores[i])
            .count();
        sum += hits as f64 / at_least as f64;
    }
    Some(sum / positives.len() as f64)
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.gen_range(1..=200);
    let coarse = rng.gen_bool(0.5);
    let scores = (0..n)
        .map(|_| {
            if coarse {
                rng.gen_range(0..8) as f64 / 8.0
            } else {
                rng.gen::<f64>()
            }
        })
        .collect();
    let prevalence = rng.gen_range(0.05..0.95);
    let positive = (0..n).map(|_| rng.gen_bool(prevalence)).collect();
    (scores, positive)
}

#[test]
fn auroc_equals_pairwise_brute_force_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let (s, p) = random_instance(&mut rng);
        assert_eq!(binary_auroc(&s, &p), brute_auroc(&s, &p));
    }
}

#[test]
fn auprc_equals_rank_walk_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..100 {
        let (s, p) = random_instance(&mut rng);
        assert_eq!(binary_auprc(&s, &p), rank_walk_ap(&s, &p));
    }
}

#[test]
fn random_scores_give_prevalence_ap() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 200_000;
    let scores: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let positive: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
    let pi = positive.iter().filter(|&&p| p).count() as f64 / n as f64;
    let ap = binary_auprc(&scores, &positive).unwrap();
    assert!((ap - pi).abs() < 0.01, "{ap} vs {pi}");
    let roc = binary_auroc(&scores, &positive).unwrap();
    assert!((roc - 0.5).abs() < 0.01);
}

fn random_confusion(rng: &mut ChaCha8Rng) -> ConfusionMatrix {
    let classes = rng.gen_range(2..10);
    let counts = (0..classes * classes)
        .map(|_| {
            if rng.gen_bool(0.3) {
                0
            } else {
                rng.gen_range(0..50)
            }
        })
        .collect();
    ConfusionMatrix { classes, counts }
}

#[test]
fn single_label_identities_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..1000 {
        let conf = random_confusion(&mut rng);
        let r = classification_metrics(&conf);
        assert_eq!(r.fn_total, r.fp_total);
        assert_eq!(r.fn_total, conf.total() - conf.correct());
        if let Some(acc) = r.acc {
            for v in [r.precision_micro, r.recall_micro, r.f1_micro] {
                assert!((v.unwrap() - acc).abs() <= 1e-12);
            }
        }
    }
}

fn per_class_columns(scores: &Matrix, c: usize) -> Vec<f64> {
    (0..scores.rows()).map(|i| scores.get(i, c)).collect()
}

#[test]
fn multiclass_ranking_uses_one_vs_rest_and_flattening() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let classes = 4;
    let n = 60;
    let scores = Matrix::from_fn(n, classes, |_, _| rng.gen_range(0..5) as f64);
    let y: Vec<usize> = (0..n)
        .map(|i| if i < 4 { i } else { rng.gen_range(0..classes) })
        .collect();
    let roc = auroc(&scores, &y).unwrap();
    let pr = auprc(&scores, &y).unwrap();
    let mut sum = 0.0;
    for c in 0..classes {
        let pos: Vec<bool> = y.iter().map(|&t| t == c).collect();
        let col = per_class_columns(&scores, c);
        assert_eq!(roc.per_class[c], brute_auroc(&col, &pos));
        assert_eq!(pr.per_class[c], rank_walk_ap(&col, &pos));
        sum += roc.per_class[c].unwrap();
    }
    assert_eq!(roc.macro_, Some(sum / classes as f64));
    let flat_pos: Vec<bool> = y
        .iter()
        .flat_map(|&t| (0..classes).map(move |c| c == t))
        .collect();
    assert_eq!(roc.micro, brute_auroc(scores.data(), &flat_pos));
    assert_eq!(pr.micro, rank_walk_ap(scores.data(), &flat_pos));
}

#[test]
fn classes_without_positives_are_null_and_skipped() {
    let scores = Matrix::from_rows(&[
        vec![0.8, 0.1, 0.1],
        vec![0.3, 0.6, 0.1],
        vec![0.6, 0.3, 0.1],
    ])
    .unwrap();
    let r = evaluate_scores(&scores, &[0, 1, 0]).unwrap();
    assert_eq!(r.per_class[2].auroc, None);
    assert_eq!(r.per_class[2].auprc, None);
    assert_eq!(r.per_class[2].recall, None);
    assert_eq!(r.auroc_macro, Some(1.0));
    let json = serde_json::to_value(&r).unwrap();
    assert!(json["per_class"][2]["auroc"].is_null());
}

#[test]
fn aggregate_is_the_fold_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let reports: Vec<_> = (0..5)
        .map(|_| {
            let n = 50;
            let scores = Matrix::from_fn(n, 3, |_, _| rng.gen::<f64>());
            let y: Vec<usize> = (0..n).map(|i| i % 3).collect();
            evaluate_scores(&scores, &y).unwrap()
        })
        .collect();
    let agg = aggregate(&reports).unwrap();
    let mean_acc = reports.iter().map(|r| r.acc.unwrap()).sum::<f64>() / 5.0;
    assert!((agg.acc.unwrap() - mean_acc).abs() <= 1e-12);
    assert_eq!(
        agg.fn_total,
        reports.iter().map(|r| r.fn_total).sum::<u64>()
    );
    assert_eq!(agg.samples, 250);
    let table = render_table(&[("ADEP".into(), agg)], TableColumns::default());
    assert_eq!(table.lines().count(), 2);
    assert!(table.starts_with("Method\tACC\tAUROC\tAUPRC\tF_score\tRecall\tPrecision\tFN\tFP\n"));
}

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<usize>, usize)> {
    (2usize..5, 2usize..60).prop_flat_map(|(classes, n)| {
        (
            proptest::collection::vec(0u8..12, n * classes)
                .prop_map(|v| v.into_iter().map(|x| x as f64 / 11.0).collect::<Vec<_>>()),
            proptest::collection::vec(0..classes, n),
            Just(classes),
        )
    })
}

proptest! {
    #[test]
    fn monotone_transforms_leave_auroc_unchanged((data, y, c) in scored_labels()) {
        let scores = Matrix::from_vec(y.len(), c, data).unwrap();
        let warped = scores.map(|v| (3.0 * v).exp() - 7.0);
        let a = auroc(&scores, &y).unwrap();
        let b = auroc(&warped, &y).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn shuffling_samples_leaves_metrics_unchanged((data, y, c) in scored_labels(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let scores = Matrix::from_vec(y.len(), c, data).unwrap();
        let mut order: Vec<usize> = (0..y.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled = scores.select_rows(&order);
        let y2: Vec<usize> = order.iter().map(|&i| y[i]).collect();
        let a = evaluate_scores(&scores, &y).unwrap();
        let b = evaluate_scores(&shuffled, &y2).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn rates_stay_in_unit_interval((data, y, c) in scored_labels()) {
        let scores = Matrix::from_vec(y.len(), c, data).unwrap();
        let r = evaluate_scores(&scores, &y).unwrap();
        for v in [r.acc, r.precision_macro, r.recall_macro, r.f1_macro, r.auroc_micro, r.auroc_macro, r.auprc_micro, r.auprc_macro]
            .into_iter()
            .flatten()
        {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let conf = confusion(&y, &scores.argmax_rows(), c).unwrap();
        prop_assert_eq!(conf.total(), y.len() as u64);
    }
}
