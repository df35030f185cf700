//! Confusion matrices, precision/recall/F1, one-vs-rest AUROC and AUPRC.
//!
//! Undefined values (a class without positives, an empty input) are `None`
//! and serialize as JSON `null`.

use serde::{Deserialize, Serialize};

use crate::nn::Matrix;
use crate::{AdepError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    /// Row-major; entry (i, j) counts true class i predicted as j.
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        (0..self.classes).map(|j| self.get(class, j)).sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        (0..self.classes).map(|i| self.get(i, class)).sum()
    }
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(AdepError::dim(
            "prediction count",
            y_true.len(),
            y_pred.len(),
        ));
    }
    let mut counts = vec![0; classes * classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        for label in [t, p] {
            if label >= classes {
                return Err(AdepError::Label { label, classes });
            }
        }
        counts[t * classes + p] += 1;
    }
    Ok(ConfusionMatrix { classes, counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub support: u64,
    pub predicted: u64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: u64,
    pub classes: usize,
    pub acc: Option<f64>,
    pub precision_micro: Option<f64>,
    pub recall_micro: Option<f64>,
    pub f1_micro: Option<f64>,
    pub precision_macro: Option<f64>,
    pub recall_macro: Option<f64>,
    pub f1_macro: Option<f64>,
    pub auroc_micro: Option<f64>,
    pub auroc_macro: Option<f64>,
    pub auprc_micro: Option<f64>,
    pub auprc_macro: Option<f64>,
    pub fn_total: u64,
    pub fp_total: u64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Mean of the defined entries, summed in order.
fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Count-based metrics. Ranking metrics are left `None`; see
/// [`evaluate_scores`].
pub fn classification_metrics(conf: &ConfusionMatrix) -> MetricsReport {
    let per_class: Vec<ClassMetrics> = (0..conf.classes)
        .map(|c| {
            let tp = conf.get(c, c);
            let support = conf.support(c);
            let predicted = conf.predicted(c);
            let (fp, fn_) = (predicted - tp, support - tp);
            ClassMetrics {
                class: c,
                support,
                predicted,
                tp,
                fp,
                fn_,
                precision: ratio(tp, predicted),
                recall: ratio(tp, support),
                f1: if support > 0 {
                    ratio(2 * tp, 2 * tp + fp + fn_)
                } else {
                    None
                },
                auroc: None,
                auprc: None,
            }
        })
        .collect();
    let total = conf.total();
    let correct = conf.correct();
    let fp_total: u64 = per_class.iter().map(|m| m.fp).sum();
    let fn_total: u64 = per_class.iter().map(|m| m.fn_).sum();
    let tp_total: u64 = per_class.iter().map(|m| m.tp).sum();
    let precision_micro = ratio(tp_total, tp_total + fp_total);
    let recall_micro = ratio(tp_total, tp_total + fn_total);
    MetricsReport {
        samples: total,
        classes: conf.classes,
        acc: ratio(correct, total),
        precision_micro,
        recall_micro,
        f1_micro: ratio(2 * tp_total, 2 * tp_total + fp_total + fn_total),
        precision_macro: mean_defined(per_class.iter().map(|m| m.precision)),
        recall_macro: mean_defined(per_class.iter().map(|m| m.recall)),
        f1_macro: mean_defined(per_class.iter().map(|m| m.f1)),
        auroc_micro: None,
        auroc_macro: None,
        auprc_micro: None,
        auprc_macro: None,
        fn_total,
        fp_total,
        per_class,
    }
}

/// Binary AUC by the pairwise rule (concordant + ties/2) / (P·N), counted
/// exactly in integers. `None` without both positives and negatives.
pub fn binary_auroc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Walk ascending tie groups; every positive beats all negatives seen in
    // earlier groups and ties with the negatives in its own group.
    let (mut neg_below, mut twice_credit, mut pos_total) = (0u64, 0u128, 0u64);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if positive[order[j]] {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_credit += pos as u128 * (2 * neg_below as u128 + neg as u128);
        neg_below += neg;
        pos_total += pos;
        i = j;
    }
    let pairs = pos_total as u128 * neg_below as u128;
    (pairs > 0).then(|| twice_credit as f64 / (2 * pairs) as f64)
}

/// Average precision: the mean over positives of the precision at the end
/// of the descending-score tie group containing that positive.
pub fn binary_auprc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut seen, mut hits, mut sum) = (0u64, 0u64, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut group_hits = 0u64;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            group_hits += positive[order[j]] as u64;
            j += 1;
        }
        seen += (j - i) as u64;
        hits += group_hits;
        let precision = hits as f64 / seen as f64;
        for _ in 0..group_hits {
            sum += precision;
        }
        i = j;
    }
    (hits > 0).then(|| sum / hits as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingScores {
    pub micro: Option<f64>,
    pub macro_: Option<f64>,
    pub per_class: Vec<Option<f64>>,
}

fn one_vs_rest(
    scores: &Matrix,
    y_true: &[usize],
    binary: fn(&[f64], &[bool]) -> Option<f64>,
) -> Result<RankingScores> {
    if scores.rows() != y_true.len() {
        return Err(AdepError::dim("score rows", y_true.len(), scores.rows()));
    }
    if !scores.all_finite() {
        return Err(AdepError::Numerical {
            location: "ranking scores".into(),
        });
    }
    let classes = scores.cols();
    if let Some(&label) = y_true.iter().find(|&&y| y >= classes) {
        return Err(AdepError::Label { label, classes });
    }
    let mut column = vec![0.0; scores.rows()];
    let mut positive = vec![false; scores.rows()];
    let per_class: Vec<Option<f64>> = (0..classes)
        .map(|c| {
            for (i, &y) in y_true.iter().enumerate() {
                column[i] = scores.get(i, c);
                positive[i] = y == c;
            }
            binary(&column, &positive)
        })
        .collect();
    let flat_positive: Vec<bool> = y_true
        .iter()
        .flat_map(|&y| (0..classes).map(move |c| c == y))
        .collect();
    Ok(RankingScores {
        micro: binary(scores.data(), &flat_positive),
        macro_: mean_defined(per_class.iter().copied()),
        per_class,
    })
}

/// One-vs-rest AUROC per class, pooled (micro) and class-mean (macro).
pub fn auroc(scores: &Matrix, y_true: &[usize]) -> Result<RankingScores> {
    one_vs_rest(scores, y_true, binary_auroc)
}

pub fn auprc(scores: &Matrix, y_true: &[usize]) -> Result<RankingScores> {
    one_vs_rest(scores, y_true, binary_auprc)
}

/// Full report from class-probability rows. Predictions are the row argmax
/// with the lowest index winning ties.
pub fn evaluate_scores(scores: &Matrix, y_true: &[usize]) -> Result<MetricsReport> {
    let preds = scores.argmax_rows();
    let mut report = classification_metrics(&confusion(y_true, &preds, scores.cols())?);
    let roc = auroc(scores, y_true)?;
    let pr = auprc(scores, y_true)?;
    report.auroc_micro = roc.micro;
    report.auroc_macro = roc.macro_;
    report.auprc_micro = pr.micro;
    report.auprc_macro = pr.macro_;
    for (m, (r, p)) in report
        .per_class
        .iter_mut()
        .zip(roc.per_class.iter().zip(&pr.per_class))
    {
        m.auroc = *r;
        m.auprc = *p;
    }
    Ok(report)
}

/// Unweighted mean of each metric over the folds where it is defined;
/// counts are summed.
pub fn aggregate(reports: &[MetricsReport]) -> Result<MetricsReport> {
    let first = reports
        .first()
        .ok_or_else(|| AdepError::Config("nothing to aggregate".into()))?;
    if reports.iter().any(|r| r.classes != first.classes) {
        return Err(AdepError::Config(
            "fold reports disagree on the class count".into(),
        ));
    }
    let mean = |f: fn(&MetricsReport) -> Option<f64>| mean_defined(reports.iter().map(f));
    let per_class = (0..first.classes)
        .map(|c| {
            let classes: Vec<&ClassMetrics> = reports.iter().map(|r| &r.per_class[c]).collect();
            let sum = |f: fn(&ClassMetrics) -> u64| classes.iter().map(|m| f(m)).sum();
            let mean =
                |f: fn(&ClassMetrics) -> Option<f64>| mean_defined(classes.iter().map(|m| f(m)));
            ClassMetrics {
                class: c,
                support: sum(|m| m.support),
                predicted: sum(|m| m.predicted),
                tp: sum(|m| m.tp),
                fp: sum(|m| m.fp),
                fn_: sum(|m| m.fn_),
                precision: mean(|m| m.precision),
                recall: mean(|m| m.recall),
                f1: mean(|m| m.f1),
                auroc: mean(|m| m.auroc),
                auprc: mean(|m| m.auprc),
            }
        })
        .collect();
    Ok(MetricsReport {
        samples: reports.iter().map(|r| r.samples).sum(),
        classes: first.classes,
        acc: mean(|r| r.acc),
        precision_micro: mean(|r| r.precision_micro),
        recall_micro: mean(|r| r.recall_micro),
        f1_micro: mean(|r| r.f1_micro),
        precision_macro: mean(|r| r.precision_macro),
        recall_macro: mean(|r| r.recall_macro),
        f1_macro: mean(|r| r.f1_macro),
        auroc_micro: mean(|r| r.auroc_micro),
        auroc_macro: mean(|r| r.auroc_macro),
        auprc_micro: mean(|r| r.auprc_micro),
        auprc_macro: mean(|r| r.auprc_macro),
        fn_total: reports.iter().map(|r| r.fn_total).sum(),
        fp_total: reports.iter().map(|r| r.fp_total).sum(),
        per_class,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    #[default]
    Micro,
    Macro,
}

/// Which averages fill the precision/recall/F columns and the AUC columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableColumns {
    pub prf: Averaging,
    pub auc: Averaging,
}

impl Default for TableColumns {
    fn default() -> Self {
        TableColumns {
            prf: Averaging::Micro,
            auc: Averaging::Macro,
        }
    }
}

pub const TABLE_HEADER: &str = "Method\tACC\tAUROC\tAUPRC\tF_score\tRecall\tPrecision\tFN\tFP";

fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{:.2}", 100.0 * v))
}

pub fn table_row(method: &str, r: &MetricsReport, columns: TableColumns) -> String {
    let (p, rec, f) = match columns.prf {
        Averaging::Micro => (r.precision_micro, r.recall_micro, r.f1_micro),
        Averaging::Macro => (r.precision_macro, r.recall_macro, r.f1_macro),
    };
    let (roc, pr) = match columns.auc {
        Averaging::Micro => (r.auroc_micro, r.auprc_micro),
        Averaging::Macro => (r.auroc_macro, r.auprc_macro),
    };
    format!(
        "{method}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        percent(r.acc),
        percent(roc),
        percent(pr),
        percent(f),
        percent(rec),
        percent(p),
        r.fn_total,
        r.fp_total
    )
}

/// Header plus one line per method, newline-terminated.
pub fn render_table(rows: &[(String, MetricsReport)], columns: TableColumns) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for (name, report) in rows {
        out.push_str(&table_row(name, report, columns));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_enumerated_confusion() {
        let conf = confusion(&[0, 1, 2, 1], &[0, 2, 2, 1], 3).unwrap();
        let r = classification_metrics(&conf);
        assert_eq!(r.acc, Some(0.75));
        assert_eq!((r.fn_total, r.fp_total), (1, 1));
        for v in [r.precision_micro, r.recall_micro, r.f1_micro] {
            assert_eq!(v, Some(0.75));
        }
    }

    #[test]
    fn macro_recall_skips_nothing_with_support() {
        let conf = ConfusionMatrix {
            classes: 2,
            counts: vec![2, 0, 2, 0],
        };
        let r = classification_metrics(&conf);
        assert_eq!(r.recall_macro, Some(0.5));
        assert_eq!(r.per_class[1].precision, None);
        assert_eq!(r.precision_macro, Some(0.5));
    }

    #[test]
    fn perfect_and_empty() {
        let r = classification_metrics(&confusion(&[0, 1, 2], &[0, 1, 2], 3).unwrap());
        assert_eq!(r.acc, Some(1.0));
        assert_eq!(r.f1_macro, Some(1.0));
        assert_eq!((r.fn_total, r.fp_total), (0, 0));
        let empty = classification_metrics(&confusion(&[], &[], 3).unwrap());
        assert_eq!(empty.acc, None);
        assert_eq!(empty.f1_micro, None);
        assert_eq!(empty.recall_macro, None);
        assert!(matches!(
            confusion(&[3], &[0], 3),
            Err(AdepError::Label { label: 3, .. })
        ));
    }

    #[test]
    fn binary_examples() {
        let pos = [true, true, false, false];
        assert_eq!(binary_auroc(&[0.9, 0.8, 0.3, 0.2], &pos), Some(1.0));
        assert_eq!(binary_auprc(&[0.9, 0.8, 0.3, 0.2], &pos), Some(1.0));
        let alt = [true, false, true, false];
        assert_eq!(binary_auroc(&[0.9, 0.6, 0.4, 0.2], &alt), Some(0.75));
        let ap = binary_auprc(&[0.9, 0.6, 0.4, 0.2], &alt).unwrap();
        assert!((ap - 0.5 * (1.0 + 2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(binary_auroc(&[0.5; 4], &alt), Some(0.5));
        assert_eq!(binary_auroc(&[0.5; 2], &[true, true]), None);
        assert_eq!(binary_auprc(&[0.5; 2], &[false, false]), None);
    }

    #[test]
    fn table_formatting() {
        let r = evaluate_scores(
            &Matrix::from_rows(&[vec![0.7, 0.3], vec![0.4, 0.6], vec![0.8, 0.2]]).unwrap(),
            &[0, 1, 1],
        )
        .unwrap();
        let row = table_row("ADEP", &r, TableColumns::default());
        assert!(row.starts_with("ADEP\t66.67\t"), "{row}");
        assert!(row.ends_with("\t1\t1"), "{row}");
    }
}
