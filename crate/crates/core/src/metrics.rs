//! Classification metrics over 4-second decisions.
//!
//! All rates derive from a [`ConfusionMatrix`]; undefined ratios (zero
//! denominators) are reported as errors rather than silent sentinels, so a
//! run with no preictal windows scored cannot masquerade as a perfect one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::Label;

/// 900 four-second decisions per hour: converts a per-decision false positive
/// rate into false alarms per hour.
pub const DECISIONS_PER_HOUR: f64 = 3600.0 / 4.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{metric} is undefined: {reason}")]
    Undefined { metric: &'static str, reason: String },
    #[error("length mismatch: {decisions} decisions vs {labels} labels")]
    Alignment { decisions: usize, labels: usize },
}

/// TP/TN/FP/FN counts of binary decisions, preictal = positive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Records one decision against its ground-truth label.
    pub fn record(&mut self, decision: bool, truth: Label) {
        match (decision, truth) {
            (true, Label::Preictal) => self.tp += 1,
            (false, Label::Interictal) => self.tn += 1,
            (true, Label::Interictal) => self.fp += 1,
            (false, Label::Preictal) => self.fn_ += 1,
        }
    }

    /// Cell-wise sum, used for pooled averaging across patients.
    pub fn merged(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tp + other.tp,
            tn: self.tn + other.tn,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }
}

/// Tallies a decision sequence against its label sequence.
pub fn confusion_from_decisions(
    decisions: &[bool],
    labels: &[Label],
) -> Result<ConfusionMatrix, MetricsError> {
    if decisions.len() != labels.len() {
        return Err(MetricsError::Alignment {
            decisions: decisions.len(),
            labels: labels.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&d, &l) in decisions.iter().zip(labels) {
        cm.record(d, l);
    }
    Ok(cm)
}

/// TP / (TP + FN).
pub fn sensitivity(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let denom = cm.tp + cm.fn_;
    if denom == 0 {
        return Err(MetricsError::Undefined {
            metric: "sensitivity",
            reason: "no positive-labeled decisions (TP + FN = 0)".into(),
        });
    }
    Ok(cm.tp as f64 / denom as f64)
}

/// TN / (TN + FP).
pub fn specificity(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let denom = cm.tn + cm.fp;
    if denom == 0 {
        return Err(MetricsError::Undefined {
            metric: "specificity",
            reason: "no negative-labeled decisions (TN + FP = 0)".into(),
        });
    }
    Ok(cm.tn as f64 / denom as f64)
}

/// (TN + TP) / total.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::Undefined {
            metric: "accuracy",
            reason: "empty confusion matrix".into(),
        });
    }
    Ok((cm.tn + cm.tp) as f64 / total as f64)
}

/// False alarms per hour: FP / (TN + FP) scaled by 900 decisions/hour.
pub fn fpr_per_hour(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let denom = cm.tn + cm.fp;
    if denom == 0 {
        return Err(MetricsError::Undefined {
            metric: "fpr_per_hour",
            reason: "no negative-labeled decisions (TN + FP = 0)".into(),
        });
    }
    Ok(cm.fp as f64 / denom as f64 * DECISIONS_PER_HOUR)
}

/// Area under the ROC curve via the Mann–Whitney rank statistic.
///
/// Equals the probability that a random positive outscores a random negative,
/// with ties counting 1/2. Invariant under strictly monotone score transforms.
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::Alignment {
            decisions: scores.len(),
            labels: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|l| **l == Label::Preictal).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::Undefined {
            metric: "auc",
            reason: format!("need both classes, got {n_pos} positive / {n_neg} negative"),
        });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("NaN score"));

    // Rank sum of the positive class, averaging ranks within tie groups.
    // Tied-rank averages are multiples of 1/2, so the sum is exact in f64.
    let mut rank_sum_pos = 0.0_f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; the tie group [i, j] shares the mean rank
        let mean_rank = (i + 1 + j + 1) as f64 / 2.0;
        let pos_in_group = order[i..=j]
            .iter()
            .filter(|&&k| labels[k] == Label::Preictal)
            .count();
        rank_sum_pos += mean_rank * pos_in_group as f64;
        i = j + 1;
    }

    let n_pos = n_pos as f64;
    let u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
    Ok(u / (n_pos * n_neg as f64))
}

/// The standard evaluation block computed from one confusion matrix, plus an
/// optional AUC when probability scores were available.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub confusion: ConfusionMatrix,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy: Option<f64>,
    pub fpr_per_hour: Option<f64>,
    pub auc: Option<f64>,
}

impl MetricsSummary {
    /// Computes every ratio that is defined for `cm`; undefined ones are None.
    pub fn from_confusion(cm: &ConfusionMatrix) -> Self {
        Self {
            confusion: *cm,
            sensitivity: sensitivity(cm).ok(),
            specificity: specificity(cm).ok(),
            accuracy: accuracy(cm).ok(),
            fpr_per_hour: fpr_per_hour(cm).ok(),
            auc: None,
        }
    }

    pub fn with_auc(mut self, auc: f64) -> Self {
        self.auc = Some(auc);
        self
    }

    /// One CSV row: cm counts then metrics, empty field when undefined.
    pub fn csv_row(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.confusion.tp,
            self.confusion.tn,
            self.confusion.fp,
            self.confusion.fn_,
            fmt(self.sensitivity),
            fmt(self.specificity),
            fmt(self.accuracy),
            fmt(self.fpr_per_hour),
            fmt(self.auc),
        )
    }

    pub const CSV_HEADER: &'static str =
        "tp,tn,fp,fn,sensitivity,specificity,accuracy,fpr_per_hour,auc";
}

/// Unweighted mean of per-patient metric values, skipping undefined entries.
/// Returns None when no entry defines the metric.
pub fn macro_average(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(tp: u64, tn: u64, fp: u64, fn_: u64) -> ConfusionMatrix {
        ConfusionMatrix::new(tp, tn, fp, fn_)
    }

    #[test]
    fn confusion_basic_cells() {
        let m = confusion_from_decisions(
            &[true, false],
            &[Label::Preictal, Label::Interictal],
        )
        .unwrap();
        assert_eq!(m, cm(1, 1, 0, 0));
    }

    #[test]
    fn confusion_all_missed() {
        let m = confusion_from_decisions(&[false; 5], &[Label::Preictal; 5]).unwrap();
        assert_eq!(m.fn_, 5);
        assert_eq!(m.total(), 5);
    }

    #[test]
    fn confusion_matches_independent_tally() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(11, "cm-oracle");
        let decisions: Vec<bool> = (0..1000).map(|_| rng.random_bool(0.4)).collect();
        let labels: Vec<Label> = (0..1000)
            .map(|_| {
                if rng.random_bool(0.1) {
                    Label::Preictal
                } else {
                    Label::Interictal
                }
            })
            .collect();
        let m = confusion_from_decisions(&decisions, &labels).unwrap();

        // brute-force recount
        let (mut tp, mut tn, mut fp, mut fn_) = (0u64, 0u64, 0u64, 0u64);
        for i in 0..1000 {
            let pos = labels[i] == Label::Preictal;
            match (decisions[i], pos) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
            }
        }
        assert_eq!(m, cm(tp, tn, fp, fn_));
    }

    #[test]
    fn confusion_length_mismatch() {
        assert!(matches!(
            confusion_from_decisions(&[true], &[]),
            Err(MetricsError::Alignment { .. })
        ));
    }

    #[test]
    fn sensitivity_direct_evaluation() {
        assert_eq!(sensitivity(&cm(94, 0, 0, 6)).unwrap(), 0.94);
    }

    #[test]
    fn specificity_trivial() {
        assert_eq!(specificity(&cm(0, 1, 0, 0)).unwrap(), 1.0);
    }

    #[test]
    fn sensitivity_undefined_when_no_positives() {
        assert!(matches!(
            sensitivity(&cm(0, 3, 2, 0)),
            Err(MetricsError::Undefined { metric: "sensitivity", .. })
        ));
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&cm(50, 50, 0, 0)).unwrap(), 1.0);
        assert_eq!(accuracy(&cm(0, 0, 50, 50)).unwrap(), 0.0);
        assert_eq!(accuracy(&cm(9, 90, 1, 0)).unwrap(), 0.99);
        assert!(accuracy(&cm(0, 0, 0, 0)).is_err());
    }

    #[test]
    fn fph_examples() {
        assert_eq!(fpr_per_hour(&cm(0, 10, 0, 0)).unwrap(), 0.0);
        assert_eq!(fpr_per_hour(&cm(0, 891, 9, 0)).unwrap(), 9.0);
        // order of the combined-system figure
        let fph = fpr_per_hour(&cm(0, 3899, 1, 0)).unwrap();
        assert!((fph - 0.23076923076923078).abs() < 1e-12);
        assert!(fpr_per_hour(&cm(3, 0, 0, 1)).is_err());
    }

    #[test]
    fn auc_perfectly_separated() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let labels = [
            Label::Preictal,
            Label::Preictal,
            Label::Interictal,
            Label::Interictal,
        ];
        assert_eq!(auc(&scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn auc_all_ties_is_half() {
        let scores = [0.5; 6];
        let labels = [
            Label::Preictal,
            Label::Interictal,
            Label::Preictal,
            Label::Interictal,
            Label::Interictal,
            Label::Preictal,
        ];
        assert_eq!(auc(&scores, &labels).unwrap(), 0.5);
    }

    #[test]
    fn auc_single_class_is_undefined() {
        assert!(auc(&[0.3, 0.4], &[Label::Preictal, Label::Preictal]).is_err());
    }

    /// O(n²) pair-counting oracle: ties count 1/2.
    fn auc_pairwise(scores: &[f64], labels: &[Label]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            if labels[i] != Label::Preictal {
                continue;
            }
            for (j, &sj) in scores.iter().enumerate() {
                if labels[j] != Label::Interictal {
                    continue;
                }
                pairs += 1.0;
                if si > sj {
                    num += 1.0;
                } else if si == sj {
                    num += 0.5;
                }
            }
        }
        num / pairs
    }

    #[test]
    fn auc_matches_pair_counting_with_ties() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(5, "auc-oracle");
        // quantized scores force plenty of ties
        let scores: Vec<f64> = (0..20).map(|_| f64::from(rng.random_range(0..6)) / 5.0).collect();
        let labels: Vec<Label> = (0..20)
            .map(|i| if i < 10 { Label::Preictal } else { Label::Interictal })
            .collect();
        assert_eq!(auc(&scores, &labels).unwrap(), auc_pairwise(&scores, &labels));
    }

    #[test]
    fn accuracy_is_prevalence_weighted_mix() {
        let m = cm(9, 90, 10, 1);
        let p = (m.tp + m.fn_) as f64;
        let n = (m.tn + m.fp) as f64;
        let mix = (sensitivity(&m).unwrap() * p + specificity(&m).unwrap() * n) / (p + n);
        assert!((accuracy(&m).unwrap() - mix).abs() < 1e-15);
    }

    #[test]
    fn macro_average_skips_undefined() {
        assert_eq!(macro_average(&[Some(1.0), None, Some(0.5)]), Some(0.75));
        assert_eq!(macro_average(&[None, None]), None);
    }
}
