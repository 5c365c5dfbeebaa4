//! Binary classification metrics. The positive class is attack (label 1).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Predicts positive iff `score >= threshold`.
pub fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Confusion> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no samples to score".into()));
    }
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Which ratios had an empty denominator (and were reported as 0).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degenerate {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
    pub fpr: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub degenerate: Degenerate,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn derive_ratios(c: Confusion) -> Ratios {
    let (accuracy, _) = ratio(c.tp + c.tn, c.total());
    let (precision, dp) = ratio(c.tp, c.tp + c.fp);
    let (recall, dr) = ratio(c.tp, c.tp + c.fn_);
    let (f1, df) = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_);
    let (fpr, dfpr) = ratio(c.fp, c.fp + c.tn);
    Ratios {
        accuracy,
        precision,
        recall,
        f1,
        fpr,
        degenerate: Degenerate {
            precision: dp,
            recall: dr,
            f1: df,
            fpr: dfpr,
        },
    }
}

/// Mann-Whitney AUC: the fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half. Computed from mid-ranks in O(n log n).
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data("ROC-AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // sum of 1-based mid-ranks of the positives
    let mut pos_rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        pos_rank_sum += mid * pos_in_group as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    let u = pos_rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub confusion: Confusion,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub auc: f64,
    pub pr_point: PrPoint,
    pub degenerate: Degenerate,
    /// Set when only one class was present and `auc` fell back to 0.5.
    pub auc_degenerate: bool,
}

impl MetricsReport {
    pub fn from_scores(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Self> {
        let c = confusion(scores, labels, threshold)?;
        let r = derive_ratios(c);
        let (auc, auc_degenerate) = match roc_auc(scores, labels) {
            Ok(a) => (a, false),
            Err(Error::Data(_)) => (0.5, true),
            Err(e) => return Err(e),
        };
        Ok(Self {
            confusion: c,
            accuracy: r.accuracy,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            fpr: r.fpr,
            auc,
            pr_point: PrPoint {
                precision: r.precision,
                recall: r.recall,
            },
            degenerate: r.degenerate,
            auc_degenerate,
        })
    }
}

/// Lower median (element `(n-1)/2` of the sorted values).
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}

/// Coordinate-wise lower median of the PR points.
pub fn median_pr_point(reports: &[MetricsReport]) -> Option<PrPoint> {
    let p: Vec<f64> = reports.iter().map(|r| r.precision).collect();
    let r: Vec<f64> = reports.iter().map(|r| r.recall).collect();
    Some(PrPoint {
        precision: lower_median(&p)?,
        recall: lower_median(&r)?,
    })
}
