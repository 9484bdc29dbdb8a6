//! Classification-quality metrics and progress-curve summaries.
//!
//! Outliers are the positive class everywhere. Confusion-matrix metrics
//! (MCC, kappa) score the binary decision; ranking metrics (AUC, pAUC)
//! score the ordering induced by the decision function.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

/// Binary confusion matrix with outlier as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn from_predictions(predicted: &[Label], truth: &[Label]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                actual: predicted.len(),
            });
        }
        let mut cm = ConfusionMatrix {
            tp: 0,
            fp: 0,
            tn: 0,
            fn_: 0,
        };
        for (p, t) in predicted.iter().zip(truth) {
            match (p, t) {
                (Label::Outlier, Label::Outlier) => cm.tp += 1,
                (Label::Outlier, Label::Inlier) => cm.fp += 1,
                (Label::Inlier, Label::Inlier) => cm.tn += 1,
                (Label::Inlier, Label::Outlier) => cm.fn_ += 1,
            }
        }
        Ok(cm)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Matthews correlation coefficient in [-1, 1]; 0 when the denominator
/// vanishes.
pub fn mcc(cm: &ConfusionMatrix) -> f64 {
    let (tp, fp, tn, fn_) = (cm.tp as f64, cm.fp as f64, cm.tn as f64, cm.fn_ as f64);
    let denom = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    if denom == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) / denom
}

/// Cohen's kappa; 0 when chance agreement is degenerate.
pub fn kappa(cm: &ConfusionMatrix) -> f64 {
    let n = cm.total() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (tp, fp, tn, fn_) = (cm.tp as f64, cm.fp as f64, cm.tn as f64, cm.fn_ as f64);
    let p_observed = (tp + tn) / n;
    let p_chance = ((tp + fn_) / n) * ((tp + fp) / n) + ((tn + fp) / n) * ((tn + fn_) / n);
    if (1.0 - p_chance).abs() < 1e-15 {
        return 0.0;
    }
    (p_observed - p_chance) / (1.0 - p_chance)
}

/// Area under the ROC curve: the probability that an outlier is ranked above
/// an inlier, with ties counting half.
pub fn auc(scores: &[f64], truth: &[Label]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: scores.len(),
        });
    }
    let n_pos = truth.iter().filter(|l| **l == Label::Outlier).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::MetricUndefined {
            name: "auc".into(),
            reason: "evaluation set must contain both classes".into(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));

    // For each outlier: count inliers strictly below plus half the tied ones.
    // All counts are exact multiples of 0.5, so the sum is exact in f64.
    let mut favorable = 0.0f64;
    let mut neg_below = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let tied_neg = order[i..j]
            .iter()
            .filter(|&&k| truth[k] == Label::Inlier)
            .count();
        let tied_pos = j - i - tied_neg;
        favorable += tied_pos as f64 * (neg_below as f64 + 0.5 * tied_neg as f64);
        neg_below += tied_neg;
        i = j;
    }
    Ok(favorable / (n_pos as f64 * n_neg as f64))
}

/// Partial AUC: area under the ROC curve restricted to false-positive rates
/// in [0, fpr_max], normalized by fpr_max so a perfect ranker scores 1.
pub fn pauc(scores: &[f64], truth: &[Label], fpr_max: f64) -> Result<f64> {
    if !(fpr_max > 0.0 && fpr_max <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "fpr_max must lie in (0, 1], got {fpr_max}"
        )));
    }
    let n_pos = truth.iter().filter(|l| **l == Label::Outlier).count();
    let n_neg = truth.len() - n_pos;
    if scores.len() != truth.len() || n_pos == 0 || n_neg == 0 {
        return Err(Error::MetricUndefined {
            name: "pauc".into(),
            reason: "evaluation set must contain both classes".into(),
        });
    }

    // ROC points from the highest threshold downwards; tied scores collapse
    // into single segments (diagonal for mixed tie groups).
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut points = vec![(0.0f64, 0.0f64)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        for &k in &order[i..j] {
            match truth[k] {
                Label::Outlier => tp += 1,
                Label::Inlier => fp += 1,
            }
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        i = j;
    }

    let mut area = 0.0;
    for w in points.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if x0 >= fpr_max {
            break;
        }
        if x1 <= fpr_max {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            // linear interpolation at the cutoff
            let t = (fpr_max - x0) / (x1 - x0);
            let y_cut = y0 + t * (y1 - y0);
            area += (fpr_max - x0) * (y0 + y_cut) / 2.0;
            break;
        }
    }
    Ok(area / fpr_max)
}

/// Metric registry: `mcc`, `kappa`, `auc`, `pauc:<fpr_max>` (bare `pauc`
/// uses the 0.1 default).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum MetricKind {
    Mcc,
    Kappa,
    Auc,
    Pauc(f64),
}

impl MetricKind {
    pub fn name(&self) -> String {
        match self {
            MetricKind::Mcc => "mcc".into(),
            MetricKind::Kappa => "kappa".into(),
            MetricKind::Auc => "auc".into(),
            MetricKind::Pauc(f) => format!("pauc:{f}"),
        }
    }

    /// Evaluate on decision-function scores (higher = more outlying) and
    /// ground truth. Returns `None` when the metric is undefined on the set.
    pub fn evaluate(&self, scores: &[f64], truth: &[Label]) -> Option<f64> {
        match self {
            MetricKind::Mcc | MetricKind::Kappa => {
                let predicted: Vec<Label> = scores
                    .iter()
                    .map(|&f| if f > 0.0 { Label::Outlier } else { Label::Inlier })
                    .collect();
                let cm = ConfusionMatrix::from_predictions(&predicted, truth).ok()?;
                Some(match self {
                    MetricKind::Mcc => mcc(&cm),
                    _ => kappa(&cm),
                })
            }
            MetricKind::Auc => auc(scores, truth).ok(),
            MetricKind::Pauc(f) => pauc(scores, truth, *f).ok(),
        }
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mcc" => Ok(MetricKind::Mcc),
            "kappa" => Ok(MetricKind::Kappa),
            "auc" => Ok(MetricKind::Auc),
            "pauc" => Ok(MetricKind::Pauc(0.1)),
            _ => {
                if let Some(v) = s.strip_prefix("pauc:") {
                    let f: f64 = v.parse().map_err(|_| Error::UnknownName {
                        kind: "metric",
                        name: s.into(),
                    })?;
                    Ok(MetricKind::Pauc(f))
                } else {
                    Err(Error::UnknownName {
                        kind: "metric",
                        name: s.into(),
                    })
                }
            }
        }
    }
}

impl From<MetricKind> for String {
    fn from(m: MetricKind) -> String {
        m.name()
    }
}

impl TryFrom<String> for MetricKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// One evaluated iteration of an active-learning run.
///
/// The record at `t = 0` holds the initial state and carries no query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub queried_index: Option<usize>,
    pub oracle_label: Option<Label>,
    pub metrics: BTreeMap<String, Option<f64>>,
    /// Set on iterations where a strategy took its random-exploration branch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exploratory: Option<bool>,
    pub timing_ms: Option<f64>,
}

/// Quality metric values over the feedback iterations of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressCurve {
    pub records: Vec<IterationRecord>,
}

impl ProgressCurve {
    pub fn new(records: Vec<IterationRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyCurve);
        }
        for (i, r) in records.iter().enumerate() {
            if r.t != i {
                return Err(Error::InvalidParameter(format!(
                    "iteration {i} recorded as t={}",
                    r.t
                )));
            }
            if (i == 0) != r.queried_index.is_none() {
                return Err(Error::InvalidParameter(
                    "exactly the initial record must carry no query".into(),
                ));
            }
        }
        Ok(Self { records })
    }

    /// Number of feedback labels acquired during the run.
    pub fn query_count(&self) -> usize {
        self.records.len() - 1
    }

    fn metric_values(&self, metric: &str) -> Result<Vec<f64>> {
        self.records
            .iter()
            .map(|r| {
                r.metrics
                    .get(metric)
                    .copied()
                    .flatten()
                    .ok_or_else(|| Error::MetricUndefined {
                        name: metric.into(),
                        reason: format!("missing at t={}", r.t),
                    })
            })
            .collect()
    }
}

/// Progress-curve summary statistics.
///
/// `Sq` is the quality before feedback, `Ru(k)` the gain after the first k
/// steps, `Qr` the gain over an interval (init to end by default), `Aeq(k)`
/// the mean of the last k values, `Ls(k)` the normalized late-phase slope
/// and `Roq` the fraction of queries the oracle labeled outlier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SummaryStat {
    Sq,
    Ru(usize),
    Qr(Option<(usize, usize)>),
    Aeq(usize),
    Ls(usize),
    Roq,
}

impl SummaryStat {
    pub fn name(&self) -> String {
        match self {
            SummaryStat::Sq => "sq".into(),
            SummaryStat::Ru(k) => format!("ru:{k}"),
            SummaryStat::Qr(None) => "qr".into(),
            SummaryStat::Qr(Some((i, j))) => format!("qr:{i}:{j}"),
            SummaryStat::Aeq(k) => format!("aeq:{k}"),
            SummaryStat::Ls(k) => format!("ls:{k}"),
            SummaryStat::Roq => "roq".into(),
        }
    }
}

impl FromStr for SummaryStat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownName {
            kind: "summary",
            name: s.into(),
        };
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["sq"] => Ok(SummaryStat::Sq),
            ["roq"] => Ok(SummaryStat::Roq),
            ["qr"] => Ok(SummaryStat::Qr(None)),
            ["qr", i, j] => {
                let i = i.parse().map_err(|_| unknown())?;
                let j = j.parse().map_err(|_| unknown())?;
                Ok(SummaryStat::Qr(Some((i, j))))
            }
            ["ru", k] => Ok(SummaryStat::Ru(k.parse().map_err(|_| unknown())?)),
            ["aeq", k] => Ok(SummaryStat::Aeq(k.parse().map_err(|_| unknown())?)),
            ["ls", k] => Ok(SummaryStat::Ls(k.parse().map_err(|_| unknown())?)),
            _ => Err(unknown()),
        }
    }
}

/// Compute one summary statistic of `metric` over the curve.
pub fn summarize(curve: &ProgressCurve, metric: &str, stat: SummaryStat) -> Result<f64> {
    let steps = curve.query_count();
    let check_k = |k: usize| {
        if k == 0 || k > steps {
            Err(Error::InvalidParameter(format!(
                "k={k} outside the {steps} recorded progress steps"
            )))
        } else {
            Ok(())
        }
    };
    match stat {
        SummaryStat::Roq => {
            if steps == 0 {
                return Err(Error::InvalidParameter(
                    "roq needs at least one query".into(),
                ));
            }
            let outliers = curve.records[1..]
                .iter()
                .filter(|r| r.oracle_label == Some(Label::Outlier))
                .count();
            Ok(outliers as f64 / steps as f64)
        }
        _ => {
            let qm = curve.metric_values(metric)?;
            match stat {
                SummaryStat::Sq => Ok(qm[0]),
                SummaryStat::Ru(k) => {
                    check_k(k)?;
                    Ok(qm[k] - qm[0])
                }
                SummaryStat::Qr(range) => {
                    let (i, j) = range.unwrap_or((0, steps));
                    if i > steps || j > steps {
                        return Err(Error::InvalidParameter(format!(
                            "qr interval ({i}, {j}) outside the curve"
                        )));
                    }
                    Ok(qm[j] - qm[i])
                }
                SummaryStat::Aeq(k) => {
                    check_k(k)?;
                    let tail = &qm[qm.len() - k..];
                    Ok(tail.iter().sum::<f64>() / k as f64)
                }
                SummaryStat::Ls(k) => {
                    check_k(k)?;
                    let overall = qm[steps] - qm[0];
                    if overall <= 0.0 {
                        return Ok(0.0);
                    }
                    let late = qm[steps] - qm[steps - k];
                    Ok((late / k as f64) / (overall / steps as f64))
                }
                _ => unreachable!(),
            }
        }
    }
}
