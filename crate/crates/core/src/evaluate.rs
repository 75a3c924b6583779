//! Binary evaluation of resolutions against ground truth.
//!
//! Accepted is the positive class. Rates are computed as exact integer
//! ratios and rounded half-up to hundredths of a percent, so printed values
//! do not depend on floating-point rounding.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entity_model::{CaseId, MatchCase, ResolutionLabel};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("no predictions to evaluate")]
    Empty,
    #[error("prediction for unknown case {0}")]
    UnknownCase(CaseId),
    #[error("case {0} has no ground truth")]
    NoGroundTruth(CaseId),
    #[error("confusion matrix is empty")]
    ZeroTotal,
    #[error("need at least one positive and one negative observation")]
    OneClass,
    #[error("report needs at least one row")]
    NoRows,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }
}

/// A confusion matrix plus the observations kept out of it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionSummary {
    pub matrix: ConfusionMatrix,
    /// Predictions that were Doubtful.
    pub doubtful_count: u64,
    /// Predictions whose ground truth is Doubtful (never scored).
    pub excluded_doubtful_truth: u64,
}

/// Tallies predictions against ground truth.
///
/// Cases whose ground truth is Doubtful are excluded. A Doubtful prediction
/// on a true Accepted case is a false negative; on a true Rejected case it
/// is a true negative (the entity was not wrongly accepted). Both are also
/// counted in `doubtful_count`.
pub fn confusion_from_cases(
    cases: &[MatchCase],
    predictions: &HashMap<CaseId, ResolutionLabel>,
) -> Result<ConfusionSummary, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let by_id: HashMap<&CaseId, &MatchCase> = cases.iter().map(|c| (&c.case_id, c)).collect();
    let mut ids: Vec<&CaseId> = predictions.keys().collect();
    ids.sort();
    let mut s = ConfusionSummary::default();
    for id in ids {
        let case = by_id.get(id).ok_or_else(|| EvalError::UnknownCase(id.clone()))?;
        let truth = case.ground_truth.ok_or_else(|| EvalError::NoGroundTruth(id.clone()))?;
        let predicted = predictions[id];
        use ResolutionLabel::*;
        if truth == Doubtful {
            s.excluded_doubtful_truth += 1;
            continue;
        }
        if predicted == Doubtful {
            s.doubtful_count += 1;
        }
        let m = &mut s.matrix;
        match (truth, predicted) {
            (Accepted, Accepted) => m.tp += 1,
            (Accepted, _) => m.fn_ += 1,
            (Rejected, Accepted) => m.fp += 1,
            (Rejected, _) => m.tn += 1,
            (Doubtful, _) => unreachable!(),
        }
    }
    Ok(s)
}

/// Non-negative exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Option<Self> {
        (den != 0).then_some(Self { num, den })
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `100 * num / den`, rounded half-up to two decimals.
    pub fn percent(&self) -> Percent {
        let num = 20_000 * u128::from(self.num) + u128::from(self.den);
        let den = 2 * u128::from(self.den);
        Percent((num / den) as u32)
    }
}

/// A percentage with two decimals, stored as hundredths.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "f64", try_from = "f64")]
pub struct Percent(u32);

impl Percent {
    pub fn from_hundredths(h: u32) -> Self {
        Self(h)
    }

    pub fn hundredths(&self) -> u32 {
        self.0
    }

    pub fn as_f64(&self) -> f64 {
        f64::from(self.0) / 100.0
    }
}

impl From<Percent> for f64 {
    fn from(p: Percent) -> f64 {
        p.as_f64()
    }
}

impl TryFrom<f64> for Percent {
    type Error = String;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        if !(0.0..=100.0).contains(&v) {
            return Err(format!("percentage {v} outside [0,100]"));
        }
        Ok(Self((v * 100.0).round() as u32))
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method_name: String,
    pub accuracy: Percent,
    pub precision: Percent,
    pub recall: Percent,
    pub f1: Percent,
    pub roc_auc: Percent,
    pub fpr: Percent,
    /// Metrics whose denominator was zero; reported as 0.00.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

/// Exact ratios behind a [`MetricsRow`]; `None` where a denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rates {
    pub accuracy: Option<Ratio>,
    pub precision: Option<Ratio>,
    pub recall: Option<Ratio>,
    pub f1: Option<Ratio>,
    pub roc_auc: Option<Ratio>,
    pub fpr: Option<Ratio>,
}

pub fn rates(cm: &ConfusionMatrix) -> Rates {
    let ConfusionMatrix { tp, fp, tn, fn_ } = *cm;
    let (p, n) = (cm.positives(), cm.negatives());
    Rates {
        accuracy: Ratio::new(tp + tn, cm.total()),
        precision: Ratio::new(tp, tp + fp),
        recall: Ratio::new(tp, p),
        // 2PR/(P+R) reduces to 2tp / (2tp + fp + fn)
        f1: Ratio::new(2 * tp, 2 * tp + fp + fn_),
        // (TPR + TNR) / 2 over a common denominator
        roc_auc: Ratio::new(tp * n + tn * p, 2 * p * n),
        fpr: Ratio::new(fp, n),
    }
}

/// Area under the ROC polygon through a single operating point:
/// `(TPR + TNR) / 2`, in percent.
pub fn one_point_auc(cm: &ConfusionMatrix) -> Result<Percent, EvalError> {
    if cm.positives() == 0 || cm.negatives() == 0 {
        return Err(EvalError::OneClass);
    }
    Ok(rates(cm).roc_auc.expect("both classes present").percent())
}

/// The six reported metrics for one method.
pub fn compute_metrics(method_name: &str, cm: &ConfusionMatrix) -> Result<MetricsRow, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::ZeroTotal);
    }
    let r = rates(cm);
    let mut undefined = Vec::new();
    let mut pct = |name: &str, ratio: Option<Ratio>| match ratio {
        Some(ratio) => ratio.percent(),
        None => {
            undefined.push(name.to_string());
            Percent::default()
        }
    };
    Ok(MetricsRow {
        method_name: method_name.to_string(),
        accuracy: pct("accuracy", r.accuracy),
        precision: pct("precision", r.precision),
        recall: pct("recall", r.recall),
        f1: pct("f1", r.f1),
        roc_auc: pct("roc_auc", r.roc_auc),
        fpr: pct("fpr", r.fpr),
        undefined,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` points from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC curve over every distinct score threshold (predict positive when
/// `score >= threshold`), with trapezoidal area.
pub fn roc_sweep(scores: &[(f64, bool)]) -> Result<RocCurve, EvalError> {
    let p = scores.iter().filter(|(_, t)| *t).count();
    let n = scores.len() - p;
    if p == 0 || n == 0 {
        return Err(EvalError::OneClass);
    }
    let mut sorted: Vec<(f64, bool)> = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n as f64, tp as f64 / p as f64));
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

/// One candidate accept-threshold with its binary performance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub accuracy: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Evaluates "accept iff score >= t" at every distinct score.
pub fn threshold_sweep(scores: &[(f64, bool)]) -> Vec<SweepPoint> {
    let mut thresholds: Vec<f64> = scores.iter().map(|(s, _)| *s).collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let p = scores.iter().filter(|(_, t)| *t).count().max(1) as f64;
    let n = scores.iter().filter(|(_, t)| !*t).count().max(1) as f64;
    thresholds
        .into_iter()
        .map(|t| {
            let (mut tp, mut fp, mut tn) = (0usize, 0usize, 0usize);
            for &(s, truth) in scores {
                match (s >= t, truth) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, false) => tn += 1,
                    (false, true) => {}
                }
            }
            SweepPoint {
                threshold: t,
                accuracy: (tp + tn) as f64 / scores.len() as f64,
                tpr: tp as f64 / p,
                fpr: fp as f64 / n,
            }
        })
        .collect()
}

/// Sweep points not dominated in (higher accuracy, lower FPR).
pub fn pareto_frontier(points: &[SweepPoint]) -> Vec<SweepPoint> {
    let mut frontier: Vec<SweepPoint> = points
        .iter()
        .filter(|a| {
            !points.iter().any(|b| {
                (b.accuracy >= a.accuracy && b.fpr <= a.fpr) && (b.accuracy > a.accuracy || b.fpr < a.fpr)
            })
        })
        .copied()
        .collect();
    frontier.sort_by(|a, b| a.fpr.total_cmp(&b.fpr).then(a.threshold.total_cmp(&b.threshold)));
    frontier.dedup_by(|a, b| a.accuracy == b.accuracy && a.fpr == b.fpr);
    frontier
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub accepted: usize,
    pub rejected: usize,
    pub doubtful: usize,
    /// Cases without ground truth.
    pub unlabeled: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.accepted + self.rejected + self.doubtful + self.unlabeled
    }

    pub fn get(&self, label: ResolutionLabel) -> usize {
        match label {
            ResolutionLabel::Accepted => self.accepted,
            ResolutionLabel::Rejected => self.rejected,
            ResolutionLabel::Doubtful => self.doubtful,
        }
    }
}

pub fn class_distribution(cases: &[MatchCase]) -> ClassCounts {
    let mut c = ClassCounts::default();
    for case in cases {
        match case.ground_truth {
            Some(ResolutionLabel::Accepted) => c.accepted += 1,
            Some(ResolutionLabel::Rejected) => c.rejected += 1,
            Some(ResolutionLabel::Doubtful) => c.doubtful += 1,
            None => c.unlabeled += 1,
        }
    }
    c
}

/// Balances Accepted/Rejected by duplicating uniformly drawn minority cases.
///
/// All input cases are kept in order; duplicates are appended. Cases that
/// are neither Accepted nor Rejected pass through untouched.
pub fn random_oversample(cases: &[MatchCase], seed: u64) -> Result<Vec<MatchCase>, EvalError> {
    let of = |label| -> Vec<&MatchCase> { cases.iter().filter(|c| c.ground_truth == Some(label)).collect() };
    let accepted = of(ResolutionLabel::Accepted);
    let rejected = of(ResolutionLabel::Rejected);
    if accepted.is_empty() || rejected.is_empty() {
        return Err(EvalError::OneClass);
    }
    let (minority, deficit) = if accepted.len() < rejected.len() {
        (&accepted, rejected.len() - accepted.len())
    } else {
        (&rejected, accepted.len() - rejected.len())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = cases.to_vec();
    out.extend((0..deficit).map(|_| minority[rng.random_range(0..minority.len())].clone()));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Delimited,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" | "delimited" => Ok(Self::Delimited),
            "md" | "markdown" => Ok(Self::Markdown),
            _ => Err(format!("unknown report format {s:?} (csv, markdown)")),
        }
    }
}

pub const REPORT_COLUMNS: [&str; 7] = ["Method", "Accuracy", "Precision", "Recall", "F1 Score", "ROC AUC", "FPR"];

/// Renders rows in input order, two decimals per value.
pub fn emit_report(rows: &[MetricsRow], format: ReportFormat) -> Result<String, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::NoRows);
    }
    let cells = |r: &MetricsRow| -> Vec<String> {
        let mut v = vec![r.method_name.clone()];
        v.extend([r.accuracy, r.precision, r.recall, r.f1, r.roc_auc, r.fpr].iter().map(Percent::to_string));
        v
    };
    let mut out = String::new();
    match format {
        ReportFormat::Delimited => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(REPORT_COLUMNS).expect("in-memory write");
            for r in rows {
                w.write_record(cells(r)).expect("in-memory write");
            }
            out = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
        }
        ReportFormat::Markdown => {
            out.push_str(&format!("| {} |\n", REPORT_COLUMNS.join(" | ")));
            out.push_str("|---|");
            out.push_str(&"---:|".repeat(REPORT_COLUMNS.len() - 1));
            out.push('\n');
            for r in rows {
                out.push_str(&format!("| {} |\n", cells(r).join(" | ")));
            }
        }
    }
    Ok(out)
}

/// Metric rows keyed by method, for quick lookup in reports.
pub fn rows_by_method(rows: &[MetricsRow]) -> BTreeMap<&str, &MetricsRow> {
    rows.iter().map(|r| (r.method_name.as_str(), r)).collect()
}
