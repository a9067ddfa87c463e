use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

/// Pixel-level scores. A field is `None` when its denominator is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn metrics(&self) -> Metrics {
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        Metrics {
            accuracy: ratio(self.tp + self.tn, self.total()),
            sensitivity: ratio(self.tp, self.tp + self.fn_),
            specificity: ratio(self.tn, self.tn + self.fp),
            precision,
            recall,
            f1,
        }
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { tp: self.tp + o.tp, tn: self.tn + o.tn, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_ }
    }
}

/// Tally predictions against ground truth over the pixels selected by `mask`.
pub fn confusion(pred: &[bool], truth: &[bool], mask: Option<&[bool]>) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() || mask.is_some_and(|m| m.len() != pred.len()) {
        return Err(Error::Metrics(format!(
            "length mismatch: pred {}, truth {}, mask {:?}",
            pred.len(),
            truth.len(),
            mask.map(<[bool]>::len)
        )));
    }
    let mut c = ConfusionCounts::default();
    for (i, (&p, &t)) in pred.iter().zip(truth).enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        match (p, t) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    if c.total() == 0 {
        return Err(Error::Metrics("no pixels selected for scoring".into()));
    }
    Ok(c)
}

/// `score >= threshold` per pixel.
pub fn binarize(scores: &[f64], threshold: f64) -> Vec<bool> {
    scores.iter().map(|&s| s >= threshold).collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.9}"))
}

/// One diffable line: `f1=… se=… sp=… ac=… auc=…`.
pub fn summary_line(m: &Metrics, auc: Option<f64>) -> String {
    format!(
        "f1={} se={} sp={} ac={} auc={}",
        fmt_opt(m.f1),
        fmt_opt(m.sensitivity),
        fmt_opt(m.specificity),
        fmt_opt(m.accuracy),
        fmt_opt(auc)
    )
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ac={} se={} sp={} precision={} recall={} f1={}",
            fmt_opt(self.accuracy),
            fmt_opt(self.sensitivity),
            fmt_opt(self.specificity),
            fmt_opt(self.precision),
            fmt_opt(self.recall),
            fmt_opt(self.f1)
        )
    }
}
