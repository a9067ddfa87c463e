//! Threshold sweeps: ROC with trapezoidal area, precision-recall with step-wise average
//! precision. Equal scores form one threshold.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveKind {
    /// x = 1 − specificity, y = sensitivity.
    Roc,
    /// x = recall, y = precision.
    Pr,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub kind: CurveKind,
    pub points: Vec<(f64, f64)>,
    /// Score cutoff of each point: a pixel is positive when `score >= threshold`.
    pub thresholds: Vec<f64>,
}

/// Running (tp, fp) after each group of equal scores, sweeping from high to low.
struct Sweep {
    positives: u64,
    negatives: u64,
    /// (threshold, tp, fp)
    steps: Vec<(f64, u64, u64)>,
}

fn sweep(scores: &[f64], truth: &[bool], mask: Option<&[bool]>) -> Result<Sweep> {
    if scores.len() != truth.len() || mask.is_some_and(|m| m.len() != scores.len()) {
        return Err(Error::Metrics("scores, truth and mask lengths differ".into()));
    }
    let mut items: Vec<(f64, bool)> = Vec::with_capacity(scores.len());
    for (i, (&s, &t)) in scores.iter().zip(truth).enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        if !s.is_finite() {
            return Err(Error::Metrics(format!("non-finite score at index {i}")));
        }
        items.push((s, t));
    }
    let positives = items.iter().filter(|i| i.1).count() as u64;
    let negatives = items.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Metrics(format!(
            "curve needs both classes; got {positives} positive and {negatives} negative pixels"
        )));
    }
    items.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut steps = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < items.len() {
        let s = items[i].0;
        while i < items.len() && items[i].0 == s {
            if items[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        steps.push((s, tp, fp));
    }
    Ok(Sweep { positives, negatives, steps })
}

/// ROC curve from (0, 0) to (1, 1) and its trapezoidal area.
pub fn roc_auc(scores: &[f64], truth: &[bool], mask: Option<&[bool]>) -> Result<(Curve, f64)> {
    let sw = sweep(scores, truth, mask)?;
    let (p, n) = (sw.positives as f64, sw.negatives as f64);
    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    // Twice the area in units of one (positive, negative) pair, summed exactly.
    let mut doubled: u128 = 0;
    let (mut prev_tp, mut prev_fp) = (0u64, 0u64);
    for &(t, tp, fp) in &sw.steps {
        doubled += u128::from(fp - prev_fp) * u128::from(tp + prev_tp);
        points.push((fp as f64 / n, tp as f64 / p));
        thresholds.push(t);
        (prev_tp, prev_fp) = (tp, fp);
    }
    let auc = doubled as f64 / (2.0 * p * n);
    Ok((Curve { kind: CurveKind::Roc, points, thresholds }, auc))
}

/// Precision-recall points up to the first threshold reaching full recall, with
/// average precision `Σ (Rₖ − Rₖ₋₁)·Pₖ`.
pub fn pr_curve(scores: &[f64], truth: &[bool], mask: Option<&[bool]>) -> Result<(Curve, f64)> {
    let sw = sweep(scores, truth, mask)?;
    let p = sw.positives as f64;
    let mut points = Vec::new();
    let mut thresholds = Vec::new();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &(t, tp, fp) in &sw.steps {
        let recall = tp as f64 / p;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push((recall, precision));
        thresholds.push(t);
        if tp == sw.positives {
            break;
        }
    }
    Ok((Curve { kind: CurveKind::Pr, points, thresholds }, ap))
}

/// CSV `threshold,x,y`, 9 significant digits.
pub fn export_curve(curve: &Curve, path: &Path) -> Result<()> {
    let mut out = String::from("threshold,x,y\n");
    for (&t, &(x, y)) in curve.thresholds.iter().zip(&curve.points) {
        out.push_str(&format!("{t:.8e},{x:.8e},{y:.8e}\n"));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn import_curve(path: &Path, kind: CurveKind) -> Result<Curve> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("threshold,x,y") {
        return Err(Error::Metrics(format!("{}: missing `threshold,x,y` header", path.display())));
    }
    let mut curve = Curve { kind, points: Vec::new(), thresholds: Vec::new() };
    for (i, line) in lines.enumerate() {
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Metrics(format!("{} row {}: {e}", path.display(), i + 1)))?;
        let [t, x, y] = fields[..] else {
            return Err(Error::Metrics(format!("{} row {}: expected 3 fields", path.display(), i + 1)));
        };
        curve.thresholds.push(t);
        curve.points.push((x, y));
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfectly_ordered_scores() {
        let scores = [0.9, 0.8, 0.7, 0.2, 0.1];
        let truth = [true, true, true, false, false];
        let (roc, auc) = roc_auc(&scores, &truth, None).unwrap();
        assert_eq!(auc, 1.0);
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
        let (pr, ap) = pr_curve(&scores, &truth, None).unwrap();
        assert!(pr.points.iter().all(|p| p.1 == 1.0));
        assert_eq!(ap, 1.0);
    }

    #[test]
    fn constant_scores() {
        let scores = [0.3; 6];
        let truth = [true, false, false, true, false, false];
        let (roc, auc) = roc_auc(&scores, &truth, None).unwrap();
        assert_eq!(roc.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(auc, 0.5);
        let (pr, _) = pr_curve(&scores, &truth, None).unwrap();
        assert_eq!(pr.points, vec![(1.0, 2.0 / 6.0)]);
    }

    #[test]
    fn single_class_rejected() {
        assert!(roc_auc(&[0.1, 0.2], &[true, true], None).is_err());
        assert!(pr_curve(&[0.1, 0.2], &[false, false], None).is_err());
        assert!(roc_auc(&[0.1, 0.2], &[true, false], Some(&[true, false])).is_err());
    }

    #[test]
    fn roc_x_is_monotone_and_pr_recall_is_monotone() {
        let scores: Vec<f64> = (0..50).map(|i| ((i * 37) % 17) as f64 / 17.0).collect();
        let truth: Vec<bool> = (0..50).map(|i| (i * 11) % 3 == 0).collect();
        let (roc, _) = roc_auc(&scores, &truth, None).unwrap();
        assert!(roc.points.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
        let (pr, _) = pr_curve(&scores, &truth, None).unwrap();
        assert!(pr.points.windows(2).all(|w| w[0].0 <= w[1].0));
    }

    #[test]
    fn export_formats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roc.csv");
        let (roc, _) = roc_auc(&[0.7, 0.2], &[true, false], None).unwrap();
        export_curve(&roc, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + roc.points.len());
        assert_eq!(text.lines().nth(2).unwrap(), "7.00000000e-1,0.00000000e0,1.00000000e0");
        let empty = Curve { kind: CurveKind::Roc, points: vec![], thresholds: vec![] };
        export_curve(&empty, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "threshold,x,y\n");
    }
}
