//! Pixel-level segmentation scores and threshold curves.

mod confusion;
mod curves;

pub use confusion::{binarize, confusion, summary_line, ConfusionCounts, Metrics};
pub use curves::{export_curve, import_curve, pr_curve, roc_auc, Curve, CurveKind};
