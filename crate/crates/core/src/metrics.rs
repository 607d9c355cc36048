//! Detection evaluation: confusion counting, positive predictive value,
//! accuracy/recall, ROC curves and AUC.

use crate::error::{Error, Result};

/// Counts of true/false positives and negatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Total predicted positives.
    pub fn predicted_positives(&self) -> usize {
        self.tp + self.fp
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn accuracy(&self) -> Option<f64> {
        let d = self.total();
        (d > 0).then(|| (self.tp + self.tn) as f64 / d as f64)
    }
}

/// Tally predictions against truth; positive iff score > threshold (strict).
pub fn confusion(results: &[(f64, bool)], threshold: f64) -> Result<ConfusionCounts> {
    let mut c = ConfusionCounts { tp: 0, fp: 0, fn_: 0, tn: 0 };
    for &(p, truth) in results {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Eval(format!("score {p} outside [0, 1]")));
        }
        match (p > threshold, truth) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Positive predictive value tp / (tp + fp); `None` when undefined.
pub fn ppv(c: &ConfusionCounts) -> Option<f64> {
    let d = c.tp + c.fp;
    (d > 0).then(|| c.tp as f64 / d as f64)
}

/// ROC curve points sorted by threshold descending, plus trapezoidal AUC.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// (false positive rate, true positive rate, threshold).
    pub points: Vec<(f64, f64, f64)>,
    pub auc: f64,
}

/// Sweep thresholds over the distinct scores (plus sentinels) and integrate
/// the ROC curve by the trapezoidal rule.
pub fn roc_curve(results: &[(f64, bool)]) -> Result<RocCurve> {
    let n_pos = results.iter().filter(|&&(_, t)| t).count();
    let n_neg = results.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Eval(
            "ROC needs at least one positive and one negative truth item".into(),
        ));
    }
    for &(p, _) in results {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Eval(format!("score {p} outside [0, 1]")));
        }
    }
    let mut thresholds: Vec<f64> = results.iter().map(|&(p, _)| p).collect();
    thresholds.push(1.0);
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    // threshold above every score first (point (0,0)), then descending; a
    // final sentinel below every score yields (1,1)
    let mut points = Vec::with_capacity(thresholds.len() + 1);
    for &t in &thresholds {
        let c = confusion(results, t)?;
        points.push((
            c.fp as f64 / n_neg as f64,
            c.tp as f64 / n_pos as f64,
            t,
        ));
    }
    let min_score = thresholds.last().copied().unwrap_or(0.0);
    let below = if min_score > 0.0 { min_score / 2.0 } else { -1.0 };
    let c = confusion(
        results,
        below.max(-1.0).min(min_score - f64::EPSILON),
    )
    .unwrap_or(ConfusionCounts { tp: n_pos, fp: n_neg, fn_: 0, tn: 0 });
    let mut last = (c.fp as f64 / n_neg as f64, c.tp as f64 / n_pos as f64, below);
    // force the inclusive endpoint
    last.0 = 1.0;
    last.1 = 1.0;
    points.push(last);
    let mut auc = 0.0;
    for w in points.windows(2) {
        let (x0, y0, _) = w[0];
        let (x1, y1, _) = w[1];
        auc += (x1 - x0) * (y0 + y1) / 2.0;
    }
    Ok(RocCurve { points, auc })
}
