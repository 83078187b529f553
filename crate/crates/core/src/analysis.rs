//! Uncertainty-based rejection of predictions and distribution-shift
//! comparison of uncertainty histograms.

use serde::{Deserialize, Serialize};

use crate::metrics::{self, Binning};
use crate::types::UncertaintyRecord;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionPoint {
    /// Records with `total > threshold` are rejected.
    pub threshold: f64,
    pub frac_rejected: f64,
    pub kept: usize,
    /// `None` when nothing is kept.
    pub mse_kept: Option<f64>,
}

/// Points ordered from the largest threshold to the smallest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionCurve {
    pub points: Vec<RejectionPoint>,
}

fn check_steps(records: &[UncertaintyRecord], steps: usize) -> Result<()> {
    if records.is_empty() {
        return Err(Error::EmptyInput("records"));
    }
    if steps < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 steps, got {steps}")));
    }
    Ok(())
}

fn point_at(records: &[UncertaintyRecord], threshold: f64) -> RejectionPoint {
    // kept records stay in input order so the full sweep reproduces `mse` bit for bit
    let kept: Vec<UncertaintyRecord> = records
        .iter()
        .filter(|r| r.total <= threshold)
        .cloned()
        .collect();
    let m = records.len();
    RejectionPoint {
        threshold,
        frac_rejected: (m - kept.len()) as f64 / m as f64,
        kept: kept.len(),
        mse_kept: (!kept.is_empty()).then(|| metrics::mse(&kept)),
    }
}

/// Sweeps thresholds over the nearest-rank uncertainty quantiles at
/// fractions `j/steps`, `j = steps, …, 1`.
pub fn rejection_curve(records: &[UncertaintyRecord], steps: usize) -> Result<RejectionCurve> {
    check_steps(records, steps)?;
    let mut totals: Vec<f64> = records.iter().map(|r| r.total).collect();
    totals.sort_by(f64::total_cmp);
    let m = records.len();
    let points = (1..=steps)
        .rev()
        .map(|j| {
            let rank = (j * m).div_ceil(steps);
            point_at(records, totals[rank - 1])
        })
        .collect();
    Ok(RejectionCurve { points })
}

/// Sweeps absolute thresholds `max·j/steps`, `j = steps, …, 1`.
pub fn rejection_curve_absolute(records: &[UncertaintyRecord], steps: usize) -> Result<RejectionCurve> {
    check_steps(records, steps)?;
    let max = records.iter().map(|r| r.total).fold(f64::NEG_INFINITY, f64::max);
    let points = (1..=steps)
        .rev()
        .map(|j| {
            let threshold = if j == steps { max } else { max * j as f64 / steps as f64 };
            point_at(records, threshold)
        })
        .collect();
    Ok(RejectionCurve { points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodComparison {
    pub in_dist: UncertaintyHistogram,
    pub shifted: UncertaintyHistogram,
    /// Mean shifted uncertainty minus mean in-distribution uncertainty.
    pub mean_difference: f64,
    /// Probability that a shifted record is more uncertain than an
    /// in-distribution one (ties count half).
    pub auroc: f64,
}

/// Linear-interpolation quantile of sorted values.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn summarize(values: &[f64]) -> Summary {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Summary {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        median: quantile_sorted(&sorted, 0.5),
        q90: quantile_sorted(&sorted, 0.9),
    }
}

fn histogram(values: &[f64], binning: &Binning) -> UncertaintyHistogram {
    let mut counts = vec![0usize; binning.len()];
    for &v in values {
        counts[binning.index(v).expect("inside shared range")] += 1;
    }
    UncertaintyHistogram {
        edges: binning.edges(),
        counts,
        summary: summarize(values),
    }
}

/// Area under the ROC curve for separating `positives` from `negatives` by
/// thresholding the value, via the Mann–Whitney rank sum with mid-ranks.
pub fn auroc(negatives: &[f64], positives: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = negatives
        .iter()
        .map(|&v| (v, false))
        .chain(positives.iter().map(|&v| (v, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let np = positives.len() as f64;
    let nn = negatives.len() as f64;
    (rank_sum - np * (np + 1.0) / 2.0) / (np * nn)
}

/// Histograms of total uncertainty for two sets on shared bins spanning the
/// union of their values, with separation statistics.
pub fn ood_compare(
    in_dist: &[UncertaintyRecord],
    shifted: &[UncertaintyRecord],
    k: usize,
) -> Result<OodComparison> {
    if in_dist.is_empty() || shifted.is_empty() {
        return Err(Error::EmptyInput("both sets must be non-empty"));
    }
    let a: Vec<f64> = in_dist.iter().map(|r| r.total).collect();
    let b: Vec<f64> = shifted.iter().map(|r| r.total).collect();
    let binning = Binning::spanning(a.iter().chain(&b).copied(), k)?;
    let in_hist = histogram(&a, &binning);
    let shifted_hist = histogram(&b, &binning);
    Ok(OodComparison {
        mean_difference: shifted_hist.summary.mean - in_hist.summary.mean,
        auroc: auroc(&a, &b),
        in_dist: in_hist,
        shifted: shifted_hist,
    })
}
