//! Predictive variance, expected uncertainty calibration error (UCE),
//! calibration-diagram statistics and MSE.

use serde::{Deserialize, Serialize};

use crate::types::{mean_sq_diff, BinStats, McPredictionSet, McRecord, Target, UncertaintyRecord};
use crate::{Error, Result};

/// Default number of equal-width uncertainty bins.
pub const DEFAULT_BINS: usize = 10;

/// Decomposes the MC samples of one record into epistemic and aleatoric
/// variance.
///
/// The epistemic part is the population (1/N) variance of the sample means,
/// computed per output and averaged over outputs; the aleatoric part is the
/// mean of `exp(log_var)`.
pub fn predictive_variance(record: &McRecord) -> UncertaintyRecord {
    let n = record.samples.len() as f64;
    let d = record.y.len();

    // running mean: exact when every pass agrees
    let mut y_mean = vec![0.0; d];
    for (k, s) in record.samples.iter().enumerate() {
        for (acc, v) in y_mean.iter_mut().zip(&s.mean) {
            *acc += (v - *acc) / (k + 1) as f64;
        }
    }

    let mut epistemic = 0.0;
    let mut mc_sq_err = 0.0;
    let mut aleatoric = 0.0;
    for s in &record.samples {
        epistemic += mean_sq_diff(&s.mean, &y_mean);
        mc_sq_err += mean_sq_diff(&s.mean, &record.y);
        aleatoric += s.variance();
    }
    let epistemic = epistemic / n;
    let aleatoric = aleatoric / n;

    UncertaintyRecord {
        id: record.id.clone(),
        y: record.y.clone(),
        y_mean,
        epistemic,
        aleatoric,
        total: epistemic + aleatoric,
        mc_sq_err: mc_sq_err / n,
    }
}

pub fn uncertainty_records(set: &McPredictionSet) -> Vec<UncertaintyRecord> {
    set.records.iter().map(predictive_variance).collect()
}

/// Mean over records of the per-dimension mean squared error of `y_mean`.
pub fn mse(records: &[UncertaintyRecord]) -> f64 {
    records.iter().map(UncertaintyRecord::sq_err).sum::<f64>() / records.len() as f64
}

/// Uncertainty and observed error used for binning in each mode.
///
/// Predictive mode bins the total variance against the second moment of the
/// per-pass errors; aleatoric-only mode bins the aleatoric variance against the
/// squared error of the MC mean.
pub fn mode_values(record: &UncertaintyRecord, mode: Target) -> (f64, f64) {
    match mode {
        Target::Predictive => (record.total, record.mc_sq_err),
        Target::AleatoricOnly => (record.aleatoric, record.sq_err()),
    }
}

/// K equal-width bins spanning `[lower, upper]`.
///
/// The last bin includes its upper edge; a value sitting exactly on an
/// interior edge belongs to the bin above it. When `lower == upper` there is a
/// single degenerate bin holding every value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub lower: f64,
    pub upper: f64,
    pub k: usize,
}

impl Binning {
    pub fn new(lower: f64, upper: f64, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("bin count must be at least 1".into()));
        }
        if !(lower <= upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "invalid bin range [{lower}, {upper}]"
            )));
        }
        Ok(Binning { lower, upper, k })
    }

    /// Bins spanning the min and max of `values`.
    pub fn spanning(values: impl IntoIterator<Item = f64>, k: usize) -> Result<Self> {
        let (lo, hi) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        if lo > hi {
            return Err(Error::EmptyInput("no values to bin"));
        }
        Binning::new(lo, hi, k)
    }

    pub fn is_degenerate(&self) -> bool {
        self.lower == self.upper
    }

    /// Number of bins actually used (1 when degenerate).
    pub fn len(&self) -> usize {
        if self.is_degenerate() {
            1
        } else {
            self.k
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn edge(&self, i: usize) -> f64 {
        if i >= self.k {
            self.upper
        } else {
            self.lower + (self.upper - self.lower) * i as f64 / self.k as f64
        }
    }

    pub fn edges(&self) -> Vec<f64> {
        if self.is_degenerate() {
            vec![self.lower, self.upper]
        } else {
            (0..=self.k).map(|i| self.edge(i)).collect()
        }
    }

    /// Bin index of `v`, or `None` if it lies outside the range.
    pub fn index(&self, v: f64) -> Option<usize> {
        if !(v >= self.lower && v <= self.upper) {
            return None;
        }
        if self.is_degenerate() {
            return Some(0);
        }
        let width = (self.upper - self.lower) / self.k as f64;
        let mut i = (((v - self.lower) / width).floor() as usize).min(self.k - 1);
        // settle rounding against the exact edge values
        while i > 0 && v < self.edge(i) {
            i -= 1;
        }
        while i + 1 < self.k && v >= self.edge(i + 1) {
            i += 1;
        }
        Some(i)
    }
}

/// Result of a UCE evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UceReport {
    /// Calibration error in percent.
    pub uce: f64,
    pub bins: Vec<BinStats>,
    pub k: usize,
    pub mode: Target,
    pub m: usize,
    pub binning: Binning,
    /// How the bin range was chosen.
    pub bin_range_rule: String,
}

impl UceReport {
    /// Recomputes the weighted error from the stored bins (in percent).
    pub fn recompute(&self) -> f64 {
        let m = self.m as f64;
        100.0
            * self
                .bins
                .iter()
                .filter(|b| b.count > 0)
                .map(|b| b.count as f64 / m * (b.var_obs - b.uncert_mean).abs())
                .sum::<f64>()
    }
}

fn bin_stats(records: &[UncertaintyRecord], k: usize, mode: Target) -> Result<(Binning, Vec<BinStats>)> {
    if records.is_empty() {
        return Err(Error::EmptyInput("records"));
    }
    let binning = Binning::spanning(records.iter().map(|r| mode_values(r, mode).0), k)?;
    let nb = binning.len();
    let mut count = vec![0usize; nb];
    let mut err_sum = vec![0.0; nb];
    let mut unc_sum = vec![0.0; nb];
    for r in records {
        let (u, e) = mode_values(r, mode);
        let i = binning.index(u).expect("value inside its own range");
        count[i] += 1;
        err_sum[i] += e;
        unc_sum[i] += u;
    }
    let bins = (0..nb)
        .map(|i| {
            let c = count[i];
            let (var_obs, uncert_mean) = if c > 0 {
                (err_sum[i] / c as f64, unc_sum[i] / c as f64)
            } else {
                (0.0, 0.0)
            };
            BinStats {
                k: i,
                lower: binning.edge(i),
                upper: if binning.is_degenerate() { binning.upper } else { binning.edge(i + 1) },
                count: c,
                var_obs,
                uncert_mean,
            }
        })
        .collect();
    Ok((binning, bins))
}

/// Expected uncertainty calibration error over `k` equal-width bins spanning
/// the observed uncertainty range, reported in percent.
pub fn uce(records: &[UncertaintyRecord], k: usize, mode: Target) -> Result<UceReport> {
    let (binning, bins) = bin_stats(records, k, mode)?;
    let mut report = UceReport {
        uce: 0.0,
        bins,
        k,
        mode,
        m: records.len(),
        binning,
        bin_range_rule: "equal-width bins over [min, max] of the evaluated uncertainties".into(),
    };
    report.uce = report.recompute();
    Ok(report)
}

/// One point of a calibration diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramPoint {
    pub bin_lower: f64,
    pub bin_upper: f64,
    pub count: usize,
    pub uncert_mean: f64,
    pub var_obs: f64,
}

/// Per-bin (expected, observed) points; empty bins are omitted.
pub fn calibration_diagram(
    records: &[UncertaintyRecord],
    k: usize,
    mode: Target,
) -> Result<Vec<DiagramPoint>> {
    let (_, bins) = bin_stats(records, k, mode)?;
    Ok(bins
        .into_iter()
        .filter(|b| b.count > 0)
        .map(|b| DiagramPoint {
            bin_lower: b.lower,
            bin_upper: b.upper,
            count: b.count,
            uncert_mean: b.uncert_mean,
            var_obs: b.var_obs,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::McSample;

    fn record(means: &[f64], vars: &[f64], y: f64) -> McRecord {
        McRecord {
            id: "r".into(),
            y: vec![y],
            samples: means
                .iter()
                .zip(vars)
                .map(|(&m, &v)| McSample {
                    mean: vec![m],
                    log_var: v.ln(),
                })
                .collect(),
        }
    }

    fn summary(total: f64, obs: f64) -> UncertaintyRecord {
        UncertaintyRecord {
            id: "x".into(),
            y: vec![0.0],
            y_mean: vec![obs.sqrt()],
            epistemic: 0.0,
            aleatoric: total,
            total,
            mc_sq_err: obs,
        }
    }

    #[test]
    fn identical_means_have_no_epistemic_part() {
        let u = predictive_variance(&record(&[0.5; 3], &[0.04; 3], 0.5));
        assert_eq!(u.epistemic, 0.0);
        assert!((u.aleatoric - 0.04).abs() < 1e-15);
        assert_eq!(u.total, u.epistemic + u.aleatoric);
    }

    #[test]
    fn population_variance_of_two_means() {
        let mut r = record(&[0.0, 2.0], &[1.0, 1.0], 1.0);
        r.samples.iter_mut().for_each(|s| s.log_var = -800.0);
        let u = predictive_variance(&r);
        assert_eq!(u.epistemic, 1.0);
        assert_eq!(u.total, 1.0);
    }

    #[test]
    fn three_sample_decomposition() {
        let u = predictive_variance(&record(&[1.0, 2.0, 3.0], &[0.1, 0.2, 0.3], 2.0));
        assert!((u.epistemic - 2.0 / 3.0).abs() < 1e-15);
        assert!((u.aleatoric - 0.2).abs() < 1e-15);
        assert!((u.total - 0.86667).abs() < 1e-5);
        assert_eq!(u.y_mean, vec![2.0]);
    }

    #[test]
    fn multi_output_epistemic_is_averaged() {
        let r = McRecord {
            id: "m".into(),
            y: vec![0.0, 0.0],
            samples: vec![
                McSample { mean: vec![0.0, 1.0], log_var: 0.0 },
                McSample { mean: vec![2.0, 1.0], log_var: 0.0 },
            ],
        };
        let u = predictive_variance(&r);
        // per-output variances 1 and 0, averaged
        assert_eq!(u.epistemic, 0.5);
        assert_eq!(u.aleatoric, 1.0);
    }

    #[test]
    fn perfectly_calibrated_bins_give_zero() {
        let recs: Vec<_> = [0.1, 0.2, 0.3, 0.4].iter().map(|&v| summary(v, v)).collect();
        let r = uce(&recs, 4, Target::Predictive).unwrap();
        assert!(r.uce.abs() < 1e-12);
    }

    #[test]
    fn single_bin_hand_value() {
        // var(B) = 0.3, uncert(B) = 0.1
        let recs = vec![summary(0.05, 0.2), summary(0.15, 0.4), summary(0.1, 0.3), summary(0.1, 0.3)];
        let r = uce(&recs, 1, Target::Predictive).unwrap();
        assert!((r.uce - 20.0).abs() < 1e-12);
        assert_eq!(r.bins.len(), 1);
        assert_eq!(r.bins[0].count, 4);
    }

    #[test]
    fn identical_uncertainties_form_one_bin() {
        let recs = vec![summary(0.2, 0.1), summary(0.2, 0.5)];
        let r = uce(&recs, 10, Target::Predictive).unwrap();
        assert_eq!(r.bins.len(), 1);
        assert_eq!(r.bins[0].count, 2);
        assert!((r.uce - 10.0).abs() < 1e-12);
    }

    #[test]
    fn edges_and_ties() {
        let b = Binning::new(0.0, 1.0, 4).unwrap();
        assert_eq!(b.index(0.0), Some(0));
        assert_eq!(b.index(0.25), Some(1));
        assert_eq!(b.index(0.5), Some(2));
        assert_eq!(b.index(1.0), Some(3));
        assert_eq!(b.index(1.5), None);
        assert!(Binning::new(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn diagram_omits_empty_bins() {
        let recs = vec![summary(0.0, 0.0), summary(1.0, 1.0)];
        let pts = calibration_diagram(&recs, 5, Target::Predictive).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1].count, 1);
    }

    #[test]
    fn mse_simple() {
        let mut r = summary(0.1, 0.0);
        r.y_mean = vec![0.1];
        assert!((mse(&[r]) - 0.01).abs() < 1e-17);
        let r = summary(0.1, 0.0);
        assert_eq!(mse(&[r]), 0.0);
    }
}
