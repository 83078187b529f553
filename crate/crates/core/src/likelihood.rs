//! Heteroscedastic Gaussian and Laplacian negative log-likelihoods.
//!
//! The per-sample losses drop additive constants and are the training
//! objectives; [`batch_nll`] keeps them and is the reporting metric.

use serde::{Deserialize, Serialize};

use crate::calibrate;
use crate::metrics;
use crate::types::{CalibrationArtifact, McPredictionSet, UncertaintyRecord};
use crate::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodKind {
    Gaussian,
    Laplace,
}

fn check_dims(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::DimensionMismatch {
            left: y.len(),
            right: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyInput("target vector"));
    }
    Ok(())
}

/// `exp(-log_var)·‖y - ŷ‖² + log_var`.
pub fn gaussian_nll(y: &[f64], y_hat: &[f64], log_var: f64) -> Result<f64> {
    check_dims(y, y_hat)?;
    let sq: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-log_var).exp() * sq + log_var)
}

/// `exp(-log_sigma)·‖y - ŷ‖₁ + log_sigma`.
pub fn laplace_nll(y: &[f64], y_hat: &[f64], log_sigma: f64) -> Result<f64> {
    check_dims(y, y_hat)?;
    let l1: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum();
    Ok((-log_sigma).exp() * l1 + log_sigma)
}

/// Full Gaussian negative log-density of a squared error under variance `var`.
pub fn gaussian_density_nll(sq_err: f64, var: f64) -> f64 {
    HALF_LN_2PI + 0.5 * var.ln() + sq_err / (2.0 * var)
}

/// Full Laplace negative log-density of an absolute error under scale `b`.
pub fn laplace_density_nll(abs_err: f64, b: f64) -> f64 {
    (2.0 * b).ln() + abs_err / b
}

/// Mean NLL of the MC-mean predictions under the calibrated total uncertainty.
pub fn batch_nll(
    set: &McPredictionSet,
    calib: &CalibrationArtifact,
    kind: LikelihoodKind,
) -> Result<f64> {
    let records = metrics::uncertainty_records(set);
    let calibrated = calibrate::apply(&records, calib)?;
    records_nll(&calibrated, kind)
}

/// Mean NLL over already-calibrated records.
///
/// For the Gaussian the total uncertainty is the variance and the error is
/// the per-dimension mean squared error; for the Laplace the scale is
/// `sqrt(total)` and the error is the per-dimension mean absolute error.
/// Records are summed sequentially in input order.
pub fn records_nll(records: &[UncertaintyRecord], kind: LikelihoodKind) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput("records"));
    }
    let mut sum = 0.0;
    for r in records {
        if !(r.total > 0.0) || !r.total.is_finite() {
            return Err(Error::DegenerateUncertainty { id: r.id.clone() });
        }
        sum += match kind {
            LikelihoodKind::Gaussian => gaussian_density_nll(r.sq_err(), r.total),
            LikelihoodKind::Laplace => laplace_density_nll(r.abs_err(), r.total.sqrt()),
        };
    }
    Ok(sum / records.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{McRecord, McSample};

    #[test]
    fn gaussian_examples() {
        assert_eq!(gaussian_nll(&[0.5], &[0.5], 0.0).unwrap(), 0.0);
        assert_eq!(gaussian_nll(&[0.0], &[1.0], 0.0).unwrap(), 1.0);
        let v = gaussian_nll(&[0.0], &[0.2], 0.5f64.ln()).unwrap();
        assert!((v - (0.04 / 0.5 + 0.5f64.ln())).abs() < 1e-12);
        assert!((v - (-0.61315)).abs() < 1e-5);
    }

    #[test]
    fn laplace_examples() {
        assert_eq!(laplace_nll(&[0.3], &[0.3], 0.0).unwrap(), 0.0);
        assert_eq!(laplace_nll(&[0.0], &[1.0], 0.0).unwrap(), 1.0);
        let v = laplace_nll(&[0.0], &[0.5], 2f64.ln()).unwrap();
        assert!((v - 0.94315).abs() < 1e-5);
    }

    #[test]
    fn dimension_mismatch_names_lengths() {
        let err = gaussian_nll(&[0.0, 1.0], &[0.0], 0.0).unwrap_err();
        assert!(err.to_string().contains("2 vs 1"));
        assert!(laplace_nll(&[0.0], &[0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn gaussian_minimum_over_log_var() {
        let e2: f64 = 0.09;
        let best = (0..4001)
            .map(|i| -10.0 + i as f64 * 0.0025)
            .map(|lv| (lv, gaussian_nll(&[0.0], &[0.3], lv).unwrap()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!((best.0 - e2.ln()).abs() < 0.003);
        assert!((best.1 - (1.0 + e2.ln())).abs() < 1e-5);
    }

    fn single(y: f64, mean: f64, log_var: f64) -> McPredictionSet {
        McPredictionSet {
            d: 1,
            records: vec![McRecord {
                id: "r".into(),
                y: vec![y],
                samples: vec![McSample {
                    mean: vec![mean],
                    log_var,
                }],
            }],
        }
    }

    #[test]
    fn batch_nll_constant_term() {
        let set = single(0.4, 0.4, 0.0);
        let v = batch_nll(&set, &CalibrationArtifact::identity(), LikelihoodKind::Gaussian).unwrap();
        assert!((v - 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
        assert!((v - 0.91894).abs() < 1e-5);
    }

    #[test]
    fn batch_nll_sigma_one_is_identity() {
        let set = single(0.1, 0.3, -3.0);
        let id = batch_nll(&set, &CalibrationArtifact::identity(), LikelihoodKind::Gaussian).unwrap();
        let s1 = CalibrationArtifact::sigma(1.0, LikelihoodKind::Gaussian, crate::Target::Predictive);
        assert_eq!(batch_nll(&set, &s1, LikelihoodKind::Gaussian).unwrap(), id);
    }

    #[test]
    fn degenerate_uncertainty_is_an_error() {
        let set = single(0.1, 0.3, -800.0);
        let err = batch_nll(&set, &CalibrationArtifact::identity(), LikelihoodKind::Gaussian);
        assert!(matches!(err, Err(Error::DegenerateUncertainty { .. })));
    }
}
