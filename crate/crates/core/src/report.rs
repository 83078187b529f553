use serde::Serialize;

use crate::calibrate;
use crate::likelihood::{records_nll, LikelihoodKind};
use crate::metrics::{self, UceReport};
use crate::types::{CalibrationArtifact, Target, UncertaintyRecord};
use crate::Result;

/// Calibration quality of a set of records under one artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub m: usize,
    pub mse: f64,
    pub nll: f64,
    pub mean_uncertainty: f64,
    pub uce_predictive: UceReport,
    pub uce_aleatoric_only: UceReport,
}

/// Applies `calib` to the records and computes MSE, Gaussian NLL and UCE in
/// both modes with `bins` bins.
pub fn evaluate(records: &[UncertaintyRecord], calib: &CalibrationArtifact, bins: usize) -> Result<Evaluation> {
    let calibrated = calibrate::apply(records, calib)?;
    Ok(Evaluation {
        m: calibrated.len(),
        mse: metrics::mse(&calibrated),
        nll: records_nll(&calibrated, LikelihoodKind::Gaussian)?,
        mean_uncertainty: calibrated.iter().map(|r| r.total).sum::<f64>() / calibrated.len() as f64,
        uce_predictive: metrics::uce(&calibrated, bins, Target::Predictive)?,
        uce_aleatoric_only: metrics::uce(&calibrated, bins, Target::AleatoricOnly)?,
    })
}
