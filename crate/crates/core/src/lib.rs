//! Recalibration and evaluation of predictive uncertainty for regression.
//!
//! The input is a [`McPredictionSet`]: for every sample, the ground truth and
//! N stochastic forward passes (MC dropout or ensemble members), each giving a
//! predicted mean and a log aleatoric variance. From it the crate derives the
//! epistemic/aleatoric variance decomposition, fits σ scaling or an auxiliary
//! recalibration network on a held-out set, and evaluates calibration error,
//! likelihood, interval coverage, rejection curves and shift histograms.

pub mod analysis;
pub mod calibrate;
mod error;
pub mod experiment;
pub mod intervals;
pub mod io;
pub mod likelihood;
pub mod metrics;
pub mod optim;
mod real_str;
pub mod report;
pub mod toymodel;
pub mod types;

pub use error::{DumpIssue, Error, Result};
pub use likelihood::LikelihoodKind;
pub use types::{
    validate, AuxWeights, BinStats, CalibrationArtifact, McPredictionSet, McRecord, McSample, Method,
    Target, UncertaintyRecord, Violation,
};
