//! Shared data model: Monte-Carlo prediction sets, derived uncertainty
//! records, calibration artifacts and per-bin statistics.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::likelihood::LikelihoodKind;
use crate::real_str;

/// One stochastic forward pass: predicted mean and log aleatoric variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSample {
    pub mean: Vec<f64>,
    pub log_var: f64,
}

impl McSample {
    pub fn variance(&self) -> f64 {
        self.log_var.exp()
    }
}

/// Ground truth plus the N stochastic outputs produced for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRecord {
    pub id: String,
    pub y: Vec<f64>,
    pub samples: Vec<McSample>,
}

/// The universal input of the toolkit. Fields are public so that malformed
/// sets can be represented and reported on by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct McPredictionSet {
    pub d: usize,
    pub records: Vec<McRecord>,
}

impl McPredictionSet {
    /// Builds a set and rejects it if any invariant is violated.
    pub fn new(d: usize, records: Vec<McRecord>) -> crate::Result<Self> {
        let set = McPredictionSet { d, records };
        let report = validate(&set);
        if report.is_empty() {
            Ok(set)
        } else {
            Err(crate::Error::InvalidArgument(
                report
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; "),
            ))
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of stochastic passes per record (taken from the first record).
    pub fn passes(&self) -> usize {
        self.records.first().map_or(0, |r| r.samples.len())
    }
}

/// One invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Record id, or empty when the violation concerns the whole set.
    pub id: String,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.id.is_empty() {
            write!(f, "{}: {}", self.field, self.message)
        } else {
            write!(f, "record {}: {}: {}", self.id, self.field, self.message)
        }
    }
}

/// Checks every invariant of a prediction set and lists what is broken.
pub fn validate(set: &McPredictionSet) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |id: &str, field: &str, message: String| {
        out.push(Violation {
            id: id.to_string(),
            field: field.to_string(),
            message,
        })
    };

    if set.d == 0 {
        push("", "d", "output dimension must be at least 1".into());
    }
    if set.records.is_empty() {
        push("", "records", "set contains no records".into());
        return out;
    }

    let n = set.records[0].samples.len();
    for rec in &set.records {
        let id = rec.id.as_str();
        if rec.samples.is_empty() {
            push(id, "samples", "no stochastic samples (N = 0)".into());
        } else if rec.samples.len() != n {
            push(
                id,
                "samples",
                format!("inconsistent N: {} (expected {})", rec.samples.len(), n),
            );
        }
        if rec.y.len() != set.d {
            push(
                id,
                "y",
                format!("length {} does not match d = {}", rec.y.len(), set.d),
            );
        }
        if rec.y.iter().any(|v| !v.is_finite()) {
            push(id, "y", "non-finite target value".into());
        }
        for (k, s) in rec.samples.iter().enumerate() {
            if s.mean.len() != set.d {
                push(
                    id,
                    &format!("samples[{k}].mean"),
                    format!("length {} does not match d = {}", s.mean.len(), set.d),
                );
            }
            if s.mean.iter().any(|v| !v.is_finite()) {
                push(id, &format!("samples[{k}].mean"), "non-finite mean".into());
            }
            if !s.log_var.is_finite() {
                push(id, &format!("samples[{k}].log_var"), "non-finite log_var".into());
            } else if s.variance() <= 0.0 || !s.variance().is_finite() {
                push(
                    id,
                    &format!("samples[{k}].log_var"),
                    "variance underflows or overflows".into(),
                );
            }
        }
    }
    out
}

/// Per-record summary of the Monte-Carlo predictive distribution.
///
/// `mc_sq_err` keeps the second moment of the per-pass errors,
/// `1/N Σ_n mean_d (ŷ_n - y)²`, so that predictive-mode calibration error can
/// be evaluated without the raw samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyRecord {
    pub id: String,
    pub y: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub epistemic: f64,
    pub aleatoric: f64,
    pub total: f64,
    pub mc_sq_err: f64,
}

impl UncertaintyRecord {
    /// Squared error of the MC mean, averaged over output dimensions.
    pub fn sq_err(&self) -> f64 {
        mean_sq_diff(&self.y, &self.y_mean)
    }

    /// Absolute error of the MC mean, averaged over output dimensions.
    pub fn abs_err(&self) -> f64 {
        let d = self.y.len() as f64;
        self.y
            .iter()
            .zip(&self.y_mean)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / d
    }
}

pub(crate) fn mean_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    let d = a.len() as f64;
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sigma,
    Aux,
    Identity,
}

/// Which uncertainty a calibration acts on and which error it is judged against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Total predictive variance (epistemic + aleatoric).
    Predictive,
    /// Aleatoric variance only; epistemic part is left untouched.
    AleatoricOnly,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Predictive => "predictive",
            Target::AleatoricOnly => "aleatoric_only",
        })
    }
}

/// Weights of the auxiliary recalibration network.
///
/// The network maps `x = ln u` to `x + Σ_j w2[j]·relu(w1[j]·x + b1[j]) + b2`,
/// i.e. a single hidden layer of width `h` on top of a skip connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxWeights {
    pub h: usize,
    #[serde(with = "real_str::vec")]
    pub w1: Vec<f64>,
    #[serde(with = "real_str::vec")]
    pub b1: Vec<f64>,
    #[serde(with = "real_str::vec")]
    pub w2: Vec<f64>,
    #[serde(with = "real_str::scalar")]
    pub b2: f64,
}

impl AuxWeights {
    pub fn shape_ok(&self) -> bool {
        self.h >= 1 && self.w1.len() == self.h && self.b1.len() == self.h && self.w2.len() == self.h
    }

    /// Evaluates the network on a log-uncertainty.
    pub fn forward(&self, x: f64) -> f64 {
        let mut out = x + self.b2;
        for j in 0..self.h {
            let a = self.w1[j] * x + self.b1[j];
            if a > 0.0 {
                out += self.w2[j] * a;
            }
        }
        out
    }
}

/// A fitted recalibration, persisted as JSON with every real written as a
/// decimal string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub method: Method,
    pub likelihood: LikelihoodKind,
    pub target: Target,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "real_str::option"
    )]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux: Option<AuxWeights>,
    #[serde(with = "real_str::map")]
    pub fit_meta: BTreeMap<String, f64>,
}

impl CalibrationArtifact {
    pub fn identity() -> Self {
        CalibrationArtifact {
            method: Method::Identity,
            likelihood: LikelihoodKind::Gaussian,
            target: Target::Predictive,
            s: None,
            aux: None,
            fit_meta: BTreeMap::new(),
        }
    }

    pub fn sigma(s: f64, likelihood: LikelihoodKind, target: Target) -> Self {
        CalibrationArtifact {
            method: Method::Sigma,
            likelihood,
            target,
            s: Some(s),
            aux: None,
            fit_meta: BTreeMap::new(),
        }
    }

    /// Checks the method-specific payload.
    pub fn check(&self) -> crate::Result<()> {
        match self.method {
            Method::Identity => Ok(()),
            Method::Sigma => match self.s {
                Some(s) if s > 0.0 && s.is_finite() => Ok(()),
                Some(s) => Err(crate::Error::InvalidArgument(format!(
                    "sigma artifact requires s > 0, got {s}"
                ))),
                None => Err(crate::Error::InvalidArgument(
                    "sigma artifact without s".into(),
                )),
            },
            Method::Aux => match &self.aux {
                Some(w) if w.shape_ok() => Ok(()),
                Some(w) => Err(crate::Error::InvalidArgument(format!(
                    "aux weights inconsistent with h = {}",
                    w.h
                ))),
                None => Err(crate::Error::InvalidArgument(
                    "aux artifact without weights".into(),
                )),
            },
        }
    }

    pub fn to_json(&self) -> crate::Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        let artifact: CalibrationArtifact = serde_json::from_str(text)?;
        artifact.check()?;
        Ok(artifact)
    }
}

/// Statistics of one uncertainty bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub k: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Mean observed squared deviation of the records in the bin.
    pub var_obs: f64,
    /// Mean predicted uncertainty of the records in the bin.
    pub uncert_mean: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, n: usize, log_var: f64) -> McRecord {
        McRecord {
            id: id.into(),
            y: vec![0.5],
            samples: (0..n)
                .map(|_| McSample {
                    mean: vec![0.4],
                    log_var,
                })
                .collect(),
        }
    }

    #[test]
    fn well_formed_set_has_empty_report() {
        let set = McPredictionSet {
            d: 1,
            records: vec![rec("a", 2, -2.0), rec("b", 2, -1.0), rec("c", 2, 0.0)],
        };
        assert!(validate(&set).is_empty());
    }

    #[test]
    fn inconsistent_pass_count_is_reported() {
        let set = McPredictionSet {
            d: 1,
            records: vec![rec("a", 2, 0.0), rec("b", 1, 0.0), rec("c", 2, 0.0)],
        };
        let report = validate(&set);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].id, "b");
        assert!(report[0].message.contains("inconsistent N"));
    }

    #[test]
    fn nan_log_var_is_reported() {
        let set = McPredictionSet {
            d: 1,
            records: vec![rec("a", 2, 0.0), rec("b", 2, f64::NAN)],
        };
        let report = validate(&set);
        assert_eq!(report.len(), 2);
        assert!(report.iter().all(|v| v.id == "b"));
        assert!(report[0].message.contains("non-finite log_var"));
    }

    #[test]
    fn dimension_and_empty_checks() {
        let mut r = rec("a", 1, 0.0);
        r.y = vec![0.1, 0.2];
        let set = McPredictionSet { d: 1, records: vec![r] };
        assert_eq!(validate(&set)[0].field, "y");

        let empty = McPredictionSet { d: 1, records: vec![] };
        assert_eq!(validate(&empty).len(), 1);
    }

    #[test]
    fn artifact_reals_are_strings() {
        let mut a = CalibrationArtifact::sigma(1.2345678901234567, LikelihoodKind::Gaussian, Target::Predictive);
        a.fit_meta.insert("objective".into(), -0.25);
        let json = a.to_json().unwrap();
        assert!(json.contains("\"s\": \"1.2345678901234567\""));
        assert!(json.contains("\"objective\": \"-0.25\""));
        assert_eq!(CalibrationArtifact::from_json(&json).unwrap(), a);
    }

    #[test]
    fn artifact_rejects_bad_payloads() {
        let a = CalibrationArtifact::sigma(-1.0, LikelihoodKind::Gaussian, Target::Predictive);
        assert!(a.check().is_err());
        let mut b = CalibrationArtifact::identity();
        b.method = Method::Aux;
        assert!(b.check().is_err());
        b.aux = Some(AuxWeights {
            h: 3,
            w1: vec![0.0; 3],
            b1: vec![0.0; 2],
            w2: vec![0.0; 3],
            b2: 0.0,
        });
        assert!(b.check().is_err());
    }
}
