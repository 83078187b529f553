use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-positive variance at index {index}: {value}")]
    NonPositiveVariance { index: usize, value: f64 },

    #[error("degenerate uncertainty for record {id}")]
    DegenerateUncertainty { id: String },

    #[error("optimization diverged after {iterations} iterations; try a smaller step size")]
    Diverged { iterations: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("calibration mismatch: {0}")]
    CalibrationMismatch(String),

    #[error("unbounded quantile: p = {0}")]
    UnboundedQuantile(f64),

    #[error("{}", format_lines(.0))]
    Dump(Vec<DumpIssue>),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// A problem found while reading a prediction dump, tied to a 1-based line.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpIssue {
    pub line: usize,
    pub message: String,
}

fn format_lines(issues: &[DumpIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("line {}: {}", i.line, i.message))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// Short machine-readable code used by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::EmptyInput(_) => "empty_input",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonPositiveVariance { .. } => "non_positive_variance",
            Error::DegenerateUncertainty { .. } => "degenerate_uncertainty",
            Error::Diverged { .. } => "diverged",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::CalibrationMismatch(_) => "calibration_mismatch",
            Error::UnboundedQuantile(_) => "unbounded_quantile",
            Error::Dump(_) => "invalid_dump",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
