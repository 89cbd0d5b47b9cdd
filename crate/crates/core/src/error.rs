use thiserror::Error;

use crate::calibrate::CzernyTurnerParams;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration; `field` names the offending entry.
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    /// Input data that cannot be processed (axis order, too few samples, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Too few fringes in the recorded band to resolve the optical-length domain.
    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("grating geometry error: {0}")]
    Geometry(String),

    #[error("rank-deficient problem: {0}")]
    RankDeficient(String),

    #[error("underdetermined fit: {0}")]
    Underdetermined(String),

    #[error("fit did not converge: {diagnostic}")]
    FitFailure {
        diagnostic: String,
        best: Option<Box<CzernyTurnerParams>>,
        best_rms_pm: f64,
    },

    #[error("stitch error: {0}")]
    Stitch(String),

    #[error("resolution bias cannot be corrected: {0}")]
    Uncorrectable(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Short machine-readable tag used in the CLI's error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Config { .. } => "config",
            Error::Data(_) => "data",
            Error::Resolution(_) => "resolution",
            Error::Degenerate(_) => "degenerate",
            Error::Geometry(_) => "geometry",
            Error::RankDeficient(_) => "rank_deficient",
            Error::Underdetermined(_) => "underdetermined",
            Error::FitFailure { .. } => "fit_failure",
            Error::Stitch(_) => "stitch",
            Error::Uncorrectable(_) => "uncorrectable",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    /// Process exit code: 2 for configuration/validation problems, 3 for data quality.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::Config { .. }
            | Error::Degenerate(_)
            | Error::Geometry(_)
            | Error::Underdetermined(_)
            | Error::Json(_) => 2,
            Error::Data(_)
            | Error::Resolution(_)
            | Error::RankDeficient(_)
            | Error::FitFailure { .. }
            | Error::Stitch(_)
            | Error::Uncorrectable(_)
            | Error::Csv(_) => 3,
            Error::Io { .. } => 2,
        }
    }
}
