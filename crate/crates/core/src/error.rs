use thiserror::Error;

/// Broad classes of failure, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// A parameter or geometry violates a model invariant.
    Parameter,
    /// Measurement data cannot be analyzed.
    Data,
    /// The inputs are valid but fall outside the model's domain of validity.
    Domain,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("evaluation point lies on the loop wire (distance {distance_m:e} m)")]
    OnWire { distance_m: f64 },

    #[error("cells overlap: pitch {pitch_nm} nm is smaller than the cell diameter {diameter_nm} nm")]
    Overlap { pitch_nm: f64, diameter_nm: f64 },

    #[error("coercivity must be a positive finite value, got {0}")]
    MissingCoercivity(f64),

    #[error("no valid (eCD, pitch) pair in the requested sweep")]
    EmptyGrid,

    #[error("stray field {field_oe} Oe exceeds the anisotropy field {hk_oe} Oe")]
    FieldExceedsAnisotropy { field_oe: f64, hk_oe: f64 },

    #[error("drive current {drive_ua} uA does not exceed the critical current {ic_ua} uA")]
    SubCriticalDrive { drive_ua: f64, ic_ua: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("no switching transition found on the {leg} leg")]
    NoTransition { leg: &'static str },

    #[error("{count} transitions found on the {leg} leg, expected one")]
    MultiTransition { leg: &'static str, count: usize },

    #[error("cycle {cycle} does not share the field grid of cycle 0")]
    GridMismatch { cycle: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("switching probability spans [{min_p}, {max_p}], needs < 0.1 and > 0.9")]
    InsufficientSpan { min_p: f64, max_p: f64 },

    #[error("fit did not converge: best hk = {hk_oe} Oe, delta0 = {delta0}, residual = {residual:e}")]
    NonConvergence {
        hk_oe: f64,
        delta0: f64,
        residual: f64,
    },

    #[error("malformed measurement file: {0}")]
    Parse(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter { .. }
            | Error::Overlap { .. }
            | Error::MissingCoercivity(_)
            | Error::EmptyGrid
            | Error::OnWire { .. } => ErrorKind::Parameter,
            Error::NoTransition { .. }
            | Error::MultiTransition { .. }
            | Error::GridMismatch { .. }
            | Error::InsufficientData(_)
            | Error::InsufficientSpan { .. }
            | Error::Parse(_) => ErrorKind::Data,
            Error::FieldExceedsAnisotropy { .. }
            | Error::SubCriticalDrive { .. }
            | Error::DegenerateFit(_)
            | Error::NonConvergence { .. } => ErrorKind::Domain,
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Rejects non-finite or non-positive values.
pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::invalid(name, format!("must be positive and finite, got {value}")))
    }
}

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::invalid(name, format!("must be finite, got {value}")))
    }
}
