use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A constructor or operation received a value outside its documented range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("microwave drive is not selective: rabi {rabi} MHz exceeds A/4 = {limit} MHz")]
    SelectivityViolation { rabi: f64, limit: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("drive never reaches the crossing level {level} MHz")]
    NoCrossing { level: f64 },

    #[error("degenerate beam splitter: P_T = {p_t} leaves the (0, 1) guard band")]
    DegenerateSplitter { p_t: f64 },

    #[error("required step {dt:e} us at t = {t} us is below the 1e-9 us floor")]
    StepUnderflow { dt: f64, t: f64 },

    #[error("fit diverged after {iterations} iterations: {reason}")]
    FitDiverged { iterations: usize, reason: String },

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("ensemble member with bias {bias} MHz failed: {source}")]
    Ensemble { bias: f64, source: Box<Error> },

    #[error("malformed experiment result: {0}")]
    Result(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical machinery (step control, fitting),
    /// as opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::StepUnderflow { .. } | Error::FitDiverged { .. } => true,
            Error::Ensemble { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    /// Strips ensemble annotations down to the originating error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Ensemble { source, .. } => source.root(),
            other => other,
        }
    }
}
