use thiserror::Error;

/// Errors raised by the scattering engine and the inverse layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step too coarse: local wavenumber {wavenumber:.6} times step {step:.3e} exceeds 0.5")]
    StepTooCoarse { wavenumber: f64, step: f64 },

    #[error("scan too coarse: {0}")]
    ScanTooCoarse(String),

    #[error("potential is not exceptional: |T(0)| = {t0:.3e}")]
    NotExceptional { t0: f64 },

    #[error("potential has {0} bound state(s)")]
    HasBoundStates(usize),

    #[error("ordering violation: kappa {kappa} does not exceed the existing bound state(s) {existing:?}")]
    OrderingViolation { kappa: f64, existing: Vec<f64> },

    #[error("chi is not strictly positive near x = {x} (chi = {chi:.3e})")]
    NonPositiveChi { x: f64, chi: f64 },

    #[error("no bound state with index {index}: potential has {count}")]
    NoSuchBoundState { index: usize, count: usize },

    #[error("zero-frequency limit inconclusive: extrapolants spread {spread:.3e}")]
    InconclusiveLimit { spread: f64 },

    #[error("operation requires an analytic reflection-ratio model")]
    AnalyticModelRequired,

    #[error("|D| = {value:.3e} at the truncation radius {radius} exceeds {tol:.1e}")]
    TailTooFat { value: f64, radius: f64, tol: f64 },

    #[error("parity mismatch: {0}")]
    ParityMismatch(String),

    #[error("resonance window too small: {0}")]
    WindowTooSmall(String),

    #[error("negative discriminant {value:.6e} while forming C_0")]
    NegativeDiscriminant { value: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short name of the violated invariant, used by the command-line front end.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidPotential(_) => "InvalidPotential",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::StepTooCoarse { .. } => "StepTooCoarse",
            Error::ScanTooCoarse(_) => "ScanTooCoarse",
            Error::NotExceptional { .. } => "NotExceptional",
            Error::HasBoundStates(_) => "HasBoundStates",
            Error::OrderingViolation { .. } => "OrderingViolation",
            Error::NonPositiveChi { .. } => "NonPositiveChi",
            Error::NoSuchBoundState { .. } => "NoSuchBoundState",
            Error::InconclusiveLimit { .. } => "InconclusiveLimit",
            Error::AnalyticModelRequired => "AnalyticModelRequired",
            Error::TailTooFat { .. } => "TailTooFat",
            Error::ParityMismatch(_) => "ParityMismatch",
            Error::WindowTooSmall(_) => "WindowTooSmall",
            Error::NegativeDiscriminant { .. } => "NegativeDiscriminant",
            Error::NumericalFailure(_) => "NumericalFailure",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }

    /// True for errors caused by malformed input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidPotential(_)
                | Error::InvalidArgument(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::AnalyticModelRequired
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
