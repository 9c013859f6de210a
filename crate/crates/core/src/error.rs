use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("similarity variable eta = {eta} is outside the admissible set: {reason}")]
    InvalidEta { eta: f64, reason: &'static str },

    /// The last tracked cluster size carried more than the tail tolerance.
    #[error(
        "truncation breach at t = {t:.6e}: c_{index} = {value:.3e} exceeds tail tolerance {tolerance:.1e}; rerun with a larger truncation"
    )]
    TruncationBreach {
        t: f64,
        index: usize,
        value: f64,
        tolerance: f64,
    },

    #[error("negative concentration at t = {t:.6e}: component {index} = {value:.3e}")]
    NonPositiveState { t: f64, index: usize, value: f64 },

    #[error("step size underflow at t = {t:.6e} (h = {h:.3e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("maximum number of steps ({max_steps}) exceeded at t = {t:.6e}")]
    TooManySteps { t: f64, max_steps: usize },

    #[error("tau = {tau:.6e} is outside the trajectory range [{min:.6e}, {max:.6e}]")]
    OutOfRange { tau: f64, min: f64, max: f64 },

    #[error("quadrature did not converge for x = {x}, tau = {tau} (estimated relative error {rel_error:.2e})")]
    QuadratureNonConvergence { x: f64, tau: f64, rel_error: f64 },

    #[error("degenerate grid: only {usable} usable points above round-off noise (need at least 4)")]
    DegenerateGrid { usable: usize },

    #[error("tau grid spans {decades:.2} decades, at least {required:.2} required")]
    InsufficientDecades { decades: f64, required: f64 },

    #[error("invalid configuration:\n{0}")]
    Config(Violations),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    ConfigParse(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::InvalidEta { .. }
            | Error::Config(_)
            | Error::ConfigParse(_)
            | Error::InsufficientDecades { .. } => 2,
            Error::TruncationBreach { .. } => 3,
            Error::Io(_) | Error::Csv(_) => 1,
            _ => 4,
        }
    }
}

/// Every constraint a configuration violated, reported together.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Violations(pub Vec<String>);

impl Violations {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn check(&mut self, ok: bool, msg: impl Into<String>) {
        if !ok {
            self.0.push(msg.into());
        }
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(self))
        }
    }
}

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  - {v}")?;
        }
        Ok(())
    }
}
