use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by model construction, coefficient evaluation and pricing.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A log-MGF argument left the convergence strip of some coordinate.
    #[error("domain error{}: {detail}", .time.map(|t| format!(" at t={t}")).unwrap_or_default())]
    Domain { time: Option<usize>, detail: String },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("index error: {0}")]
    Index(String),

    #[error("exponent overflow at t={time}: real part {value:.3} exceeds {bound}")]
    Overflow { time: usize, value: f64, bound: f64 },

    #[error("negative hazard increment {increment:e} at t={time}")]
    NegativeIncrement { time: usize, increment: f64 },

    #[error("nonpositive price {price} at t={time}")]
    NonpositivePrice { time: usize, price: f64 },

    #[error("closed form requires the independence copula; use the Monte Carlo oracle for {0}")]
    UnsupportedCopula(String),

    #[error("{0}")]
    UnsupportedContract(String),

    #[error("no sign change on bracket [{lo}, {hi}]: f(lo)={f_lo:e}, f(hi)={f_hi:e}")]
    Bracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("mode error: {0}")]
    Mode(String),

    #[error("martingale calibration failed: {0}")]
    Martingale(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn domain(time: Option<usize>, detail: impl Into<String>) -> Self {
        Error::Domain {
            time,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(detail: impl Into<String>) -> Self {
        Error::Config(detail.into())
    }

    /// Attach a time index to a domain error that does not carry one yet.
    pub(crate) fn at_time(self, t: usize) -> Self {
        match self {
            Error::Domain { time: None, detail } => Error::Domain {
                time: Some(t),
                detail,
            },
            other => other,
        }
    }
}
