use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("target N_s = {target} is not reachable with a reference bias in (0, 1)")]
    Unachievable { target: f64 },

    #[error("bias ({j1}, {j2}) left the metastable regime (0, 1)")]
    OutOfRegime { j1: f64, j2: f64 },

    #[error("time {t} is outside the schedule [0, {total}]")]
    Domain { t: f64, total: f64 },

    #[error("grid configuration: {0}")]
    Configuration(String),

    #[error("wavefunctions live on different grids")]
    GridMismatch,

    #[error("zero state has no Schmidt decomposition")]
    ZeroState,

    #[error("requested {requested} levels but only {available} are supported")]
    TooManyLevels { requested: usize, available: usize },

    #[error("grid coverage insufficient: edge amplitude {amplitude:e} for level {level}")]
    Coverage { level: usize, amplitude: f64 },

    #[error("level continuity lost between eps = {eps_lo} and {eps_hi} (level {level}, overlap {overlap:.3}); refine the sweep step")]
    Continuity {
        eps_lo: f64,
        eps_hi: f64,
        level: usize,
        overlap: f64,
    },

    #[error("no interior minimum of the gap on [{lo}, {hi}]")]
    NoInteriorMinimum { lo: f64, hi: f64 },

    #[error("no root in bracket [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },

    #[error("norm grew by {growth:e} per step; reduce dt")]
    Instability { growth: f64 },

    #[error("eigenpair {level} stalled at residual {residual:e}")]
    Unconverged { level: usize, residual: f64 },

    #[error("oscillation amplitude {amplitude:e} is below the noise floor")]
    NonOscillatory { amplitude: f64 },

    #[error("basis label mismatch at eps = {eps}: level {level} is {found:?}, expected {expected:?}")]
    LabelMismatch {
        eps: f64,
        level: usize,
        found: (usize, usize),
        expected: (usize, usize),
    },

    #[error("template residual {residual:.4} exceeds {threshold}")]
    TemplateMismatch { residual: f64, threshold: f64 },

    #[error("I/O: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite and positive, got {value}"),
        })
    }
}
