use thiserror::Error;

/// Failure modes shared by every solver stage.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field is not mean-free (mean = {mean:e})")]
    NotMeanFree { mean: f64 },

    #[error("parity violation: {0}")]
    Parity(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("derivative order {order} exceeds the supported maximum {max}")]
    DerivativeOrder { order: usize, max: usize },

    #[error("mode k = {k} is not admissible (k >= 2 required)")]
    Mode { k: i64 },

    #[error("mode {mode} is not resolved on a grid of {n} points (dealiased cutoff {cutoff}); use N >= {suggested_n}")]
    Resolution {
        mode: usize,
        n: usize,
        cutoff: usize,
        suggested_n: usize,
    },

    #[error("implicit-function solve left its neighbourhood: {0}")]
    IftDomain(String),

    #[error("Newton iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("geometric admissibility violated: {0}")]
    Geometry(String),

    #[error("time integration blew up at t = {t}: arclength defect {defect:e}")]
    Blowup { t: f64, defect: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o failure: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn resolution(mode: usize, n: usize, cutoff: usize) -> Self {
        // smallest even N whose 2/3-rule cutoff (N - 1) / 3 reaches `mode`
        let mut suggested_n = 3 * mode + 1;
        if suggested_n % 2 == 1 {
            suggested_n += 1;
        }
        Error::Resolution {
            mode,
            n,
            cutoff,
            suggested_n: suggested_n.max(16),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
