use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid timestep {t} (valid range {lo}..={hi})")]
    Timestep { t: usize, lo: usize, hi: usize },

    #[error("timestep ordering violated: t_next={next} must be below t={t}")]
    Ordering { t: usize, next: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("correspondence error at pixel {pixel}: {msg}")]
    Correspondence { pixel: usize, msg: String },

    #[error("degenerate observation: {0}")]
    Degenerate(String),

    #[error("numerical error at pixel {pixel}: {msg}")]
    Numerical { pixel: usize, msg: String },

    #[error("coverage error: texel ({row}, {col}) is not covered by any window")]
    Coverage { row: usize, col: usize },

    #[error("incompatible model and scene: {0}")]
    Compatibility(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Training { step: usize, loss: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error stems from invalid user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Dimension(_) | Error::Domain(_) | Error::Format(_) | Error::Compatibility(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
