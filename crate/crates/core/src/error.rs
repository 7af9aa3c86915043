use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("psi has no finite positive root below {bound:e}")]
    NoFiniteRoot { bound: f64 },

    #[error("offspring law truncated at n = {k_max} leaves tail mass {tail_mass:e} (tolerance {tolerance:e})")]
    Truncation {
        k_max: u32,
        tail_mass: f64,
        tolerance: f64,
    },

    #[error("N = {n_scale} is too small to resolve the binary channel (q0 = {q0}, q2 = {q2}); increase N")]
    Resolution { n_scale: usize, q0: f64, q2: f64 },

    #[error("population explosion: {detail}")]
    Explosion { detail: String },

    #[error("Picard iteration did not converge in {sweeps} sweeps (residual {residual:e})")]
    Iteration { sweeps: usize, residual: f64 },

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("tree horizon {horizon} is shorter than the required {needed}; resample")]
    HorizonShortfall { horizon: f64, needed: f64 },

    #[error("population is extinct at t = {0}")]
    Extinct(f64),

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
