use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed problem document: {0}")]
    Parse(String),

    #[error("shape mismatch in table `{table}`: expected {expected} entries, got {got}")]
    Shape {
        table: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite {table} at (x={x}, control={control}, mode={mode})")]
    NonFinite {
        table: &'static str,
        x: usize,
        control: usize,
        mode: usize,
    },

    #[error("unknown builtin problem `{0}`")]
    UnknownBuiltin(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("coupling matrix is not monotone{}", .witness_x.map(|x| format!(" at grid point {x}")).unwrap_or_default())]
    NonMonotone { witness_x: Option<usize> },

    #[error("discount factor must satisfy {requirement}, got {value}")]
    InvalidDiscount {
        requirement: &'static str,
        value: f64,
    },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("solver failed to converge within {max_iter} iterations (contraction estimate {kappa})")]
    NonConvergence { max_iter: usize, kappa: f64 },

    #[error("frozen-policy linear system is singular")]
    SingularSystem,

    #[error("instance too large for exhaustive oracle: {0}")]
    OracleTooLarge(String),

    #[error("bad discount schedule: {0}")]
    Schedule(String),

    #[error("vanishing-discount extrapolation unstable: {0}")]
    ExtrapolationUnstable(String),

    #[error("divergent sup bounds along the discount sweep: {0}")]
    DivergentSweep(String),

    #[error("{0}")]
    Unsupported(String),
}
