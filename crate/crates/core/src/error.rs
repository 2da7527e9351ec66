use thiserror::Error;

/// Errors raised by the laboratory's numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not reach tolerance {tol:e}: achieved residual {residual:e}")]
    Accuracy { tol: f64, residual: f64 },

    #[error("kernel is singular at x = 0 for s = {s}")]
    Singularity { s: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numerical blow-up at t = {t}: non-finite values in the field")]
    NumericalBlowup { t: f64 },

    #[error("parameter outside the theorem's regime: {0}")]
    OutOfRegime(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("condition set is not monotone in the scaling parameter near lambda = {lambda}")]
    NonMonotone { lambda: f64 },

    #[error("domain too small: need half-length L >= {required_l}")]
    DomainTooSmall { required_l: f64 },

    #[error("iteration did not converge after {iterations} sweeps (last residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("iteration diverged: residual grew for 3 consecutive sweeps (last {residual:e})")]
    Divergence { residual: f64, history: Vec<f64> },

    #[error("linear symbol vanishes or changes sign on the grid (min |symbol| = {min_abs:e})")]
    SymbolDegenerate { min_abs: f64 },

    #[error("CFL condition violated: suggested dt = {suggested_dt:e}")]
    Cfl { suggested_dt: f64 },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("invalid grid: {0}")]
    Grid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
