use thiserror::Error;

/// Errors raised by state conversions, steady-state solvers, the design
/// optimizers and the stochastic integrator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("Bloch vector length {norm} exceeds 1 + {tol}")]
    OutsideBlochBall { norm: f64, tol: f64 },

    #[error("density matrix is not Hermitian (off-diagonal mismatch {mismatch:e})")]
    NotHermitian { mismatch: f64 },

    #[error("density matrix trace is {trace}, expected 1")]
    BadTrace { trace: f64 },

    #[error("density matrix is not positive semidefinite (determinant {det:e})")]
    NotPositive { det: f64 },

    #[error("state has y = {y:e}; polar form requires y = 0")]
    OutOfPlane { y: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("stationary-state denominator vanishes (|D| = {denominator:e})")]
    DegenerateDenominator { denominator: f64 },

    #[error("target direction theta = {theta} lies on the equator; the required driving diverges")]
    SingularDirection { theta: f64 },

    #[error("feedback gain lambda = {lambda} makes gamma + 2 sqrt(gamma) lambda vanish")]
    SingularDenominator { lambda: f64 },

    #[error("no feedback gain reaches direction theta = {theta}")]
    Unreachable { theta: f64 },

    #[error("trajectory {trajectory} left the Bloch ball at t = {time}: r^2 = {r_squared} > {bound}")]
    LeftBlochBall { trajectory: u64, time: f64, r_squared: f64, bound: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
