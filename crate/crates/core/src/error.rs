use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared by every module of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("series term {index} is not finite ({value})")]
    NonFiniteTerm { index: usize, value: f64 },

    #[error("series did not converge after {terms} terms (partial sum {value:e})")]
    SeriesNotConverged { value: f64, terms: usize },

    #[error("integrand is not finite at x = {x:e}")]
    NonFiniteIntegrand { x: f64 },

    #[error("quadrature did not converge: estimate {estimate:e}, error bound {error_bound:e}")]
    QuadratureNotConverged { estimate: f64, error_bound: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("fit did not converge after {iterations} iterations (last params {params:?}, chi2 trace {chi2_trace:?})")]
    FitDiverged {
        iterations: usize,
        params: Vec<f64>,
        chi2_trace: Vec<f64>,
    },

    #[error("electrostatic signature absent: parabola curvature {curvature:e} is not concave")]
    NoElectrostaticSignature { curvature: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0} is outside the supported range")]
    OutOfRange(String),

    #[error("Matsubara sum not converged after {terms} terms (partial pressure {partial:e} Pa)")]
    MatsubaraNotConverged { partial: f64, terms: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures caused by bad user input rather than by numerics or IO.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Parse { .. }
                | Error::OutOfRange(_)
                | Error::DegenerateFit(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Json(_))
    }
}
