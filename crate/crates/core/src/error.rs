use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The discretized model is not of the form `A0 + A1 u`,
    /// `D0 + D1 u + D2 u^2`.
    #[error("model is not affine/quadratic in the control: relative residual {residual:.3e} in {quantity} at u = {at}")]
    NonAffineStructure {
        quantity: &'static str,
        residual: f64,
        at: f64,
    },

    #[error("degenerate observation: innovation variance {0:e} is not positive")]
    DegenerateObservation(f64),

    #[error("matrix is not positive semidefinite: smallest eigenvalue {0:e}")]
    Indefinite(f64),

    #[error("quadrature did not converge: order {order} gives {coarse}, order {} gives {fine}", 2 * order)]
    QuadratureNonConvergence { order: usize, coarse: f64, fine: f64 },

    #[error("optimizer did not converge after {iterations} iterations; best iterate x = {best_x}, f = {best_f}")]
    NoConvergence {
        iterations: usize,
        best_x: f64,
        best_f: f64,
    },

    #[error("objective is not finite at x = {0}")]
    NonFinite(f64),

    #[error("first control is zero: the observation carries no information about the gain")]
    NoInformation,

    #[error("all samples are identical; the entropy estimate diverges to -inf")]
    DegenerateSamples,

    #[error("empty input: {0}")]
    Empty(&'static str),

    /// The penalty-weight sweep never brackets the requested minimizer.
    /// `trace` holds `(nu, |argmin|)` pairs.
    #[error("target minimizer {target} not reachable for nu in [0, {nu_max}]")]
    TargetUnreachable {
        target: f64,
        nu_max: f64,
        trace: Vec<(f64, f64)>,
    },
}
