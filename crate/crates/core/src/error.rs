use thiserror::Error;

use crate::minimize::Minimum;

/// Errors raised by the solver pipeline.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A viscous strain left the admissible neighborhood `K`; the density is `+inf` there.
    #[error("viscous strain {value} lies outside the admissible radius {radius}")]
    Rejected { value: f64, radius: f64 },

    /// Some element (or the material point) carries an inadmissible viscous state.
    #[error("infeasible state at element {element}")]
    Infeasible { element: usize },

    #[error("minimizer hit the iteration cap ({}) with gradient norm {:e}", .best.diagnostics.iterations, .best.diagnostics.grad_norm)]
    MaxIterExceeded { best: Box<Minimum> },

    #[error("line search stalled with gradient norm {:e}", .best.diagnostics.grad_norm)]
    LineSearchStalled { best: Box<Minimum> },

    #[error("objective produced a non-finite value at a feasible point")]
    NonfiniteObjective,

    #[error("matrix is not symmetric positive definite")]
    NotSpd,

    #[error("finite-difference curvature of the {which} density did not converge (relative disagreement {rel_diff:e})")]
    NonConvergedCurvature { which: &'static str, rel_diff: f64 },

    #[error("quadratic limit is degenerate: {0}")]
    DegenerateLimit(String),

    #[error("step violates the stay-put inequality by {excess:e}")]
    StepRejected { excess: f64 },

    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("oracle not applicable: {0}")]
    OracleNotApplicable(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// True for errors that mean "this point has infinite energy".
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Rejected { .. } | Error::Infeasible { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
