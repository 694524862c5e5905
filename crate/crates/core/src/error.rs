use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("point ({x}, {y}) lies outside the mesh")]
    PointNotFound { x: f64, y: f64 },

    #[error("element index {0} out of range")]
    ElementIndex(usize),

    #[error("refinement closure did not terminate after {0} rounds")]
    ClosureDepth(usize),

    #[error("unknown benchmark selector `{0}`")]
    UnknownExample(String),

    #[error("unsupported quadrature degree {0} (supported: 1..=19)")]
    QuadratureDegree(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("active set iteration did not converge within {iterations} iterations")]
    PdasNotConverged { iterations: usize, last: Box<crate::ocp::DiscreteSolution> },

    #[error("evaluation at the singular point of a fundamental solution")]
    Singular,

    #[error("no exact solution available for this problem")]
    NoExactSolution,

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("solve failed on adaptive iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
