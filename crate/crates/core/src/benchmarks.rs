//! The three benchmark problems: domain, data and (when known) the exact
//! optimal solution.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exact::{ExactSolution, ExactState};
use crate::mesh::{InitialMesh, Point};
use crate::ocp::OcpProblem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Example {
    /// Unit square, one observation point, trigonometric state.
    One,
    /// Unit square, four observation points, polynomial state.
    Two,
    /// L-shape, three observation points, no exact solution.
    Three,
}

impl Example {
    pub fn id(self) -> u8 {
        match self {
            Self::One => 1,
            Self::Two => 2,
            Self::Three => 3,
        }
    }

    pub fn domain(self) -> InitialMesh {
        match self {
            Self::Three => InitialMesh::LShape,
            _ => InitialMesh::UnitSquare,
        }
    }

    pub fn default_lambda(self) -> f64 {
        1.0
    }
}

impl FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(Self::One),
            "2" => Ok(Self::Two),
            "3" => Ok(Self::Three),
            other => Err(Error::UnknownExample(other.to_string())),
        }
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

pub struct Benchmark {
    pub example: Example,
    pub domain: InitialMesh,
    pub problem: OcpProblem,
    pub exact: Option<Arc<ExactSolution>>,
}

fn grid_points() -> Vec<Point> {
    vec![[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]]
}

/// Problem data for `example` with weight exponent `alpha`. `lambda`
/// overrides the regularization parameter; the exact solution is adjusted
/// accordingly.
pub fn benchmark(example: Example, alpha: f64, lambda: Option<f64>) -> Result<Benchmark> {
    let lambda = lambda.unwrap_or(example.default_lambda());
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} must be positive")));
    }
    let domain = example.domain();
    match example {
        Example::One | Example::Two => {
            let (state, points, lower, upper) = if example == Example::One {
                (ExactState::Trig, vec![[0.5, 0.5]], [-0.5, -0.5], [-0.1, -0.1])
            } else {
                (ExactState::Polynomial, grid_points(), [-0.85, -0.85], [-0.2, -0.2])
            };
            let exact = Arc::new(ExactSolution { state, points: points.clone(), theta: 1.0, lambda, lower, upper });
            let mut problem = OcpProblem::new(points, exact.desired_states(), lambda, lower, upper, alpha);
            let e = exact.clone();
            problem.forcing = Some(Arc::new(move |x| e.forcing(x)));
            let e = exact.clone();
            problem.adjoint_bc = Some(Arc::new(move |x| e.z(x)));
            Ok(Benchmark { example, domain, problem, exact: Some(exact) })
        }
        Example::Three => {
            let points = vec![[0.25, 0.25], [0.25, 0.75], [0.75, 0.75]];
            let desired = vec![[3.0, 3.0], [-1.0, -1.0], [3.0, 3.0]];
            let problem = OcpProblem::new(points, desired, lambda, [-0.3, -0.3], [0.4, 0.4], alpha);
            Ok(Benchmark { example, domain, problem, exact: None })
        }
    }
}
