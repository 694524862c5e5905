//! Closed-form benchmark solutions, the composite error norm and
//! effectivity indices.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::estimators::WeightRho;
use crate::mesh::{Mesh, Point};
use crate::ocp::{project_admissible, DiscreteSolution};
use crate::par;
use crate::quadrature::{high_order, integrate, integrate_graded};
use crate::spaces::{DofMap, ElementGeometry, FeFunction};

/// 2D Stokeslet centered at `t`: the velocity tensor
/// `-(1/4π)(log|r| I - r rᵀ/|r|²)` and the vector `-r/(2π|r|²)`.
pub fn stokeslet(t: Point, x: Point) -> Result<([[f64; 2]; 2], [f64; 2])> {
    let r = [x[0] - t[0], x[1] - t[1]];
    let r2 = r[0] * r[0] + r[1] * r[1];
    if r2 == 0.0 {
        return Err(Error::Singular);
    }
    Ok(stokeslet_unchecked(r, r2))
}

fn stokeslet_unchecked(r: [f64; 2], r2: f64) -> ([[f64; 2]; 2], [f64; 2]) {
    let lg = 0.5 * r2.ln();
    let c = -1.0 / (4.0 * PI);
    let tens =
        [[c * (lg - r[0] * r[0] / r2), -c * r[0] * r[1] / r2], [-c * r[0] * r[1] / r2, c * (lg - r[1] * r[1] / r2)]];
    let p = [-r[0] / (2.0 * PI * r2), -r[1] / (2.0 * PI * r2)];
    (tens, p)
}

/// `∂_k T̃_ij` as `[i][j][k]`.
fn stokeslet_gradient(r: [f64; 2], r2: f64) -> [[[f64; 2]; 2]; 2] {
    let c = -1.0 / (4.0 * PI);
    let mut g = [[[0.0; 2]; 2]; 2];
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                g[i][j][k] = c
                    * (d(i, j) * r[k] / r2 - (d(i, k) * r[j] + d(j, k) * r[i]) / r2
                        + 2.0 * r[i] * r[j] * r[k] / (r2 * r2));
            }
        }
    }
    g
}

/// `∇(T̃ F)` for the Stokeslet centered at `t`; row `i` is `∇(T̃F)_i`.
/// Undefined at `x = t`.
pub fn stokeslet_gradient_applied(t: Point, force: [f64; 2], x: Point) -> [[f64; 2]; 2] {
    let r = [x[0] - t[0], x[1] - t[1]];
    let g = stokeslet_gradient(r, r[0] * r[0] + r[1] * r[1]);
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for k in 0..2 {
            out[i][k] = g[i][0][k] * force[0] + g[i][1][k] * force[1];
        }
    }
    out
}

/// The two manufactured states with closed-form derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExactState {
    /// `curl(sin²(2πx) sin²(2πy) / 2π)`, pressure `sin(2πx) sin(2πy)`.
    Trig,
    /// `½ curl(x²(1-x)² y²(1-y)²)` with the exponential pressure.
    Polynomial,
}

fn g(x: f64) -> f64 {
    x * x * (1.0 - x) * (1.0 - x)
}
fn g1(x: f64) -> f64 {
    2.0 * x - 6.0 * x * x + 4.0 * x * x * x
}
fn g2(x: f64) -> f64 {
    2.0 - 12.0 * x + 12.0 * x * x
}
fn g3(x: f64) -> f64 {
    -12.0 + 24.0 * x
}

const E_INV_M1: f64 = -0.632_120_558_828_557_7; // e⁻¹ - 1

fn h(x: f64) -> f64 {
    x - 1.0 + ((-x).exp() - 1.0) / E_INV_M1
}
fn h1(x: f64) -> f64 {
    1.0 - (-x).exp() / E_INV_M1
}

impl ExactState {
    pub fn velocity(self, p: Point) -> [f64; 2] {
        let [x, y] = p;
        match self {
            Self::Trig => {
                let (sx, sy) = ((2.0 * PI * x).sin(), (2.0 * PI * y).sin());
                [sx * sx * (4.0 * PI * y).sin(), -(4.0 * PI * x).sin() * sy * sy]
            }
            Self::Polynomial => [0.5 * g(x) * g1(y), -0.5 * g1(x) * g(y)],
        }
    }

    /// Row `i` is `∇y_i`.
    pub fn velocity_gradient(self, p: Point) -> [[f64; 2]; 2] {
        let [x, y] = p;
        match self {
            Self::Trig => {
                let (sx, sy) = ((2.0 * PI * x).sin(), (2.0 * PI * y).sin());
                let (s4x, s4y) = ((4.0 * PI * x).sin(), (4.0 * PI * y).sin());
                [
                    [2.0 * PI * s4x * s4y, 4.0 * PI * sx * sx * (4.0 * PI * y).cos()],
                    [-4.0 * PI * (4.0 * PI * x).cos() * sy * sy, -2.0 * PI * s4x * s4y],
                ]
            }
            Self::Polynomial => {
                [[0.5 * g1(x) * g1(y), 0.5 * g(x) * g2(y)], [-0.5 * g2(x) * g(y), -0.5 * g1(x) * g1(y)]]
            }
        }
    }

    pub fn laplacian(self, p: Point) -> [f64; 2] {
        let [x, y] = p;
        match self {
            Self::Trig => {
                let pi2 = PI * PI;
                let (sx, sy) = ((2.0 * PI * x).sin(), (2.0 * PI * y).sin());
                let (s4x, s4y) = ((4.0 * PI * x).sin(), (4.0 * PI * y).sin());
                [
                    8.0 * pi2 * (4.0 * PI * x).cos() * s4y - 16.0 * pi2 * sx * sx * s4y,
                    16.0 * pi2 * s4x * sy * sy - 8.0 * pi2 * s4x * (4.0 * PI * y).cos(),
                ]
            }
            Self::Polynomial => [0.5 * (g2(x) * g1(y) + g(x) * g3(y)), -0.5 * (g3(x) * g(y) + g1(x) * g2(y))],
        }
    }

    pub fn pressure(self, p: Point) -> f64 {
        let [x, y] = p;
        match self {
            Self::Trig => (2.0 * PI * x).sin() * (2.0 * PI * y).sin(),
            Self::Polynomial => {
                let e = std::f64::consts::E;
                50.0 * h(x) * h(y) - 12.5 * ((e - 3.0) / (e - 1.0)).powi(2)
            }
        }
    }

    pub fn pressure_gradient(self, p: Point) -> [f64; 2] {
        let [x, y] = p;
        match self {
            Self::Trig => [
                2.0 * PI * (2.0 * PI * x).cos() * (2.0 * PI * y).sin(),
                2.0 * PI * (2.0 * PI * x).sin() * (2.0 * PI * y).cos(),
            ],
            Self::Polynomial => [50.0 * h1(x) * h(y), 50.0 * h(x) * h1(y)],
        }
    }
}

/// Exact optimal quintuple: a manufactured state and a sum of Stokeslets
/// (each applied to `ϑ (1, 1)`) as the adjoint.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactSolution {
    pub state: ExactState,
    pub points: Vec<Point>,
    pub theta: f64,
    pub lambda: f64,
    pub lower: [f64; 2],
    pub upper: [f64; 2],
}

impl ExactSolution {
    pub fn y(&self, x: Point) -> [f64; 2] {
        self.state.velocity(x)
    }

    pub fn p(&self, x: Point) -> f64 {
        self.state.pressure(x)
    }

    pub fn z(&self, x: Point) -> [f64; 2] {
        let mut z = [0.0; 2];
        for &t in &self.points {
            let r = [x[0] - t[0], x[1] - t[1]];
            let (tt, _) = stokeslet_unchecked(r, r[0] * r[0] + r[1] * r[1]);
            for i in 0..2 {
                z[i] += self.theta * (tt[i][0] + tt[i][1]);
            }
        }
        z
    }

    /// Row `i` is `∇z_i`.
    pub fn grad_z(&self, x: Point) -> [[f64; 2]; 2] {
        let mut gz = [[0.0; 2]; 2];
        for &t in &self.points {
            let r = [x[0] - t[0], x[1] - t[1]];
            let gt = stokeslet_gradient(r, r[0] * r[0] + r[1] * r[1]);
            for i in 0..2 {
                for k in 0..2 {
                    gz[i][k] += self.theta * (gt[i][0][k] + gt[i][1][k]);
                }
            }
        }
        gz
    }

    pub fn r(&self, x: Point) -> f64 {
        self.points
            .iter()
            .map(|&t| {
                let r = [x[0] - t[0], x[1] - t[1]];
                let (_, v) = stokeslet_unchecked(r, r[0] * r[0] + r[1] * r[1]);
                self.theta * (v[0] + v[1])
            })
            .sum()
    }

    pub fn u(&self, x: Point) -> [f64; 2] {
        let z = self.z(x);
        project_admissible([-z[0] / self.lambda, -z[1] / self.lambda], self.lower, self.upper)
    }

    /// `f = -Δy + ∇p - u`, so the momentum equation holds with `f + u`.
    pub fn forcing(&self, x: Point) -> [f64; 2] {
        let l = self.state.laplacian(x);
        let gp = self.state.pressure_gradient(x);
        let u = self.u(x);
        [-l[0] + gp[0] - u[0], -l[1] + gp[1] - u[1]]
    }

    /// Desired states `y(t) - ϑ (1, 1)`.
    pub fn desired_states(&self) -> Vec<[f64; 2]> {
        self.points
            .iter()
            .map(|&t| {
                let y = self.y(t);
                [y[0] - self.theta, y[1] - self.theta]
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorNorms {
    pub y_inf: f64,
    pub p_l2: f64,
    pub z_weighted: f64,
    pub r_weighted: f64,
    pub u_l2: f64,
    pub total: f64,
}

impl ErrorNorms {
    pub fn from_components(y_inf: f64, p_l2: f64, z_weighted: f64, r_weighted: f64, u_l2: f64) -> Self {
        let total =
            (y_inf * y_inf + p_l2 * p_l2 + z_weighted * z_weighted + r_weighted * r_weighted + u_l2 * u_l2).sqrt();
        Self { y_inf, p_l2, z_weighted, r_weighted, u_l2, total }
    }
}

#[cfg(test)]
fn domain_mean<F: Fn(Point) -> f64 + Sync>(f: F, mesh: &Mesh) -> f64 {
    let parts = par::map_indexed(mesh.num_elements(), |t| integrate(&f, &mesh.coords(t), high_order()));
    par::ordered_sum(&parts) / mesh.total_area()
}

/// All components of the composite error.
pub fn error_norms(
    sol: &DiscreteSolution,
    exact: &ExactSolution,
    weight: &WeightRho,
    mesh: &Mesh,
    dofs: &DofMap,
    depth: usize,
    lattice_order: usize,
) -> ErrorNorms {
    let lat = crate::estimators::lattice(lattice_order);
    let scalar =
        |f: &FeFunction, x: Point, t: usize, geom: &ElementGeometry| f.scalar_at(dofs, t, &geom.barycentric(x));
    let local_mean = |f: &FeFunction, exact_fn: &(dyn Fn(Point) -> f64 + Sync)| {
        let parts = par::map_indexed(mesh.num_elements(), |t| {
            let geom = ElementGeometry::new(mesh, t);
            integrate(|x| exact_fn(x) - scalar(f, x, t, &geom), &geom.coords, high_order())
        });
        par::ordered_sum(&parts) / mesh.total_area()
    };
    let p_mean = local_mean(&sol.p, &|x| exact.p(x));

    let parts = par::map_indexed(mesh.num_elements(), |t| {
        let geom = ElementGeometry::new(mesh, t);
        let coords = geom.coords;
        let y_inf = lat
            .iter()
            .map(|l| {
                let x = geom.point(l);
                let e = exact.y(x);
                let v = sol.y.vector_at(dofs, t, l);
                (e[0] - v[0]).hypot(e[1] - v[1])
            })
            .fold(0.0f64, f64::max);
        let p2 = integrate(|x| (exact.p(x) - scalar(&sol.p, x, t, &geom) - p_mean).powi(2), &coords, high_order());
        let u2 = integrate(
            |x| {
                let e = exact.u(x);
                let v = sol.u.vector_at(dofs, t, &geom.barycentric(x));
                (e[0] - v[0]).powi(2) + (e[1] - v[1]).powi(2)
            },
            &coords,
            high_order(),
        );
        [y_inf, p2, u2]
    });
    let col = |k: usize| parts.iter().map(|p| p[k]).collect::<Vec<f64>>();
    let y_inf = parts.iter().map(|p| p[0]).fold(0.0, f64::max);
    let p_l2 = par::ordered_sum(&col(1)).sqrt();
    let u_l2 = par::ordered_sum(&col(2)).sqrt();
    let (z_w, r_w) =
        weighted_adjoint_errors(mesh, dofs, weight, &sol.z, &sol.r, &|x| exact.grad_z(x), &|x| exact.r(x), depth);
    ErrorNorms::from_components(y_inf, p_l2, z_w, r_w, u_l2)
}

/// `‖∇(z - z_h)‖_{L²(ρ)}` and the `L²(ρ)/ℝ` norm of `r - r_h`, with graded
/// quadrature on elements touching an observation point.
#[allow(clippy::too_many_arguments)]
pub fn weighted_adjoint_errors(
    mesh: &Mesh,
    dofs: &DofMap,
    weight: &WeightRho,
    z: &FeFunction,
    r: &FeFunction,
    grad_z: &(dyn Fn(Point) -> [[f64; 2]; 2] + Sync),
    r_exact: &(dyn Fn(Point) -> f64 + Sync),
    depth: usize,
) -> (f64, f64) {
    // subtracting the plain mean first keeps the quotient well conditioned
    let means = par::map_indexed(mesh.num_elements(), |t| {
        let geom = ElementGeometry::new(mesh, t);
        integrate_graded(
            &|x: Point| r_exact(x) - r.scalar_at(dofs, t, &geom.barycentric(x)),
            &geom.coords,
            weight.center_in(mesh, t),
            depth,
        )
    });
    let r_mean = par::ordered_sum(&means) / mesh.total_area();
    let parts = par::map_indexed(mesh.num_elements(), |t| {
        let geom = ElementGeometry::new(mesh, t);
        let coords = geom.coords;
        let center = weight.center_in(mesh, t);
        let z2 = integrate_graded(
            &|x: Point| {
                let e = grad_z(x);
                let v = z.vector_gradient_at(dofs, &geom, t, &geom.barycentric(x));
                let s = (e[0][0] - v[0][0]).powi(2)
                    + (e[0][1] - v[0][1]).powi(2)
                    + (e[1][0] - v[1][0]).powi(2)
                    + (e[1][1] - v[1][1]).powi(2);
                weight.eval(x) * s
            },
            &coords,
            center,
            depth,
        );
        let mut acc = [0.0; 3];
        for k in 0..3 {
            acc[k] = integrate_graded(
                &|x: Point| {
                    let w = weight.eval(x);
                    let e = r_exact(x) - r.scalar_at(dofs, t, &geom.barycentric(x)) - r_mean;
                    match k {
                        0 => w * e * e,
                        1 => w * e,
                        _ => w,
                    }
                },
                &coords,
                center,
                depth,
            );
        }
        [z2, acc[0], acc[1], acc[2]]
    });
    let col = |k: usize| parts.iter().map(|p| p[k]).collect::<Vec<f64>>();
    let z_w = par::ordered_sum(&col(0)).sqrt();
    let (a, b, c) = (par::ordered_sum(&col(1)), par::ordered_sum(&col(2)), par::ordered_sum(&col(3)));
    // the best constant in L²(ρ) is the ρ-weighted mean
    let r_w = (a - b * b / c).max(0.0).sqrt();
    (z_w, r_w)
}

/// `est / err`.
pub fn effectivity(est: f64, err: f64) -> Result<f64> {
    if !(err > 0.0) {
        return Err(Error::Undefined(format!("effectivity with error {err}")));
    }
    Ok(est / err)
}
