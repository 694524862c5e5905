//! Taylor-Hood spaces: continuous vector P2 and continuous scalar P1.
//!
//! Local P2 nodes are the three vertices followed by the midpoints of local
//! edges 0, 1, 2 (edge `i` is opposite vertex `i`). Global P2 nodes are the
//! mesh vertices followed by one node per side, in side order. Vector fields
//! store their two components interleaved: dof `2 * node + c`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::quadrature::{high_order, map_point};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    VectorP2,
    ScalarP1,
}

#[derive(Clone, Debug)]
pub struct DofMap {
    n_vertices: usize,
    p2_nodes: Vec<Point>,
    elem_p2: Vec<[usize; 6]>,
    elem_p1: Vec<[usize; 3]>,
    boundary_p2: Vec<bool>,
    boundary_p1: Vec<bool>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let nv = mesh.num_vertices();
        let mut p2_nodes: Vec<Point> = mesh.vertices().to_vec();
        let mut boundary_p2: Vec<bool> = (0..nv).map(|v| mesh.is_boundary_vertex(v)).collect();
        for side in mesh.sides() {
            let a = mesh.vertices()[side.vertices[0]];
            let b = mesh.vertices()[side.vertices[1]];
            p2_nodes.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
            boundary_p2.push(side.is_boundary());
        }
        let elem_p1: Vec<[usize; 3]> = mesh.elements().to_vec();
        let elem_p2 = (0..mesh.num_elements())
            .map(|t| {
                let el = mesh.elements()[t];
                let s = mesh.element_sides(t);
                [el[0], el[1], el[2], nv + s[0], nv + s[1], nv + s[2]]
            })
            .collect();
        let boundary_p1 = boundary_p2[..nv].to_vec();
        Self { n_vertices: nv, p2_nodes, elem_p2, elem_p1, boundary_p2, boundary_p1 }
    }

    pub fn n_p2(&self) -> usize {
        self.p2_nodes.len()
    }

    pub fn n_p1(&self) -> usize {
        self.n_vertices
    }

    /// Scalar unknowns of a vector P2 field.
    pub fn n_velocity(&self) -> usize {
        2 * self.n_p2()
    }

    pub fn len(&self, space: Space) -> usize {
        match space {
            Space::VectorP2 => self.n_velocity(),
            Space::ScalarP1 => self.n_p1(),
        }
    }

    pub fn p2_nodes(&self) -> &[Point] {
        &self.p2_nodes
    }

    pub fn p1_nodes(&self) -> &[Point] {
        &self.p2_nodes[..self.n_vertices]
    }

    pub fn element_p2(&self, t: usize) -> &[usize; 6] {
        &self.elem_p2[t]
    }

    pub fn element_p1(&self, t: usize) -> &[usize; 3] {
        &self.elem_p1[t]
    }

    pub fn is_boundary_p2(&self, node: usize) -> bool {
        self.boundary_p2[node]
    }

    pub fn is_boundary_p1(&self, node: usize) -> bool {
        self.boundary_p1[node]
    }
}

/// Affine element map data: vertex coordinates, area and `∇λ_i`.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub coords: [Point; 3],
    pub area: f64,
    pub grad_lambda: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(mesh: &Mesh, t: usize) -> Self {
        Self::from_coords(mesh.coords(t))
    }

    pub fn from_coords(c: [Point; 3]) -> Self {
        let area = 0.5 * ((c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[1][1] - c[0][1]) * (c[2][0] - c[0][0]));
        let s = 0.5 / area;
        let g = |j: usize, k: usize| [s * (c[j][1] - c[k][1]), s * (c[k][0] - c[j][0])];
        Self { coords: c, area, grad_lambda: [g(1, 2), g(2, 0), g(0, 1)] }
    }

    pub fn point(&self, l: &[f64; 3]) -> Point {
        map_point(&self.coords, l)
    }

    pub fn barycentric(&self, x: Point) -> [f64; 3] {
        let c = &self.coords;
        let b = |i: usize| {
            let g = self.grad_lambda[i];
            let v = c[(i + 1) % 3];
            // λ_i vanishes at the other two vertices
            g[0] * (x[0] - v[0]) + g[1] * (x[1] - v[1])
        };
        [b(0), b(1), b(2)]
    }
}

/// P2 and P1 shape functions and physical gradients at one point.
#[derive(Clone, Copy, Debug)]
pub struct BasisValues {
    pub p2: [f64; 6],
    pub p2_grad: [[f64; 2]; 6],
    pub p1: [f64; 3],
    pub p1_grad: [[f64; 2]; 3],
}

const EDGE_ENDS: [(usize, usize); 3] = [(1, 2), (2, 0), (0, 1)];

#[inline]
pub fn p2_values(l: &[f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
        4.0 * l[0] * l[1],
    ]
}

#[inline]
pub fn p2_gradients(geom: &ElementGeometry, l: &[f64; 3]) -> [[f64; 2]; 6] {
    let g = &geom.grad_lambda;
    let mut out = [[0.0; 2]; 6];
    for i in 0..3 {
        let s = 4.0 * l[i] - 1.0;
        out[i] = [s * g[i][0], s * g[i][1]];
        let (j, k) = EDGE_ENDS[i];
        out[3 + i] = [4.0 * (l[j] * g[k][0] + l[k] * g[j][0]), 4.0 * (l[j] * g[k][1] + l[k] * g[j][1])];
    }
    out
}

/// Laplacians of the six P2 shape functions (constant on the element).
pub fn p2_laplacians(geom: &ElementGeometry) -> [f64; 6] {
    let g = &geom.grad_lambda;
    let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
    let mut out = [0.0; 6];
    for i in 0..3 {
        out[i] = 4.0 * dot(g[i], g[i]);
        let (j, k) = EDGE_ENDS[i];
        out[3 + i] = 8.0 * dot(g[j], g[k]);
    }
    out
}

pub fn eval_basis(geom: &ElementGeometry, l: &[f64; 3]) -> BasisValues {
    BasisValues { p2: p2_values(l), p2_grad: p2_gradients(geom, l), p1: *l, p1_grad: geom.grad_lambda }
}

/// Coefficients of a finite element function on a [`DofMap`].
#[derive(Clone, Debug, PartialEq)]
pub struct FeFunction {
    pub space: Space,
    pub coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn zeros(space: Space, dofs: &DofMap) -> Self {
        Self { space, coeffs: vec![0.0; dofs.len(space)] }
    }

    pub fn from_coeffs(space: Space, coeffs: Vec<f64>, dofs: &DofMap) -> Result<Self> {
        if coeffs.len() != dofs.len(space) {
            return Err(Error::InvalidArgument(format!(
                "coefficient length {} does not match space dimension {}",
                coeffs.len(),
                dofs.len(space)
            )));
        }
        Ok(Self { space, coeffs })
    }

    /// Local vector P2 coefficients on element `t`, `[component][node]`.
    pub fn local_p2(&self, dofs: &DofMap, t: usize) -> [[f64; 6]; 2] {
        debug_assert_eq!(self.space, Space::VectorP2);
        let nodes = dofs.element_p2(t);
        let mut out = [[0.0; 6]; 2];
        for (k, &n) in nodes.iter().enumerate() {
            out[0][k] = self.coeffs[2 * n];
            out[1][k] = self.coeffs[2 * n + 1];
        }
        out
    }

    pub fn local_p1(&self, dofs: &DofMap, t: usize) -> [f64; 3] {
        debug_assert_eq!(self.space, Space::ScalarP1);
        let n = dofs.element_p1(t);
        [self.coeffs[n[0]], self.coeffs[n[1]], self.coeffs[n[2]]]
    }

    /// Vector value on element `t` at barycentric point `l`.
    pub fn vector_at(&self, dofs: &DofMap, t: usize, l: &[f64; 3]) -> [f64; 2] {
        let c = self.local_p2(dofs, t);
        let phi = p2_values(l);
        [dot6(&c[0], &phi), dot6(&c[1], &phi)]
    }

    /// Scalar P1 value on element `t` at barycentric point `l`.
    pub fn scalar_at(&self, dofs: &DofMap, t: usize, l: &[f64; 3]) -> f64 {
        let c = self.local_p1(dofs, t);
        c[0] * l[0] + c[1] * l[1] + c[2] * l[2]
    }

    /// Gradient of a vector P2 field: row `c` is `∇` of component `c`.
    pub fn vector_gradient_at(&self, dofs: &DofMap, geom: &ElementGeometry, t: usize, l: &[f64; 3]) -> [[f64; 2]; 2] {
        let c = self.local_p2(dofs, t);
        let g = p2_gradients(geom, l);
        let mut out = [[0.0; 2]; 2];
        for comp in 0..2 {
            for k in 0..6 {
                out[comp][0] += c[comp][k] * g[k][0];
                out[comp][1] += c[comp][k] * g[k][1];
            }
        }
        out
    }

    pub fn scalar_gradient(&self, dofs: &DofMap, geom: &ElementGeometry, t: usize) -> [f64; 2] {
        let c = self.local_p1(dofs, t);
        let g = &geom.grad_lambda;
        [c[0] * g[0][0] + c[1] * g[1][0] + c[2] * g[2][0], c[0] * g[0][1] + c[1] * g[1][1] + c[2] * g[2][1]]
    }

    /// Componentwise Laplacian of a vector P2 field on element `t`.
    pub fn vector_laplacian(&self, dofs: &DofMap, geom: &ElementGeometry, t: usize) -> [f64; 2] {
        let c = self.local_p2(dofs, t);
        let lap = p2_laplacians(geom);
        [dot6(&c[0], &lap), dot6(&c[1], &lap)]
    }

    pub fn divergence_at(&self, dofs: &DofMap, geom: &ElementGeometry, t: usize, l: &[f64; 3]) -> f64 {
        let g = self.vector_gradient_at(dofs, geom, t, l);
        g[0][0] + g[1][1]
    }

    /// Point evaluation of a vector field (lowest-index containing element).
    pub fn eval_vector(&self, mesh: &Mesh, dofs: &DofMap, x: Point) -> Result<[f64; 2]> {
        let t = mesh.locate(x)?;
        Ok(self.vector_at(dofs, t, &mesh.barycentric(t, x)))
    }

    pub fn eval_scalar(&self, mesh: &Mesh, dofs: &DofMap, x: Point) -> Result<f64> {
        let t = mesh.locate(x)?;
        Ok(self.scalar_at(dofs, t, &mesh.barycentric(t, x)))
    }

    /// `∫_Ω q` for a P1 field (exact: vertex average times area).
    pub fn integral(&self, mesh: &Mesh, dofs: &DofMap) -> f64 {
        (0..mesh.num_elements())
            .map(|t| {
                let c = self.local_p1(dofs, t);
                mesh.area(t) * (c[0] + c[1] + c[2]) / 3.0
            })
            .sum()
    }

    /// Subtracts the mean of a P1 field.
    pub fn remove_mean(&mut self, mesh: &Mesh, dofs: &DofMap) {
        let mean = self.integral(mesh, dofs) / mesh.total_area();
        self.coeffs.iter_mut().for_each(|c| *c -= mean);
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { space: self.space, coeffs: self.coeffs.iter().map(|c| s * c).collect() }
    }

    /// CSV dump: `node_index,x,y,value...`, one value column per component.
    pub fn write_csv<W: Write>(&self, mut w: W, dofs: &DofMap) -> Result<()> {
        match self.space {
            Space::VectorP2 => {
                writeln!(w, "node_index,x,y,value_x,value_y")?;
                for (n, p) in dofs.p2_nodes().iter().enumerate() {
                    writeln!(
                        w,
                        "{n},{:.16e},{:.16e},{:.16e},{:.16e}",
                        p[0],
                        p[1],
                        self.coeffs[2 * n],
                        self.coeffs[2 * n + 1]
                    )?;
                }
            }
            Space::ScalarP1 => {
                writeln!(w, "node_index,x,y,value")?;
                for (n, p) in dofs.p1_nodes().iter().enumerate() {
                    writeln!(w, "{n},{:.16e},{:.16e},{:.16e}", p[0], p[1], self.coeffs[n])?;
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn dot6(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nodal interpolant of a vector field in vector P2.
pub fn interpolate_vector<G: Fn(Point) -> [f64; 2]>(g: G, dofs: &DofMap) -> FeFunction {
    let mut coeffs = Vec::with_capacity(dofs.n_velocity());
    for &p in dofs.p2_nodes() {
        coeffs.extend_from_slice(&g(p));
    }
    FeFunction { space: Space::VectorP2, coeffs }
}

/// Nodal interpolant of a scalar field in P1.
pub fn interpolate_scalar<G: Fn(Point) -> f64>(g: G, dofs: &DofMap) -> FeFunction {
    FeFunction { space: Space::ScalarP1, coeffs: dofs.p1_nodes().iter().map(|&p| g(p)).collect() }
}

/// Local L² projection onto P1(T), returned as vertex values.
///
/// The local P1 mass matrix is `|T|/12 (I + J)` with `J` the all-ones
/// matrix; its inverse is `12/|T| (I - J/4)`.
pub fn l2_project_p1<F: Fn(Point) -> f64>(f: F, geom: &ElementGeometry) -> [f64; 3] {
    let rule = high_order();
    let jac = 2.0 * geom.area;
    let mut b = [0.0; 3];
    for (l, w) in rule.points.iter().zip(&rule.weights) {
        let v = w * jac * f(geom.point(l));
        for i in 0..3 {
            b[i] += v * l[i];
        }
    }
    let quarter = (b[0] + b[1] + b[2]) / 4.0;
    let s = 12.0 / geom.area;
    [s * (b[0] - quarter), s * (b[1] - quarter), s * (b[2] - quarter)]
}
