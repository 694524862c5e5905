//! Residual indicators for the state, adjoint and control, the weight ρ,
//! data oscillation, and the combined indicator that drives refinement.
//!
//! Every local indicator is returned unsquared; globals are sums of squares
//! except the max-norm state estimator, which is a maximum.

use std::io::Write;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::ocp::{DiscreteSolution, OcpProblem};
use crate::par;
use crate::quadrature::{high_order, integrate, integrate_graded};
use crate::spaces::{l2_project_p1, DofMap, ElementGeometry, FeFunction};

pub const DEFAULT_GRADING_DEPTH: usize = 6;
pub const DEFAULT_LATTICE_ORDER: usize = 5;

/// Barycentric lattice `{(i, j, k) / n : i + j + k = n}`.
pub fn lattice(order: usize) -> Vec<[f64; 3]> {
    let n = order.max(1);
    let mut pts = Vec::with_capacity((n + 1) * (n + 2) / 2);
    for i in 0..=n {
        for j in 0..=n - i {
            let k = n - i - j;
            pts.push([i as f64 / n as f64, j as f64 / n as f64, k as f64 / n as f64]);
        }
    }
    pts
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn segment_distance(x: Point, a: Point, b: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let s = (((x[0] - a[0]) * d[0] + (x[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
    dist(x, [a[0] + s * d[0], a[1] + s * d[1]])
}

/// The distance-power weight around the observation points.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightRho {
    points: Vec<Point>,
    alpha: f64,
    d_d: f64,
}

impl WeightRho {
    /// `d_D` is the smaller of the distance from the points to the boundary
    /// and their smallest pairwise distance.
    pub fn new(points: Vec<Point>, alpha: f64, mesh: &Mesh) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 2)")));
        }
        let mut d_d = f64::INFINITY;
        for (i, &t) in points.iter().enumerate() {
            for s in mesh.boundary_sides() {
                let v = s.vertices;
                d_d = d_d.min(segment_distance(t, mesh.vertices()[v[0]], mesh.vertices()[v[1]]));
            }
            for &q in &points[i + 1..] {
                d_d = d_d.min(dist(t, q));
            }
        }
        if !points.is_empty() && !(d_d > 0.0) {
            return Err(Error::InvalidArgument("observation points must be distinct and interior".into()));
        }
        Ok(Self { points, alpha, d_d })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn d_d(&self) -> f64 {
        self.d_d
    }

    pub fn eval(&self, x: Point) -> f64 {
        match self.points.len() {
            0 => 1.0,
            1 => dist(x, self.points[0]).powf(self.alpha),
            _ => self
                .points
                .iter()
                .map(|&t| dist(x, t))
                .find(|&d| d < 0.5 * self.d_d)
                .map_or(1.0, |d| d.powf(self.alpha)),
        }
    }

    /// The first observation point in the closed element `t`, if any.
    pub fn center_in(&self, mesh: &Mesh, t: usize) -> Option<Point> {
        self.points.iter().copied().find(|&p| mesh.contains(t, p))
    }

    /// `∫_T ρ f`, graded toward an observation point in the closure.
    pub fn integrate<F: Fn(Point) -> f64>(&self, f: F, mesh: &Mesh, t: usize, depth: usize) -> f64 {
        let g = |x: Point| self.eval(x) * f(x);
        integrate_graded(&g, &mesh.coords(t), self.center_in(mesh, t), depth)
    }
}

pub fn rho_eval(w: &WeightRho, x: Point) -> f64 {
    w.eval(x)
}

/// A discrete momentum balance `load + control + Δv + s ∇q`, with `s` the
/// pressure sign (`-1` for the state form, `+1` for the adjoint form).
#[derive(Clone, Copy)]
pub struct MomentumData<'a> {
    pub velocity: &'a FeFunction,
    pub pressure: &'a FeFunction,
    pub pressure_sign: f64,
    pub load: Option<&'a (dyn Fn(Point) -> [f64; 2] + Sync)>,
    pub control: Option<&'a FeFunction>,
}

impl<'a> MomentumData<'a> {
    pub fn state(velocity: &'a FeFunction, pressure: &'a FeFunction) -> Self {
        Self { velocity, pressure, pressure_sign: -1.0, load: None, control: None }
    }

    pub fn adjoint(velocity: &'a FeFunction, pressure: &'a FeFunction) -> Self {
        Self { velocity, pressure, pressure_sign: 1.0, load: None, control: None }
    }

    pub fn with_load(mut self, load: &'a (dyn Fn(Point) -> [f64; 2] + Sync)) -> Self {
        self.load = Some(load);
        self
    }

    pub fn with_control(mut self, control: &'a FeFunction) -> Self {
        self.control = Some(control);
        self
    }

    /// Element residual as a closure of the barycentric point.
    fn residual(&self, dofs: &'a DofMap, geom: &ElementGeometry, t: usize) -> impl Fn(&[f64; 3]) -> [f64; 2] + '_ {
        let lap = self.velocity.vector_laplacian(dofs, geom, t);
        let gp = self.pressure.scalar_gradient(dofs, geom, t);
        let s = self.pressure_sign;
        let base = [lap[0] + s * gp[0], lap[1] + s * gp[1]];
        let coords = geom.coords;
        move |l: &[f64; 3]| {
            let mut r = base;
            if let Some(f) = self.load {
                let fx = f(crate::quadrature::map_point(&coords, l));
                r[0] += fx[0];
                r[1] += fx[1];
            }
            if let Some(u) = self.control {
                let ux = u.vector_at(dofs, t, l);
                r[0] += ux[0];
                r[1] += ux[1];
            }
            r
        }
    }

    fn has_smooth_part(&self) -> bool {
        self.load.is_some() || self.control.is_some()
    }
}

/// Normal-derivative jump across a side, at its two endpoints.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SideJump {
    pub ends: [[f64; 2]; 2],
    pub length: f64,
}

impl SideJump {
    /// Exact `∫_S |J|²` for `J` affine along the side.
    pub fn l2_squared(&self) -> f64 {
        let [a, b] = self.ends;
        self.length / 3.0 * (a[0] * a[0] + a[1] * a[1] + a[0] * b[0] + a[1] * b[1] + b[0] * b[0] + b[1] * b[1])
    }

    pub fn max_norm(&self) -> f64 {
        self.ends[0][0].hypot(self.ends[0][1]).max(self.ends[1][0].hypot(self.ends[1][1]))
    }
}

/// `[[∇v·ν]]` on every side (zero on boundary sides).
pub fn side_jumps(mesh: &Mesh, dofs: &DofMap, v: &FeFunction) -> Vec<SideJump> {
    par::map_slice(mesh.sides(), |side| {
        let Some(nb) = side.neighbor else {
            return SideJump::default();
        };
        let pa = mesh.vertices()[side.vertices[0]];
        let pb = mesh.vertices()[side.vertices[1]];
        let nu = mesh.outward_normal(side.owner, side.owner_local);
        let go = ElementGeometry::new(mesh, side.owner);
        let gn = ElementGeometry::new(mesh, nb);
        let mut ends = [[0.0; 2]; 2];
        for (e, x) in [pa, pb].into_iter().enumerate() {
            let a = v.vector_gradient_at(dofs, &go, side.owner, &go.barycentric(x));
            let b = v.vector_gradient_at(dofs, &gn, nb, &gn.barycentric(x));
            for c in 0..2 {
                ends[e][c] = (a[c][0] - b[c][0]) * nu[0] + (a[c][1] - b[c][1]) * nu[1];
            }
        }
        SideJump { ends, length: dist(pa, pb) }
    })
}

/// Energy and max-norm state indicators (`E_st,T` and `𝓔_st,T`).
pub fn state_indicators(
    mesh: &Mesh,
    dofs: &DofMap,
    data: &MomentumData<'_>,
    lattice_order: usize,
) -> (Vec<f64>, Vec<f64>) {
    let jumps = side_jumps(mesh, dofs, data.velocity);
    let lat = lattice(lattice_order);
    let rule = high_order();
    let vertices: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let both = par::map_indexed(mesh.num_elements(), |t| {
        let geom = ElementGeometry::new(mesh, t);
        let h = mesh.diameter(t);
        let res = data.residual(dofs, &geom, t);
        let jac = 2.0 * geom.area;
        let mut r2 = 0.0;
        let mut div2 = 0.0;
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let r = res(l);
            r2 += w * jac * (r[0] * r[0] + r[1] * r[1]);
            div2 += w * jac * data.velocity.divergence_at(dofs, &geom, t, l).powi(2);
        }
        let r_inf = if data.has_smooth_part() {
            lat.iter()
                .map(|l| {
                    let r = res(l);
                    r[0].hypot(r[1])
                })
                .fold(0.0f64, f64::max)
        } else {
            let r = res(&vertices[0]);
            r[0].hypot(r[1])
        };
        let div_inf =
            vertices.iter().map(|l| data.velocity.divergence_at(dofs, &geom, t, l).abs()).fold(0.0f64, f64::max);
        let sides = mesh.element_sides(t);
        let j2: f64 = sides.iter().map(|&s| jumps[s].l2_squared()).sum();
        let j_inf = sides.iter().map(|&s| jumps[s].max_norm()).fold(0.0f64, f64::max);
        let energy = (h * h * r2 + 0.5 * h * j2 + div2).sqrt();
        let max = h * h * r_inf + 0.5 * h * j_inf + h * div_inf;
        (energy, max)
    });
    both.into_iter().unzip()
}

pub fn est_state_energy(mesh: &Mesh, dofs: &DofMap, data: &MomentumData<'_>) -> Vec<f64> {
    state_indicators(mesh, dofs, data, DEFAULT_LATTICE_ORDER).0
}

pub fn est_state_max(mesh: &Mesh, dofs: &DofMap, data: &MomentumData<'_>) -> Vec<f64> {
    state_indicators(mesh, dofs, data, DEFAULT_LATTICE_ORDER).1
}

/// Weighted adjoint indicators `𝓔_ad,T`. `point_data` pairs each point
/// with the vector whose squared norm enters the point term (`y_T(t) - y_t`
/// for the optimal control problem, `F` for a single point force).
pub fn est_adjoint(
    mesh: &Mesh,
    dofs: &DofMap,
    data: &MomentumData<'_>,
    weight: &WeightRho,
    point_data: &[(Point, [f64; 2])],
    depth: usize,
) -> Vec<f64> {
    let alpha = weight.alpha();
    let jumps = side_jumps(mesh, dofs, data.velocity);
    let d_t = mesh.metrics(weight.points()).d;
    let rule = high_order();
    par::map_indexed(mesh.num_elements(), |t| {
        let geom = ElementGeometry::new(mesh, t);
        let h = mesh.diameter(t);
        let dta = d_t.as_ref().map_or(1.0, |d| d[t].powf(alpha));
        let res = data.residual(dofs, &geom, t);
        let jac = 2.0 * geom.area;
        let r2: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(l, w)| {
                let r = res(l);
                w * jac * (r[0] * r[0] + r[1] * r[1])
            })
            .sum();
        let div2 = weight.integrate(
            |x| data.velocity.divergence_at(dofs, &geom, t, &geom.barycentric(x)).powi(2),
            mesh,
            t,
            depth,
        );
        let j2: f64 = mesh.element_sides(t).iter().map(|&s| jumps[s].l2_squared()).sum();
        let pts: f64 = point_data
            .iter()
            .filter(|(p, _)| mesh.contains(t, *p))
            .map(|(_, v)| h.powf(alpha) * (v[0] * v[0] + v[1] * v[1]))
            .sum();
        (h * h * dta * r2 + div2 + h * dta * j2 + pts).sqrt()
    })
}

/// `‖u - Π(-z/λ)‖_{L²(T)}`.
pub fn est_control(mesh: &Mesh, dofs: &DofMap, u: &FeFunction, z: &FeFunction, problem: &OcpProblem) -> Vec<f64> {
    let rule = high_order();
    par::map_indexed(mesh.num_elements(), |t| {
        let jac = 2.0 * mesh.area(t);
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(l, w)| {
                let uz = u.vector_at(dofs, t, l);
                let zz = z.vector_at(dofs, t, l);
                let pz = problem.project([-zz[0] / problem.lambda, -zz[1] / problem.lambda]);
                w * jac * ((uz[0] - pz[0]).powi(2) + (uz[1] - pz[1]).powi(2))
            })
            .sum::<f64>()
            .sqrt()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OscMode {
    L2,
    Max,
}

/// `osc(g; M)` over the elements in `subset`.
pub fn est_oscillation<G: Fn(Point) -> [f64; 2] + Sync>(
    g: G,
    mesh: &Mesh,
    subset: &[usize],
    mode: OscMode,
    lattice_order: usize,
) -> f64 {
    let lat = lattice(lattice_order);
    let vals = par::map_slice(subset, |&t| {
        let geom = ElementGeometry::new(mesh, t);
        let h = mesh.diameter(t);
        let p0 = l2_project_p1(|x| g(x)[0], &geom);
        let p1 = l2_project_p1(|x| g(x)[1], &geom);
        let diff = |l: &[f64; 3]| {
            let x = geom.point(l);
            let gx = g(x);
            let a = gx[0] - (p0[0] * l[0] + p0[1] * l[1] + p0[2] * l[2]);
            let b = gx[1] - (p1[0] * l[0] + p1[1] * l[1] + p1[2] * l[2]);
            (a, b)
        };
        match mode {
            OscMode::L2 => {
                let v = integrate(
                    |x| {
                        let (a, b) = diff(&geom.barycentric(x));
                        a * a + b * b
                    },
                    &geom.coords,
                    high_order(),
                );
                h * h * v
            }
            OscMode::Max => {
                h * h
                    * lat
                        .iter()
                        .map(|l| {
                            let (a, b) = diff(l);
                            a.hypot(b)
                        })
                        .fold(0.0f64, f64::max)
            }
        }
    });
    match mode {
        OscMode::L2 => par::ordered_sum(&vals).sqrt(),
        OscMode::Max => vals.into_iter().fold(0.0, f64::max),
    }
}

fn root_sum_squares(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorBreakdown {
    pub st_energy: Vec<f64>,
    pub st_max: Vec<f64>,
    pub adjoint: Vec<f64>,
    pub control: Vec<f64>,
    /// Combined local indicator `𝓔_ocp,T`.
    pub local_ocp: Vec<f64>,
    pub est_st_energy: f64,
    pub est_st_max: f64,
    pub est_ad: f64,
    pub est_ct: f64,
    pub est_ocp: f64,
}

/// Assembles globals and the combined local indicator.
pub fn combine(
    st_energy: Vec<f64>,
    st_max: Vec<f64>,
    adjoint: Vec<f64>,
    control: Vec<f64>,
) -> Result<EstimatorBreakdown> {
    let n = st_energy.len();
    if st_max.len() != n || adjoint.len() != n || control.len() != n {
        return Err(Error::InvalidArgument("indicator vectors from different meshes".into()));
    }
    let local_ocp = (0..n)
        .map(|t| (st_energy[t].powi(2) + st_max[t].powi(2) + adjoint[t].powi(2) + control[t].powi(2)).sqrt())
        .collect();
    let est_st_energy = root_sum_squares(&st_energy);
    let est_st_max = st_max.iter().copied().fold(0.0, f64::max);
    let est_ad = root_sum_squares(&adjoint);
    let est_ct = root_sum_squares(&control);
    let est_ocp = (est_st_max.powi(2) + est_ad.powi(2) + est_ct.powi(2) + est_st_energy.powi(2)).sqrt();
    Ok(EstimatorBreakdown {
        st_energy,
        st_max,
        adjoint,
        control,
        local_ocp,
        est_st_energy,
        est_st_max,
        est_ad,
        est_ct,
        est_ocp,
    })
}

impl EstimatorBreakdown {
    pub fn len(&self) -> usize {
        self.local_ocp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local_ocp.is_empty()
    }

    /// `Ẽ_T²` of the split marking: everything but the control part.
    pub fn split_state_adjoint_sq(&self) -> Vec<f64> {
        (0..self.len()).map(|t| self.st_energy[t].powi(2) + self.st_max[t].powi(2) + self.adjoint[t].powi(2)).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "elem,Est_energy,Est_max,Est_ad,Est_ct,Est_ocp")?;
        for t in 0..self.len() {
            writeln!(
                w,
                "{t},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.st_energy[t], self.st_max[t], self.adjoint[t], self.control[t], self.local_ocp[t]
            )?;
        }
        Ok(())
    }
}

/// All four contributions for a discrete optimal control solution.
pub fn estimate_ocp(
    mesh: &Mesh,
    dofs: &DofMap,
    problem: &OcpProblem,
    sol: &DiscreteSolution,
    weight: &WeightRho,
    depth: usize,
    lattice_order: usize,
) -> Result<EstimatorBreakdown> {
    let f = problem.forcing.clone();
    let mut state = MomentumData::state(&sol.y, &sol.p).with_control(&sol.u);
    if let Some(f) = f.as_ref() {
        state = state.with_load(f.as_ref());
    }
    let (energy, max) = state_indicators(mesh, dofs, &state, lattice_order);
    let mut point_data = Vec::with_capacity(problem.obs_points.len());
    for (&t, yt) in problem.obs_points.iter().zip(&problem.desired) {
        let y = sol.y.eval_vector(mesh, dofs, t)?;
        point_data.push((t, [y[0] - yt[0], y[1] - yt[1]]));
    }
    let adjoint = est_adjoint(mesh, dofs, &MomentumData::adjoint(&sol.z, &sol.r), weight, &point_data, depth);
    let control = est_control(mesh, dofs, &sol.u, &sol.z, problem);
    combine(energy, max, adjoint, control)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::InitialMesh;
    use crate::spaces::{interpolate_scalar, interpolate_vector, Space};

    fn reference() -> Mesh {
        Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn lattice_has_21_points() {
        let l = lattice(5);
        assert_eq!(l.len(), 21);
        assert!(l.iter().all(|p| (p[0] + p[1] + p[2] - 1.0).abs() < 1e-15));
    }

    #[test]
    fn rho_cases() {
        let sq = InitialMesh::UnitSquare.build_with(2);
        let w = WeightRho::new(vec![[0.5, 0.5]], 1.5, &sq).unwrap();
        assert!((w.eval([0.5, 0.75]) - 0.125).abs() < 1e-15);
        let pts = vec![[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]];
        let w = WeightRho::new(pts, 1.2, &sq).unwrap();
        assert!((w.d_d() - 0.25).abs() < 1e-15);
        assert!((w.eval([0.25, 0.30]) - 0.05f64.powf(1.2)).abs() < 1e-15);
        assert_eq!(w.eval([0.5, 0.5]), 1.0);
        assert!(WeightRho::new(vec![[0.5, 0.5]], 2.0, &sq).is_err());
    }

    #[test]
    fn rho_uses_l_shape_boundary() {
        let l = InitialMesh::LShape.coarse();
        let w = WeightRho::new(vec![[0.25, 0.25], [0.25, 0.75], [0.75, 0.75]], 1.0, &l).unwrap();
        assert!((w.d_d() - 0.25).abs() < 1e-15);
        let w = WeightRho::new(vec![[0.6, 0.6], [0.25, 0.75]], 1.0, &l).unwrap();
        assert!((w.d_d() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_fields_give_zero() {
        let m = InitialMesh::UnitSquare.build_with(3);
        let d = DofMap::new(&m);
        let y = FeFunction::zeros(Space::VectorP2, &d);
        let p = FeFunction::zeros(Space::ScalarP1, &d);
        let (e, x) = state_indicators(&m, &d, &MomentumData::state(&y, &p), 5);
        assert!(e.iter().chain(&x).all(|v| *v == 0.0));
        let w = WeightRho::new(vec![[0.5, 0.5]], 1.0, &m).unwrap();
        let a = est_adjoint(&m, &d, &MomentumData::adjoint(&y, &p), &w, &[([0.5, 0.5], [0.0, 0.0])], 6);
        assert!(a.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_load_on_reference() {
        let m = reference();
        let d = DofMap::new(&m);
        let y = FeFunction::zeros(Space::VectorP2, &d);
        let p = FeFunction::zeros(Space::ScalarP1, &d);
        let f = |_: Point| [1.0, 0.0];
        let (e, _) = state_indicators(&m, &d, &MomentumData::state(&y, &p).with_load(&f), 5);
        // h_T = √2 on the reference triangle
        assert!((e[0] - 2f64.sqrt() * 0.5f64.sqrt()).abs() < 1e-14);
        let unit = Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]], vec![[0, 1, 2]]).unwrap();
        let du = DofMap::new(&unit);
        let yu = FeFunction::zeros(Space::VectorP2, &du);
        let pu = FeFunction::zeros(Space::ScalarP1, &du);
        let (e, _) = state_indicators(&unit, &du, &MomentumData::state(&yu, &pu).with_load(&f), 5);
        assert!((e[0] - unit.area(0).sqrt()).abs() < 1e-14);
        let half = Mesh::new(vec![[0.0, 0.0], [0.5, 0.0], [0.25, 0.3]], vec![[0, 1, 2]]).unwrap();
        let dh = DofMap::new(&half);
        let yh = FeFunction::zeros(Space::VectorP2, &dh);
        let ph = FeFunction::zeros(Space::ScalarP1, &dh);
        let c = |_: Point| [-3.0, 0.0];
        let (_, x) = state_indicators(&half, &dh, &MomentumData::state(&yh, &ph).with_load(&c), 5);
        assert!((x[0] - 0.25 * 3.0).abs() < 1e-14);
    }

    #[test]
    fn linear_fields_have_no_jumps() {
        let m = InitialMesh::LShape.build_with(3);
        let d = DofMap::new(&m);
        let y = interpolate_vector(|p| [2.0 * p[0] + p[1], p[0] - 3.0 * p[1]], &d);
        assert!(side_jumps(&m, &d, &y).iter().all(|j| j.max_norm() < 1e-12));
        let y = interpolate_vector(|p| [p[0], -p[1]], &d);
        let p = FeFunction::zeros(Space::ScalarP1, &d);
        let (e, x) = state_indicators(&m, &d, &MomentumData::state(&y, &p), 5);
        assert!(e.iter().chain(&x).all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn quadratic_solution_has_zero_residual() {
        // v = curl(x³ + x²y + y³), q = x - y, f = -Δv + ∇q
        let m = InitialMesh::UnitSquare.build_with(3);
        let d = DofMap::new(&m);
        let y = interpolate_vector(|p| [p[0] * p[0] + 3.0 * p[1] * p[1], -3.0 * p[0] * p[0] - 2.0 * p[0] * p[1]], &d);
        let p = interpolate_scalar(|x| x[0] - x[1], &d);
        let f = |_: Point| [-7.0, 5.0];
        let (e, x) = state_indicators(&m, &d, &MomentumData::state(&y, &p).with_load(&f), 5);
        assert!(e.iter().chain(&x).all(|v| v.abs() < 1e-11), "{:?}", x.iter().fold(0.0f64, |a, b| a.max(*b)));
    }

    #[test]
    fn point_term() {
        let m = Mesh::new(vec![[0.0, 0.0], [0.1, 0.0], [0.05, 0.03]], vec![[0, 1, 2]]).unwrap();
        let d = DofMap::new(&m);
        let z = FeFunction::zeros(Space::VectorP2, &d);
        let r = FeFunction::zeros(Space::ScalarP1, &d);
        let w = WeightRho::new(vec![[0.05, 0.01]], 1.99, &m).unwrap();
        let a = est_adjoint(&m, &d, &MomentumData::adjoint(&z, &r), &w, &[([0.05, 0.01], [2.0, 0.0])], 6);
        assert!((a[0].powi(2) - 0.1f64.powf(1.99) * 4.0).abs() < 1e-15);
        assert!((a[0].powi(2) - 4.0926e-2).abs() < 1e-5);
    }

    #[test]
    fn far_from_points_divergence_is_plain() {
        let m = InitialMesh::UnitSquare.build_with(4);
        let d = DofMap::new(&m);
        let pts = vec![[0.25, 0.25], [0.75, 0.75]];
        let w = WeightRho::new(pts.clone(), 1.0, &m).unwrap();
        let z = interpolate_vector(|p| [p[0] * p[0], p[1]], &d);
        let r = FeFunction::zeros(Space::ScalarP1, &d);
        let a = est_adjoint(&m, &d, &MomentumData::adjoint(&z, &r), &w, &[], 6);
        let t = m.locate([0.9, 0.1]).unwrap();
        let g = ElementGeometry::new(&m, t);
        let plain = integrate(|x| (2.0 * x[0] + 1.0).powi(2), &g.coords, high_order());
        let dmin = m.metrics(&pts).d.unwrap()[t];
        let jumps = side_jumps(&m, &d, &z);
        let j2: f64 = m.element_sides(t).iter().map(|&s| jumps[s].l2_squared()).sum();
        let h = m.diameter(t);
        let lap2 = 4.0 * m.area(t);
        let expected = h * h * dmin * lap2 + plain + h * dmin * j2;
        assert!((a[t].powi(2) - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn control_cases() {
        let m = InitialMesh::UnitSquare.build_with(2);
        let d = DofMap::new(&m);
        let p = OcpProblem::new(vec![], vec![], 1.0, [-0.5, -0.5], [-0.1, -0.1], 1.0);
        let z = interpolate_vector(|_| [0.3, 0.3], &d);
        let u = interpolate_vector(|_| [-0.1, -0.1], &d);
        let c = est_control(&m, &d, &u, &z, &p);
        let total = root_sum_squares(&c);
        assert!((total - 0.2 * 2f64.sqrt()).abs() < 1e-13);
        // in-range quadratic adjoint with matching interpolated control
        let zq = interpolate_vector(|x| [0.2 + 0.1 * x[0] * x[1], 0.3 - 0.1 * x[0] * x[0]], &d);
        let uq = interpolate_vector(|x| [-(0.2 + 0.1 * x[0] * x[1]), -(0.3 - 0.1 * x[0] * x[0])], &d);
        assert!(root_sum_squares(&est_control(&m, &d, &uq, &zq, &p)) < 1e-12);
        // clamp active on half the domain
        let zl = interpolate_vector(|x| [x[0] - 0.5 + 0.3, 0.3], &d);
        let mut ul = zl.scaled(-1.0);
        for (k, v) in ul.coeffs.iter_mut().enumerate() {
            *v = v.max(p.lower[k % 2]).min(p.upper[k % 2]);
        }
        assert!(root_sum_squares(&est_control(&m, &d, &ul, &zl, &p)) > 1e-4);
    }

    #[test]
    fn oscillation() {
        let m = InitialMesh::UnitSquare.build_with(3);
        let all: Vec<usize> = (0..m.num_elements()).collect();
        assert!(est_oscillation(|p| [p[0] - p[1], 2.0], &m, &all, OscMode::L2, 5) < 1e-12);
        assert!(est_oscillation(|_| [1.0, -4.0], &m, &all, OscMode::Max, 5) < 1e-12);
        let r = reference();
        let g = ElementGeometry::new(&r, 0);
        let proj = l2_project_p1(|p| p[0] * p[0], &g);
        // independent value: ‖x² - Πx²‖² by a direct high-order integral
        let v = integrate(
            |x| {
                let l = g.barycentric(x);
                (x[0] * x[0] - (proj[0] * l[0] + proj[1] * l[1] + proj[2] * l[2])).powi(2)
            },
            &g.coords,
            high_order(),
        );
        let osc = est_oscillation(|p| [p[0] * p[0], 0.0], &r, &[0], OscMode::L2, 5);
        assert!((osc - (2.0 * v).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn combine_cases() {
        let b = combine(vec![4.0], vec![3.0], vec![0.0], vec![0.0]).unwrap();
        assert_eq!(b.est_ocp, 5.0);
        let z = combine(vec![0.0; 3], vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]).unwrap();
        assert_eq!(z.est_ocp, 0.0);
        assert!(combine(vec![1.0], vec![], vec![1.0], vec![1.0]).is_err());
        let b = combine(vec![1.0, 2.0], vec![0.5, 3.0], vec![1.0, 1.0], vec![0.1, 0.2]).unwrap();
        assert_eq!(b.est_st_max, 3.0);
        let re = (b.est_st_max.powi(2) + b.est_ad.powi(2) + b.est_ct.powi(2) + b.est_st_energy.powi(2)).sqrt();
        assert_eq!(re, b.est_ocp);
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    #[test]
    fn adjoint_homogeneity() {
        let m = InitialMesh::UnitSquare.build_with(4);
        let d = DofMap::new(&m);
        let w = WeightRho::new(vec![[0.5, 0.5]], 1.5, &m).unwrap();
        let z = interpolate_vector(|p| [(3.0 * p[0]).sin() * p[1], p[0] * p[0] * p[1]], &d);
        let r = interpolate_scalar(|p| p[0] * p[1] - 0.25, &d);
        let pd = [([0.5, 0.5], [0.3, -0.7])];
        let base = est_adjoint(&m, &d, &MomentumData::adjoint(&z, &r), &w, &pd, 6);
        let s = -2.5;
        let (zs, rs) = (z.scaled(s), r.scaled(s));
        let pds = [([0.5, 0.5], [0.3 * s, -0.7 * s])];
        let scaled = est_adjoint(&m, &d, &MomentumData::adjoint(&zs, &rs), &w, &pds, 6);
        for (a, b) in base.iter().zip(&scaled) {
            assert!((b - s.abs() * a).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }
}
