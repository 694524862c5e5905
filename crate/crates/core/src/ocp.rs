//! The discrete optimality system and its primal-dual active set solve.
//!
//! The monolithic KKT system has the unknown layout
//! `Y | P | Z | R | U | μ_state | μ_adjoint`, where the adjoint pressure is
//! stored with the state sign and flipped on return (`r = -P'`). It is solved
//! through one factorized Stokes operator rather than assembled whole.

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::spaces::{p2_values, DofMap, FeFunction, Space};
use crate::sparse::BorderedLu;
use crate::stokes::{assemble, assemble_load, boundary_values, eliminate, Entries, LoadSpec, SaddleSystem};

pub type VectorField = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;

pub const DEFAULT_PDAS_CAP: usize = 50;

#[derive(Clone)]
pub struct OcpProblem {
    pub obs_points: Vec<Point>,
    pub desired: Vec<[f64; 2]>,
    pub lambda: f64,
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    pub alpha: f64,
    pub forcing: Option<VectorField>,
    pub state_bc: Option<VectorField>,
    pub adjoint_bc: Option<VectorField>,
}

impl fmt::Debug for OcpProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OcpProblem")
            .field("obs_points", &self.obs_points)
            .field("desired", &self.desired)
            .field("lambda", &self.lambda)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("alpha", &self.alpha)
            .field("forcing", &self.forcing.is_some())
            .field("state_bc", &self.state_bc.is_some())
            .field("adjoint_bc", &self.adjoint_bc.is_some())
            .finish()
    }
}

impl OcpProblem {
    /// Homogeneous problem with no forcing and no boundary data.
    pub fn new(
        obs_points: Vec<Point>,
        desired: Vec<[f64; 2]>,
        lambda: f64,
        lower: [f64; 2],
        upper: [f64; 2],
        alpha: f64,
    ) -> Self {
        Self { obs_points, desired, lambda, lower, upper, alpha, forcing: None, state_bc: None, adjoint_bc: None }
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.obs_points.len() != self.desired.len() {
            return bad("one desired state per observation point");
        }
        if !(self.lambda > 0.0) {
            return bad("lambda must be positive");
        }
        if !(self.lower[0] < self.upper[0] && self.lower[1] < self.upper[1]) {
            return bad("bounds need a < b componentwise");
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return bad("alpha must lie in (0, 2)");
        }
        for &t in &self.obs_points {
            let t_el = mesh.locate(t)?;
            // strictly interior: not on a boundary side
            let l = mesh.barycentric(t_el, t);
            for (side, &s) in mesh.element_sides(t_el).iter().enumerate() {
                if mesh.sides()[s].is_boundary() && l[side].abs() <= 1e-12 {
                    return bad("observation points must be interior");
                }
            }
        }
        Ok(())
    }

    pub fn project(&self, v: [f64; 2]) -> [f64; 2] {
        project_admissible(v, self.lower, self.upper)
    }
}

/// Componentwise clamp `min(b, max(v, a))`.
pub fn project_admissible(v: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [v[0].max(a[0]).min(b[0]), v[1].max(a[1]).min(b[1])]
}

#[derive(Clone, Debug)]
pub struct DiscreteSolution {
    pub y: FeFunction,
    pub p: FeFunction,
    pub z: FeFunction,
    pub r: FeFunction,
    pub u: FeFunction,
    /// Per control dof (`2 * node + c`).
    pub active_lower: Vec<bool>,
    pub active_upper: Vec<bool>,
    pub pdas_iterations: usize,
    /// Relative residual of the last KKT solve.
    pub kkt_residual: f64,
}

#[derive(Clone, Copy, Debug)]
struct Offsets {
    nv: usize,
    np: usize,
}

impl Offsets {
    fn y(&self) -> usize {
        0
    }
    fn p(&self) -> usize {
        self.nv
    }
    fn z(&self) -> usize {
        self.nv + self.np
    }
    fn r(&self) -> usize {
        2 * self.nv + self.np
    }
    fn u(&self) -> usize {
        2 * self.nv + 2 * self.np
    }
    fn mu_state(&self) -> usize {
        3 * self.nv + 2 * self.np
    }
    fn mu_adjoint(&self) -> usize {
        self.mu_state() + 1
    }
    fn size(&self) -> usize {
        self.mu_adjoint() + 1
    }
}

/// Point evaluation rows: for each observation point, the containing
/// element's P2 nodes and basis values.
pub fn observation_stencils(mesh: &Mesh, dofs: &DofMap, points: &[Point]) -> Result<Vec<([usize; 6], [f64; 6])>> {
    points
        .iter()
        .map(|&t| {
            let el = mesh.locate(t)?;
            Ok((*dofs.element_p2(el), p2_values(&mesh.barycentric(el, t))))
        })
        .collect()
}

/// Everything about the KKT system that does not change with the active
/// sets.
pub struct KktContext<'a> {
    pub mesh: &'a Mesh,
    pub dofs: &'a DofMap,
    pub problem: &'a OcpProblem,
    pub system: SaddleSystem,
    pub load: Vec<f64>,
    stencils: Vec<([usize; 6], [f64; 6])>,
    fixed_y: Vec<Option<f64>>,
    fixed_z: Vec<Option<f64>>,
    stokes: OnceLock<StokesFactor>,
    adjoint_basis: OnceLock<Vec<Vec<f64>>>,
}

/// The Stokes operator with homogeneous velocity rows eliminated, factorized
/// once and shared by the state and adjoint solves.
struct StokesFactor {
    lu: BorderedLu,
    /// Entries in a free row and a pinned column, for lifting boundary data.
    lift: Entries,
    pinned: Vec<bool>,
    size: usize,
}

impl StokesFactor {
    fn new(system: &SaddleSystem, dirichlet: &[Option<f64>]) -> Result<Self> {
        let (nv, np) = (system.n_vel, system.n_pres);
        let size = system.size();
        let mut entries = Vec::new();
        system.push_blocks(&mut entries, 0, nv, nv + np);
        let mut pinned = vec![false; size];
        for (k, d) in dirichlet.iter().enumerate() {
            pinned[k] = d.is_some();
        }
        let lift = entries.iter().copied().filter(|&(i, j, _)| !pinned[i] && pinned[j]).collect();
        let mut fixed = vec![None; size];
        for (k, f) in pinned.iter().enumerate() {
            if *f {
                fixed[k] = Some(0.0);
            }
        }
        let mut scratch = vec![0.0; size];
        let entries = eliminate(&entries, &mut scratch, &fixed);
        let lu = BorderedLu::factor(size, &entries, &[(nv + np, nv)])?;
        Ok(Self { lu, lift, pinned, size })
    }

    /// Right-hand side for velocity load `load` and boundary values `bc`
    /// (zero when `None`).
    fn rhs(&self, load: &[f64], bc: Option<&[Option<f64>]>) -> Vec<f64> {
        let mut rhs = vec![0.0; self.size];
        rhs[..load.len()].copy_from_slice(load);
        let g = |k: usize| bc.and_then(|b| b[k]).unwrap_or(0.0);
        for &(i, j, v) in &self.lift {
            rhs[i] -= v * g(j);
        }
        for (k, &p) in self.pinned.iter().enumerate() {
            if p {
                rhs[k] = g(k);
            }
        }
        rhs
    }
}

impl<'a> KktContext<'a> {
    pub fn new(mesh: &'a Mesh, dofs: &'a DofMap, problem: &'a OcpProblem) -> Result<Self> {
        problem.validate(mesh)?;
        let system = assemble(mesh, dofs);
        let f = problem.forcing.clone();
        let smooth = f.as_ref().map(|f| f.as_ref() as &(dyn Fn(Point) -> [f64; 2] + Sync));
        let load = assemble_load(&LoadSpec { smooth, diracs: &[] }, mesh, dofs)?;
        let stencils = observation_stencils(mesh, dofs, &problem.obs_points)?;
        let as_fn = |g: &Option<VectorField>| g.clone();
        let sbc = as_fn(&problem.state_bc);
        let abc = as_fn(&problem.adjoint_bc);
        let fixed_y = boundary_values(dofs, sbc.as_ref().map(|g| g.as_ref() as &dyn Fn(Point) -> [f64; 2]));
        let fixed_z = boundary_values(dofs, abc.as_ref().map(|g| g.as_ref() as &dyn Fn(Point) -> [f64; 2]));
        Ok(Self {
            mesh,
            dofs,
            problem,
            system,
            load,
            stencils,
            fixed_y,
            fixed_z,
            stokes: OnceLock::new(),
            adjoint_basis: OnceLock::new(),
        })
    }

    fn offsets(&self) -> Offsets {
        Offsets { nv: self.system.n_vel, np: self.system.n_pres }
    }

    /// Visits every entry of the KKT matrix before boundary elimination and
    /// returns the matching right-hand side.
    fn kkt_entries(&self, lower: &[bool], upper: &[bool], sink: &mut dyn FnMut(usize, usize, f64)) -> Vec<f64> {
        let o = self.offsets();
        let s = &self.system;
        let pb = self.problem;
        let mut rhs = vec![0.0; o.size()];
        let mut blocks = Vec::new();

        // state: A Y + Bᵀ P - M U = F
        s.push_blocks(&mut blocks, o.y(), o.p(), o.mu_state());
        for (i, j, v) in blocks.drain(..) {
            sink(i, j, v);
        }
        for (i, j, v) in s.mass.triplets() {
            sink(o.y() + i, o.u() + j, -v);
        }
        rhs[..o.nv].copy_from_slice(&self.load);

        // adjoint: A Z + Bᵀ P' - Σ E_tᵀ E_t Y = -Σ E_tᵀ y_t
        s.push_blocks(&mut blocks, o.z(), o.r(), o.mu_adjoint());
        for (i, j, v) in blocks.drain(..) {
            sink(i, j, v);
        }
        for ((nodes, phi), yt) in self.stencils.iter().zip(&pb.desired) {
            for i in 0..6 {
                for c in 0..2 {
                    let row = o.z() + 2 * nodes[i] + c;
                    rhs[row] -= phi[i] * yt[c];
                    for j in 0..6 {
                        sink(row, o.y() + 2 * nodes[j] + c, -phi[i] * phi[j]);
                    }
                }
            }
        }

        // control: U = bound on active dofs, λ U + Z = 0 elsewhere
        for k in 0..o.nv {
            let c = k % 2;
            let row = o.u() + k;
            if lower[k] || upper[k] {
                sink(row, row, 1.0);
                sink(row, o.z() + k, 0.0);
                rhs[row] = if lower[k] { pb.lower[c] } else { pb.upper[c] };
            } else {
                sink(row, row, pb.lambda);
                sink(row, o.z() + k, 1.0);
            }
        }
        rhs
    }

    fn fixed(&self) -> Vec<Option<f64>> {
        let o = self.offsets();
        let mut fixed = vec![None; o.size()];
        fixed[o.y()..o.y() + o.nv].copy_from_slice(&self.fixed_y);
        fixed[o.z()..o.z() + o.nv].copy_from_slice(&self.fixed_z);
        fixed
    }

    /// Monolithic KKT system for the given active sets, boundary
    /// conditions already eliminated.
    pub fn assemble_kkt(&self, lower: &[bool], upper: &[bool]) -> (Entries, Vec<f64>) {
        let mut e: Entries = Vec::new();
        let mut rhs = self.kkt_entries(lower, upper, &mut |i, j, v| e.push((i, j, v)));
        let e = eliminate(&e, &mut rhs, &self.fixed());
        (e, rhs)
    }

    /// `max |K x - b| / max(|b|, |K| |x|)` for the monolithic system, with
    /// boundary rows read as `x = g`.
    pub fn kkt_residual(&self, lower: &[bool], upper: &[bool], x: &[f64]) -> f64 {
        let fixed = self.fixed();
        let mut r = vec![0.0; x.len()];
        let mut scale = vec![0.0f64; x.len()];
        let rhs = self.kkt_entries(lower, upper, &mut |i, j, v| {
            if fixed[i].is_none() {
                r[i] += v * x[j];
                scale[i] += (v * x[j]).abs();
            }
        });
        for (i, f) in fixed.iter().enumerate() {
            match f {
                Some(g) => {
                    r[i] = x[i] - g;
                    scale[i] = x[i].abs().max(g.abs());
                }
                None => r[i] -= rhs[i],
            }
        }
        let denom = rhs.iter().chain(&scale).fold(0.0f64, |m, v| m.max(v.abs()));
        let num = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if denom == 0.0 {
            num
        } else {
            num / denom
        }
    }

    fn stokes(&self) -> Result<&StokesFactor> {
        if let Some(f) = self.stokes.get() {
            return Ok(f);
        }
        let f = StokesFactor::new(&self.system, &self.fixed_y)?;
        Ok(self.stokes.get_or_init(|| f))
    }

    /// Solutions for the adjoint data alone and for a unit point load at
    /// each observation component; these do not depend on the active sets.
    fn adjoint_basis(&self) -> Result<&[Vec<f64>]> {
        if let Some(b) = self.adjoint_basis.get() {
            return Ok(b);
        }
        let nv = self.system.n_vel;
        let mut loads = vec![(vec![0.0; nv], true)];
        for (nodes, phi) in &self.stencils {
            for c in 0..2 {
                let mut l = vec![0.0; nv];
                for i in 0..6 {
                    l[2 * nodes[i] + c] += phi[i];
                }
                loads.push((l, false));
            }
        }
        let st = self.stokes()?;
        let rhs: Vec<Vec<f64>> =
            loads.iter().map(|(l, bc)| st.rhs(l, if *bc { Some(&self.fixed_z) } else { None })).collect();
        let b = st.lu.solve_many(&rhs)?;
        Ok(self.adjoint_basis.get_or_init(|| b))
    }

    fn observe(&self, v: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.stencils.len());
        for (nodes, phi) in &self.stencils {
            for c in 0..2 {
                out.push((0..6).map(|i| phi[i] * v[2 * nodes[i] + c]).sum());
            }
        }
        out
    }

    /// One KKT solve for fixed active sets.
    ///
    /// The state and adjoint share the Stokes operator, and the adjoint sees
    /// the state only through its point values. So the adjoint is a fixed
    /// combination of precomputed Stokes solutions, and the state follows
    /// from one solve per observation component plus a small dense system
    /// for the point values.
    pub fn solve_sets(&self, lower: &[bool], upper: &[bool]) -> Result<DiscreteSolution> {
        let o = self.offsets();
        let (nv, np) = (o.nv, o.np);
        let pb = self.problem;
        let st = self.stokes()?;
        let basis = self.adjoint_basis()?;
        let (z_data, g) = basis.split_first().expect("basis holds the data solution");
        let inactive: Vec<bool> = lower.iter().zip(upper).map(|(l, u)| !(*l || *u)).collect();
        let bound: Vec<f64> = (0..nv)
            .map(|k| {
                if lower[k] {
                    pb.lower[k % 2]
                } else if upper[k] {
                    pb.upper[k % 2]
                } else {
                    0.0
                }
            })
            .collect();
        // U = bound - D_I Z / λ
        let control = |z: &[f64], with_bound: bool| -> Vec<f64> {
            (0..nv)
                .map(|k| {
                    if inactive[k] {
                        -z[k] / pb.lambda
                    } else if with_bound {
                        bound[k]
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        let mut rhs = Vec::with_capacity(1 + g.len());
        let mut load = self.system.mass.matvec(&control(z_data, true));
        load.iter_mut().zip(&self.load).for_each(|(a, f)| *a += f);
        rhs.push(st.rhs(&load, Some(&self.fixed_y)));
        for gj in g {
            rhs.push(st.rhs(&self.system.mass.matvec(&control(gj, false)), None));
        }
        let sols = st.lu.solve_many(&rhs)?;
        let (y_base, h) = sols.split_first().expect("nonempty");

        // point residuals c = E Y - y_d solve (I - E H) c = E Y_base - y_d
        let m = g.len();
        let desired: Vec<f64> = pb.desired.iter().flat_map(|d| [d[0], d[1]]).collect();
        let mut c = vec![0.0; m];
        if m > 0 {
            let eh: Vec<Vec<f64>> = h.iter().map(|hk| self.observe(hk)).collect();
            let mat = faer::Mat::<f64>::from_fn(m, m, |j, k| if j == k { 1.0 } else { 0.0 } - eh[k][j]);
            let ey = self.observe(y_base);
            let b = faer::Mat::<f64>::from_fn(m, 1, |j, _| ey[j] - desired[j]);
            use faer::prelude::Solve;
            let sol = mat.partial_piv_lu().solve(&b);
            for j in 0..m {
                c[j] = sol[(j, 0)];
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Singular);
            }
        }
        let combine = |base: &[f64], dirs: &[Vec<f64>]| -> Vec<f64> {
            let mut v = base.to_vec();
            for (ck, d) in c.iter().zip(dirs) {
                v.iter_mut().zip(d).for_each(|(a, b)| *a += ck * b);
            }
            v
        };
        let y = combine(y_base, h);
        let z = combine(z_data, g);
        let u = control(&z, true);

        let mut x = vec![0.0; o.size()];
        x[o.y()..o.y() + nv].copy_from_slice(&y[..nv]);
        x[o.p()..o.p() + np].copy_from_slice(&y[nv..nv + np]);
        x[o.mu_state()] = y[nv + np];
        x[o.z()..o.z() + nv].copy_from_slice(&z[..nv]);
        x[o.r()..o.r() + np].copy_from_slice(&z[nv..nv + np]);
        x[o.mu_adjoint()] = z[nv + np];
        x[o.u()..o.u() + nv].copy_from_slice(&u);
        let kkt_residual = self.kkt_residual(lower, upper, &x);

        let d = self.dofs;
        let vec = |start: usize| FeFunction::from_coeffs(Space::VectorP2, x[start..start + nv].to_vec(), d);
        let sca = |start: usize, sign: f64| {
            let c = x[start..start + np].iter().map(|v| sign * v).collect();
            FeFunction::from_coeffs(Space::ScalarP1, c, d)
        };
        let mut p = sca(o.p(), 1.0)?;
        let mut r = sca(o.r(), -1.0)?;
        p.remove_mean(self.mesh, d);
        r.remove_mean(self.mesh, d);
        Ok(DiscreteSolution {
            y: vec(o.y())?,
            p,
            z: vec(o.z())?,
            r,
            u: vec(o.u())?,
            active_lower: lower.to_vec(),
            active_upper: upper.to_vec(),
            pdas_iterations: 0,
            kkt_residual,
        })
    }

    /// Active sets predicted by nodal adjoint values.
    pub fn active_sets(&self, z: &[f64]) -> (Vec<bool>, Vec<bool>) {
        let pb = self.problem;
        let lower = z.iter().enumerate().map(|(k, zk)| -zk / pb.lambda < pb.lower[k % 2]).collect();
        let upper = z.iter().enumerate().map(|(k, zk)| -zk / pb.lambda > pb.upper[k % 2]).collect();
        (lower, upper)
    }

    /// PDAS iteration from `z⁰ = 0` (or from the given adjoint) until the
    /// active sets repeat.
    pub fn pdas(&self, initial_z: Option<&[f64]>, cap: usize) -> Result<DiscreteSolution> {
        let zero = vec![0.0; self.system.n_vel];
        let (mut lower, mut upper) = self.active_sets(initial_z.unwrap_or(&zero));
        let mut last = None;
        for it in 1..=cap {
            let mut sol = self.solve_sets(&lower, &upper)?;
            sol.pdas_iterations = it;
            let (nl, nu) = self.active_sets(&sol.z.coeffs);
            if nl == lower && nu == upper {
                let pb = self.problem;
                for (k, u) in sol.u.coeffs.iter_mut().enumerate() {
                    let c = k % 2;
                    *u = (-sol.z.coeffs[k] / pb.lambda).max(pb.lower[c]).min(pb.upper[c]);
                }
                return Ok(sol);
            }
            lower = nl;
            upper = nu;
            last = Some(sol);
        }
        Err(Error::PdasNotConverged { iterations: cap, last: Box::new(last.expect("cap is positive")) })
    }
}

/// Solves the discrete optimal control problem on `mesh`.
pub fn pdas_solve(
    mesh: &Mesh,
    dofs: &DofMap,
    problem: &OcpProblem,
    initial_z: Option<&[f64]>,
) -> Result<DiscreteSolution> {
    if let Some(z) = initial_z {
        if z.len() != dofs.n_velocity() {
            return Err(Error::InvalidArgument("initial adjoint has the wrong length".into()));
        }
    }
    KktContext::new(mesh, dofs, problem)?.pdas(initial_z, DEFAULT_PDAS_CAP)
}

pub fn point_eval(fe: &FeFunction, mesh: &Mesh, dofs: &DofMap, t: Point) -> Result<[f64; 2]> {
    fe.eval_vector(mesh, dofs, t)
}

/// `½ Σ |y(t) - y_t|² + λ/2 ‖u‖²`.
pub fn cost(
    sol: &DiscreteSolution,
    problem: &OcpProblem,
    mesh: &Mesh,
    dofs: &DofMap,
    mass: &crate::sparse::Csr,
) -> Result<f64> {
    let mut j = 0.0;
    for (&t, yt) in problem.obs_points.iter().zip(&problem.desired) {
        let y = point_eval(&sol.y, mesh, dofs, t)?;
        j += 0.5 * ((y[0] - yt[0]).powi(2) + (y[1] - yt[1]).powi(2));
    }
    let mu = mass.matvec(&sol.u.coeffs);
    j += 0.5 * problem.lambda * mu.iter().zip(&sol.u.coeffs).map(|(a, b)| a * b).sum::<f64>();
    Ok(j)
}

/// `(z + λ u, v - u)_{L²}` for a candidate control `v` (coefficients).
pub fn variational_inequality(
    sol: &DiscreteSolution,
    problem: &OcpProblem,
    mass: &crate::sparse::Csr,
    v: &[f64],
) -> f64 {
    let w: Vec<f64> = sol.z.coeffs.iter().zip(&sol.u.coeffs).map(|(z, u)| z + problem.lambda * u).collect();
    let mw = mass.matvec(&w);
    mw.iter().zip(v.iter().zip(&sol.u.coeffs)).map(|(m, (v, u))| m * (v - u)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::InitialMesh;
    use crate::spaces::interpolate_vector;
    use crate::stokes::solve_stokes;

    fn ex1_like(lambda: f64) -> OcpProblem {
        OcpProblem::new(vec![[0.5, 0.5]], vec![[1.0, -1.0]], lambda, [-0.5, -0.5], [-0.1, -0.1], 1.5)
    }

    #[test]
    fn clamp_cases() {
        let (a, b) = ([-0.5, -0.5], [-0.1, -0.1]);
        assert_eq!(project_admissible([0.0, -0.3], a, b), [-0.1, -0.3]);
        assert_eq!(project_admissible([-0.2, -0.4], a, b), [-0.2, -0.4]);
        assert_eq!(project_admissible([-9.0, 9.0], a, b), [-0.5, -0.1]);
    }

    #[test]
    fn validation() {
        let m = InitialMesh::UnitSquare.build_with(2);
        assert!(ex1_like(1.0).validate(&m).is_ok());
        assert!(ex1_like(0.0).validate(&m).is_err());
        let mut p = ex1_like(1.0);
        p.lower = [0.0, 0.0];
        p.upper = [0.0, 1.0];
        assert!(p.validate(&m).is_err());
        let mut p = ex1_like(1.0);
        p.obs_points = vec![[0.0, 0.5]];
        assert!(p.validate(&m).is_err());
        let mut p = ex1_like(1.0);
        p.alpha = 2.0;
        assert!(p.validate(&m).is_err());
    }

    #[test]
    fn unconstrained_zero_problem() {
        let m = InitialMesh::UnitSquare.build_with(3);
        let d = DofMap::new(&m);
        let p = OcpProblem::new(vec![[0.5, 0.5]], vec![[0.0, 0.0]], 1.0, [-1e6, -1e6], [1e6, 1e6], 1.0);
        let s = pdas_solve(&m, &d, &p, None).unwrap();
        assert_eq!(s.pdas_iterations, 1);
        for f in [&s.y, &s.z, &s.u] {
            assert!(f.coeffs.iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn no_observations_decouples() {
        let m = InitialMesh::UnitSquare.build_with(3);
        let d = DofMap::new(&m);
        let mut p = OcpProblem::new(vec![], vec![], 1.0, [-0.5, -0.5], [-0.1, -0.1], 1.0);
        p.forcing = Some(Arc::new(|x: Point| [x[1], 1.0]));
        let s = pdas_solve(&m, &d, &p, None).unwrap();
        assert!(s.z.coeffs.iter().chain(&s.r.coeffs).all(|v| *v == 0.0));
        assert!(s.u.coeffs.iter().all(|v| *v == -0.1));
        // the state then solves Stokes with f + u
        let f = |x: Point| [x[1] - 0.1, 0.9];
        let st = solve_stokes(&m, &d, &LoadSpec { smooth: Some(&f), diracs: &[] }, None).unwrap();
        for (a, b) in s.y.coeffs.iter().zip(&st.velocity.coeffs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reduced_solve_matches_monolithic_kkt() {
        let m = InitialMesh::UnitSquare.build_with(3);
        let d = DofMap::new(&m);
        let pts = vec![[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]];
        let mut p = OcpProblem::new(
            pts,
            vec![[1.0, -2.0], [0.5, 0.0], [-1.0, 3.0], [2.0, 2.0]],
            0.1,
            [-0.85, -0.85],
            [-0.2, -0.2],
            1.0,
        );
        p.forcing = Some(Arc::new(|x: Point| [x[1].sin(), x[0] * x[1]]));
        p.state_bc = Some(Arc::new(|x: Point| [x[1] * (1.0 - x[1]), 0.0]));
        p.adjoint_bc = Some(Arc::new(|x: Point| [0.0, x[0] * (1.0 - x[0])]));
        let ctx = KktContext::new(&m, &d, &p).unwrap();
        let n = d.n_velocity();
        let lower: Vec<bool> = (0..n).map(|k| k % 3 == 0).collect();
        let upper: Vec<bool> = (0..n).map(|k| k % 5 == 1).collect();
        let s = ctx.solve_sets(&lower, &upper).unwrap();
        assert!(s.kkt_residual < 1e-12, "{}", s.kkt_residual);
        let (e, rhs) = ctx.assemble_kkt(&lower, &upper);
        let x = crate::sparse::lu_solve(rhs.len(), &e, &rhs).unwrap();
        let o = ctx.offsets();
        for (a, b) in [(&s.y, o.y()), (&s.z, o.z()), (&s.u, o.u())] {
            for (k, v) in a.coeffs.iter().enumerate() {
                assert!((v - x[b + k]).abs() < 1e-10, "{v} {}", x[b + k]);
            }
        }
    }

    #[test]
    fn all_lower_active_feeds_the_bound() {
        let m = InitialMesh::UnitSquare.build_with(2);
        let d = DofMap::new(&m);
        let p = ex1_like(1.0);
        let ctx = KktContext::new(&m, &d, &p).unwrap();
        let n = d.n_velocity();
        let s = ctx.solve_sets(&vec![true; n], &vec![false; n]).unwrap();
        assert!(s.u.coeffs.iter().all(|v| *v == -0.5));
        let f = |_: Point| [-0.5, -0.5];
        let st = solve_stokes(&m, &d, &LoadSpec { smooth: Some(&f), diracs: &[] }, None).unwrap();
        for (a, b) in s.y.coeffs.iter().zip(&st.velocity.coeffs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stencil_at_node() {
        let m = InitialMesh::UnitSquare.build_with(2);
        let d = DofMap::new(&m);
        let st = observation_stencils(&m, &d, &[[0.5, 0.5]]).unwrap();
        let ones: Vec<_> = st[0].1.iter().filter(|v| **v != 0.0).collect();
        assert_eq!(ones, vec![&1.0]);
    }

    /// Fixed-point oracle u ← clamp(-z(u)/λ), each z(u) from two Stokes solves.
    fn fixed_point_oracle(m: &Mesh, d: &DofMap, p: &OcpProblem, iters: usize) -> Vec<f64> {
        let n = d.n_velocity();
        let mut u = vec![0.0; n];
        for k in 0..n {
            u[k] = 0.0f64.max(p.lower[k % 2]).min(p.upper[k % 2]);
        }
        for _ in 0..iters {
            let uf = FeFunction::from_coeffs(Space::VectorP2, u.clone(), d).unwrap();
            let mut sys = assemble(m, d);
            let mu = sys.mass.matvec(&uf.coeffs);
            sys.rhs_velocity = mu;
            crate::stokes::apply_dirichlet(&mut sys, d, None);
            let y = crate::stokes::solve_saddle(&sys, m, d).unwrap().velocity;
            let mut diracs = Vec::new();
            for (&t, yt) in p.obs_points.iter().zip(&p.desired) {
                let v = y.eval_vector(m, d, t).unwrap();
                diracs.push((t, [v[0] - yt[0], v[1] - yt[1]]));
            }
            let z = solve_stokes(m, d, &LoadSpec { smooth: None, diracs: &diracs }, None).unwrap().velocity;
            for k in 0..n {
                u[k] = (-z.coeffs[k] / p.lambda).max(p.lower[k % 2]).min(p.upper[k % 2]);
            }
        }
        u
    }

    #[test]
    fn large_lambda_matches_fixed_point_oracle() {
        let m = InitialMesh::UnitSquare.build_with(4);
        let d = DofMap::new(&m);
        let p = ex1_like(1e8);
        let s = pdas_solve(&m, &d, &p, None).unwrap();
        let oracle = fixed_point_oracle(&m, &d, &p, 5);
        for (a, b) in s.u.coeffs.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
            assert!((a + 0.1).abs() < 1e-6);
        }
    }

    #[test]
    fn moderate_lambda_matches_fixed_point_oracle() {
        // the fixed-point map contracts for λ large relative to the
        // observation operator norm
        let m = InitialMesh::UnitSquare.build_with(4);
        let d = DofMap::new(&m);
        let p = OcpProblem::new(vec![[0.5, 0.5]], vec![[20.0, -20.0]], 0.05, [-0.5, -0.5], [0.2, 0.3], 1.5);
        let s = pdas_solve(&m, &d, &p, None).unwrap();
        let oracle = fixed_point_oracle(&m, &d, &p, 60);
        let diff = s.u.coeffs.iter().zip(&oracle).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(diff < 1e-9, "{diff}");
        assert!(s.active_lower.iter().any(|&b| b) && s.active_upper.iter().any(|&b| b));
    }

    #[test]
    fn converged_solution_properties() {
        let m = InitialMesh::UnitSquare.build_with(5);
        let d = DofMap::new(&m);
        let p = OcpProblem::new(
            vec![[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]],
            vec![[3.0, 3.0], [-1.0, -1.0], [3.0, 3.0], [-1.0, -1.0]],
            0.01,
            [-0.85, -0.85],
            [0.2, 0.2],
            1.0,
        );
        let ctx = KktContext::new(&m, &d, &p).unwrap();
        let s = ctx.pdas(None, DEFAULT_PDAS_CAP).unwrap();
        assert!(s.kkt_residual < 1e-9);
        for (k, u) in s.u.coeffs.iter().enumerate() {
            assert!(*u >= p.lower[k % 2] && *u <= p.upper[k % 2]);
            assert!(!(s.active_lower[k] && s.active_upper[k]));
        }
        assert!(s.p.integral(&m, &d).abs() < 1e-13 && s.r.integral(&m, &d).abs() < 1e-13);
        let y_interp = interpolate_vector(|_| [0.0, 0.0], &d);
        assert_eq!(y_interp.coeffs.len(), s.y.coeffs.len());
        assert!(cost(&s, &p, &m, &d, &ctx.system.mass).unwrap() > 0.0);
    }
}
