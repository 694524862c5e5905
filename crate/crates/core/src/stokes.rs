//! Taylor-Hood assembly and the direct saddle-point solve.
//!
//! Global layout of a Stokes solve: velocity dofs `0..nv`, pressure dofs
//! `nv..nv+np`, then one multiplier for the zero-mean pressure row.

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::par;
use crate::quadrature::{high_order, tri_rule};
use crate::spaces::{p2_gradients, p2_values, DofMap, ElementGeometry, FeFunction, Space};
use crate::sparse::{relative_residual, BorderedLu, Csr};

pub type Entries = Vec<(usize, usize, f64)>;

/// Right-hand side of the momentum equation: a smooth field and point forces.
#[derive(Clone, Copy, Default)]
pub struct LoadSpec<'a> {
    pub smooth: Option<&'a (dyn Fn(Point) -> [f64; 2] + Sync)>,
    pub diracs: &'a [(Point, [f64; 2])],
}

#[derive(Clone, Debug)]
pub struct SaddleSystem {
    pub n_vel: usize,
    pub n_pres: usize,
    /// Vector stiffness `∫ ∇w : ∇v`.
    pub a: Csr,
    /// `-∫ q div v`, rows are pressure dofs.
    pub b: Csr,
    /// Vector P2 mass matrix.
    pub mass: Csr,
    /// `∫ q_k` for each P1 basis function.
    pub mean: Vec<f64>,
    pub rhs_velocity: Vec<f64>,
    pub rhs_divergence: Vec<f64>,
    /// Pinned velocity values, indexed by velocity dof.
    pub dirichlet: Vec<Option<f64>>,
}

struct LocalBlocks {
    a: [[f64; 6]; 6],
    m: [[f64; 6]; 6],
    // b[k][j][c] = -∫ ψ_k ∂_c φ_j
    b: [[[f64; 2]; 6]; 3],
}

fn local_blocks(geom: &ElementGeometry) -> LocalBlocks {
    let jac = 2.0 * geom.area;
    let mut a = [[0.0; 6]; 6];
    let mut b = [[[0.0; 2]; 6]; 3];
    let rule2 = tri_rule(2).expect("degree 2 rule");
    for (l, w) in rule2.points.iter().zip(&rule2.weights) {
        let g = p2_gradients(geom, l);
        let wj = w * jac;
        for i in 0..6 {
            for j in 0..6 {
                a[i][j] += wj * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
            }
        }
        for k in 0..3 {
            for j in 0..6 {
                b[k][j][0] -= wj * l[k] * g[j][0];
                b[k][j][1] -= wj * l[k] * g[j][1];
            }
        }
    }
    let mut m = [[0.0; 6]; 6];
    let rule4 = tri_rule(4).expect("degree 4 rule");
    for (l, w) in rule4.points.iter().zip(&rule4.weights) {
        let v = p2_values(l);
        for i in 0..6 {
            for j in 0..6 {
                m[i][j] += w * jac * v[i] * v[j];
            }
        }
    }
    LocalBlocks { a, m, b }
}

/// Assembles the stiffness, divergence, mass and mean blocks.
pub fn assemble(mesh: &Mesh, dofs: &DofMap) -> SaddleSystem {
    let nt = mesh.num_elements();
    let locals = par::map_indexed(nt, |t| local_blocks(&ElementGeometry::new(mesh, t)));
    let mut a_e = Vec::with_capacity(nt * 72);
    let mut m_e = Vec::with_capacity(nt * 72);
    let mut b_e = Vec::with_capacity(nt * 36);
    let mut mean = vec![0.0; dofs.n_p1()];
    for (t, loc) in locals.iter().enumerate() {
        let n2 = dofs.element_p2(t);
        let n1 = dofs.element_p1(t);
        for i in 0..6 {
            for j in 0..6 {
                for c in 0..2 {
                    a_e.push((2 * n2[i] + c, 2 * n2[j] + c, loc.a[i][j]));
                    m_e.push((2 * n2[i] + c, 2 * n2[j] + c, loc.m[i][j]));
                }
            }
        }
        for k in 0..3 {
            for j in 0..6 {
                for c in 0..2 {
                    b_e.push((n1[k], 2 * n2[j] + c, loc.b[k][j][c]));
                }
            }
            mean[n1[k]] += mesh.area(t) / 3.0;
        }
    }
    let nv = dofs.n_velocity();
    let np = dofs.n_p1();
    SaddleSystem {
        n_vel: nv,
        n_pres: np,
        a: Csr::from_triplets(nv, nv, &a_e),
        b: Csr::from_triplets(np, nv, &b_e),
        mass: Csr::from_triplets(nv, nv, &m_e),
        mean,
        rhs_velocity: vec![0.0; nv],
        rhs_divergence: vec![0.0; np],
        dirichlet: vec![None; nv],
    }
}

/// `∫ f · φ` for the smooth part plus `F · φ(t)` for every point force.
pub fn assemble_load(load: &LoadSpec<'_>, mesh: &Mesh, dofs: &DofMap) -> Result<Vec<f64>> {
    let mut rhs = vec![0.0; dofs.n_velocity()];
    if let Some(f) = load.smooth {
        let rule = high_order();
        let locals = par::map_indexed(mesh.num_elements(), |t| {
            let geom = ElementGeometry::new(mesh, t);
            let jac = 2.0 * geom.area;
            let mut out = [[0.0; 2]; 6];
            for (l, w) in rule.points.iter().zip(&rule.weights) {
                let fx = f(geom.point(l));
                let v = p2_values(l);
                for i in 0..6 {
                    out[i][0] += w * jac * fx[0] * v[i];
                    out[i][1] += w * jac * fx[1] * v[i];
                }
            }
            out
        });
        for (t, loc) in locals.iter().enumerate() {
            for (i, &n) in dofs.element_p2(t).iter().enumerate() {
                rhs[2 * n] += loc[i][0];
                rhs[2 * n + 1] += loc[i][1];
            }
        }
    }
    for &(x, force) in load.diracs {
        let t = mesh.locate(x)?;
        let v = p2_values(&mesh.barycentric(t, x));
        for (i, &n) in dofs.element_p2(t).iter().enumerate() {
            rhs[2 * n] += force[0] * v[i];
            rhs[2 * n + 1] += force[1] * v[i];
        }
    }
    Ok(rhs)
}

/// Velocity Dirichlet values at boundary P2 nodes: `g` at the node, or zero.
pub fn boundary_values(dofs: &DofMap, g: Option<&dyn Fn(Point) -> [f64; 2]>) -> Vec<Option<f64>> {
    let mut out = vec![None; dofs.n_velocity()];
    for (n, &p) in dofs.p2_nodes().iter().enumerate() {
        if dofs.is_boundary_p2(n) {
            let v = g.map_or([0.0, 0.0], |g| g(p));
            out[2 * n] = Some(v[0]);
            out[2 * n + 1] = Some(v[1]);
        }
    }
    out
}

/// Pins the boundary velocity dofs to `g` (zero when `None`).
pub fn apply_dirichlet(system: &mut SaddleSystem, dofs: &DofMap, g: Option<&dyn Fn(Point) -> [f64; 2]>) {
    system.dirichlet = boundary_values(dofs, g);
}

/// Symmetric elimination of fixed unknowns: their columns move to the
/// right-hand side and their rows become identity rows.
pub fn eliminate(entries: &[(usize, usize, f64)], rhs: &mut [f64], fixed: &[Option<f64>]) -> Entries {
    let mut out = Vec::with_capacity(entries.len());
    for &(i, j, v) in entries {
        match (fixed[i], fixed[j]) {
            (None, None) => out.push((i, j, v)),
            (None, Some(g)) => rhs[i] -= v * g,
            (Some(_), _) => {}
        }
    }
    for (i, f) in fixed.iter().enumerate() {
        if let Some(g) = f {
            out.push((i, i, 1.0));
            rhs[i] = *g;
        }
    }
    out
}

impl SaddleSystem {
    /// Unconstrained block entries `[A Bᵀ 0; B 0 m; 0 mᵀ 0]` at the given
    /// offsets of a larger system.
    pub fn push_blocks(&self, entries: &mut Entries, vel: usize, pres: usize, mult: usize) {
        entries.extend(self.a.triplets().map(|(i, j, v)| (vel + i, vel + j, v)));
        for (k, j, v) in self.b.triplets() {
            entries.push((pres + k, vel + j, v));
            entries.push((vel + j, pres + k, v));
        }
        for (k, &m) in self.mean.iter().enumerate() {
            entries.push((pres + k, mult, m));
            entries.push((mult, pres + k, m));
        }
    }

    pub fn size(&self) -> usize {
        self.n_vel + self.n_pres + 1
    }
}

#[derive(Clone, Debug)]
pub struct StokesSolution {
    pub velocity: FeFunction,
    pub pressure: FeFunction,
    /// Residual of the full constrained system, relative.
    pub residual: f64,
}

/// Direct solve of the constrained saddle-point system. The pressure comes
/// back with zero mean.
pub fn solve_saddle(system: &SaddleSystem, mesh: &Mesh, dofs: &DofMap) -> Result<StokesSolution> {
    let (nv, np) = (system.n_vel, system.n_pres);
    let n = system.size();
    let mut entries = Vec::new();
    system.push_blocks(&mut entries, 0, nv, nv + np);
    let mut rhs = vec![0.0; n];
    rhs[..nv].copy_from_slice(&system.rhs_velocity);
    rhs[nv..nv + np].copy_from_slice(&system.rhs_divergence);
    let mut fixed = vec![None; n];
    fixed[..nv].copy_from_slice(&system.dirichlet);
    let entries = eliminate(&entries, &mut rhs, &fixed);
    let lu = BorderedLu::factor(n, &entries, &[(nv + np, nv)])?;
    let x = lu.solve(&rhs)?;
    let residual = relative_residual(n, &entries, &x, &rhs);
    if !(residual <= 1e-8) {
        return Err(Error::Factorization(format!("residual {residual:e} after direct solve")));
    }
    let velocity = FeFunction::from_coeffs(Space::VectorP2, x[..nv].to_vec(), dofs)?;
    let mut pressure = FeFunction::from_coeffs(Space::ScalarP1, x[nv..nv + np].to_vec(), dofs)?;
    pressure.remove_mean(mesh, dofs);
    Ok(StokesSolution { velocity, pressure, residual })
}

/// Assemble, load, pin and solve in one call.
pub fn solve_stokes(
    mesh: &Mesh,
    dofs: &DofMap,
    load: &LoadSpec<'_>,
    g: Option<&dyn Fn(Point) -> [f64; 2]>,
) -> Result<StokesSolution> {
    let mut sys = assemble(mesh, dofs);
    sys.rhs_velocity = assemble_load(load, mesh, dofs)?;
    apply_dirichlet(&mut sys, dofs, g);
    solve_saddle(&sys, mesh, dofs)
}

/// `sqrt(eᵀ A e)` for a coefficient difference: the H¹ seminorm of a
/// vector P2 function.
pub fn energy_norm(system: &SaddleSystem, e: &[f64]) -> f64 {
    let ae = system.a.matvec(e);
    ae.iter().zip(e).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
}
