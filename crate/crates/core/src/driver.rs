//! The adaptive loop (solve, estimate, mark, refine), marking rules, run
//! records, rate fitting and the two standalone studies.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::benchmarks::{benchmark, Example};
use crate::error::{Error, Result};
use crate::estimators::{
    est_adjoint, estimate_ocp, state_indicators, EstimatorBreakdown, MomentumData, WeightRho, DEFAULT_GRADING_DEPTH,
    DEFAULT_LATTICE_ORDER,
};
use crate::exact::{
    effectivity, error_norms, stokeslet, stokeslet_gradient_applied, weighted_adjoint_errors, ErrorNorms, ExactState,
};
use crate::mesh::{initial_mesh, InitialMesh, Mesh, Point};
use crate::ocp::{pdas_solve, DiscreteSolution, OcpProblem};
use crate::par;
use crate::quadrature::{high_order, integrate};
use crate::spaces::{DofMap, ElementGeometry, FeFunction, Space};
use crate::stokes::{solve_stokes, LoadSpec};

pub const RECORD_HEADER: &str = "iter,ndof,nelem,est_ocp,est_st_max,est_st_energy,est_ad,est_ct,err_total,err_y_inf,\
err_p_l2,err_z_w,err_r_w,err_u_l2,effectivity,ell_T,pdas_iters,wall_s";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Marking {
    /// `𝓔_ocp,T² > θ max`.
    Maximum,
    /// State/adjoint part and control part marked separately, then merged.
    Split,
}

impl FromStr for Marking {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" | "maximum" => Ok(Self::Maximum),
            "split" => Ok(Self::Split),
            other => Err(Error::InvalidArgument(format!("unknown marking strategy '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub example: Example,
    pub alpha: f64,
    pub lambda: Option<f64>,
    pub marking: Marking,
    /// `0` refines uniformly.
    pub theta: f64,
    pub max_iter: usize,
    pub max_dof: usize,
    pub out: Option<PathBuf>,
    pub dump_meshes: bool,
    pub depth: usize,
    pub lattice_order: usize,
    /// Leave `wall_s` blank unless set, so records are reproducible byte for byte.
    pub record_wall_time: bool,
    /// Start PDAS on each new mesh from the previous adjoint.
    pub warm_start: bool,
}

impl RunConfig {
    pub fn new(example: Example, alpha: f64) -> Self {
        Self {
            example,
            alpha,
            lambda: None,
            marking: Marking::Maximum,
            theta: 0.5,
            max_iter: 20,
            max_dof: usize::MAX,
            out: None,
            dump_meshes: false,
            depth: DEFAULT_GRADING_DEPTH,
            lattice_order: DEFAULT_LATTICE_ORDER,
            record_wall_time: false,
            warm_start: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta == 0.0 || (self.theta > 0.0 && self.theta < 1.0)) {
            return Err(Error::InvalidArgument(format!("theta {} outside (0, 1)", self.theta)));
        }
        if self.max_iter == 0 || self.max_dof == 0 {
            return Err(Error::InvalidArgument("iteration and dof caps must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::InvalidArgument(format!("alpha {} outside (0, 2)", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub iter: usize,
    pub ndof: usize,
    pub nelem: usize,
    pub est_ocp: f64,
    pub est_st_max: f64,
    pub est_st_energy: f64,
    pub est_ad: f64,
    pub est_ct: f64,
    pub errors: Option<ErrorNorms>,
    pub effectivity: Option<f64>,
    pub ell: f64,
    pub pdas_iters: usize,
    pub wall_s: Option<f64>,
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

impl RunRow {
    pub fn csv_line(&self) -> String {
        let e = self.errors;
        [
            self.iter.to_string(),
            self.ndof.to_string(),
            self.nelem.to_string(),
            fmt_f(self.est_ocp),
            fmt_f(self.est_st_max),
            fmt_f(self.est_st_energy),
            fmt_f(self.est_ad),
            fmt_f(self.est_ct),
            fmt_opt(e.map(|e| e.total)),
            fmt_opt(e.map(|e| e.y_inf)),
            fmt_opt(e.map(|e| e.p_l2)),
            fmt_opt(e.map(|e| e.z_weighted)),
            fmt_opt(e.map(|e| e.r_weighted)),
            fmt_opt(e.map(|e| e.u_l2)),
            fmt_opt(self.effectivity),
            fmt_f(self.ell),
            self.pdas_iters.to_string(),
            fmt_opt(self.wall_s),
        ]
        .join(",")
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
}

impl RunRecord {
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(256 * (self.rows.len() + 1));
        s.push_str(RECORD_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv_line());
            s.push('\n');
        }
        s
    }

    pub fn ndofs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.ndof as f64).collect()
    }

    /// A numeric column by its CSV name; `None` where the value is absent.
    pub fn column(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let pick = |r: &RunRow| -> Result<Option<f64>> {
            let e = r.errors;
            Ok(match name {
                "iter" => Some(r.iter as f64),
                "ndof" => Some(r.ndof as f64),
                "nelem" => Some(r.nelem as f64),
                "est_ocp" => Some(r.est_ocp),
                "est_st_max" => Some(r.est_st_max),
                "est_st_energy" => Some(r.est_st_energy),
                "est_ad" => Some(r.est_ad),
                "est_ct" => Some(r.est_ct),
                "err_total" => e.map(|e| e.total),
                "err_y_inf" => e.map(|e| e.y_inf),
                "err_p_l2" => e.map(|e| e.p_l2),
                "err_z_w" => e.map(|e| e.z_weighted),
                "err_r_w" => e.map(|e| e.r_weighted),
                "err_u_l2" => e.map(|e| e.u_l2),
                "effectivity" => r.effectivity,
                "ell_T" => Some(r.ell),
                "pdas_iters" => Some(r.pdas_iters as f64),
                "wall_s" => r.wall_s,
                other => return Err(Error::InvalidArgument(format!("unknown column '{other}'"))),
            })
        };
        self.rows.iter().map(pick).collect()
    }

    /// Slope of `log(column)` against `log(ndof)` over the last `tail` rows.
    pub fn rate(&self, name: &str, tail: usize) -> Result<f64> {
        let col = self.column(name)?;
        let vals = col
            .into_iter()
            .map(|v| v.ok_or_else(|| Error::InvalidArgument(format!("column '{name}' has empty entries"))))
            .collect::<Result<Vec<f64>>>()?;
        fit_rate(&self.ndofs(), &vals, tail)
    }
}

/// Least-squares slope of `log(values)` against `log(ndof)` over the last
/// `tail` entries.
pub fn fit_rate(ndof: &[f64], values: &[f64], tail: usize) -> Result<f64> {
    if ndof.len() != values.len() {
        return Err(Error::InvalidArgument("columns of different length".into()));
    }
    let n = tail.min(values.len());
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two rows to fit a rate".into()));
    }
    let start = values.len() - n;
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for k in start..values.len() {
        if !(ndof[k] > 0.0 && values[k] > 0.0) {
            return Err(Error::InvalidArgument(format!("nonpositive value in row {k}")));
        }
        xs.push(ndof[k].ln());
        ys.push(values[k].ln());
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all rows have the same Ndof".into()));
    }
    Ok(sxy / sxx)
}

/// Elements with `squares[T] > θ max`; the first maximizer if that is empty.
/// `θ = 0` marks everything.
pub fn mark_maximum(squares: &[f64], theta: f64) -> Vec<usize> {
    if theta == 0.0 {
        return (0..squares.len()).collect();
    }
    let max = squares.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let marked: Vec<usize> = (0..squares.len()).filter(|&t| squares[t] > theta * max).collect();
    if marked.is_empty() && !squares.is_empty() {
        return vec![argmax(squares)];
    }
    marked
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// Union of the maximum rule applied to `Ẽ_T²` and to `𝓔_ct,T²`.
pub fn mark_split(tilde_sq: &[f64], control_sq: &[f64], theta: f64) -> Vec<usize> {
    if theta == 0.0 {
        return (0..tilde_sq.len()).collect();
    }
    let threshold = |v: &[f64]| theta * v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (a, b) = (threshold(tilde_sq), threshold(control_sq));
    let marked: Vec<usize> = (0..tilde_sq.len()).filter(|&t| tilde_sq[t] > a || control_sq[t] > b).collect();
    if marked.is_empty() && !tilde_sq.is_empty() {
        return vec![argmax(tilde_sq)];
    }
    marked
}

pub fn mark(est: &EstimatorBreakdown, strategy: Marking, theta: f64) -> Vec<usize> {
    match strategy {
        Marking::Maximum => {
            let sq: Vec<f64> = est.local_ocp.iter().map(|v| v * v).collect();
            mark_maximum(&sq, theta)
        }
        Marking::Split => {
            let ct: Vec<f64> = est.control.iter().map(|v| v * v).collect();
            mark_split(&est.split_state_adjoint_sq(), &ct, theta)
        }
    }
}

/// `2 dim V + 2 dim Q + dim U` with `U = V`.
pub fn ocp_ndof(dofs: &DofMap) -> usize {
    3 * dofs.n_velocity() + 2 * dofs.n_p1()
}

/// Interpolates a vector P2 field onto the refined mesh through the parent
/// map of `new`.
pub fn transfer_vector(
    f: &FeFunction,
    old_dofs: &DofMap,
    old: &Mesh,
    new: &Mesh,
    new_dofs: &DofMap,
) -> Result<FeFunction> {
    let mut out = FeFunction::zeros(Space::VectorP2, new_dofs);
    let locals: [[f64; 3]; 6] =
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]];
    for t in 0..new.num_elements() {
        let parent = new.parent(t).ok_or_else(|| Error::InvalidArgument("mesh has no refinement history".into()))?;
        if parent >= old.num_elements() {
            return Err(Error::ElementIndex(parent));
        }
        let geom = ElementGeometry::new(new, t);
        for (k, &node) in new_dofs.element_p2(t).iter().enumerate() {
            let x = geom.point(&locals[k]);
            let v = f.vector_at(old_dofs, parent, &old.barycentric(parent, x));
            out.coeffs[2 * node] = v[0];
            out.coeffs[2 * node + 1] = v[1];
        }
    }
    Ok(out)
}

/// Final state of an adaptive run.
pub struct RunOutcome {
    pub record: RunRecord,
    pub mesh: Mesh,
    pub dofs: DofMap,
    pub solution: DiscreteSolution,
    pub problem: OcpProblem,
}

struct Output {
    dir: PathBuf,
    record: fs::File,
}

impl Output {
    fn open(dir: &Path, header: &str) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut record = fs::File::create(dir.join("record.csv"))?;
        writeln!(record, "{header}")?;
        Ok(Self { dir: dir.to_path_buf(), record })
    }

    fn row(&mut self, line: &str) -> Result<()> {
        writeln!(self.record, "{line}")?;
        self.record.flush()?;
        Ok(())
    }

    fn mesh(&self, iter: usize, mesh: &Mesh) -> Result<()> {
        let f = fs::File::create(self.dir.join(format!("mesh_{iter:04}.txt")))?;
        mesh.write_text(std::io::BufWriter::new(f))
    }

    fn indicators(&self, iter: usize, est: &EstimatorBreakdown) -> Result<()> {
        let f = fs::File::create(self.dir.join(format!("indicators_{iter:04}.csv")))?;
        est.write_csv(std::io::BufWriter::new(f))
    }
}

fn at(iteration: usize) -> impl Fn(Error) -> Error {
    move |e| Error::AtIteration { iteration, source: Box::new(e) }
}

/// Adaptive primal-dual active set loop on a benchmark.
pub fn adapt_loop(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let bench = benchmark(config.example, config.alpha, config.lambda)?;
    let problem = bench.problem;
    let mut mesh = initial_mesh(bench.domain);
    let mut out = match &config.out {
        Some(dir) => Some(Output::open(dir, RECORD_HEADER)?),
        None => None,
    };
    let mut record = RunRecord::default();
    let mut previous: Option<(Mesh, DofMap, FeFunction)> = None;
    let mut iter = 0;
    loop {
        let clock = Instant::now();
        let e = at(iter);
        if let Some(t) = mesh.patch_property_violation(&problem.obs_points) {
            return Err(e(Error::InvalidMesh(format!("element {t} breaks the one-point patch property"))));
        }
        let dofs = DofMap::new(&mesh);
        let initial_z = match (&previous, config.warm_start) {
            (Some((old_mesh, old_dofs, z)), true) => {
                Some(transfer_vector(z, old_dofs, old_mesh, &mesh, &dofs).map_err(&e)?)
            }
            _ => None,
        };
        let sol = pdas_solve(&mesh, &dofs, &problem, initial_z.as_ref().map(|z| z.coeffs.as_slice())).map_err(&e)?;
        let weight = WeightRho::new(problem.obs_points.clone(), problem.alpha, &mesh).map_err(&e)?;
        let est =
            estimate_ocp(&mesh, &dofs, &problem, &sol, &weight, config.depth, config.lattice_order).map_err(&e)?;
        let errors = bench
            .exact
            .as_ref()
            .map(|ex| error_norms(&sol, ex, &weight, &mesh, &dofs, config.depth, config.lattice_order));
        let eff = match errors {
            Some(err) => Some(effectivity(est.est_ocp, err.total).map_err(&e)?),
            None => None,
        };
        let row = RunRow {
            iter,
            ndof: ocp_ndof(&dofs),
            nelem: mesh.num_elements(),
            est_ocp: est.est_ocp,
            est_st_max: est.est_st_max,
            est_st_energy: est.est_st_energy,
            est_ad: est.est_ad,
            est_ct: est.est_ct,
            errors,
            effectivity: eff,
            ell: mesh.metrics(&problem.obs_points).ell,
            pdas_iters: sol.pdas_iterations,
            wall_s: config.record_wall_time.then(|| clock.elapsed().as_secs_f64()),
        };
        if let Some(o) = out.as_mut() {
            o.row(&row.csv_line())?;
            if config.dump_meshes {
                o.mesh(iter, &mesh)?;
                o.indicators(iter, &est)?;
            }
        }
        let done = iter + 1 >= config.max_iter || row.ndof >= config.max_dof;
        record.rows.push(row);
        if done {
            return Ok(RunOutcome { record, mesh, dofs, solution: sol, problem });
        }
        let marked = mark(&est, config.marking, config.theta);
        let refined = mesh.bisect(&marked).map_err(&e)?;
        previous = config.warm_start.then(|| (mesh.clone(), dofs, sol.z.clone()));
        mesh = refined;
        iter += 1;
    }
}

/// One row of a standalone study: named columns, fixed order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StudyRecord {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl StudyRecord {
    fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    fn header_line(&self) -> String {
        self.header.join(",")
    }

    fn line(&self, row: &[f64]) -> String {
        let mut s = String::new();
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                s.push(',');
            }
            // the first three columns are counts
            if k < 3 {
                let _ = write!(s, "{}", *v as u64);
            } else {
                s.push_str(&fmt_f(*v));
            }
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header_line();
        s.push('\n');
        for r in &self.rows {
            s.push_str(&self.line(r));
            s.push('\n');
        }
        s
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self
            .header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown column '{name}'")))?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn rate(&self, name: &str, tail: usize) -> Result<f64> {
        fit_rate(&self.column("ndof")?, &self.column(name)?, tail)
    }
}

fn study_output(dir: Option<&Path>, rec: &StudyRecord) -> Result<Option<Output>> {
    dir.map(|d| Output::open(d, &rec.header_line())).transpose()
}

/// Adaptive Stokes solve for the trigonometric manufactured solution,
/// marked with the max-norm estimator.
pub fn stokes_study(max_iter: usize, theta: f64, out: Option<&Path>) -> Result<StudyRecord> {
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be positive".into()));
    }
    let state = ExactState::Trig;
    let f = move |x: Point| {
        let l = state.laplacian(x);
        let g = state.pressure_gradient(x);
        [-l[0] + g[0], -l[1] + g[1]]
    };
    let mut rec =
        StudyRecord::new(&["iter", "ndof", "nelem", "est_max", "est_energy", "err_y_inf", "err_y_h1", "err_p_l2"]);
    let mut output = study_output(out, &rec)?;
    let lat = crate::estimators::lattice(DEFAULT_LATTICE_ORDER);
    let mut mesh = initial_mesh(InitialMesh::UnitSquare);
    for iter in 0..max_iter {
        let e = at(iter);
        let dofs = DofMap::new(&mesh);
        let sol = solve_stokes(&mesh, &dofs, &LoadSpec { smooth: Some(&f), diracs: &[] }, None).map_err(&e)?;
        let data = MomentumData::state(&sol.velocity, &sol.pressure).with_load(&f);
        let (energy, max) = state_indicators(&mesh, &dofs, &data, DEFAULT_LATTICE_ORDER);
        let parts = par::map_indexed(mesh.num_elements(), |t| {
            let geom = ElementGeometry::new(&mesh, t);
            let y_inf = lat
                .iter()
                .map(|l| {
                    let a = state.velocity(geom.point(l));
                    let b = sol.velocity.vector_at(&dofs, t, l);
                    (a[0] - b[0]).hypot(a[1] - b[1])
                })
                .fold(0.0f64, f64::max);
            let h1 = integrate(
                |x| {
                    let a = state.velocity_gradient(x);
                    let b = sol.velocity.vector_gradient_at(&dofs, &geom, t, &geom.barycentric(x));
                    (0..2).flat_map(|i| (0..2).map(move |k| (i, k))).map(|(i, k)| (a[i][k] - b[i][k]).powi(2)).sum()
                },
                &geom.coords,
                high_order(),
            );
            // the exact trig pressure has zero mean, as does the discrete one
            let p2 = integrate(
                |x| (state.pressure(x) - sol.pressure.scalar_at(&dofs, t, &geom.barycentric(x))).powi(2),
                &geom.coords,
                high_order(),
            );
            [y_inf, h1, p2]
        });
        let col = |k: usize| parts.iter().map(|p| p[k]).collect::<Vec<f64>>();
        let row = vec![
            iter as f64,
            (dofs.n_velocity() + dofs.n_p1()) as f64,
            mesh.num_elements() as f64,
            max.iter().copied().fold(0.0, f64::max),
            energy.iter().map(|v| v * v).sum::<f64>().sqrt(),
            parts.iter().map(|p| p[0]).fold(0.0, f64::max),
            par::ordered_sum(&col(1)).sqrt(),
            par::ordered_sum(&col(2)).sqrt(),
        ];
        if let Some(o) = output.as_mut() {
            o.row(&rec.line(&row))?;
        }
        rec.rows.push(row);
        if iter + 1 < max_iter {
            let sq: Vec<f64> = max.iter().map(|v| v * v).collect();
            mesh = mesh.bisect(&mark_maximum(&sq, theta)).map_err(&e)?;
        }
    }
    Ok(rec)
}

/// Adaptive solve of the Stokes problem with a point force `force` at `point`
/// on the unit square, with the Stokeslet trace as boundary data and
/// refinement driven by the weighted estimator.
pub fn delta_study(
    alpha: f64,
    point: Point,
    force: [f64; 2],
    max_iter: usize,
    out: Option<&Path>,
) -> Result<StudyRecord> {
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be positive".into()));
    }
    if !(point[0] > 0.0 && point[0] < 1.0 && point[1] > 0.0 && point[1] < 1.0) {
        return Err(Error::InvalidArgument("the point must lie inside the unit square".into()));
    }
    let z_exact = move |x: Point| -> [f64; 2] {
        match stokeslet(point, x) {
            Ok((tt, _)) => [tt[0][0] * force[0] + tt[0][1] * force[1], tt[1][0] * force[0] + tt[1][1] * force[1]],
            Err(_) => [0.0, 0.0],
        }
    };
    let r_exact = move |x: Point| -> f64 {
        match stokeslet(point, x) {
            Ok((_, p)) => -(p[0] * force[0] + p[1] * force[1]),
            Err(_) => 0.0,
        }
    };
    let grad_z = move |x: Point| stokeslet_gradient_applied(point, force, x);
    let mut rec = StudyRecord::new(&["iter", "ndof", "nelem", "est_alpha", "err_z_w", "err_r_w", "err_total"]);
    let mut output = study_output(out, &rec)?;
    let mut mesh = initial_mesh(InitialMesh::UnitSquare);
    let diracs = [(point, force)];
    for iter in 0..max_iter {
        let e = at(iter);
        let dofs = DofMap::new(&mesh);
        let sol =
            solve_stokes(&mesh, &dofs, &LoadSpec { smooth: None, diracs: &diracs }, Some(&z_exact)).map_err(&e)?;
        let weight = WeightRho::new(vec![point], alpha, &mesh).map_err(&e)?;
        let data = MomentumData::state(&sol.velocity, &sol.pressure);
        let ind = est_adjoint(&mesh, &dofs, &data, &weight, &diracs, DEFAULT_GRADING_DEPTH);
        let (z_w, r_w) = weighted_adjoint_errors(
            &mesh,
            &dofs,
            &weight,
            &sol.velocity,
            &sol.pressure,
            &grad_z,
            &r_exact,
            DEFAULT_GRADING_DEPTH,
        );
        let row = vec![
            iter as f64,
            (dofs.n_velocity() + dofs.n_p1()) as f64,
            mesh.num_elements() as f64,
            ind.iter().map(|v| v * v).sum::<f64>().sqrt(),
            z_w,
            r_w,
            z_w + r_w,
        ];
        if let Some(o) = output.as_mut() {
            o.row(&rec.line(&row))?;
        }
        rec.rows.push(row);
        if iter + 1 < max_iter {
            let sq: Vec<f64> = ind.iter().map(|v| v * v).collect();
            mesh = mesh.bisect(&mark_maximum(&sq, 0.5)).map_err(&e)?;
        }
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn maximum_marking_is_strict() {
        assert_eq!(mark_maximum(&[4.0, 1.9, 2.1], 0.5), vec![0, 2]);
        assert_eq!(mark_maximum(&[4.0, 2.0, 2.1], 0.5), vec![0, 2]);
    }

    #[test]
    fn all_equal_falls_back_to_first() {
        // θ max equals every value only when the max is 0
        assert_eq!(mark_maximum(&[0.0, 0.0, 0.0], 0.5), vec![0]);
        assert_eq!(mark_maximum(&[1.0, 1.0, 1.0], 0.5), vec![0, 1, 2]);
        assert_eq!(mark_split(&[0.0, 0.0], &[0.0, 0.0], 0.5), vec![0]);
    }

    #[test]
    fn theta_zero_marks_everything() {
        assert_eq!(mark_maximum(&[0.0, 5.0, 1.0], 0.0), vec![0, 1, 2]);
        assert_eq!(mark_split(&[0.0, 5.0], &[0.0, 0.0], 0.0), vec![0, 1]);
    }

    #[test]
    fn split_is_a_union() {
        let tilde = [10.0, 0.1, 0.1, 9.0];
        let ct = [0.0, 0.0, 1.0, 0.0];
        assert_eq!(mark_split(&tilde, &ct, 0.5), vec![0, 2, 3]);
    }

    #[test]
    fn rates() {
        assert!((fit_rate(&[100.0, 1000.0], &[1e-1, 1e-2], 2).unwrap() + 1.0).abs() < 1e-14);
        assert_eq!(fit_rate(&[10.0, 20.0, 40.0], &[3.0, 3.0, 3.0], 3).unwrap(), 0.0);
        assert!(fit_rate(&[10.0, 20.0], &[1.0, 0.0], 2).is_err());
        assert!(fit_rate(&[10.0], &[1.0], 5).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n: Vec<f64> = (0..12).map(|k| 1e3 * 1.5f64.powi(k)).collect();
        let v: Vec<f64> = n.iter().map(|x| 2.0 * x.powf(-1.5) * (1.0 + rng.random_range(-0.01..0.01))).collect();
        assert!((fit_rate(&n, &v, 12).unwrap() + 1.5).abs() < 0.05);
        // only the tail counts
        let mut v2 = v.clone();
        v2[0] = 1e9;
        assert!((fit_rate(&n, &v2, 10).unwrap() + 1.5).abs() < 0.05);
    }

    #[test]
    fn config_checks() {
        let mut c = RunConfig::new(Example::One, 1.5);
        c.validate().unwrap();
        c.theta = 1.0;
        assert!(c.validate().is_err());
        c.theta = 0.0;
        c.validate().unwrap();
        c.alpha = 2.0;
        assert!(c.validate().is_err());
        assert_eq!("split".parse::<Marking>().unwrap(), Marking::Split);
        assert!("bulk".parse::<Marking>().is_err());
    }

    #[test]
    fn csv_layout() {
        let row = RunRow {
            iter: 3,
            ndof: 100,
            nelem: 20,
            est_ocp: 0.5,
            est_st_max: 0.1,
            est_st_energy: 0.2,
            est_ad: 0.3,
            est_ct: 0.4,
            errors: None,
            effectivity: None,
            ell: 1.0,
            pdas_iters: 2,
            wall_s: None,
        };
        let line = row.csv_line();
        assert_eq!(line.split(',').count(), RECORD_HEADER.split(',').count());
        assert!(line.starts_with("3,100,20,5.0000000000000000e-1,"));
        assert!(line.ends_with(",,,,,,,1.0000000000000000e0,2,"));
        let rec = RunRecord { rows: vec![row] };
        assert!(rec.to_csv().starts_with("iter,ndof,nelem,est_ocp,"));
        assert_eq!(rec.column("err_total").unwrap(), vec![None]);
        assert!(rec.column("nope").is_err());
    }

    #[test]
    fn loop_contract_on_example_one() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::new(Example::One, 1.5);
        c.max_iter = 3;
        c.out = Some(dir.path().to_path_buf());
        c.dump_meshes = true;
        let out = adapt_loop(&c).unwrap();
        let rows = &out.record.rows;
        assert_eq!(rows.len(), 3);
        assert!(rows.windows(2).all(|w| w[1].ndof > w[0].ndof));
        for r in rows {
            let sum = r.est_st_max.powi(2) + r.est_ad.powi(2) + r.est_ct.powi(2) + r.est_st_energy.powi(2);
            assert!((sum.sqrt() - r.est_ocp).abs() <= 1e-14 * r.est_ocp);
            assert!(r.effectivity.unwrap() > 0.0);
        }
        let text = std::fs::read_to_string(dir.path().join("record.csv")).unwrap();
        assert_eq!(text, out.record.to_csv());
        assert!(dir.path().join("mesh_0002.txt").exists());
        assert!(dir.path().join("indicators_0001.csv").exists());
        assert_eq!(out.mesh.num_elements(), rows[2].nelem);
        out.mesh.check_conformity().unwrap();
    }

    #[test]
    fn uniform_mode_quadruples_every_two_rounds() {
        let mut c = RunConfig::new(Example::Three, 1.0);
        c.max_iter = 3;
        c.theta = 0.0;
        let out = adapt_loop(&c).unwrap();
        let n: Vec<usize> = out.record.rows.iter().map(|r| r.nelem).collect();
        assert_eq!(n, vec![96, 192, 384]);
        assert!(out.record.rows.iter().all(|r| r.errors.is_none() && r.effectivity.is_none()));
    }

    #[test]
    fn dof_cap_stops_the_loop() {
        let mut c = RunConfig::new(Example::Two, 1.0);
        c.max_iter = 50;
        c.max_dof = 1;
        let out = adapt_loop(&c).unwrap();
        assert_eq!(out.record.rows.len(), 1);
    }

    #[test]
    fn transfer_is_exact_for_p2_fields() {
        let m = InitialMesh::UnitSquare.build_with(2);
        let d = DofMap::new(&m);
        let g = |x: Point| [x[0] * x[0] - x[1], 3.0 * x[0] * x[1]];
        let f = crate::spaces::interpolate_vector(g, &d);
        let n = m.bisect(&[0, 3]).unwrap();
        let nd = DofMap::new(&n);
        let t = transfer_vector(&f, &d, &m, &n, &nd).unwrap();
        let want = crate::spaces::interpolate_vector(g, &nd);
        for (a, b) in t.coeffs.iter().zip(&want.coeffs) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn warm_start_gives_the_same_solution() {
        let mut c = RunConfig::new(Example::One, 1.5);
        c.max_iter = 3;
        let cold = adapt_loop(&c).unwrap();
        c.warm_start = true;
        let warm = adapt_loop(&c).unwrap();
        assert_eq!(cold.solution.active_lower, warm.solution.active_lower);
        assert_eq!(cold.solution.active_upper, warm.solution.active_upper);
        for (a, b) in cold.solution.z.coeffs.iter().zip(&warm.solution.z.coeffs) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn stokes_study_converges() {
        let rec = stokes_study(4, 0.5, None).unwrap();
        let h1 = rec.column("err_y_h1").unwrap();
        assert!(h1[3] < h1[0]);
        assert_eq!(rec.to_csv().lines().count(), 5);
    }

    #[test]
    fn delta_study_runs() {
        let dir = tempfile::tempdir().unwrap();
        let rec = delta_study(1.0, [0.5, 0.5], [1.0, 0.0], 3, Some(dir.path())).unwrap();
        let err = rec.column("err_total").unwrap();
        assert!(err[2] < err[0]);
        assert!(rec.column("est_alpha").unwrap().iter().all(|v| *v > 0.0));
        let text = std::fs::read_to_string(dir.path().join("record.csv")).unwrap();
        assert_eq!(text, rec.to_csv());
        assert!(delta_study(1.0, [1.0, 0.5], [1.0, 0.0], 3, None).is_err());
    }
}
