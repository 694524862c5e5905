//! Conforming triangulations of polygonal domains.
//!
//! Elements are vertex triples in counterclockwise order. Local edge `i` of an
//! element is the edge opposite its local vertex `i`. Edges are numbered in the
//! order they are first met while scanning elements, so numbering is a pure
//! function of the element list.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Barycentric tolerance used for point location.
pub const LOCATE_TOL: f64 = 1e-12;

const MAX_CLOSURE_ROUNDS: usize = 100;

#[inline]
pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[inline]
fn dist2(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

#[inline]
fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

#[inline]
fn sorted_pair(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// An edge of the triangulation. `neighbor` is `None` on the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Side {
    /// Endpoints, sorted ascending.
    pub vertices: [usize; 2],
    /// First element (in element order) having this edge.
    pub owner: usize,
    /// Local index of this edge in `owner`.
    pub owner_local: usize,
    /// The other adjacent element for interior sides.
    pub neighbor: Option<usize>,
    pub neighbor_local: usize,
}

impl Side {
    pub fn is_boundary(&self) -> bool {
        self.neighbor.is_none()
    }
}

/// Element patches: `n_t` shares a full side with `T`, `n_t_star` shares at
/// least a vertex. Both contain `T` and are sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Patch {
    pub n_t: Vec<usize>,
    pub n_t_star: Vec<usize>,
}

/// Per-element size quantities used by the estimators.
#[derive(Clone, Debug)]
pub struct Metrics {
    /// `h_T`, the element diameter (longest edge).
    pub h: Vec<f64>,
    /// `D_T = min_t max_{x in T} |x - t|`; `None` when no observation points.
    pub d: Option<Vec<f64>>,
    /// `|ln(max_T 1/h_T)|`.
    pub ell: f64,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    elements: Vec<[usize; 3]>,
    sides: Vec<Side>,
    element_sides: Vec<[usize; 3]>,
    longest: Vec<u8>,
    generation: Vec<u32>,
    parent: Vec<Option<usize>>,
    vertex_elem_offsets: Vec<usize>,
    vertex_elems: Vec<usize>,
    boundary_vertex: Vec<bool>,
}

impl Mesh {
    /// Builds a mesh from coordinates and counterclockwise vertex triples.
    pub fn new(vertices: Vec<Point>, elements: Vec<[usize; 3]>) -> Result<Self> {
        let n = elements.len();
        Self::with_history(vertices, elements, vec![0; n], vec![None; n])
    }

    fn with_history(
        vertices: Vec<Point>,
        elements: Vec<[usize; 3]>,
        generation: Vec<u32>,
        parent: Vec<Option<usize>>,
    ) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidMesh("no elements".into()));
        }
        let nv = vertices.len();
        for (t, el) in elements.iter().enumerate() {
            if el.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("element {t} references a missing vertex")));
            }
            let area = signed_area(vertices[el[0]], vertices[el[1]], vertices[el[2]]);
            if !(area > 0.0) {
                return Err(Error::InvalidMesh(format!("element {t} has non-positive signed area {area:e}")));
            }
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(2 * n_hint(&elements));
        let mut sides: Vec<Side> = Vec::with_capacity(n_hint(&elements) * 3 / 2 + 4);
        let mut element_sides = Vec::with_capacity(elements.len());
        for (t, el) in elements.iter().enumerate() {
            let mut es = [0usize; 3];
            for (i, slot) in es.iter_mut().enumerate() {
                let a = el[(i + 1) % 3];
                let b = el[(i + 2) % 3];
                let key = sorted_pair(a, b);
                match lookup.get(&key) {
                    Some(&s) => {
                        let side = &mut sides[s];
                        if side.neighbor.is_some() {
                            return Err(Error::InvalidMesh(format!(
                                "edge ({}, {}) shared by more than two elements",
                                key.0, key.1
                            )));
                        }
                        side.neighbor = Some(t);
                        side.neighbor_local = i;
                        *slot = s;
                    }
                    None => {
                        let s = sides.len();
                        sides.push(Side {
                            vertices: [key.0, key.1],
                            owner: t,
                            owner_local: i,
                            neighbor: None,
                            neighbor_local: 0,
                        });
                        lookup.insert(key, s);
                        *slot = s;
                    }
                }
            }
            element_sides.push(es);
        }

        let longest = elements.iter().map(|el| longest_local_edge(&vertices, el) as u8).collect();

        let mut counts = vec![0usize; nv + 1];
        for el in &elements {
            for &v in el {
                counts[v + 1] += 1;
            }
        }
        for i in 0..nv {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut vertex_elems = vec![0usize; counts[nv]];
        for (t, el) in elements.iter().enumerate() {
            for &v in el {
                vertex_elems[fill[v]] = t;
                fill[v] += 1;
            }
        }

        let mut boundary_vertex = vec![false; nv];
        for s in sides.iter().filter(|s| s.is_boundary()) {
            boundary_vertex[s.vertices[0]] = true;
            boundary_vertex[s.vertices[1]] = true;
        }

        Ok(Self {
            vertices,
            elements,
            sides,
            element_sides,
            longest,
            generation,
            parent,
            vertex_elem_offsets: counts,
            vertex_elems,
            boundary_vertex,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_sides(&self) -> usize {
        self.sides.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn sides(&self) -> &[Side] {
        &self.sides
    }

    pub fn interior_sides(&self) -> impl Iterator<Item = &Side> {
        self.sides.iter().filter(|s| !s.is_boundary())
    }

    pub fn boundary_sides(&self) -> impl Iterator<Item = &Side> {
        self.sides.iter().filter(|s| s.is_boundary())
    }

    /// Global side indices of the three local edges of `t`.
    pub fn element_sides(&self, t: usize) -> [usize; 3] {
        self.element_sides[t]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    /// Element across local edge `local` of `t`.
    pub fn neighbor(&self, t: usize, local: usize) -> Option<usize> {
        let s = &self.sides[self.element_sides[t][local]];
        if s.owner == t {
            s.neighbor
        } else {
            Some(s.owner)
        }
    }

    pub fn coords(&self, t: usize) -> [Point; 3] {
        let el = self.elements[t];
        [self.vertices[el[0]], self.vertices[el[1]], self.vertices[el[2]]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.coords(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_elements()).map(|t| self.area(t)).sum()
    }

    /// `h_T = diam(T)`, the longest edge length.
    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.coords(t);
        dist2(a, b).max(dist2(b, c)).max(dist2(c, a)).sqrt()
    }

    pub fn inradius(&self, t: usize) -> f64 {
        let [a, b, c] = self.coords(t);
        2.0 * signed_area(a, b, c) / (dist(a, b) + dist(b, c) + dist(c, a))
    }

    /// Diameter over inradius.
    pub fn shape_ratio(&self, t: usize) -> f64 {
        self.diameter(t) / self.inradius(t)
    }

    pub fn max_shape_ratio(&self) -> f64 {
        (0..self.num_elements()).map(|t| self.shape_ratio(t)).fold(0.0, f64::max)
    }

    /// Local index of the refinement (longest) edge of `t`.
    pub fn longest_edge(&self, t: usize) -> usize {
        self.longest[t] as usize
    }

    pub fn generation(&self, t: usize) -> u32 {
        self.generation[t]
    }

    /// Index of the element this one was cut from, in the previous mesh.
    pub fn parent(&self, t: usize) -> Option<usize> {
        self.parent[t]
    }

    /// Elements having `v` as a vertex, ascending.
    pub fn vertex_elements(&self, v: usize) -> &[usize] {
        &self.vertex_elems[self.vertex_elem_offsets[v]..self.vertex_elem_offsets[v + 1]]
    }

    /// Outward unit normal of element `t` on its local edge `local`.
    pub fn outward_normal(&self, t: usize, local: usize) -> Point {
        let p = self.coords(t);
        let a = p[(local + 1) % 3];
        let b = p[(local + 2) % 3];
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len = dx.hypot(dy);
        // counterclockwise orientation puts the interior on the left
        [dy / len, -dx / len]
    }

    pub fn barycentric(&self, t: usize, x: Point) -> [f64; 3] {
        let [a, b, c] = self.coords(t);
        let area = signed_area(a, b, c);
        [signed_area(x, b, c) / area, signed_area(a, x, c) / area, signed_area(a, b, x) / area]
    }

    /// True when `x` lies in the closed triangle `t` (up to [`LOCATE_TOL`]).
    pub fn contains(&self, t: usize, x: Point) -> bool {
        self.barycentric(t, x).iter().all(|&l| l >= -LOCATE_TOL)
    }

    /// Lowest-index element whose closure contains `x`.
    pub fn locate(&self, x: Point) -> Result<usize> {
        (0..self.num_elements()).find(|&t| self.contains(t, x)).ok_or(Error::PointNotFound { x: x[0], y: x[1] })
    }

    /// All elements whose closure contains `x`, ascending.
    pub fn locate_all(&self, x: Point) -> Vec<usize> {
        (0..self.num_elements()).filter(|&t| self.contains(t, x)).collect()
    }

    pub fn patches(&self, t: usize) -> Result<Patch> {
        if t >= self.num_elements() {
            return Err(Error::ElementIndex(t));
        }
        let mut n_t: Vec<usize> = std::iter::once(t).chain((0..3).filter_map(|i| self.neighbor(t, i))).collect();
        n_t.sort_unstable();
        let mut n_t_star: Vec<usize> =
            self.elements[t].iter().flat_map(|&v| self.vertex_elements(v).iter().copied()).collect();
        n_t_star.sort_unstable();
        n_t_star.dedup();
        Ok(Patch { n_t, n_t_star })
    }

    /// Checks that every vertex patch holds at most one of `points`
    /// (closed triangles). Returns the first offending element.
    pub fn patch_property_violation(&self, points: &[Point]) -> Option<usize> {
        if points.len() < 2 {
            return None;
        }
        // points held by each element
        let mut held: HashMap<usize, Vec<usize>> = HashMap::new();
        for (k, &p) in points.iter().enumerate() {
            for h in self.locate_all(p) {
                held.entry(h).or_default().push(k);
            }
        }
        (0..self.num_elements()).find(|&t| {
            let patch = self.patches(t).expect("valid index");
            let mut seen: Option<usize> = None;
            patch.n_t_star.iter().filter_map(|e| held.get(e)).flatten().any(|&k| match seen {
                Some(prev) => prev != k,
                None => {
                    seen = Some(k);
                    false
                }
            })
        })
    }

    pub fn metrics(&self, obs_points: &[Point]) -> Metrics {
        let h: Vec<f64> = (0..self.num_elements()).map(|t| self.diameter(t)).collect();
        let d = (!obs_points.is_empty())
            .then(|| (0..self.num_elements()).map(|t| farthest_distance(&self.coords(t), obs_points)).collect());
        let hmin = h.iter().copied().fold(f64::INFINITY, f64::min);
        Metrics { h, d, ell: (1.0 / hmin).ln().abs() }
    }

    /// Structural validation: positive areas, manifold edges and no hanging
    /// vertices. The hanging-vertex check is quadratic; meant for tests.
    pub fn check_conformity(&self) -> Result<()> {
        // positivity and edge manifoldness are enforced by the constructor
        for s in self.boundary_sides() {
            let a = self.vertices[s.vertices[0]];
            let b = self.vertices[s.vertices[1]];
            let m = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            for t in 0..self.num_elements() {
                if t == s.owner {
                    continue;
                }
                let l = self.barycentric(t, m);
                if l.iter().all(|&x| x > 1e-10) {
                    return Err(Error::InvalidMesh(format!(
                        "boundary side ({}, {}) lies inside element {t}",
                        s.vertices[0], s.vertices[1]
                    )));
                }
                // a midpoint on an edge of another element signals a hanging vertex
                if l.iter().all(|&x| x > -1e-12) && l.iter().filter(|&&x| x.abs() <= 1e-12).count() == 1 {
                    return Err(Error::InvalidMesh(format!(
                        "hanging vertex on side ({}, {}) next to element {t}",
                        s.vertices[0], s.vertices[1]
                    )));
                }
            }
        }
        for (t, el) in self.elements.iter().enumerate() {
            for v in 0..self.num_vertices() {
                if el.contains(&v) {
                    continue;
                }
                let l = self.barycentric(t, self.vertices[v]);
                if l.iter().all(|&x| x > -1e-12) {
                    return Err(Error::InvalidMesh(format!("vertex {v} lies in the closure of element {t}")));
                }
            }
        }
        Ok(())
    }

    /// Longest-edge bisection of the marked elements, with closure so the
    /// result stays conforming.
    ///
    /// The longest edge of every marked element is marked; any element with a
    /// marked edge gets its longest edge marked too, until nothing changes.
    /// Each element with marked edges is then cut through its longest edge and
    /// the halves are cut through whichever original edge they still carry.
    pub fn bisect(&self, marked: &[usize]) -> Result<Mesh> {
        if marked.is_empty() {
            return Err(Error::InvalidArgument("empty marked set".into()));
        }
        let nt = self.num_elements();
        let mut edge_marked = vec![false; self.num_sides()];
        let mut frontier = Vec::new();
        for &t in marked {
            if t >= nt {
                return Err(Error::ElementIndex(t));
            }
            let s = self.element_sides[t][self.longest_edge(t)];
            if !edge_marked[s] {
                edge_marked[s] = true;
                frontier.extend(self.side_elements(s));
            }
        }

        let mut rounds = 0;
        while !frontier.is_empty() {
            rounds += 1;
            if rounds > MAX_CLOSURE_ROUNDS {
                return Err(Error::ClosureDepth(MAX_CLOSURE_ROUNDS));
            }
            frontier.sort_unstable();
            frontier.dedup();
            let mut next = Vec::new();
            for &t in &frontier {
                let s = self.element_sides[t][self.longest_edge(t)];
                if !edge_marked[s] {
                    edge_marked[s] = true;
                    next.extend(self.side_elements(s));
                }
            }
            frontier = next;
        }

        let mut vertices = self.vertices.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        for (s, side) in self.sides.iter().enumerate() {
            if edge_marked[s] {
                let a = self.vertices[side.vertices[0]];
                let b = self.vertices[side.vertices[1]];
                midpoint.insert((side.vertices[0], side.vertices[1]), vertices.len());
                vertices.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
            }
        }

        let mut elements = Vec::with_capacity(nt + 2 * midpoint.len());
        let mut generation = Vec::with_capacity(elements.capacity());
        let mut parent = Vec::with_capacity(elements.capacity());
        let mut pieces = Vec::with_capacity(4);
        for t in 0..nt {
            pieces.clear();
            split_element(&vertices, &midpoint, self.elements[t], 0, &mut pieces);
            for &(tri, depth) in &pieces {
                elements.push(tri);
                generation.push(self.generation[t] + depth);
                parent.push(Some(t));
            }
        }
        Mesh::with_history(vertices, elements, generation, parent)
    }

    /// Marks every element once.
    pub fn refine_uniform(&self) -> Result<Mesh> {
        let all: Vec<usize> = (0..self.num_elements()).collect();
        self.bisect(&all)
    }

    fn side_elements(&self, s: usize) -> impl Iterator<Item = usize> {
        let side = self.sides[s];
        std::iter::once(side.owner).chain(side.neighbor)
    }

    /// Writes the plain text format: `nv nt`, coordinates, then triples.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.num_vertices(), self.num_elements())?;
        for p in &self.vertices {
            writeln!(w, "{:.16e} {:.16e}", p[0], p[1])?;
        }
        for el in &self.elements {
            writeln!(w, "{} {} {}", el[0], el[1], el[2])?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Mesh> {
        let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(s) if s.trim().is_empty() => None,
            other => Some((i + 1, other)),
        });
        let mut next_line = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(s))) => Ok((i, s)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(Error::Parse { line: 0, msg: format!("unexpected end of file, expected {what}") }),
            }
        };
        let (ln, header) = next_line("header")?;
        let counts = parse_fields::<usize>(&header, 2, ln)?;
        let (nv, nt) = (counts[0], counts[1]);
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, s) = next_line("vertex")?;
            let c = parse_fields::<f64>(&s, 2, ln)?;
            vertices.push([c[0], c[1]]);
        }
        let mut elements = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (ln, s) = next_line("element")?;
            let c = parse_fields::<usize>(&s, 3, ln)?;
            elements.push([c[0], c[1], c[2]]);
        }
        Mesh::new(vertices, elements)
    }

    /// Legacy ASCII VTK unstructured grid, with optional per-cell scalars.
    pub fn write_vtk<W: Write>(&self, mut w: W, cell_data: &[(&str, &[f64])]) -> Result<()> {
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "triangulation")?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(w, "POINTS {} double", self.num_vertices())?;
        for p in &self.vertices {
            writeln!(w, "{:.16e} {:.16e} 0", p[0], p[1])?;
        }
        let nt = self.num_elements();
        writeln!(w, "CELLS {} {}", nt, 4 * nt)?;
        for el in &self.elements {
            writeln!(w, "3 {} {} {}", el[0], el[1], el[2])?;
        }
        writeln!(w, "CELL_TYPES {nt}")?;
        for _ in 0..nt {
            writeln!(w, "5")?;
        }
        if !cell_data.is_empty() {
            writeln!(w, "CELL_DATA {nt}")?;
            for (name, values) in cell_data {
                if values.len() != nt {
                    return Err(Error::InvalidArgument(format!("cell data `{name}` has wrong length")));
                }
                writeln!(w, "SCALARS {name} double 1")?;
                writeln!(w, "LOOKUP_TABLE default")?;
                for v in *values {
                    writeln!(w, "{v:.16e}")?;
                }
            }
        }
        Ok(())
    }
}

fn n_hint(elements: &[[usize; 3]]) -> usize {
    elements.len()
}

fn parse_fields<T: FromStr>(s: &str, n: usize, line: usize) -> Result<Vec<T>> {
    let out: Vec<T> = s
        .split_whitespace()
        .map(|f| f.parse::<T>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse { line, msg: format!("cannot parse `{s}`") })?;
    if out.len() != n {
        return Err(Error::Parse { line, msg: format!("expected {n} fields, found {}", out.len()) });
    }
    Ok(out)
}

/// `max_{x in T} |x - t|` is attained at a vertex; minimized over `points`.
pub(crate) fn farthest_distance(coords: &[Point; 3], points: &[Point]) -> f64 {
    points.iter().map(|&t| coords.iter().map(|&v| dist(v, t)).fold(0.0, f64::max)).fold(f64::INFINITY, f64::min)
}

/// Local index (opposite vertex) of the longest edge. Lengths equal to a
/// relative 1e-12 are ties, broken by the smaller sorted vertex pair.
fn longest_local_edge(vertices: &[Point], el: &[usize; 3]) -> usize {
    let mut best = 0;
    let mut best_len = -1.0;
    let mut best_key = (usize::MAX, usize::MAX);
    for i in 0..3 {
        let a = el[(i + 1) % 3];
        let b = el[(i + 2) % 3];
        let len = dist2(vertices[a], vertices[b]);
        let key = sorted_pair(a, b);
        let tie = (len - best_len).abs() <= 1e-12 * len.max(best_len);
        if (tie && key < best_key) || (!tie && len > best_len) {
            best = i;
            best_len = len;
            best_key = key;
        }
    }
    best
}

/// Recursively cuts `tri` through marked original edges, longest first.
fn split_element(
    vertices: &[Point],
    midpoint: &HashMap<(usize, usize), usize>,
    tri: [usize; 3],
    depth: u32,
    out: &mut Vec<([usize; 3], u32)>,
) {
    let marked: Vec<usize> =
        (0..3).filter(|&i| midpoint.contains_key(&sorted_pair(tri[(i + 1) % 3], tri[(i + 2) % 3]))).collect();
    if marked.is_empty() {
        out.push((tri, depth));
        return;
    }
    let longest = longest_local_edge(vertices, &tri);
    let k = if marked.contains(&longest) { longest } else { marked[0] };
    let c = tri[k];
    let a = tri[(k + 1) % 3];
    let b = tri[(k + 2) % 3];
    let m = midpoint[&sorted_pair(a, b)];
    split_element(vertices, midpoint, [c, a, m], depth + 1, out);
    split_element(vertices, midpoint, [c, m, b], depth + 1, out);
}

/// Initial triangulations for the benchmark domains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialMesh {
    /// `(0,1)^2`
    UnitSquare,
    /// `(0,1)^2 \ [0.5,1) x (0,0.5]`
    LShape,
}

impl FromStr for InitialMesh {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit_square" | "square" => Ok(Self::UnitSquare),
            "l_shape" | "lshape" => Ok(Self::LShape),
            other => Err(Error::UnknownExample(other.to_string())),
        }
    }
}

impl fmt::Display for InitialMesh {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::UnitSquare => "unit_square",
            Self::LShape => "l_shape",
        })
    }
}

/// Uniform bisection rounds applied to the coarse square mesh.
pub const UNIT_SQUARE_SWEEPS: usize = 6;
/// Uniform bisection rounds applied to the coarse L-shape mesh.
pub const L_SHAPE_SWEEPS: usize = 4;

impl InitialMesh {
    /// The coarse triangulation before any pre-refinement.
    pub fn coarse(self) -> Mesh {
        match self {
            // diagonal (0,0)-(1,1)
            Self::UnitSquare => {
                Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], vec![[0, 1, 2], [0, 2, 3]])
            }
            // fan around the reentrant corner
            Self::LShape => Mesh::new(
                vec![[0.5, 0.5], [0.0, 0.0], [0.5, 0.0], [1.0, 0.5], [1.0, 1.0], [0.5, 1.0], [0.0, 1.0], [0.0, 0.5]],
                vec![[0, 3, 4], [0, 4, 5], [0, 5, 6], [0, 6, 7], [0, 7, 1], [0, 1, 2]],
            ),
        }
        .expect("coarse meshes are valid")
    }

    pub fn sweeps(self) -> usize {
        match self {
            Self::UnitSquare => UNIT_SQUARE_SWEEPS,
            Self::LShape => L_SHAPE_SWEEPS,
        }
    }

    /// Coarse mesh followed by `sweeps` uniform bisection rounds.
    pub fn build_with(self, sweeps: usize) -> Mesh {
        let mut mesh = self.coarse();
        for _ in 0..sweeps {
            mesh = mesh.refine_uniform().expect("uniform refinement of a valid mesh");
        }
        mesh
    }
}

/// The benchmark starting mesh (coarse mesh plus the standard pre-refinement).
pub fn initial_mesh(which: InitialMesh) -> Mesh {
    which.build_with(which.sweeps())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_triangle() -> Mesh {
        Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn bisect_single_triangle() {
        let m = reference_triangle();
        let r = m.bisect(&[0]).unwrap();
        assert_eq!(r.num_elements(), 2);
        assert_eq!(r.num_vertices(), 4);
        assert_eq!(r.vertices()[3], [0.5, 0.5]);
        assert_eq!(r.parent(0), Some(0));
        assert_eq!(r.generation(1), 1);
    }

    #[test]
    fn bisect_closure_on_square() {
        let m = InitialMesh::UnitSquare.coarse();
        let r = m.bisect(&[0]).unwrap();
        assert_eq!(r.num_elements(), 4);
        r.check_conformity().unwrap();
    }

    #[test]
    fn uniform_twice_quadruples() {
        let m = InitialMesh::UnitSquare.build_with(4);
        let r = m.refine_uniform().unwrap().refine_uniform().unwrap();
        assert_eq!(r.num_elements(), 4 * m.num_elements());
    }

    #[test]
    fn default_sweeps_are_minimal_for_patch_property() {
        let sq = [[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]];
        let l = [[0.25, 0.25], [0.25, 0.75], [0.75, 0.75]];
        for (which, pts) in [(InitialMesh::UnitSquare, &sq[..]), (InitialMesh::LShape, &l[..])] {
            let n = which.sweeps();
            assert!(which.build_with(n).patch_property_violation(pts).is_none());
            assert!(which.build_with(n - 1).patch_property_violation(pts).is_some());
        }
    }

    #[test]
    fn square_sweep_counts() {
        let m = InitialMesh::UnitSquare.build_with(4);
        assert_eq!((m.num_vertices(), m.num_elements()), (25, 32));
        let m = initial_mesh(InitialMesh::UnitSquare);
        assert_eq!((m.num_vertices(), m.num_elements()), (81, 128));
        m.check_conformity().unwrap();
    }

    #[test]
    fn l_shape_coarse() {
        let m = InitialMesh::LShape.coarse();
        assert_eq!(m.num_elements(), 6);
        assert_eq!(m.boundary_sides().count(), 8);
        assert!((m.total_area() - 0.75).abs() < 1e-15);
        let m = initial_mesh(InitialMesh::LShape);
        m.check_conformity().unwrap();
        assert!((m.total_area() - 0.75).abs() < 1e-14);
    }

    #[test]
    fn locate_cases() {
        let m = InitialMesh::UnitSquare.coarse();
        // element 0 is (0,0),(1,0),(1,1): the lower-right half
        assert_eq!(m.locate([0.9, 0.1]).unwrap(), 0);
        assert_eq!(m.locate([0.1, 0.9]).unwrap(), 1);
        assert_eq!(m.locate([0.5, 0.5]).unwrap(), 0);
        assert!(matches!(m.locate([2.0, 2.0]), Err(Error::PointNotFound { .. })));
    }

    #[test]
    fn patch_sizes() {
        let m = initial_mesh(InitialMesh::UnitSquare);
        let mut saw_interior = false;
        for t in 0..m.num_elements() {
            let p = m.patches(t).unwrap();
            let boundary = (0..3).filter(|&i| m.neighbor(t, i).is_none()).count();
            assert_eq!(p.n_t.len(), 4 - boundary);
            assert!(p.n_t.iter().all(|e| p.n_t_star.contains(e)));
            assert!(p.n_t.contains(&t));
            saw_interior |= boundary == 0;
        }
        assert!(saw_interior);
        // the coarse square has two corner elements with two boundary sides
        let c = InitialMesh::UnitSquare.coarse();
        for t in 0..2 {
            assert_eq!(c.patches(t).unwrap().n_t.len(), 2);
        }
        assert!(m.patches(10_000).is_err());
    }

    #[test]
    fn metrics_examples() {
        let m = reference_triangle();
        let d = m.metrics(&[[0.0, 0.0]]).d.unwrap();
        assert_eq!(d[0], 1.0);
        let d = m.metrics(&[[2.0, 0.0]]).d.unwrap();
        assert!((d[0] - 5f64.sqrt()).abs() < 1e-15);
        assert!(m.metrics(&[]).d.is_none());

        // min h_T = 1/8
        let m = Mesh::new(vec![[0.0, 0.0], [0.125, 0.0], [0.0625, 0.1]], vec![[0, 1, 2]]).unwrap();
        assert!((m.metrics(&[]).ell - 2.0794415416798357).abs() < 1e-10);
    }

    #[test]
    fn outward_normals() {
        let m = reference_triangle();
        // edge opposite vertex 2 is the bottom edge
        assert_eq!(m.outward_normal(0, 2), [0.0, -1.0]);
        assert_eq!(m.outward_normal(0, 1), [-1.0, 0.0]);
    }

    #[test]
    fn rejects_clockwise() {
        let r = Mesh::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]], vec![[0, 1, 2]]);
        assert!(matches!(r, Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn text_roundtrip() {
        let m = initial_mesh(InitialMesh::LShape);
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let back = Mesh::read_text(&buf[..]).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.elements(), m.elements());
    }

    #[test]
    fn vtk_sections() {
        let m = reference_triangle();
        let mut buf = Vec::new();
        m.write_vtk(&mut buf, &[("eta", &[1.5])]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.contains("POINTS 3 double"));
        assert!(s.contains("CELLS 1 4"));
        assert!(s.contains("CELL_TYPES 1"));
        assert!(s.contains("SCALARS eta double 1"));
    }
}
