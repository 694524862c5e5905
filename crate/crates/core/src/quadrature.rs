//! Quadrature on the reference triangle `{x, y >= 0, x + y <= 1}` and on the
//! unit interval.
//!
//! Low degrees use classical symmetric rules; everything else is a collapsed
//! (Duffy) tensor product of Gauss-Legendre rules, which exists for every
//! degree and is exact by construction.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::mesh::Point;

pub const MAX_DEGREE: usize = 19;

/// A triangle rule in barycentric coordinates. Weights sum to 1/2.
#[derive(Clone, Debug)]
pub struct QuadRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

/// Gauss-Legendre rule on `[0, 1]`. Weights sum to 1.
#[derive(Clone, Debug)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for k in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p2) / (k + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn collapsed(degree: usize) -> QuadRule {
    let n1 = (degree + 2).div_ceil(2);
    let n2 = (degree + 1).div_ceil(2);
    let (x1, w1) = gauss_legendre(n1);
    let (x2, w2) = gauss_legendre(n2);
    let mut points = Vec::with_capacity(n1 * n2);
    let mut weights = Vec::with_capacity(n1 * n2);
    for (a, wa) in x1.iter().zip(&w1) {
        let xi = 0.5 * (a + 1.0);
        for (b, wb) in x2.iter().zip(&w2) {
            let eta = 0.5 * (b + 1.0);
            let x = xi;
            let y = eta * (1.0 - xi);
            points.push([1.0 - x - y, x, y]);
            weights.push(0.25 * wa * wb * (1.0 - xi));
        }
    }
    QuadRule { points, weights, degree }
}

fn centroid_rule() -> QuadRule {
    QuadRule { points: vec![[1.0 / 3.0; 3]], weights: vec![0.5], degree: 1 }
}

fn strang_fix_3() -> QuadRule {
    let a = 2.0 / 3.0;
    let b = 1.0 / 6.0;
    QuadRule { points: vec![[a, b, b], [b, a, b], [b, b, a]], weights: vec![1.0 / 6.0; 3], degree: 2 }
}

/// Radon's seven point rule.
fn radon_7() -> QuadRule {
    let s15 = 15f64.sqrt();
    let a1 = (6.0 - s15) / 21.0;
    let b1 = (9.0 + 2.0 * s15) / 21.0;
    let a2 = (6.0 + s15) / 21.0;
    let b2 = (9.0 - 2.0 * s15) / 21.0;
    let w1 = (155.0 - s15) / 2400.0;
    let w2 = (155.0 + s15) / 2400.0;
    QuadRule {
        points: vec![
            [1.0 / 3.0; 3],
            [b1, a1, a1],
            [a1, b1, a1],
            [a1, a1, b1],
            [b2, a2, a2],
            [a2, b2, a2],
            [a2, a2, b2],
        ],
        weights: vec![9.0 / 80.0, w1, w1, w1, w2, w2, w2],
        degree: 5,
    }
}

fn build_rule(degree: usize) -> QuadRule {
    let mut rule = match degree {
        1 => centroid_rule(),
        2 => strang_fix_3(),
        3..=5 => radon_7(),
        _ => collapsed(degree),
    };
    rule.degree = degree;
    rule
}

static TRI_RULES: OnceLock<Vec<QuadRule>> = OnceLock::new();
static EDGE_RULES: OnceLock<Vec<EdgeRule>> = OnceLock::new();

/// Triangle rule exact for total degree `degree` (1..=19).
pub fn tri_rule(degree: usize) -> Result<&'static QuadRule> {
    if !(1..=MAX_DEGREE).contains(&degree) {
        return Err(Error::QuadratureDegree(degree));
    }
    let rules = TRI_RULES.get_or_init(|| (1..=MAX_DEGREE).map(build_rule).collect());
    Ok(&rules[degree - 1])
}

/// Edge rule on `[0, 1]` exact for degree `degree` (1..=19).
pub fn edge_rule(degree: usize) -> Result<&'static EdgeRule> {
    if !(1..=MAX_DEGREE).contains(&degree) {
        return Err(Error::QuadratureDegree(degree));
    }
    let rules = EDGE_RULES.get_or_init(|| {
        (1..=MAX_DEGREE)
            .map(|d| {
                let (x, w) = gauss_legendre((d + 1).div_ceil(2));
                EdgeRule {
                    points: x.iter().map(|x| 0.5 * (x + 1.0)).collect(),
                    weights: w.iter().map(|w| 0.5 * w).collect(),
                    degree: d,
                }
            })
            .collect()
    });
    Ok(&rules[degree - 1])
}

/// The degree-19 rule used for loads, estimators and errors.
pub fn high_order() -> &'static QuadRule {
    tri_rule(MAX_DEGREE).expect("supported degree")
}

#[inline]
pub(crate) fn map_point(coords: &[Point; 3], l: &[f64; 3]) -> Point {
    [
        l[0] * coords[0][0] + l[1] * coords[1][0] + l[2] * coords[2][0],
        l[0] * coords[0][1] + l[1] * coords[1][1] + l[2] * coords[2][1],
    ]
}

fn triangle_area(c: &[Point; 3]) -> f64 {
    0.5 * ((c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[1][1] - c[0][1]) * (c[2][0] - c[0][0]))
}

/// Integrates `f` over the physical triangle with a given rule.
pub fn integrate<F: Fn(Point) -> f64>(f: F, coords: &[Point; 3], rule: &QuadRule) -> f64 {
    let jac = 2.0 * triangle_area(coords);
    rule.points.iter().zip(&rule.weights).map(|(l, w)| w * f(map_point(coords, l))).sum::<f64>() * jac
}

fn closure_contains(c: &[Point; 3], x: Point) -> bool {
    let a = triangle_area(c);
    let l0 = triangle_area(&[x, c[1], c[2]]) / a;
    let l1 = triangle_area(&[c[0], x, c[2]]) / a;
    let l2 = triangle_area(&[c[0], c[1], x]) / a;
    l0 >= -1e-12 && l1 >= -1e-12 && l2 >= -1e-12
}

/// Integrates `f` with the degree-19 rule, refining geometrically toward
/// `center` when the closed triangle contains it: the triangle is cut into
/// four congruent pieces, pieces away from `center` get a single rule pass
/// and the pieces touching it are cut again, `depth` times.
pub fn integrate_graded<F: Fn(Point) -> f64>(f: &F, coords: &[Point; 3], center: Option<Point>, depth: usize) -> f64 {
    let rule = high_order();
    match center {
        Some(c) if depth > 0 && closure_contains(coords, c) => {
            let [a, b, d] = *coords;
            let mid = |p: Point, q: Point| [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            let (ab, bd, da) = (mid(a, b), mid(b, d), mid(d, a));
            [[a, ab, da], [ab, b, bd], [da, bd, d], [bd, da, ab]]
                .iter()
                .map(|child| integrate_graded(f, child, center, depth - 1))
                .sum()
        }
        _ => integrate(f, coords, rule),
    }
}

/// `∫_T d_t(x)^alpha f(x) dx` with grading toward `t`. With no center this is
/// the plain integral of `f`.
pub fn integrate_weighted<F: Fn(Point) -> f64>(
    f: F,
    center: Option<Point>,
    alpha: f64,
    coords: &[Point; 3],
    depth: usize,
) -> f64 {
    match center {
        Some(t) => {
            let g = |x: Point| ((x[0] - t[0]).hypot(x[1] - t[1])).powf(alpha) * f(x);
            integrate_graded(&g, coords, center, depth)
        }
        None => integrate(f, coords, high_order()),
    }
}
