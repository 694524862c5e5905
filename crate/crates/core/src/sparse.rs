//! Triplet assembly, a small CSR type for products, and the direct solve.

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

/// Compressed sparse rows, duplicates summed in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Builds from `(row, col, value)` entries. Duplicates are summed in
    /// input order, so the result depends only on the triplet sequence.
    pub fn from_triplets(nrows: usize, ncols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_by_key(|&k| (entries[k].0, entries[k].1));
        let mut row_ptr = vec![0; nrows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (r, c, v) = entries[k];
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *values.last_mut().expect("nonempty") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                y[c] += v * x[r];
            }
        }
        y
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// Largest `|A_ij - A_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let worst = self.triplets().fold(0.0f64, |m, (r, c, v)| m.max((v - self.get(c, r)).abs()));
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }
}

fn to_faer(n: usize, entries: &[(usize, usize, f64)]) -> Result<SparseColMat<usize, f64>> {
    let trip: Vec<Triplet<usize, usize, f64>> = entries.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
    SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip).map_err(|e| Error::Factorization(format!("{e:?}")))
}

/// A factorized sparse matrix.
pub struct SparseLu {
    n: usize,
    lu: Lu<usize, f64>,
}

impl SparseLu {
    pub fn factor(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let a = to_faer(n, entries)?;
        let lu = Lu::try_new_with_symbolic(
            SymbolicLu::try_new(a.symbolic()).map_err(|e| Error::Factorization(format!("{e:?}")))?,
            a.as_ref(),
        )
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Self { n, lu })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve_many(&[rhs.to_vec()])?.remove(0))
    }

    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if rhs.iter().any(|b| b.len() != self.n) {
            return Err(Error::InvalidArgument("right-hand side of the wrong length".into()));
        }
        let mut b = Mat::<f64>::from_fn(self.n, rhs.len(), |i, j| rhs[j][i]);
        self.lu.solve_in_place(b.as_mut());
        let out: Vec<Vec<f64>> = (0..rhs.len()).map(|j| (0..self.n).map(|i| b[(i, j)]).collect()).collect();
        if out.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Singular);
        }
        Ok(out)
    }
}

/// Solves the square system given by `entries` with sparse LU.
pub fn lu_solve(n: usize, entries: &[(usize, usize, f64)], rhs: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(rhs.len(), n);
    SparseLu::factor(n, entries)?.solve(rhs)
}

/// A matrix whose rows and columns `border[i].0` are dense (typically
/// Lagrange multipliers for mean constraints). The sparse part is factorized
/// with each such row and column replaced by a coupling to a pivot index
/// `border[i].1`, and the dense remainder is restored through the
/// Sherman-Morrison-Woodbury formula, so the result solves the original
/// system exactly.
pub struct BorderedLu {
    base: SparseLu,
    /// `K⁻¹ U` for the low-rank columns.
    ku: Vec<Vec<f64>>,
    v: Vec<Vec<(usize, f64)>>,
    capacitance: Mat<f64>,
}

impl BorderedLu {
    pub fn factor(n: usize, entries: &[(usize, usize, f64)], border: &[(usize, usize)]) -> Result<Self> {
        let is_border = |k: usize| border.iter().position(|b| b.0 == k);
        let mut sparse: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len() + 2 * border.len());
        let mut cols = vec![vec![0.0; n]; border.len()];
        let mut rows = vec![vec![0.0; n]; border.len()];
        for &(r, c, v) in entries {
            match (is_border(r), is_border(c)) {
                (None, None) => sparse.push((r, c, v)),
                (Some(i), _) => rows[i][c] += v,
                (None, Some(j)) => cols[j][r] += v,
            }
        }
        let mut u = Vec::with_capacity(2 * border.len());
        let mut v = Vec::with_capacity(2 * border.len());
        for (i, &(mu, pivot)) in border.iter().enumerate() {
            if is_border(pivot).is_some() || pivot >= n || mu >= n {
                return Err(Error::InvalidArgument("border pivots must be ordinary indices".into()));
            }
            sparse.push((mu, pivot, 1.0));
            sparse.push((pivot, mu, 1.0));
            // the (μ, μ) entry sits in rows[i]; move it to the column term
            let d = rows[i][mu];
            rows[i][mu] = 0.0;
            let mut c = std::mem::take(&mut cols[i]);
            c[mu] += d;
            c[pivot] -= 1.0;
            let mut r = std::mem::take(&mut rows[i]);
            r[pivot] -= 1.0;
            // column update: c e_μᵀ; row update: e_μ rᵀ
            u.push(c);
            v.push(vec![(mu, 1.0)]);
            let mut e_mu = vec![0.0; n];
            e_mu[mu] = 1.0;
            u.push(e_mu);
            v.push(r.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(k, x)| (k, *x)).collect());
        }
        let base = SparseLu::factor(n, &sparse)?;
        let ku = base.solve_many(&u)?;
        let k = u.len();
        let capacitance = Mat::<f64>::from_fn(k, k, |a, b| {
            let dot: f64 = v[a].iter().map(|&(idx, x)| x * ku[b][idx]).sum();
            dot + if a == b { 1.0 } else { 0.0 }
        });
        Ok(Self { base, ku, v, capacitance })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve_many(&[rhs.to_vec()])?.remove(0))
    }

    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut ys = self.base.solve_many(rhs)?;
        let k = self.ku.len();
        if k == 0 {
            return Ok(ys);
        }
        let lu = self.capacitance.partial_piv_lu();
        for y in &mut ys {
            let vy = Mat::<f64>::from_fn(k, 1, |a, _| self.v[a].iter().map(|&(idx, x)| x * y[idx]).sum());
            let w = lu.solve(&vy);
            for b in 0..k {
                let wb = w[(b, 0)];
                for (yi, zi) in y.iter_mut().zip(&self.ku[b]) {
                    *yi -= wb * zi;
                }
            }
            if y.iter().any(|x| !x.is_finite()) {
                return Err(Error::Singular);
            }
        }
        Ok(ys)
    }
}

/// `max |A x - b| / max(|b|, |A| |x|)` for a triplet matrix.
pub fn relative_residual(n: usize, entries: &[(usize, usize, f64)], x: &[f64], rhs: &[f64]) -> f64 {
    let mut r: Vec<f64> = rhs.iter().map(|v| -v).collect();
    let mut scale = vec![0.0f64; n];
    for &(i, j, v) in entries {
        r[i] += v * x[j];
        scale[i] += (v * x[j]).abs();
    }
    let denom = rhs.iter().chain(&scale).fold(0.0f64, |m, v| m.max(v.abs()));
    let num = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if denom == 0.0 {
        num
    } else {
        num / denom
    }
}
