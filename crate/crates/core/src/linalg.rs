//! Sparse matrices and a profile (envelope) Cholesky solver with reverse
//! Cuthill–McKee ordering.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    /// Explicit zeros are kept so the sparsity pattern is value independent.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of range");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut next = counts.clone();
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for r in 0..nrows {
            order.clear();
            order.extend(counts[r]..counts[r + 1]);
            order.sort_by_key(|&k| cols[k]);
            for &k in &order {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == cols[k] {
                    *values.last_mut().unwrap() += vals[k];
                } else {
                    col_idx.push(cols[k]);
                    values.push(vals[k]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(col, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    /// Entry `(r, c)`, zero when outside the pattern.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// `out = A x`.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for (r, o) in out.iter_mut().enumerate().take(self.nrows) {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *o = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        self.matvec_into(x, &mut out);
        out
    }

    /// `out = Aᵀ y`.
    pub fn matvec_transpose_into(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.nrows);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (r, &yr) in y.iter().enumerate().take(self.nrows) {
            if yr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.col_idx[k]] += self.values[k] * yr;
            }
        }
    }

    pub fn matvec_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        self.matvec_transpose_into(y, &mut out);
        out
    }

    /// Dense row-major copy, for tests and small problems.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }
}

/// Reverse Cuthill–McKee ordering of the symmetric pattern of `a`.
/// Returns `perm` with `perm[new] = old`.
pub fn rcm_ordering(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let adj: Vec<Vec<usize>> = (0..n).map(|r| a.row(r).map(|(c, _)| c).filter(|&c| c != r).collect()).collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    while order.len() < n {
        let seed = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| degree[i]).unwrap();
        let root = pseudo_peripheral(&adj, &degree, seed);
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nbrs.sort_by_key(|&u| (degree[u], u));
            for u in nbrs {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(adj: &[Vec<usize>], root: usize) -> (Vec<usize>, usize) {
    let mut level = vec![usize::MAX; adj.len()];
    level[root] = 0;
    let mut queue = VecDeque::from([root]);
    let mut depth = 0;
    while let Some(v) = queue.pop_front() {
        depth = depth.max(level[v]);
        for &u in &adj[v] {
            if level[u] == usize::MAX {
                level[u] = level[v] + 1;
                queue.push_back(u);
            }
        }
    }
    (level, depth)
}

fn pseudo_peripheral(adj: &[Vec<usize>], degree: &[usize], start: usize) -> usize {
    let mut root = start;
    let (mut level, mut depth) = bfs_levels(adj, root);
    loop {
        let candidate = (0..adj.len()).filter(|&i| level[i] == depth).min_by_key(|&i| degree[i]).unwrap();
        let (l2, d2) = bfs_levels(adj, candidate);
        if d2 <= depth {
            return root;
        }
        root = candidate;
        level = l2;
        depth = d2;
    }
}

/// Cholesky factor `P A Pᵀ = L Lᵀ` stored by rows over the envelope.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    row_start: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors the symmetric positive definite matrix `a` (full pattern stored)
    /// under the ordering `perm[new] = old`.
    pub fn factor(a: &CsrMatrix, perm: &[usize]) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || perm.len() != n {
            return Err(Error::Factorization { reason: String::from("dimension mismatch"), condition: f64::INFINITY });
        }
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for (c, _) in a.row(old) {
                let j = inv[c];
                if j < first[new] {
                    first[new] = j;
                }
            }
        }
        let mut row_start = Vec::with_capacity(n + 1);
        row_start.push(0);
        for i in 0..n {
            row_start.push(row_start[i] + (i - first[i] + 1));
        }
        let mut values = vec![0.0; row_start[n]];
        for (new, &old) in perm.iter().enumerate() {
            for (c, v) in a.row(old) {
                let j = inv[c];
                if j <= new {
                    values[row_start[new] + j - first[new]] += v;
                }
            }
        }

        let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let fi = first[i];
            let ri = row_start[i];
            for j in fi..=i {
                let fj = first[j];
                let rj = row_start[j];
                let lo = fi.max(fj);
                let mut s = values[ri + j - fi];
                for k in lo..j {
                    s -= values[ri + k - fi] * values[rj + k - fj];
                }
                if j < i {
                    values[ri + j - fi] = s / values[rj + j - fj];
                } else {
                    if !(s > 0.0) || !s.is_finite() {
                        let condition = if dmin.is_finite() { dmax / dmin.max(f64::MIN_POSITIVE) } else { f64::INFINITY };
                        return Err(Error::Factorization {
                            reason: format!("nonpositive pivot {s:e} at row {i}"),
                            condition,
                        });
                    }
                    dmin = dmin.min(s);
                    dmax = dmax.max(s);
                    values[ri + i - fi] = s.sqrt();
                }
            }
        }
        Ok(Self { perm: perm.to_vec(), first, row_start, values })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Stored entries of the factor.
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let ri = self.row_start[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.values[ri + k - fi] * y[k];
            }
            y[i] = s / self.values[ri + i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let ri = self.row_start[i];
            y[i] /= self.values[ri + i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.values[ri + k - fi] * yi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `‖a − b‖₂`.
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `y += alpha x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + 1e-3));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.5), (1, 0, -1.0)]);
        assert_eq!(m.get(0, 1), 3.5);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = laplacian_1d(30);
        let mut p = rcm_ordering(&a);
        p.sort_unstable();
        assert_eq!(p, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn rcm_reduces_envelope_of_shuffled_band() {
        let n = 60;
        let shuffle: Vec<usize> = (0..n).map(|i| (i * 37) % n).collect();
        let base = laplacian_1d(n);
        let mut t = Vec::new();
        for r in 0..n {
            for (c, v) in base.row(r) {
                t.push((shuffle[r], shuffle[c], v));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let identity: Vec<usize> = (0..n).collect();
        let natural = EnvelopeCholesky::factor(&a, &identity).unwrap();
        let rcm = EnvelopeCholesky::factor(&a, &rcm_ordering(&a)).unwrap();
        assert!(rcm.envelope_size() <= 2 * n);
        assert!(rcm.envelope_size() < natural.envelope_size());
    }

    #[test]
    fn indefinite_matrix_reports_failure() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(EnvelopeCholesky::factor(&a, &[0, 1]), Err(Error::Factorization { .. })));
    }

    proptest! {
        #[test]
        fn cholesky_matches_dense_solve(seed in 0u64..1000, n in 2usize..25) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut t = Vec::new();
            for i in 0..n {
                t.push((i, i, n as f64));
                for j in 0..i {
                    if rng.random::<f64>() < 0.2 {
                        let v = rng.random::<f64>() - 0.5;
                        t.push((i, j, v));
                        t.push((j, i, v));
                    }
                }
            }
            let a = CsrMatrix::from_triplets(n, n, &t);
            let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let chol = EnvelopeCholesky::factor(&a, &rcm_ordering(&a)).unwrap();
            let x = chol.solve(&b);
            let dense: DMatrix<f64> = a.to_dense();
            let xr = dense.lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
            for i in 0..n {
                prop_assert!((x[i] - xr[i]).abs() < 1e-12 * (1.0 + xr[i].abs()));
            }
        }

        #[test]
        fn transpose_product_is_adjoint(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let t: Vec<(usize, usize, f64)> =
                (0..40).map(|_| (rng.random_range(0..7), rng.random_range(0..5), rng.random::<f64>() - 0.5)).collect();
            let a = CsrMatrix::from_triplets(7, 5, &t);
            let x: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
            let y: Vec<f64> = (0..7).map(|_| rng.random::<f64>()).collect();
            let lhs = dot(&a.matvec(&x), &y);
            let rhs = dot(&x, &a.matvec_transpose(&y));
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
