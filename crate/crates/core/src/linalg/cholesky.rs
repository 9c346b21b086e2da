//! Envelope (skyline) Cholesky factorization with a reverse Cuthill–McKee
//! ordering. The factor is immutable once built, so one factorization can
//! serve concurrent solves.

use std::collections::VecDeque;

use super::{SparseSymMatrix, SpdSolve};
use crate::{Error, Result};

/// `P A P^T = L L^T` with `L` stored row-wise over its envelope.
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// first stored column of each row of `L`
    first: Vec<usize>,
    /// offset of row `i` in `values`; row `i` holds columns `first[i]..=i`
    offset: Vec<usize>,
    values: Vec<f64>,
    matrix: SparseSymMatrix,
}

/// Reverse Cuthill–McKee ordering of the sparsity graph of `a`.
///
/// Returns `perm` with `perm[new] = old`. Ties are broken by degree and
/// then by index, so the ordering is a pure function of the pattern.
pub fn reverse_cuthill_mckee(a: &SparseSymMatrix) -> Vec<usize> {
    let n = a.dim();
    let m = a.csr();
    let degree: Vec<usize> = (0..n).map(|i| m.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut nbrs = Vec::new();

    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));

    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            nbrs.clear();
            nbrs.extend(m.row(v).0.iter().copied().filter(|&w| !visited[w]));
            nbrs.sort_by_key(|&w| (degree[w], w));
            for &w in &nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

impl SparseCholesky {
    pub fn factor(a: &SparseSymMatrix) -> Result<Self> {
        let perm = reverse_cuthill_mckee(a);
        Self::factor_with_ordering(a, perm)
    }

    pub fn factor_with_ordering(a: &SparseSymMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = a.dim();
        Error::check_len(n, perm.len())?;
        let mut inv = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        if inv.contains(&usize::MAX) {
            return Err(Error::invalid("ordering is not a permutation"));
        }
        let m = a.csr();

        let mut first: Vec<usize> = (0..n).collect();
        for new_i in 0..n {
            for &old_j in m.row(perm[new_i]).0 {
                let new_j = inv[old_j];
                if new_j < first[new_i] {
                    first[new_i] = new_j;
                }
            }
        }
        let mut offset = vec![0usize; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut values = vec![0.0; offset[n]];
        for new_i in 0..n {
            let (cols, vals) = m.row(perm[new_i]);
            for (&old_j, &v) in cols.iter().zip(vals) {
                let new_j = inv[old_j];
                if new_j <= new_i {
                    values[offset[new_i] + new_j - first[new_i]] = v;
                }
            }
        }

        let diag_scale = (0..n).fold(0.0_f64, |s, i| s.max(m.get(i, i).abs()));
        for i in 0..n {
            let fi = first[i];
            let ri = offset[i];
            for j in fi..=i {
                let fj = first[j];
                let rj = offset[j];
                let k0 = fi.max(fj);
                let mut s = values[ri + j - fi];
                for k in k0..j {
                    s -= values[ri + k - fi] * values[rj + k - fj];
                }
                if j < i {
                    values[ri + j - fi] = s / values[rj + j - fj];
                } else {
                    if !(s > 1e-14 * diag_scale) {
                        return Err(Error::NotPositiveDefinite {
                            row: perm[i],
                            pivot: s,
                        });
                    }
                    values[ri + i - fi] = s.sqrt();
                }
            }
        }

        Ok(Self {
            n,
            perm,
            first,
            offset,
            values,
            matrix: a.clone(),
        })
    }

    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    #[inline]
    fn l(&self, i: usize, j: usize) -> f64 {
        self.values[self.offset[i] + j - self.first[i]]
    }

    fn solve_unchecked(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        // L z = P b
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            let mut s = x[i];
            for (k, l) in (fi..i).zip(row) {
                s -= l * x[k];
            }
            x[i] = s / row[i - fi];
        }
        // L^T w = z
        for i in (0..n).rev() {
            x[i] /= self.l(i, i);
            let xi = x[i];
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            for (k, l) in (fi..i).zip(row) {
                x[k] -= l * xi;
            }
        }
        let mut out = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }
}

impl SpdSolve for SparseCholesky {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(x)
    }

    fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.n, b.len())?;
        let x = self.solve_unchecked(b);
        if cfg!(debug_assertions) {
            let r = self.apply(&x);
            let res = r.iter().zip(b).fold(0.0_f64, |m, (ri, bi)| m.max((ri - bi).abs()));
            let bn = super::norm_inf(b);
            debug_assert!(
                res <= 1e-10 * (1.0 + bn) || !res.is_finite(),
                "cholesky residual {res:e} for |b| = {bn:e}"
            );
        }
        Ok(x)
    }
}
