//! Sparse symmetric linear algebra used by the state, adjoint, oracle and
//! master solves.

mod bordered;
mod cg;
mod cholesky;
mod sparse;

pub use bordered::{solve_bordered, BorderedSolution, BorderedSystem};
pub use cg::{pcg, CgOutcome};
pub use cholesky::{reverse_cuthill_mckee, SparseCholesky};
pub use sparse::{CsrMatrix, SparseSymMatrix, TripletBuilder};

use crate::Result;

/// An SPD operator that can be inverted.
pub trait SpdSolve {
    fn dim(&self) -> usize;

    /// `y = A x`.
    fn apply(&self, x: &[f64]) -> Vec<f64>;

    /// `x = A^{-1} b`.
    fn solve(&self, b: &[f64]) -> Result<Vec<f64>>;
}

/// Factor `a` with the default direct solver and solve `a x = b`.
pub fn solve_spd(a: &SparseSymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    SparseCholesky::factor(a)?.solve(b)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
