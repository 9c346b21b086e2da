//! Block elimination for saddle systems with a dense border:
//!
//! ```text
//! [ A   C ] [ x  ]   [ b ]
//! [ C^T 0 ] [ mu ] = [ d ]
//! ```
//!
//! `A` is SPD and available only through [`SpdSolve`]; `C` has few columns
//! (one per active cutting plane).

use nalgebra::{DMatrix, DVector};

use super::{dot, norm_inf, SpdSolve};
use crate::{Error, Result};

pub struct BorderedSystem<'a, S: SpdSolve + ?Sized> {
    pub base: &'a S,
    /// dense border columns, each of length `base.dim()`
    pub border: Vec<&'a [f64]>,
}

#[derive(Debug, Clone)]
pub struct BorderedSolution {
    pub x: Vec<f64>,
    pub multipliers: Vec<f64>,
    /// `max(||A x + C mu - b||_inf, ||C^T x - d||_inf) / (1 + ||(b, d)||_inf)`
    pub relative_residual: f64,
}

impl<'a, S: SpdSolve + ?Sized> BorderedSystem<'a, S> {
    pub fn new(base: &'a S, border: Vec<&'a [f64]>) -> Result<Self> {
        for c in &border {
            Error::check_len(base.dim(), c.len())?;
        }
        Ok(Self { base, border })
    }

    pub fn solve(&self, rhs: &[f64], border_rhs: &[f64]) -> Result<BorderedSolution> {
        let n = self.base.dim();
        let m = self.border.len();
        Error::check_len(n, rhs.len())?;
        Error::check_len(m, border_rhs.len())?;

        let x0 = self.base.solve(rhs)?;
        if m == 0 {
            let relative_residual = self.residual(&x0, &[], rhs, border_rhs);
            return Ok(BorderedSolution {
                x: x0,
                multipliers: Vec::new(),
                relative_residual,
            });
        }

        let w: Vec<Vec<f64>> = self
            .border
            .iter()
            .map(|c| self.base.solve(c))
            .collect::<Result<_>>()?;

        // S = C^T A^{-1} C, symmetrized against round-off
        let mut schur = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = 0.5 * (dot(self.border[i], &w[j]) + dot(self.border[j], &w[i]));
                schur[(i, j)] = v;
                schur[(j, i)] = v;
            }
        }
        let reduced = DVector::from_iterator(
            m,
            (0..m).map(|i| dot(self.border[i], &x0) - border_rhs[i]),
        );

        let singular = || Error::SingularBorder {
            columns: (0..m).collect(),
        };
        let chol = schur.clone().cholesky().ok_or_else(singular)?;
        let l = chol.l();
        for i in 0..m {
            if l[(i, i)] * l[(i, i)] <= 1e-12 * schur[(i, i)].abs() {
                return Err(Error::SingularBorder { columns: vec![i] });
            }
        }
        let mu = chol.solve(&reduced);

        let mut x = x0;
        for (wj, muj) in w.iter().zip(mu.iter()) {
            super::axpy(-muj, wj, &mut x);
        }
        let multipliers: Vec<f64> = mu.iter().copied().collect();
        let relative_residual = self.residual(&x, &multipliers, rhs, border_rhs);
        Ok(BorderedSolution {
            x,
            multipliers,
            relative_residual,
        })
    }

    fn residual(&self, x: &[f64], mu: &[f64], rhs: &[f64], border_rhs: &[f64]) -> f64 {
        let mut r = self.base.apply(x);
        for (c, m) in self.border.iter().zip(mu) {
            super::axpy(*m, c, &mut r);
        }
        let mut worst = r
            .iter()
            .zip(rhs)
            .fold(0.0_f64, |a, (ri, bi)| a.max((ri - bi).abs()));
        for (c, d) in self.border.iter().zip(border_rhs) {
            worst = worst.max((dot(c, x) - d).abs());
        }
        worst / (1.0 + norm_inf(rhs).max(norm_inf(border_rhs)))
    }
}

/// Convenience wrapper around [`BorderedSystem::solve`].
pub fn solve_bordered<S: SpdSolve + ?Sized>(
    base: &S,
    border: &[&[f64]],
    rhs: &[f64],
    border_rhs: &[f64],
) -> Result<BorderedSolution> {
    BorderedSystem::new(base, border.to_vec())?.solve(rhs, border_rhs)
}
