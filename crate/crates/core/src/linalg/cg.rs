use super::{axpy, dot};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// final `||r|| / ||b||` in the Euclidean norm
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for an SPD operator.
///
/// Iterates until `||b - A x|| <= rtol ||b||`. A non-positive curvature
/// `p^T A p <= 0` or exhausting `max_iter` is reported as an error.
pub fn pcg<A>(
    apply: A,
    diag_precond: &[f64],
    b: &[f64],
    x0: Option<&[f64]>,
    rtol: f64,
    max_iter: usize,
) -> Result<CgOutcome>
where
    A: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    Error::check_len(n, diag_precond.len())?;
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut x = match x0 {
        Some(x0) => {
            Error::check_len(n, x0.len())?;
            x0.to_vec()
        }
        None => vec![0.0; n],
    };
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(diag_precond).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rnorm = dot(&r, &r).sqrt();

    for it in 0..max_iter {
        if rnorm <= rtol * bnorm {
            return Ok(CgOutcome {
                x,
                iterations: it,
                relative_residual: rnorm / bnorm,
            });
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::CgBreakdown {
                iterations: it,
                residual: rnorm / bnorm,
            });
        }
        let step = rz / pap;
        axpy(step, &p, &mut x);
        axpy(-step, &ap, &mut r);
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(diag_precond) {
            *zi = ri / di;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        rnorm = dot(&r, &r).sqrt();
    }
    if rnorm <= rtol * bnorm {
        return Ok(CgOutcome {
            x,
            iterations: max_iter,
            relative_residual: rnorm / bnorm,
        });
    }
    Err(Error::CgBreakdown {
        iterations: max_iter,
        residual: rnorm / bnorm,
    })
}
