//! Separation oracle: the dual-regularized total variation
//!
//! ```text
//! TV_eps(u) = max { F_eps(u, phi) : phi in P1^2, phi = 0 on the boundary, |phi(node)| <= 1 }
//! F_eps(u, phi) = -(eps/2) a[phi, phi] + int u div phi dx
//! ```
//!
//! The maximizer solves a variational inequality with one Euclidean ball
//! constraint per interior node. A P1 field whose nodal values lie in the
//! unit ball lies in it everywhere, so nodal constraints are exact for the
//! discrete space. The VI is solved with a primal-dual active-set
//! (semismooth Newton) iteration on the squared constraints
//! `|phi_k|^2 <= 1` with multipliers `lambda_k`:
//!
//! ```text
//! eps A phi + 2 lambda_k phi_k = g,   lambda_k >= 0,   lambda_k (|phi_k|^2 - 1) = 0
//! ```
//!
//! Node `k` is active when `lambda_k + c (|phi_k|^2 - 1) > 0`. On active
//! nodes the Newton step keeps the normal component of `phi_k` fixed at one
//! and solves for its tangential component, which leaves a symmetric
//! positive definite system for every step.

use crate::fem::{Discretization, P0Field, P1VectorField};
use crate::linalg::{dot, norm_inf, SparseCholesky, SparseSymMatrix, SpdSolve, TripletBuilder};
use crate::mesh::Mesh;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OracleOptions {
    pub max_iterations: usize,
    /// bound on the KKT residual at termination
    pub tolerance: f64,
    /// constant `c` in the active-set rule
    pub active_set_constant: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-9,
            active_set_constant: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallConstraintState {
    /// mesh nodes with `|phi(node)| = 1`
    pub active_nodes: Vec<usize>,
    /// multiplier of `|phi(node)|^2 <= 1`, one per mesh node (zero on the boundary)
    pub multipliers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub phi: P1VectorField,
    /// `TV_eps(u) = F_eps(u, phi)`
    pub value: f64,
    /// `a[phi, phi]`
    pub energy: f64,
    /// `int u div phi dx`
    pub pairing: f64,
    pub inner_iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    pub state: BallConstraintState,
}

/// `F_eps(u, phi)`
pub fn dual_objective(disc: &Discretization, u: &P0Field, phi: &P1VectorField, eps: f64) -> Result<f64> {
    Ok(-0.5 * eps * disc.energy(phi) + disc.pairing(u, phi)?)
}

/// `TV(u_k) >= int u_k div phi_{k+1} = TV_eps(u_k) + (eps/2) a[phi_{k+1}, phi_{k+1}]`
pub fn tv_lower_bound(result: &OracleResult, eps: f64) -> f64 {
    result.value + 0.5 * eps * result.energy
}

/// Exact total variation of a piecewise constant function:
/// `sum over interior edges of length * |jump|`.
pub fn discrete_tv(u: &P0Field, mesh: &Mesh) -> Result<f64> {
    Error::check_len(mesh.cell_count(), u.len())?;
    Ok(mesh
        .interior_edges
        .iter()
        .map(|e| e.length * (u.values[e.left] - u.values[e.right]).abs())
        .sum())
}

pub fn eval_tv_eps(
    disc: &Discretization,
    u: &P0Field,
    eps: f64,
    warm_start: Option<&OracleResult>,
) -> Result<OracleResult> {
    eval_tv_eps_with(disc, u, eps, warm_start, &OracleOptions::default())
}

pub fn eval_tv_eps_with(
    disc: &Discretization,
    u: &P0Field,
    eps: f64,
    warm_start: Option<&OracleResult>,
    opts: &OracleOptions,
) -> Result<OracleResult> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("regularization parameter must be positive, got {eps}")));
    }
    Error::check_len(disc.mesh.cell_count(), u.len())?;
    let problem = BallProblem::new(disc, u, eps);
    let nodes = disc.interior_dim();

    let (mut phi, mut lambda) = match warm_start {
        Some(w) => {
            Error::check_len(2 * disc.mesh.node_count(), w.phi.values.len())?;
            let phi = disc.restrict_vector(&w.phi);
            let lambda = problem.refit_multipliers(&phi, disc.interior.iter().map(|&k| w.state.multipliers[k]));
            (phi, lambda)
        }
        None => (vec![0.0; 2 * nodes], vec![0.0; nodes]),
    };

    let c = opts.active_set_constant;
    let mut previous: Option<Vec<bool>> = None;
    let mut iterations = 0;
    let mut converged = false;
    let mut active;
    let mut residual;
    loop {
        active = classify(&phi, &lambda, c);
        residual = problem.kkt_residual(&phi, &lambda, &active);
        if previous.as_ref() == Some(&active) && residual <= opts.tolerance {
            converged = true;
            break;
        }
        if iterations == opts.max_iterations {
            break;
        }
        let (p, l) = problem.newton_step(&phi, &lambda, &active)?;
        phi = p;
        lambda = l;
        iterations += 1;
        previous = Some(active);
    }

    // Newton steps move active nodes tangentially, leaving |phi_k| = sqrt(1 + z^2);
    // pull them back so the returned field is feasible.
    for p in phi.chunks_exact_mut(2) {
        let len = p[0].hypot(p[1]);
        if len > 1.0 {
            p[0] /= len;
            p[1] /= len;
        }
    }
    let phi_field = disc.extend_vector(&phi);
    let energy = disc.energy(&phi_field);
    let pairing = dot(&problem.g, &phi);
    let mut multipliers = vec![0.0; disc.mesh.node_count()];
    let mut active_nodes = Vec::new();
    for (k, &node) in disc.interior.iter().enumerate() {
        multipliers[node] = lambda[k];
        if active[k] {
            active_nodes.push(node);
        }
    }
    Ok(OracleResult {
        phi: phi_field,
        value: -0.5 * eps * energy + pairing,
        energy,
        pairing,
        inner_iterations: iterations,
        converged,
        kkt_residual: residual,
        state: BallConstraintState {
            active_nodes,
            multipliers,
        },
    })
}

fn classify(phi: &[f64], lambda: &[f64], c: f64) -> Vec<bool> {
    lambda
        .iter()
        .zip(phi.chunks_exact(2))
        .map(|(l, p)| l + c * (p[0] * p[0] + p[1] * p[1] - 1.0) > 0.0)
        .collect()
}

struct BallProblem<'a> {
    a: &'a SparseSymMatrix,
    eps: f64,
    /// `g = D^T M0 u`, the linear term in interior vector dofs
    g: Vec<f64>,
}

impl<'a> BallProblem<'a> {
    fn new(disc: &'a Discretization, u: &P0Field, eps: f64) -> Self {
        let weighted: Vec<f64> = u
            .values
            .iter()
            .zip(&disc.mesh.cell_areas)
            .map(|(v, a)| v * a)
            .collect();
        Self {
            a: &disc.elasticity.matrix,
            eps,
            g: disc.divergence.mul_vec_transpose(&weighted),
        }
    }

    /// `eps A phi + 2 lambda phi - g`
    fn stationarity(&self, phi: &[f64], lambda: &[f64]) -> Vec<f64> {
        let mut r = self.a.mul_vec(phi);
        for (i, ri) in r.iter_mut().enumerate() {
            *ri = self.eps * *ri + 2.0 * lambda[i / 2] * phi[i] - self.g[i];
        }
        r
    }

    /// Multipliers consistent with `phi` for the current `u` and `eps`
    /// on nodes that carried a positive multiplier before.
    fn refit_multipliers(&self, phi: &[f64], old: impl Iterator<Item = f64>) -> Vec<f64> {
        let a_phi = self.a.mul_vec(phi);
        old.enumerate()
            .map(|(k, l)| {
                if l <= 0.0 {
                    return 0.0;
                }
                let (p0, p1) = (phi[2 * k], phi[2 * k + 1]);
                let len2 = p0 * p0 + p1 * p1;
                if len2 <= 0.0 {
                    return l;
                }
                let r0 = self.g[2 * k] - self.eps * a_phi[2 * k];
                let r1 = self.g[2 * k + 1] - self.eps * a_phi[2 * k + 1];
                0.5 * (p0 * r0 + p1 * r1) / len2
            })
            .collect()
    }

    fn kkt_residual(&self, phi: &[f64], lambda: &[f64], active: &[bool]) -> f64 {
        let mut worst = norm_inf(&self.stationarity(phi, lambda));
        for (k, p) in phi.chunks_exact(2).enumerate() {
            let viol = p[0] * p[0] + p[1] * p[1] - 1.0;
            worst = worst.max(viol.max(0.0)).max((-lambda[k]).max(0.0));
            if active[k] {
                worst = worst.max(viol.abs());
            } else {
                worst = worst.max(lambda[k].abs());
            }
        }
        worst
    }

    fn newton_step(&self, phi: &[f64], lambda: &[f64], active: &[bool]) -> Result<(Vec<f64>, Vec<f64>)> {
        let nodes = active.len();
        let eps = self.eps;

        // unit normal of every active node
        let mut normal = vec![[0.0; 2]; nodes];
        let mut fallback: Option<Vec<f64>> = None;
        for k in 0..nodes {
            if !active[k] {
                continue;
            }
            let p = [phi[2 * k], phi[2 * k + 1]];
            let len = p[0].hypot(p[1]);
            normal[k] = if len > 1e-14 {
                [p[0] / len, p[1] / len]
            } else {
                let r = fallback.get_or_insert_with(|| {
                    let z = vec![0.0; lambda.len()];
                    self.stationarity(phi, &z).iter().map(|v| -v).collect()
                });
                let d = [r[2 * k], r[2 * k + 1]];
                let dl = d[0].hypot(d[1]);
                if dl > 0.0 {
                    [d[0] / dl, d[1] / dl]
                } else {
                    [1.0, 0.0]
                }
            };
        }

        // reduced coordinates: two per free node, one (tangential) per active node
        let mut first = vec![0usize; nodes];
        let mut dim = 0;
        for k in 0..nodes {
            first[k] = dim;
            dim += if active[k] { 1 } else { 2 };
        }
        // coefficient of dof i in the reduced basis: (reduced index, weight)
        let coeff = |i: usize| -> (usize, f64) {
            let k = i / 2;
            if active[k] {
                let t = [-normal[k][1], normal[k][0]];
                (first[k], t[i % 2])
            } else {
                (first[k] + i % 2, 1.0)
            }
        };

        let mut phi0 = vec![0.0; 2 * nodes];
        for k in 0..nodes {
            if active[k] {
                phi0[2 * k] = normal[k][0];
                phi0[2 * k + 1] = normal[k][1];
            }
        }

        let csr = self.a.csr();
        let mut b = TripletBuilder::with_capacity(dim, dim, csr.nnz());
        for i in 0..2 * nodes {
            let (ri, wi) = coeff(i);
            if wi == 0.0 {
                continue;
            }
            let (cols, vals) = csr.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let (rj, wj) = coeff(j);
                if wj != 0.0 {
                    b.add(ri, rj, eps * v * wi * wj);
                }
            }
        }
        for k in 0..nodes {
            if active[k] {
                b.add(first[k], first[k], 2.0 * lambda[k].max(0.0));
            }
        }
        let reduced = SparseSymMatrix::new(b.build())?;

        let a_phi0 = self.a.mul_vec(&phi0);
        let mut rhs = vec![0.0; dim];
        for i in 0..2 * nodes {
            let (ri, wi) = coeff(i);
            rhs[ri] += wi * (self.g[i] - eps * a_phi0[i]);
        }
        let z = SparseCholesky::factor(&reduced)?.solve(&rhs)?;

        let mut next = phi0;
        for i in 0..2 * nodes {
            let (ri, wi) = coeff(i);
            next[i] += wi * z[ri];
        }
        let a_next = self.a.mul_vec(&next);
        let next_lambda = (0..nodes)
            .map(|k| {
                if active[k] {
                    let r0 = self.g[2 * k] - eps * a_next[2 * k];
                    let r1 = self.g[2 * k + 1] - eps * a_next[2 * k + 1];
                    0.5 * (normal[k][0] * r0 + normal[k][1] * r1)
                } else {
                    0.0
                }
            })
            .collect();
        Ok((next, next_lambda))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn disc(n: usize) -> Discretization {
        Discretization::with_defaults(Arc::new(Mesh::friedrichs_keller(n).unwrap())).unwrap()
    }

    #[test]
    fn constant_control_has_zero_tv() {
        let d = disc(4);
        let u = P0Field::constant(&d.mesh, 3.7);
        let r = eval_tv_eps(&d, &u, 1e-5, None).unwrap();
        assert!(r.converged);
        assert!(r.value.abs() < 1e-12);
        assert!(r.phi.max_norm() < 1e-12);
        assert!(tv_lower_bound(&r, 1e-5).abs() < 1e-12);
        assert_eq!(discrete_tv(&u, &d.mesh).unwrap(), 0.0);
    }

    #[test]
    fn discrete_tv_of_single_cell_indicator() {
        let m = Mesh::friedrichs_keller(4).unwrap();
        let mut u = P0Field::zeros(&m);
        let cell = 2 * (1 + 4) + 1;
        u.values[cell] = 2.5;
        let tv = discrete_tv(&u, &m).unwrap();
        assert!((tv - 2.5 * m.perimeter(cell)).abs() < 1e-13);
    }

    #[test]
    fn discrete_tv_single_square() {
        let m = Mesh::friedrichs_keller(1).unwrap();
        let u = P0Field { values: vec![1.0, 0.0] };
        assert!((discrete_tv(&u, &m).unwrap() - std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_eps() {
        let d = disc(2);
        let u = P0Field::zeros(&d.mesh);
        assert!(eval_tv_eps(&d, &u, 0.0, None).is_err());
    }

    #[test]
    fn value_identity_and_feasibility() {
        let d = disc(6);
        let u = crate::fem::project_p0(|p| if p[0] + 0.3 * p[1] < 0.6 { 1.0 } else { -0.5 }, &d.mesh, 2);
        let eps = 1e-6;
        let r = eval_tv_eps(&d, &u, eps, None).unwrap();
        assert!(r.converged, "residual {}", r.kkt_residual);
        let f = dual_objective(&d, &u, &r.phi, eps).unwrap();
        assert!((f - r.value).abs() < 1e-9);
        assert!(r.phi.max_norm() <= 1.0 + 1e-9);
        assert!(tv_lower_bound(&r, eps) >= r.value);
        assert!(r.value <= discrete_tv(&u, &d.mesh).unwrap() + 1e-9);
        assert!(!r.state.active_nodes.is_empty());
        for &k in &r.state.active_nodes {
            let p = r.phi.at(k);
            assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-8);
            assert!(r.state.multipliers[k] >= -1e-9);
        }
    }

    #[test]
    fn warm_start_reproduces_cold_result() {
        let d = disc(6);
        let u = crate::fem::project_p0(|p| (4.0 * p[0]).sin() * (3.0 * p[1]).cos(), &d.mesh, 2);
        let cold = eval_tv_eps(&d, &u, 2e-5, None).unwrap();
        let warm0 = eval_tv_eps(&d, &u, 4e-5, None).unwrap();
        let warm = eval_tv_eps(&d, &u, 2e-5, Some(&warm0)).unwrap();
        assert!(cold.converged && warm.converged);
        assert!((cold.value - warm.value).abs() < 1e-10);
    }
}
