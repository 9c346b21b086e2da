//! Relaxed master problem: minimize
//!
//! ```text
//! J(u) = 1/2 |y - y_d|^2 + alpha/2 |u - u_d|^2,   K y = B (u + f)
//! s.t.  int u div phi_i dx <= 1 + (eps/2) a[phi_i, phi_i],   i = 1..k
//! ```
//!
//! The state is eliminated, leaving a strictly convex QP in the P0 control
//! with reduced Hessian `H = alpha M0 + B^T K^{-1} M K^{-1} B`. `H` is never
//! formed; it is inverted by preconditioned CG on top of the Poisson
//! factorization, and the active cuts enter as a dense border (see
//! [`crate::linalg::BorderedSystem`]). The active set is found by the
//! primal-dual active-set rule `mu_i + c (constraint_i) > 0`.

use crate::fem::{Discretization, P0Field, P1ScalarField, P1VectorField, divergence_p1_to_p0};
use crate::instances::ProblemInstance;
use crate::linalg::{dot, pcg, BorderedSystem, SpdSolve};
use crate::tv::OracleResult;
use crate::{Error, Result};

/// One linear cut `int u div phi dx <= 1 + (eps/2) a[phi, phi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CuttingPlane {
    pub id: usize,
    pub phi: P1VectorField,
    pub div_phi: P0Field,
    pub energy: f64,
}

impl CuttingPlane {
    pub fn new(id: usize, phi: P1VectorField, disc: &Discretization) -> Result<Self> {
        let div_phi = divergence_p1_to_p0(&disc.mesh, &phi)?;
        let energy = disc.energy(&phi);
        Ok(Self {
            id,
            phi,
            div_phi,
            energy,
        })
    }

    pub fn from_oracle(id: usize, result: &OracleResult, disc: &Discretization) -> Result<Self> {
        Self::new(id, result.phi.clone(), disc)
    }

    pub fn rhs(&self, eps: f64) -> f64 {
        1.0 + 0.5 * eps * self.energy
    }

    /// Coefficients `area_T div_T`, so that `dot(c, u) = int u div phi dx`.
    fn weights(&self, disc: &Discretization) -> Vec<f64> {
        self.div_phi
            .values
            .iter()
            .zip(&disc.mesh.cell_areas)
            .map(|(d, a)| d * a)
            .collect()
    }
}

/// `1 + (eps/2) a[phi, phi] - int u div phi dx`, nonnegative iff `u` satisfies the cut.
pub fn plane_slack(plane: &CuttingPlane, u: &P0Field, eps: f64, disc: &Discretization) -> Result<f64> {
    Ok(plane.rhs(eps) - u.inner(&plane.div_phi, &disc.mesh)?)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MasterOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub active_set_constant: f64,
}

impl Default for MasterOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-8,
            active_set_constant: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktReport {
    /// `|alpha (u - u_d) + mean(p) + sum mu_i div phi_i|_inf`
    pub stationarity: f64,
    /// largest constraint violation
    pub primal: f64,
    /// largest negative multiplier
    pub dual: f64,
    /// `max_i |mu_i * slack_i|`
    pub complementarity: f64,
}

impl KktReport {
    pub fn worst(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterSolution {
    pub u: P0Field,
    pub y: P1ScalarField,
    pub p: P1ScalarField,
    /// one multiplier per plane, in the order the planes were given
    pub mu: Vec<f64>,
    /// ids of the planes treated as equalities
    pub active_planes: Vec<usize>,
    pub objective: f64,
    pub inner_iterations: usize,
    pub converged: bool,
    pub kkt: KktReport,
}

/// State, adjoint and objective of a control.
#[derive(Debug, Clone)]
pub struct StateAdjoint {
    pub y: P1ScalarField,
    pub p: P1ScalarField,
    pub objective: f64,
}

/// `y = S(u + f)`, `p = S(y - y_d)` and `J(u)`.
pub fn state_adjoint(inst: &ProblemInstance, disc: &Discretization, u: &P0Field) -> Result<StateAdjoint> {
    Error::check_len(disc.mesh.cell_count(), u.len())?;
    let src = P0Field {
        values: u.values.iter().zip(&inst.f.values).map(|(a, b)| a + b).collect(),
    };
    let y = disc.solve_poisson(&disc.load_of_p0(&src))?;
    let diff: Vec<f64> = y.values.iter().zip(&inst.y_d.values).map(|(a, b)| a - b).collect();
    let p = disc.solve_poisson(&disc.mass_p1.mul_vec(&diff))?;
    let misfit = P0Field {
        values: u.values.iter().zip(&inst.u_d.values).map(|(a, b)| a - b).collect(),
    };
    let objective = disc.tracking(&y, &inst.y_d) + 0.5 * inst.alpha * misfit.inner(&misfit, &disc.mesh)?;
    Ok(StateAdjoint { y, p, objective })
}

/// `J(u)`
pub fn objective(inst: &ProblemInstance, disc: &Discretization, u: &P0Field) -> Result<f64> {
    Ok(state_adjoint(inst, disc, u)?.objective)
}

/// L2(P0) Riesz representative of `J'(u)`: `alpha (u - u_d) + mean_T(p)`.
pub fn reduced_gradient(inst: &ProblemInstance, disc: &Discretization, u: &P0Field) -> Result<P0Field> {
    let sa = state_adjoint(inst, disc, u)?;
    let pm = disc.cell_means(&sa.p);
    Ok(P0Field {
        values: (0..u.len())
            .map(|c| inst.alpha * (u.values[c] - inst.u_d.values[c]) + pm.values[c])
            .collect(),
    })
}

/// `H v = alpha M0 v + B^T K^{-1} M K^{-1} B v` in cell coordinates.
pub struct ReducedHessian<'a> {
    disc: &'a Discretization,
    alpha: f64,
    precond: Vec<f64>,
}

impl<'a> ReducedHessian<'a> {
    pub fn new(disc: &'a Discretization, alpha: f64) -> Self {
        Self {
            disc,
            alpha,
            precond: disc.mesh.cell_areas.iter().map(|a| alpha * a).collect(),
        }
    }

    /// `B^T K^{-1} w` for a nodal load `w`.
    fn adjoint_to_cells(&self, w: &[f64]) -> Vec<f64> {
        let q = self
            .disc
            .solve_poisson(w)
            .expect("poisson factor matches mesh");
        self.disc.coupling.mul_vec_transpose(&q.values)
    }
}

impl SpdSolve for ReducedHessian<'_> {
    fn dim(&self) -> usize {
        self.disc.mesh.cell_count()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let y = self
            .disc
            .solve_poisson(&self.disc.coupling.mul_vec(v))
            .expect("poisson factor matches mesh");
        let mut out = self.adjoint_to_cells(&self.disc.mass_p1.mul_vec(&y.values));
        for ((o, vi), a) in out.iter_mut().zip(v).zip(&self.disc.mesh.cell_areas) {
            *o += self.alpha * a * vi;
        }
        out
    }

    fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(pcg(|v| self.apply(v), &self.precond, b, None, 1e-14, 500)?.x)
    }
}

pub fn solve_master(
    planes: &[CuttingPlane],
    inst: &ProblemInstance,
    disc: &Discretization,
    eps: f64,
    warm_start: Option<&MasterSolution>,
) -> Result<MasterSolution> {
    solve_master_with(planes, inst, disc, eps, warm_start, &MasterOptions::default())
}

pub fn solve_master_with(
    planes: &[CuttingPlane],
    inst: &ProblemInstance,
    disc: &Discretization,
    eps: f64,
    warm_start: Option<&MasterSolution>,
    opts: &MasterOptions,
) -> Result<MasterSolution> {
    inst.validate()?;
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("regularization parameter must be positive, got {eps}")));
    }
    let mesh = &disc.mesh;
    Error::check_len(mesh.cell_count(), inst.u_d.len())?;
    for pl in planes {
        Error::check_len(mesh.cell_count(), pl.div_phi.len())?;
    }

    let hessian = ReducedHessian::new(disc, inst.alpha);
    // g0 = alpha M0 u_d + B^T K^{-1} M (y_d - S f)
    let y_f = disc.solve_poisson(&disc.load_of_p0(&inst.f))?;
    let target: Vec<f64> = inst.y_d.values.iter().zip(&y_f.values).map(|(a, b)| a - b).collect();
    let mut g0 = hessian.adjoint_to_cells(&disc.mass_p1.mul_vec(&target));
    for ((g, ud), a) in g0.iter_mut().zip(&inst.u_d.values).zip(&mesh.cell_areas) {
        *g += inst.alpha * a * ud;
    }

    let weights: Vec<Vec<f64>> = planes.iter().map(|p| p.weights(disc)).collect();
    let rhs: Vec<f64> = planes.iter().map(|p| p.rhs(eps)).collect();

    let mut active: Vec<bool> = match warm_start {
        Some(w) => planes.iter().map(|p| w.active_planes.contains(&p.id)).collect(),
        None => vec![false; planes.len()],
    };

    let c = opts.active_set_constant;
    let mut iterations = 0;
    let mut converged = false;
    let (mut u, mut mu);
    loop {
        let idx: Vec<usize> = (0..planes.len()).filter(|&i| active[i]).collect();
        let border: Vec<&[f64]> = idx.iter().map(|&i| weights[i].as_slice()).collect();
        let border_rhs: Vec<f64> = idx.iter().map(|&i| rhs[i]).collect();
        let sol = BorderedSystem::new(&hessian, border)?
            .solve(&g0, &border_rhs)
            .map_err(|e| match e {
                Error::SingularBorder { columns } => Error::SingularBorder {
                    columns: columns.iter().map(|&k| planes[idx[k]].id).collect(),
                },
                other => other,
            })?;
        iterations += 1;
        u = sol.x;
        mu = vec![0.0; planes.len()];
        for (&i, m) in idx.iter().zip(&sol.multipliers) {
            mu[i] = *m;
        }
        let next: Vec<bool> = (0..planes.len())
            .map(|i| mu[i] + c * (dot(&weights[i], &u) - rhs[i]) > 0.0)
            .collect();
        if next == active {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        active = next;
    }

    let u = P0Field { values: u };
    let sa = state_adjoint(inst, disc, &u)?;
    let kkt = kkt_report(inst, disc, planes, eps, &u, &sa.p, &mu)?;
    let converged = converged && kkt.worst() <= opts.tolerance;
    Ok(MasterSolution {
        active_planes: planes
            .iter()
            .zip(&active)
            .filter(|(_, &a)| a)
            .map(|(p, _)| p.id)
            .collect(),
        u,
        y: sa.y,
        p: sa.p,
        mu,
        objective: sa.objective,
        inner_iterations: iterations,
        converged,
        kkt,
    })
}

/// Residuals of the discrete optimality system of the master problem.
pub fn kkt_report(
    inst: &ProblemInstance,
    disc: &Discretization,
    planes: &[CuttingPlane],
    eps: f64,
    u: &P0Field,
    p: &P1ScalarField,
    mu: &[f64],
) -> Result<KktReport> {
    Error::check_len(planes.len(), mu.len())?;
    let pm = disc.cell_means(p);
    let mut grad: Vec<f64> = (0..u.len())
        .map(|c| inst.alpha * (u.values[c] - inst.u_d.values[c]) + pm.values[c])
        .collect();
    let mut report = KktReport::default();
    for (pl, &m) in planes.iter().zip(mu) {
        for (g, d) in grad.iter_mut().zip(&pl.div_phi.values) {
            *g += m * d;
        }
        let slack = plane_slack(pl, u, eps, disc)?;
        report.primal = report.primal.max(-slack);
        report.dual = report.dual.max(-m);
        report.complementarity = report.complementarity.max((m * slack).abs());
    }
    report.stationarity = crate::linalg::norm_inf(&grad);
    Ok(report)
}
