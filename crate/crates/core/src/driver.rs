//! Outer approximation with path following in `eps`.
//!
//! Each outer iteration solves the relaxed master problem over the current
//! cuts, asks the oracle for `TV_eps(u_k)` and its maximizer, and appends the
//! maximizer as a new cut. `eps` shrinks geometrically until it reaches
//! `eps_min`; only then is the stopping test `TV_eps(u_k) <= 1 + tol` armed.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::fem::{l2_error_p0, l2_norm_p0, Discretization, P0Field, DEFAULT_SUBDIVISION_DEPTH};
use crate::instances::{build_exact_instance, build_generic_instance, ProblemInstance, DEFAULT_MULTIPLIER_SCALE};
use crate::master::{solve_master_with, CuttingPlane, MasterOptions, MasterSolution};
use crate::mesh::Mesh;
use crate::tv::{eval_tv_eps_with, tv_lower_bound, OracleOptions, OracleResult};
use crate::{Error, Result};

/// Relative slack when deciding that `eps` has reached `eps_min`.
///
/// Halving 1e-5 never hits a two-digit `eps_min` such as 7.8e-8 exactly;
/// 7.8125e-8 is treated as being on target.
pub const EPS_TARGET_SLACK: f64 = 0.01;

/// A new cut whose divergence is this close (L2) to an existing one is dropped.
const DUPLICATE_PLANE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    Exact,
    Generic,
}

impl InstanceKind {
    pub fn default_eps_min(self) -> f64 {
        match self {
            InstanceKind::Exact => 7.8e-8,
            InstanceKind::Generic => 1.6e-7,
        }
    }

    pub fn build(self, mesh: Arc<Mesh>, alpha: f64, depth: u32) -> Result<ProblemInstance> {
        match self {
            InstanceKind::Exact => build_exact_instance(mesh, DEFAULT_MULTIPLIER_SCALE, alpha, depth),
            InstanceKind::Generic => build_generic_instance(mesh, alpha, depth),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub eps_start: f64,
    pub eps_factor: f64,
    pub eps_min: f64,
    pub tol: f64,
    pub alpha: f64,
    pub n: usize,
    pub max_outer: usize,
    pub subdivision_depth: u32,
    pub warm_start: bool,
    pub oracle: OracleOptions,
    pub master: MasterOptions,
}

impl SolverConfig {
    pub fn for_instance(kind: InstanceKind) -> Self {
        Self {
            eps_min: kind.default_eps_min(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |cond: bool, msg: &str| if cond { Ok(()) } else { Err(Error::invalid(msg)) };
        ok(self.eps_start.is_finite() && self.eps_start > 0.0, "eps_start must be positive")?;
        ok(self.eps_min > 0.0 && self.eps_min <= self.eps_start, "need 0 < eps_min <= eps_start")?;
        ok(self.eps_factor > 0.0 && self.eps_factor < 1.0, "eps_factor must lie in (0, 1)")?;
        ok(self.tol.is_finite() && self.tol > 0.0, "tol must be positive")?;
        ok(self.alpha.is_finite() && self.alpha > 0.0, "alpha must be positive")?;
        ok(self.n > 0, "n must be positive")?;
        ok(self.max_outer > 0, "max_outer must be positive")?;
        ok(self.oracle.max_iterations > 0 && self.master.max_iterations > 0, "inner caps must be positive")?;
        Ok(())
    }

    fn on_target(&self, eps: f64) -> bool {
        eps <= self.eps_min * (1.0 + EPS_TARGET_SLACK)
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_start: 1e-5,
            eps_factor: 0.5,
            eps_min: InstanceKind::Exact.default_eps_min(),
            tol: 1e-2,
            alpha: 1.0,
            n: 50,
            max_outer: 50,
            subdivision_depth: DEFAULT_SUBDIVISION_DEPTH,
            warm_start: true,
            oracle: OracleOptions::default(),
            master: MasterOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub eps: f64,
    pub objective: f64,
    pub it_master: usize,
    pub it_oracle: usize,
    pub tv_eps: f64,
    pub tv_lower_bound: f64,
    pub rel_error: Option<f64>,
    pub eoc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    ToleranceMet,
    MaxOuter,
    InnerFailure,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::ToleranceMet => "tolerance_met",
            TerminationReason::MaxOuter => "max_outer",
            TerminationReason::InnerFailure => "inner_failure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub records: Vec<IterationRecord>,
    pub terminated: TerminationReason,
    /// why an inner solver gave up, when it did
    pub failure: Option<String>,
    pub final_control: P0Field,
    pub planes: Vec<CuttingPlane>,
    /// `TV_eps` of the final control from a cold-started oracle run
    pub verified_tv_eps: Option<f64>,
}

/// `|u - reference| / |reference|` in L2.
pub fn rel_error(u: &P0Field, reference: &P0Field, mesh: &Mesh) -> Result<f64> {
    let norm = l2_norm_p0(mesh, reference)?;
    if norm == 0.0 {
        return Err(Error::invalid("reference control is zero"));
    }
    Ok(l2_error_p0(mesh, u, reference)? / norm)
}

/// `eoc_k = (log err_{k-1} - log err_k) / (log eps_{k-1} - log eps_k)`, left empty where undefined.
pub fn compute_eoc(records: &mut [IterationRecord]) {
    if let Some(first) = records.first_mut() {
        first.eoc = None;
    }
    for k in 1..records.len() {
        let (prev, cur) = (&records[k - 1], &records[k]);
        records[k].eoc = match (prev.rel_error, cur.rel_error) {
            (Some(e0), Some(e1)) if e0 > 0.0 && e1 > 0.0 && prev.eps != cur.eps => {
                Some((e0.ln() - e1.ln()) / (prev.eps.ln() - cur.eps.ln()))
            }
            _ => None,
        };
    }
}

/// Builds mesh, discretization and instance for `config` and runs the loop.
pub fn run_instance(kind: InstanceKind, config: &SolverConfig) -> Result<(ProblemInstance, Discretization, RunReport)> {
    config.validate()?;
    let mesh = Arc::new(Mesh::friedrichs_keller(config.n)?);
    let disc = Discretization::with_defaults(mesh.clone())?;
    let inst = kind.build(mesh, config.alpha, config.subdivision_depth)?;
    let report = run_outer_approximation(&inst, &disc, config)?;
    Ok((inst, disc, report))
}

/// Errors only on invalid input; solver trouble is reported through
/// [`TerminationReason::InnerFailure`].
pub fn run_outer_approximation(
    inst: &ProblemInstance,
    disc: &Discretization,
    config: &SolverConfig,
) -> Result<RunReport> {
    config.validate()?;
    inst.validate()?;
    if inst.mesh.n != disc.mesh.n {
        return Err(Error::invalid("instance and discretization live on different meshes"));
    }
    let mesh = &disc.mesh;

    let mut eps = config.eps_start;
    let mut planes: Vec<CuttingPlane> = Vec::new();
    let mut records = Vec::new();
    let mut master_ws: Option<MasterSolution> = None;
    let mut oracle_ws: Option<OracleResult> = None;
    let mut last_u = P0Field::zeros(mesh);

    let finish = |records: Vec<IterationRecord>, reason, failure, u: P0Field, planes, verified| {
        let mut records = records;
        compute_eoc(&mut records);
        RunReport {
            records,
            terminated: reason,
            failure,
            final_control: u,
            planes,
            verified_tv_eps: verified,
        }
    };

    for k in 0..config.max_outer {
        let master = match solve_master_with(&planes, inst, disc, eps, master_ws.as_ref(), &config.master) {
            Ok(m) if m.converged => m,
            Ok(m) => {
                let msg = format!(
                    "master problem did not converge at k = {k} ({} iterations, KKT residual {:e})",
                    m.inner_iterations,
                    m.kkt.worst()
                );
                return Ok(finish(records, TerminationReason::InnerFailure, Some(msg), m.u, planes, None));
            }
            Err(e) => {
                let msg = format!("master problem failed at k = {k}: {e}");
                return Ok(finish(records, TerminationReason::InnerFailure, Some(msg), last_u, planes, None));
            }
        };
        last_u = master.u.clone();

        let oracle_start = if config.warm_start { oracle_ws.as_ref() } else { None };
        let oracle = match eval_tv_eps_with(disc, &master.u, eps, oracle_start, &config.oracle) {
            Ok(o) if o.converged => o,
            Ok(o) => {
                let msg = format!(
                    "oracle did not converge at k = {k} ({} iterations, KKT residual {:e})",
                    o.inner_iterations, o.kkt_residual
                );
                return Ok(finish(records, TerminationReason::InnerFailure, Some(msg), master.u, planes, None));
            }
            Err(e) => {
                let msg = format!("oracle failed at k = {k}: {e}");
                return Ok(finish(records, TerminationReason::InnerFailure, Some(msg), master.u, planes, None));
            }
        };

        let rel = match &inst.reference_u {
            Some(r) => Some(rel_error(&master.u, r, mesh)?),
            None => None,
        };
        records.push(IterationRecord {
            k,
            eps,
            objective: master.objective,
            it_master: master.inner_iterations,
            it_oracle: oracle.inner_iterations,
            tv_eps: oracle.value,
            tv_lower_bound: tv_lower_bound(&oracle, eps),
            rel_error: rel,
            eoc: None,
        });

        if config.on_target(eps) && oracle.value <= 1.0 + config.tol {
            let cold = eval_tv_eps_with(disc, &master.u, eps, None, &config.oracle);
            match cold {
                Ok(c) if c.converged && c.value <= 1.0 + config.tol => {
                    let v = Some(c.value);
                    return Ok(finish(records, TerminationReason::ToleranceMet, None, master.u, planes, v));
                }
                Ok(_) => {}
                Err(e) => {
                    let msg = format!("cold-start verification failed at k = {k}: {e}");
                    return Ok(finish(records, TerminationReason::InnerFailure, Some(msg), master.u, planes, None));
                }
            }
        }

        if !config.on_target(eps) {
            eps = (eps * config.eps_factor).max(config.eps_min);
        }
        let plane = CuttingPlane::from_oracle(planes.len(), &oracle, disc)?;
        if !is_duplicate(&plane, &planes, mesh)? {
            planes.push(plane);
        }
        if config.warm_start {
            master_ws = Some(master);
            oracle_ws = Some(oracle);
        }
    }
    Ok(finish(records, TerminationReason::MaxOuter, None, last_u, planes, None))
}

fn is_duplicate(plane: &CuttingPlane, planes: &[CuttingPlane], mesh: &Mesh) -> Result<bool> {
    for p in planes {
        if l2_error_p0(mesh, &plane.div_phi, &p.div_phi)? < DUPLICATE_PLANE_TOL {
            return Ok(true);
        }
    }
    Ok(false)
}
