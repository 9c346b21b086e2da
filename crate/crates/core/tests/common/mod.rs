//! Shared fixtures and brute-force reference solvers for the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tvoc::fem::{Discretization, P0Field, P1ScalarField, P1VectorField};
use tvoc::instances::ProblemInstance;
use tvoc::master::CuttingPlane;
use tvoc::mesh::Mesh;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn disc(n: usize) -> Discretization {
    Discretization::with_defaults(Arc::new(Mesh::friedrichs_keller(n).unwrap())).unwrap()
}

pub fn random_p0(rng: &mut ChaCha8Rng, mesh: &Mesh, amplitude: f64) -> P0Field {
    P0Field {
        values: (0..mesh.cell_count()).map(|_| rng.gen_range(-amplitude..amplitude)).collect(),
    }
}

pub fn random_p1(rng: &mut ChaCha8Rng, mesh: &Mesh, amplitude: f64) -> P1ScalarField {
    P1ScalarField {
        values: (0..mesh.node_count()).map(|_| rng.gen_range(-amplitude..amplitude)).collect(),
    }
}

/// Random vector field vanishing on the boundary.
pub fn random_phi(rng: &mut ChaCha8Rng, disc: &Discretization, amplitude: f64) -> P1VectorField {
    let dofs: Vec<f64> = (0..2 * disc.interior_dim())
        .map(|_| rng.gen_range(-amplitude..amplitude))
        .collect();
    disc.extend_vector(&dofs)
}

pub fn random_instance(rng: &mut ChaCha8Rng, disc: &Discretization, alpha: f64) -> ProblemInstance {
    let mesh = disc.mesh.clone();
    ProblemInstance {
        label: "random".into(),
        alpha,
        f: random_p0(rng, &mesh, 1.0),
        u_d: random_p0(rng, &mesh, 5.0),
        y_d: random_p1(rng, &mesh, 1.0),
        reference_u: None,
        mesh,
    }
}

/// `count` random cuts, each violated by `u_free` at `eps = 1e-5`.
pub fn violated_planes(
    rng: &mut ChaCha8Rng,
    disc: &Discretization,
    u_free: &P0Field,
    count: usize,
) -> Vec<CuttingPlane> {
    let mut planes = Vec::new();
    while planes.len() < count {
        let phi = random_phi(rng, disc, 1.0);
        let pairing = disc.pairing(u_free, &phi).unwrap();
        if pairing.abs() < 1e-3 {
            continue;
        }
        let scale = rng.gen_range(1.5..3.0) / pairing;
        let phi = P1VectorField {
            values: phi.values.iter().map(|v| v * scale).collect(),
        };
        let plane = CuttingPlane::new(planes.len(), phi, disc).unwrap();
        if tvoc::master::plane_slack(&plane, u_free, 1e-5, disc).unwrap() < -0.2 {
            planes.push(plane);
        }
    }
    planes
}

pub fn dense(m: &tvoc::linalg::CsrMatrix) -> DMatrix<f64> {
    let rows = m.to_dense();
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| rows[i][j])
}

/// `TV_eps(u)` by projected gradient ascent on the interior vector dofs.
pub fn tv_eps_projected_gradient(disc: &Discretization, u: &P0Field, eps: f64) -> f64 {
    let a = dense(disc.elasticity.matrix.csr());
    let d = dense(&disc.divergence);
    let w = DVector::from_iterator(
        u.len(),
        u.values.iter().zip(&disc.mesh.cell_areas).map(|(v, ar)| v * ar),
    );
    let g = d.transpose() * w;
    let ea = &a * eps;
    let eig = ea.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let step = 1.0 / lmax;
    let mut phi = DVector::zeros(g.len());
    let project = |v: &mut DVector<f64>| {
        for k in 0..v.len() / 2 {
            let r = v[2 * k].hypot(v[2 * k + 1]);
            if r > 1.0 {
                v[2 * k] /= r;
                v[2 * k + 1] /= r;
            }
        }
    };
    for _ in 0..200_000 {
        let grad = &g - &ea * &phi;
        let mut next = &phi + grad * step;
        project(&mut next);
        let delta = (&next - &phi).amax();
        phi = next;
        if delta < 1e-15 {
            break;
        }
    }
    -0.5 * (phi.transpose() * &ea * &phi)[(0, 0)] + g.dot(&phi)
}

/// Solution of the master problem from the full state-space KKT system,
/// with the active set found by enumerating every subset of the cuts.
pub struct DenseQpSolution {
    pub u: Vec<f64>,
    pub mu: Vec<f64>,
    pub objective: f64,
}

pub fn dense_master_oracle(
    disc: &Discretization,
    inst: &ProblemInstance,
    planes: &[CuttingPlane],
    eps: f64,
) -> DenseQpSolution {
    let mesh = &disc.mesh;
    let ni = disc.interior_dim();
    let nc = mesh.cell_count();
    let nv = ni + nc;
    let interior = &disc.interior;

    let k = dense(disc.stiffness.csr());
    let m_full = dense(&disc.mass_p1);
    let b_full = dense(&disc.coupling);
    let m_ii = DMatrix::from_fn(ni, ni, |i, j| m_full[(interior[i], interior[j])]);
    let b_i = DMatrix::from_fn(ni, nc, |i, j| b_full[(interior[i], j)]);
    let area = &mesh.cell_areas;

    let yd = DVector::from_column_slice(&inst.y_d.values);
    let myd = &m_full * &yd;
    let f = DVector::from_column_slice(&inst.f.values);

    // objective 1/2 x^T Q x - q^T x + const
    let mut q_mat = DMatrix::zeros(nv, nv);
    let mut q_vec = DVector::zeros(nv);
    q_mat.view_mut((0, 0), (ni, ni)).copy_from(&m_ii);
    for c in 0..nc {
        q_mat[(ni + c, ni + c)] = inst.alpha * area[c];
        q_vec[ni + c] = inst.alpha * area[c] * inst.u_d.values[c];
    }
    for i in 0..ni {
        q_vec[i] = myd[interior[i]];
    }
    let constant = 0.5 * yd.dot(&myd)
        + 0.5
            * inst.alpha
            * (0..nc).map(|c| area[c] * inst.u_d.values[c].powi(2)).sum::<f64>();

    // K y_I - B_I u = B_I f
    let mut e = DMatrix::zeros(ni, nv);
    e.view_mut((0, 0), (ni, ni)).copy_from(&k);
    e.view_mut((0, ni), (ni, nc)).copy_from(&(-&b_i));
    let e_rhs = &b_i * &f;

    let cuts: Vec<(DVector<f64>, f64)> = planes
        .iter()
        .map(|p| {
            let mut row = DVector::zeros(nv);
            for c in 0..nc {
                row[ni + c] = area[c] * p.div_phi.values[c];
            }
            (row, p.rhs(eps))
        })
        .collect();

    let mut best: Option<DenseQpSolution> = None;
    for mask in 0u32..(1 << planes.len()) {
        let act: Vec<usize> = (0..planes.len()).filter(|i| mask & (1 << i) != 0).collect();
        let m = ni + act.len();
        let mut kkt = DMatrix::zeros(nv + m, nv + m);
        let mut rhs = DVector::zeros(nv + m);
        kkt.view_mut((0, 0), (nv, nv)).copy_from(&q_mat);
        rhs.rows_mut(0, nv).copy_from(&q_vec);
        for r in 0..ni {
            for j in 0..nv {
                kkt[(nv + r, j)] = e[(r, j)];
                kkt[(j, nv + r)] = e[(r, j)];
            }
            rhs[nv + r] = e_rhs[r];
        }
        for (s, &i) in act.iter().enumerate() {
            for j in 0..nv {
                kkt[(nv + ni + s, j)] = cuts[i].0[j];
                kkt[(j, nv + ni + s)] = cuts[i].0[j];
            }
            rhs[nv + ni + s] = cuts[i].1;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let x = sol.rows(0, nv).into_owned();
        let mut mu = vec![0.0; planes.len()];
        for (s, &i) in act.iter().enumerate() {
            mu[i] = sol[nv + ni + s];
        }
        let primal_ok = cuts.iter().all(|(row, d)| row.dot(&x) <= d + 1e-11);
        let dual_ok = mu.iter().all(|&m| m >= -1e-11);
        if !(primal_ok && dual_ok) {
            continue;
        }
        let objective = 0.5 * (x.transpose() * &q_mat * &x)[(0, 0)] - q_vec.dot(&x) + constant;
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(DenseQpSolution {
                u: x.rows(ni, nc).iter().copied().collect(),
                mu,
                objective,
            });
        }
    }
    best.expect("some active set satisfies the KKT conditions")
}
