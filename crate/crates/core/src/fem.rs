//! P1/P0 finite element spaces on a [`Mesh`] and assembly of every form the
//! solvers need. All integrands are piecewise polynomials of degree <= 2
//! and are integrated exactly; only user-supplied pointwise data goes
//! through [`project_p0`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::linalg::{CsrMatrix, SparseCholesky, SparseSymMatrix, SpdSolve, TripletBuilder};
use crate::mesh::Mesh;
use crate::{Error, Result};

/// Young's modulus of the dual-field bilinear form.
pub const DEFAULT_YOUNG_MODULUS: f64 = 2900.0;
/// Poisson ratio of the dual-field bilinear form.
pub const DEFAULT_POISSON_RATIO: f64 = 0.4;
/// Recursion depth used when projecting discontinuous data to P0.
pub const DEFAULT_SUBDIVISION_DEPTH: u32 = 4;

/// One value per triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P0Field {
    pub values: Vec<f64>,
}

/// One value per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P1ScalarField {
    pub values: Vec<f64>,
}

/// Two values per node, interleaved `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P1VectorField {
    pub values: Vec<f64>,
}

impl P0Field {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self {
            values: vec![0.0; mesh.cell_count()],
        }
    }

    pub fn constant(mesh: &Mesh, c: f64) -> Self {
        Self {
            values: vec![c; mesh.cell_count()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `sum_T area(T) u_T v_T`
    pub fn inner(&self, other: &P0Field, mesh: &Mesh) -> Result<f64> {
        Error::check_len(mesh.cell_count(), self.len())?;
        Error::check_len(mesh.cell_count(), other.len())?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .zip(&mesh.cell_areas)
            .map(|((a, b), w)| w * a * b)
            .sum())
    }

    pub fn integral(&self, mesh: &Mesh) -> f64 {
        self.values
            .iter()
            .zip(&mesh.cell_areas)
            .map(|(v, a)| v * a)
            .sum()
    }
}

impl P1ScalarField {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self {
            values: vec![0.0; mesh.node_count()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl P1VectorField {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self {
            values: vec![0.0; 2 * mesh.node_count()],
        }
    }

    pub fn node_count(&self) -> usize {
        self.values.len() / 2
    }

    pub fn at(&self, node: usize) -> [f64; 2] {
        [self.values[2 * node], self.values[2 * node + 1]]
    }

    /// Largest nodal Euclidean norm.
    pub fn max_norm(&self) -> f64 {
        self.values
            .chunks_exact(2)
            .fold(0.0_f64, |m, c| m.max(c[0].hypot(c[1])))
    }
}

/// Galerkin matrix of `-Laplace` on all nodes, before boundary elimination.
pub fn assemble_stiffness_full(mesh: &Mesh) -> CsrMatrix {
    let nn = mesh.node_count();
    let mut b = TripletBuilder::with_capacity(nn, nn, 9 * mesh.cell_count());
    for (c, tri) in mesh.triangles.iter().enumerate() {
        let g = &mesh.basis_gradients[c];
        let area = mesh.cell_areas[c];
        for a in 0..3 {
            for bb in 0..3 {
                let v = area * (g[a][0] * g[bb][0] + g[a][1] * g[bb][1]);
                b.add(tri[a], tri[bb], v);
            }
        }
    }
    b.build()
}

/// Stiffness matrix of `-Laplace` with homogeneous Dirichlet rows and
/// columns removed; rows follow [`Mesh::interior_nodes`].
pub fn assemble_stiffness(mesh: &Mesh) -> Result<SparseSymMatrix> {
    let interior = mesh.interior_nodes();
    SparseSymMatrix::new(assemble_stiffness_full(mesh).submatrix(&interior, &interior))
}

/// Consistent P1 mass matrix on all nodes.
pub fn assemble_mass_p1(mesh: &Mesh) -> CsrMatrix {
    let nn = mesh.node_count();
    let mut b = TripletBuilder::with_capacity(nn, nn, 9 * mesh.cell_count());
    for (c, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.cell_areas[c];
        for a in 0..3 {
            for bb in 0..3 {
                let w = if a == bb { area / 6.0 } else { area / 12.0 };
                b.add(tri[a], tri[bb], w);
            }
        }
    }
    b.build()
}

/// Diagonal of the P0 mass matrix, i.e. the cell areas.
pub fn assemble_mass_p0(mesh: &Mesh) -> Vec<f64> {
    mesh.cell_areas.clone()
}

/// `B[node, cell] = int_cell basis_node dx = area / 3` for the cell's vertices.
/// `B u` is the P1 load vector of a P0 function.
pub fn assemble_p0_p1_coupling(mesh: &Mesh) -> CsrMatrix {
    let mut b = TripletBuilder::with_capacity(mesh.node_count(), mesh.cell_count(), 3 * mesh.cell_count());
    for (c, tri) in mesh.triangles.iter().enumerate() {
        for &k in tri {
            b.add(k, c, mesh.cell_areas[c] / 3.0);
        }
    }
    b.build()
}

/// The bilinear form `a[phi, psi] = int sym(grad phi) : C sym(grad psi)` of
/// isotropic linear elasticity, reduced to interior vector dofs.
#[derive(Debug, Clone)]
pub struct ElasticityForm {
    pub e: f64,
    pub nu: f64,
    pub mu: f64,
    pub lambda: f64,
    /// on interior dofs `2k + c`, `k` indexing [`Mesh::interior_nodes`]
    pub matrix: SparseSymMatrix,
    /// on all dofs `2 node + c`
    pub full: CsrMatrix,
}

pub fn lame_parameters(e: f64, nu: f64) -> (f64, f64) {
    let mu = e / (2.0 * (1.0 + nu));
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    (mu, lambda)
}

pub fn assemble_elasticity(mesh: &Mesh, e: f64, nu: f64) -> Result<ElasticityForm> {
    if !(nu > 0.0 && nu < 0.5) {
        return Err(Error::invalid(format!("Poisson ratio must lie in (0, 0.5), got {nu}")));
    }
    if !(e > 0.0) {
        return Err(Error::invalid(format!("elasticity modulus must be positive, got {e}")));
    }
    let (mu, lambda) = lame_parameters(e, nu);
    let d = [
        [lambda + 2.0 * mu, lambda, 0.0],
        [lambda, lambda + 2.0 * mu, 0.0],
        [0.0, 0.0, mu],
    ];
    let ndof = 2 * mesh.node_count();
    let mut b = TripletBuilder::with_capacity(ndof, ndof, 36 * mesh.cell_count());
    for (c, tri) in mesh.triangles.iter().enumerate() {
        let g = &mesh.basis_gradients[c];
        let area = mesh.cell_areas[c];
        // strain-displacement rows: eps_11, eps_22, 2 eps_12
        let mut bm = [[0.0; 6]; 3];
        for a in 0..3 {
            bm[0][2 * a] = g[a][0];
            bm[1][2 * a + 1] = g[a][1];
            bm[2][2 * a] = g[a][1];
            bm[2][2 * a + 1] = g[a][0];
        }
        for p in 0..6 {
            for q in 0..6 {
                let mut v = 0.0;
                for r in 0..3 {
                    for s in 0..3 {
                        v += bm[r][p] * d[r][s] * bm[s][q];
                    }
                }
                b.add(2 * tri[p / 2] + p % 2, 2 * tri[q / 2] + q % 2, area * v);
            }
        }
    }
    let full = b.build();
    let dofs = interior_vector_dofs(mesh);
    let matrix = SparseSymMatrix::new(full.submatrix(&dofs, &dofs))?;
    Ok(ElasticityForm {
        e,
        nu,
        mu,
        lambda,
        matrix,
        full,
    })
}

fn interior_vector_dofs(mesh: &Mesh) -> Vec<usize> {
    mesh.interior_nodes()
        .into_iter()
        .flat_map(|k| [2 * k, 2 * k + 1])
        .collect()
}

/// Cellwise divergence of a P1 vector field.
pub fn divergence_p1_to_p0(mesh: &Mesh, phi: &P1VectorField) -> Result<P0Field> {
    Error::check_len(2 * mesh.node_count(), phi.values.len())?;
    let values = mesh
        .triangles
        .iter()
        .zip(&mesh.basis_gradients)
        .map(|(tri, g)| {
            (0..3)
                .map(|a| g[a][0] * phi.values[2 * tri[a]] + g[a][1] * phi.values[2 * tri[a] + 1])
                .sum()
        })
        .collect();
    Ok(P0Field { values })
}

/// Cell averages of `f`, by the centroid rule on the `4^depth` congruent
/// sub-triangles of each cell (exact for affine `f`).
pub fn project_p0<F: Fn([f64; 2]) -> f64>(f: F, mesh: &Mesh, depth: u32) -> P0Field {
    let m = 1usize << depth;
    let mf = m as f64;
    // barycentric (s, t) of the sub-triangle centroids
    let mut pts = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m - i {
            pts.push(((i as f64 + 1.0 / 3.0) / mf, (j as f64 + 1.0 / 3.0) / mf));
            if i + j + 1 < m {
                pts.push(((i as f64 + 2.0 / 3.0) / mf, (j as f64 + 2.0 / 3.0) / mf));
            }
        }
    }
    debug_assert_eq!(pts.len(), m * m);
    let w = 1.0 / pts.len() as f64;
    let values = mesh
        .triangles
        .iter()
        .map(|tri| {
            let [a, b, c] = tri.map(|k| mesh.nodes[k]);
            pts.iter()
                .map(|&(s, t)| {
                    f([
                        a[0] + s * (b[0] - a[0]) + t * (c[0] - a[0]),
                        a[1] + s * (b[1] - a[1]) + t * (c[1] - a[1]),
                    ])
                })
                .sum::<f64>()
                * w
        })
        .collect();
    P0Field { values }
}

/// Nodal interpolation of `f`.
pub fn interpolate_p1<F: Fn([f64; 2]) -> f64>(f: F, mesh: &Mesh) -> P1ScalarField {
    P1ScalarField {
        values: mesh.nodes.iter().map(|&p| f(p)).collect(),
    }
}

/// Nodal interpolation with boundary values forced to zero.
pub fn interpolate_p1_dirichlet<F: Fn([f64; 2]) -> f64>(f: F, mesh: &Mesh) -> P1ScalarField {
    P1ScalarField {
        values: mesh
            .nodes
            .iter()
            .zip(&mesh.boundary_node_mask)
            .map(|(&p, &b)| if b { 0.0 } else { f(p) })
            .collect(),
    }
}

/// Nodal interpolation of a vector field, zero on the boundary.
pub fn interpolate_p1_vector_dirichlet<F: Fn([f64; 2]) -> [f64; 2]>(f: F, mesh: &Mesh) -> P1VectorField {
    let mut values = Vec::with_capacity(2 * mesh.node_count());
    for (&p, &b) in mesh.nodes.iter().zip(&mesh.boundary_node_mask) {
        let v = if b { [0.0, 0.0] } else { f(p) };
        values.extend_from_slice(&v);
    }
    P1VectorField { values }
}

pub fn l2_norm_p0(mesh: &Mesh, u: &P0Field) -> Result<f64> {
    Ok(u.inner(u, mesh)?.sqrt())
}

pub fn l2_error_p0(mesh: &Mesh, u: &P0Field, v: &P0Field) -> Result<f64> {
    Error::check_len(u.len(), v.len())?;
    let d = P0Field {
        values: u.values.iter().zip(&v.values).map(|(a, b)| a - b).collect(),
    };
    l2_norm_p0(mesh, &d)
}

/// A mesh together with every assembled operator. Immutable after
/// construction.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Arc<Mesh>,
    /// `interior[k]` is the node of interior dof `k`
    pub interior: Vec<usize>,
    pub stiffness: SparseSymMatrix,
    poisson: SparseCholesky,
    pub mass_p1: CsrMatrix,
    pub mass_p1_interior: SparseSymMatrix,
    pub coupling: CsrMatrix,
    pub elasticity: ElasticityForm,
    /// maps interior vector dofs to cellwise divergence
    pub divergence: CsrMatrix,
}

impl Discretization {
    pub fn new(mesh: Arc<Mesh>, e: f64, nu: f64) -> Result<Self> {
        let interior = mesh.interior_nodes();
        let stiffness = assemble_stiffness(&mesh)?;
        let poisson = SparseCholesky::factor(&stiffness)?;
        let mass_p1 = assemble_mass_p1(&mesh);
        let mass_p1_interior = SparseSymMatrix::new(mass_p1.submatrix(&interior, &interior))?;
        let coupling = assemble_p0_p1_coupling(&mesh);
        let elasticity = assemble_elasticity(&mesh, e, nu)?;

        let mut slot = vec![usize::MAX; mesh.node_count()];
        for (k, &node) in interior.iter().enumerate() {
            slot[node] = k;
        }
        let mut div = TripletBuilder::with_capacity(mesh.cell_count(), 2 * interior.len(), 6 * mesh.cell_count());
        for (c, tri) in mesh.triangles.iter().enumerate() {
            let g = &mesh.basis_gradients[c];
            for a in 0..3 {
                let k = slot[tri[a]];
                if k != usize::MAX {
                    div.add(c, 2 * k, g[a][0]);
                    div.add(c, 2 * k + 1, g[a][1]);
                }
            }
        }

        Ok(Self {
            mesh,
            interior,
            stiffness,
            poisson,
            mass_p1,
            mass_p1_interior,
            coupling,
            elasticity,
            divergence: div.build(),
        })
    }

    pub fn with_defaults(mesh: Arc<Mesh>) -> Result<Self> {
        Self::new(mesh, DEFAULT_YOUNG_MODULUS, DEFAULT_POISSON_RATIO)
    }

    pub fn interior_dim(&self) -> usize {
        self.interior.len()
    }

    /// Solve the discrete Poisson problem `K y = load` with homogeneous
    /// Dirichlet data; `load` lives on all nodes, boundary rows are ignored.
    pub fn solve_poisson(&self, load: &[f64]) -> Result<P1ScalarField> {
        Error::check_len(self.mesh.node_count(), load.len())?;
        let rhs: Vec<f64> = self.interior.iter().map(|&k| load[k]).collect();
        let y = self.poisson.solve(&rhs)?;
        Ok(self.extend_scalar(&y))
    }

    pub fn poisson_factor(&self) -> &SparseCholesky {
        &self.poisson
    }

    /// P1 load vector `int u basis_k dx` of a P0 field.
    pub fn load_of_p0(&self, u: &P0Field) -> Vec<f64> {
        self.coupling.mul_vec(&u.values)
    }

    /// Cell means of a P1 field, i.e. `M0^{-1} B^T p`.
    pub fn cell_means(&self, p: &P1ScalarField) -> P0Field {
        P0Field {
            values: self
                .mesh
                .triangles
                .iter()
                .map(|t| (p.values[t[0]] + p.values[t[1]] + p.values[t[2]]) / 3.0)
                .collect(),
        }
    }

    pub fn extend_scalar(&self, interior_values: &[f64]) -> P1ScalarField {
        let mut values = vec![0.0; self.mesh.node_count()];
        for (&node, v) in self.interior.iter().zip(interior_values) {
            values[node] = *v;
        }
        P1ScalarField { values }
    }

    pub fn restrict_vector(&self, phi: &P1VectorField) -> Vec<f64> {
        self.interior
            .iter()
            .flat_map(|&k| [phi.values[2 * k], phi.values[2 * k + 1]])
            .collect()
    }

    pub fn extend_vector(&self, dofs: &[f64]) -> P1VectorField {
        let mut values = vec![0.0; 2 * self.mesh.node_count()];
        for (k, &node) in self.interior.iter().enumerate() {
            values[2 * node] = dofs[2 * k];
            values[2 * node + 1] = dofs[2 * k + 1];
        }
        P1VectorField { values }
    }

    /// `a[phi, phi]`
    pub fn energy(&self, phi: &P1VectorField) -> f64 {
        let x = &phi.values;
        crate::linalg::dot(x, &self.elasticity.full.mul_vec(x))
    }

    /// `int u div phi dx`
    pub fn pairing(&self, u: &P0Field, phi: &P1VectorField) -> Result<f64> {
        let d = divergence_p1_to_p0(&self.mesh, phi)?;
        u.inner(&d, &self.mesh)
    }

    /// `1/2 (y - y_d)^T M (y - y_d)`
    pub fn tracking(&self, y: &P1ScalarField, y_d: &P1ScalarField) -> f64 {
        let d: Vec<f64> = y.values.iter().zip(&y_d.values).map(|(a, b)| a - b).collect();
        0.5 * crate::linalg::dot(&d, &self.mass_p1.mul_vec(&d))
    }
}
