//! The two benchmark problems: one with a closed-form optimal control and
//! a smooth one without.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::fem::{interpolate_p1, project_p0, P0Field, P1ScalarField};
use crate::mesh::Mesh;
use crate::{Error, Result};

/// Center of the disc carrying the exact optimal control.
pub const DISC_CENTER: [f64; 2] = [0.5, 0.5];
/// Radius of that disc.
pub const DISC_RADIUS: f64 = 0.25;
/// Scale `s` of the constructed multiplier field.
pub const DEFAULT_MULTIPLIER_SCALE: f64 = 0.01;
/// `TV(2 pi^2 sin(pi x1) cos(pi x2))` on the unit square.
pub const GENERIC_PROFILE_TV: f64 = 42.011_825_912_243_22;

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub label: String,
    pub mesh: Arc<Mesh>,
    pub alpha: f64,
    pub f: P0Field,
    pub u_d: P0Field,
    pub y_d: P1ScalarField,
    /// known optimal control, when available
    pub reference_u: Option<P0Field>,
}

impl ProblemInstance {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::invalid(format!("Tikhonov parameter must be positive, got {}", self.alpha)));
        }
        Error::check_len(self.mesh.cell_count(), self.f.len())?;
        Error::check_len(self.mesh.cell_count(), self.u_d.len())?;
        Error::check_len(self.mesh.node_count(), self.y_d.len())?;
        if let Some(r) = &self.reference_u {
            Error::check_len(self.mesh.cell_count(), r.len())?;
        }
        Ok(())
    }
}

/// Piecewise cubic bump on `(0, 1/2)`: zero outside `[3/16, 5/16]`, one at
/// `1/4`, continuously differentiable.
pub fn psi(r: f64) -> f64 {
    if (3.0 / 16.0..=0.25).contains(&r) {
        ((-8192.0 * r + 5376.0) * r - 1152.0) * r + 81.0
    } else if r > 0.25 && r <= 5.0 / 16.0 {
        ((8192.0 * r - 6912.0) * r + 1920.0) * r - 175.0
    } else {
        0.0
    }
}

pub fn psi_prime(r: f64) -> f64 {
    if (3.0 / 16.0..=0.25).contains(&r) {
        (-24576.0 * r + 10752.0) * r - 1152.0
    } else if r > 0.25 && r <= 5.0 / 16.0 {
        (24576.0 * r - 13824.0) * r + 1920.0
    } else {
        0.0
    }
}

/// Multiplier field `Phi(x) = -s Psi(rho) (x - x0) / rho` with `rho = |x - x0|`.
pub fn multiplier_field(x: [f64; 2], s: f64) -> [f64; 2] {
    let d = [x[0] - DISC_CENTER[0], x[1] - DISC_CENTER[1]];
    let rho = d[0].hypot(d[1]);
    if rho <= 3.0 / 16.0 || rho >= 5.0 / 16.0 {
        return [0.0, 0.0];
    }
    let w = -s * psi(rho) / rho;
    [w * d[0], w * d[1]]
}

/// `div Phi = -s (Psi'(rho) + Psi(rho) / rho)`.
pub fn multiplier_divergence(x: [f64; 2], s: f64) -> f64 {
    let rho = (x[0] - DISC_CENTER[0]).hypot(x[1] - DISC_CENTER[1]);
    if rho <= 3.0 / 16.0 || rho >= 5.0 / 16.0 {
        return 0.0;
    }
    -s * (psi_prime(rho) + psi(rho) / rho)
}

/// `sin(2 pi x1) sin(2 pi x2)`
fn double_sine(x: [f64; 2]) -> f64 {
    (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin()
}

/// The pieces of the closed-form solution, already projected to the mesh.
#[derive(Debug, Clone)]
pub struct ExactSolutionParts {
    pub u_bar: P0Field,
    /// P0 projection of the optimal adjoint
    pub p_bar: P0Field,
    /// P0 projection of the multiplier divergence
    pub div_phi_bar: P0Field,
    /// optimal state (equal to the optimal adjoint), nodal interpolant
    pub y_bar: P1ScalarField,
    pub instance: ProblemInstance,
}

impl ExactSolutionParts {
    /// `-div Phi + p + alpha (u - u_d)` cellwise.
    pub fn gradient_residual(&self) -> P0Field {
        let inst = &self.instance;
        P0Field {
            values: (0..self.u_bar.len())
                .map(|c| {
                    -self.div_phi_bar.values[c]
                        + self.p_bar.values[c]
                        + inst.alpha * (self.u_bar.values[c] - inst.u_d.values[c])
                })
                .collect(),
        }
    }
}

pub fn build_exact_parts(mesh: Arc<Mesh>, s: f64, alpha: f64, depth: u32) -> Result<ExactSolutionParts> {
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("Tikhonov parameter must be positive, got {alpha}")));
    }
    let perimeter = 2.0 * PI * DISC_RADIUS;
    let indicator = |x: [f64; 2]| {
        if (x[0] - DISC_CENTER[0]).hypot(x[1] - DISC_CENTER[1]) < DISC_RADIUS {
            1.0 / perimeter
        } else {
            0.0
        }
    };
    let u_bar = project_p0(indicator, &mesh, depth);
    let p_bar = project_p0(|x| 0.1 * double_sine(x), &mesh, depth);
    let div_phi_bar = project_p0(|x| multiplier_divergence(x, s), &mesh, depth);
    let minus_laplace_y = project_p0(|x| 0.8 * PI * PI * double_sine(x), &mesh, depth);

    let f = P0Field {
        values: minus_laplace_y
            .values
            .iter()
            .zip(&u_bar.values)
            .map(|(a, b)| a - b)
            .collect(),
    };
    let u_d = P0Field {
        values: (0..mesh.cell_count())
            .map(|c| u_bar.values[c] + (p_bar.values[c] - div_phi_bar.values[c]) / alpha)
            .collect(),
    };
    let y_d = interpolate_p1(|x| (0.1 - 0.8 * PI * PI) * double_sine(x), &mesh);
    let y_bar = interpolate_p1(|x| 0.1 * double_sine(x), &mesh);

    let instance = ProblemInstance {
        label: "exact".into(),
        mesh,
        alpha,
        f,
        u_d,
        y_d,
        reference_u: Some(u_bar.clone()),
    };
    Ok(ExactSolutionParts {
        u_bar,
        p_bar,
        div_phi_bar,
        y_bar,
        instance,
    })
}

/// Instance whose optimal control is the scaled indicator of the disc
/// `B((0.5, 0.5), 1/4)`.
pub fn build_exact_instance(mesh: Arc<Mesh>, s: f64, alpha: f64, depth: u32) -> Result<ProblemInstance> {
    Ok(build_exact_parts(mesh, s, alpha, depth)?.instance)
}

/// `c = 2 / TV(u~)` for the smooth instance.
pub fn generic_scale() -> f64 {
    2.0 / GENERIC_PROFILE_TV
}

/// `u_d = 2 c pi^2 sin(pi x1) cos(pi x2)`, `y_d = c sin(pi x1) cos(pi x2)`, `f = 0`.
pub fn build_generic_instance(mesh: Arc<Mesh>, alpha: f64, depth: u32) -> Result<ProblemInstance> {
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("Tikhonov parameter must be positive, got {alpha}")));
    }
    let c = generic_scale();
    let profile = |x: [f64; 2]| (PI * x[0]).sin() * (PI * x[1]).cos();
    let u_d = project_p0(|x| 2.0 * c * PI * PI * profile(x), &mesh, depth);
    let y_d = interpolate_p1(|x| c * profile(x), &mesh);
    Ok(ProblemInstance {
        label: "generic".into(),
        f: P0Field::zeros(&mesh),
        mesh,
        alpha,
        u_d,
        y_d,
        reference_u: None,
    })
}

/// `TV(2 pi^2 sin(pi x1) cos(pi x2)) = 2 pi^3 int int sqrt(cos^2 a cos^2 b + sin^2 a sin^2 b)`
/// with `a = pi x1`, `b = pi x2`. The inner integral is a quarter ellipse
/// perimeter (computed with the arithmetic-geometric mean); the outer one
/// uses Gauss–Legendre panels graded towards the degenerate ellipses.
pub fn generic_profile_tv() -> f64 {
    let (nodes, weights) = gauss_legendre(20);
    // integrand is symmetric about x = 1/4 and x = 1/2
    let outer = |x: f64| {
        let a = PI * x;
        2.0 / PI * quarter_ellipse_perimeter(a.cos().abs(), a.sin().abs())
    };
    let mut panels = Vec::new();
    let mut hi = 0.25;
    for _ in 0..60 {
        let lo = hi * 0.5;
        panels.push((lo, hi));
        hi = lo;
    }
    panels.push((0.0, hi));
    let quarter: f64 = panels
        .iter()
        .map(|&(lo, hi)| {
            let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            nodes
                .iter()
                .zip(&weights)
                .map(|(t, w)| w * half * outer(mid + half * t))
                .sum::<f64>()
        })
        .sum();
    2.0 * PI.powi(3) * 4.0 * quarter
}

/// `int_0^{pi/2} sqrt(a^2 cos^2 t + b^2 sin^2 t) dt`
fn quarter_ellipse_perimeter(a: f64, b: f64) -> f64 {
    let (a0, b0) = if a >= b { (a, b) } else { (b, a) };
    if b0 == 0.0 {
        return a0;
    }
    let (mut a, mut b) = (a0, b0);
    let mut sum = 0.5 * (a0 * a0 - b0 * b0);
    let mut pow = 0.5;
    for _ in 0..64 {
        let c = 0.5 * (a - b);
        if c <= 1e-15 * a {
            break;
        }
        (a, b) = (0.5 * (a + b), (a * b).sqrt());
        pow *= 2.0;
        sum += pow * c * c;
    }
    PI / (2.0 * a) * (a0 * a0 - sum)
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}
