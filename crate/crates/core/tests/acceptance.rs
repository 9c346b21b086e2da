//! Acceptance gate: prints one `PASS`/`FAIL` line per criterion and exits
//! nonzero if any criterion fails. Built without the libtest harness so the
//! lines always appear in the output.

mod common;

use std::process::Command;
use std::sync::{Arc, OnceLock};

use tvoc::driver::{run_instance, InstanceKind, RunReport, SolverConfig, TerminationReason};
use tvoc::fem::{divergence_p1_to_p0, P0Field};
use tvoc::instances::{build_exact_parts, psi, psi_prime, DEFAULT_MULTIPLIER_SCALE};
use tvoc::master::{objective, reduced_gradient, solve_master};
use tvoc::mesh::Mesh;
use tvoc::tv::{discrete_tv, eval_tv_eps};

struct Check {
    label: String,
    ok: bool,
}

fn check(label: impl Into<String>, ok: bool) -> Check {
    Check {
        label: label.into(),
        ok,
    }
}

struct Verdict {
    id: &'static str,
    title: &'static str,
    checks: Vec<Check>,
}

fn verdict(id: &'static str, title: &'static str, checks: Vec<Check>) -> Verdict {
    Verdict { id, title, checks }
}

impl Verdict {
    fn report(&self) -> bool {
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.ok).map(|c| c.label.as_str()).collect();
        let all: Vec<&str> = self.checks.iter().map(|c| c.label.as_str()).collect();
        if failed.is_empty() {
            println!("PASS {} ({}): {}", self.id, self.title, all.join("; "));
        } else {
            println!(
                "FAIL {} ({}): failed [{}]; all [{}]",
                self.id,
                self.title,
                failed.join("; "),
                all.join("; ")
            );
        }
        failed.is_empty()
    }
}

fn exact_run() -> &'static RunReport {
    static RUN: OnceLock<RunReport> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = SolverConfig::for_instance(InstanceKind::Exact);
        run_instance(InstanceKind::Exact, &cfg).unwrap().2
    })
}

fn generic_run() -> &'static RunReport {
    static RUN: OnceLock<RunReport> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = SolverConfig::for_instance(InstanceKind::Generic);
        run_instance(InstanceKind::Generic, &cfg).unwrap().2
    })
}

fn in_range(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

fn criterion_1_exact_instance_table() -> Verdict {
    let run = exact_run();
    let last = run.records.last().unwrap();
    let err = last.rel_error.unwrap();
    verdict(
        "criterion 1",
        "exact instance table",
        vec![
            check(format!("terminated={}", run.terminated.as_str()), run.terminated == TerminationReason::ToleranceMet),
            check(format!("iterations={} (want 8)", run.records.len()), run.records.len() == 8),
            check(format!("J={:.5} in [7.70,7.81]", last.objective), in_range(last.objective, 7.70, 7.81)),
            check(format!("TV_eps={:.6} in [1-1e-6,1.01]", last.tv_eps), in_range(last.tv_eps, 1.0 - 1e-6, 1.01)),
            check(format!("err={err:.5e} in [0.03,0.08]"), in_range(err, 0.03, 0.08)),
            check(
                format!("lower bound={:.5} in [1.0,1.10]", last.tv_lower_bound),
                in_range(last.tv_lower_bound, 1.0, 1.10),
            ),
        ],
    )
}

fn criterion_2_convergence_rate() -> Verdict {
    let run = exact_run();
    let pts: Vec<(f64, f64)> = run.records[2..=5]
        .iter()
        .map(|r| (r.eps.ln(), r.rel_error.unwrap().ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let eoc4 = run.records[4].eoc.unwrap_or(f64::NAN);
    let eoc5 = run.records[5].eoc.unwrap_or(f64::NAN);
    verdict(
        "criterion 2",
        "convergence rate",
        vec![
            check(format!("least-squares slope k=2..5 = {slope:.4} in [0.3,0.8]"), in_range(slope, 0.3, 0.8)),
            check(format!("eoc_4={eoc4:.4} in [0.35,0.75]"), in_range(eoc4, 0.35, 0.75)),
            check(format!("eoc_5={eoc5:.4} in [0.35,0.75]"), in_range(eoc5, 0.35, 0.75)),
        ],
    )
}

fn criterion_3_generic_instance_table() -> Verdict {
    let run = generic_run();
    let last = run.records.last().unwrap();
    let monotone = run.records.windows(2).all(|w| w[1].objective >= w[0].objective - 1e-9);
    // u = 0 is feasible, so J(0) bounds every optimal value from above
    let mesh = Arc::new(Mesh::friedrichs_keller(50).unwrap());
    let d = tvoc::fem::Discretization::with_defaults(mesh.clone()).unwrap();
    let inst = InstanceKind::Generic.build(mesh.clone(), 1.0, 4).unwrap();
    let j_zero = objective(&inst, &d, &P0Field::zeros(&mesh)).unwrap();
    verdict(
        "criterion 3",
        "generic instance table",
        vec![
            check(format!("terminated={}", run.terminated.as_str()), run.terminated == TerminationReason::ToleranceMet),
            check(format!("iterations={} (want 7)", run.records.len()), run.records.len() == 7),
            check(format!("J={:.5} in [0.113,0.125]", last.objective), in_range(last.objective, 0.113, 0.125)),
            check(format!("TV_eps={:.6} <= 1.01", last.tv_eps), last.tv_eps <= 1.01),
            check(format!("lower bound={:.5} <= 1.10", last.tv_lower_bound), last.tv_lower_bound <= 1.10),
            check("J non-decreasing to 1e-9", monotone),
            check(format!("J <= J(0) = {j_zero:.5}"), last.objective <= j_zero),
        ],
    )
}

fn criterion_4_oracle_properties() -> Verdict {
    let mut failures = Vec::new();
    let mut cases = 0;
    for n in [2usize, 4, 8] {
        let d = common::disc(n);
        let mut rng = common::rng(4000 + n as u64);
        for i in 0..50 {
            cases += 1;
            let eps = [1e-4, 1e-5, 1e-6][i % 3];
            let u = common::random_p0(&mut rng, &d.mesh, 2.0);
            let u2 = common::random_p0(&mut rng, &d.mesh, 2.0);
            let c = 3.0 * (i as f64 / 50.0 - 0.5);
            let shifted = P0Field {
                values: u.values.iter().map(|v| v + c).collect(),
            };
            let tv = |f: &P0Field, e: f64| eval_tv_eps(&d, f, e, None).unwrap();
            let r = tv(&u, eps);
            let r2 = tv(&u2, eps);
            let constant = tv(&P0Field::constant(&d.mesh, c), eps).value;
            if constant.abs() > 1e-9 {
                failures.push(format!("n={n} case {i}: TV_eps(c)={constant:e}"));
            }
            let s = tv(&shifted, eps).value;
            if (s - r.value).abs() > 1e-9 {
                failures.push(format!("n={n} case {i}: shift changed value by {:e}", s - r.value));
            }
            let larger = tv(&u, 2.0 * eps).value;
            if larger > r.value + 1e-10 {
                failures.push(format!("n={n} case {i}: not monotone in eps ({larger} > {})", r.value));
            }
            let jump = discrete_tv(&u, &d.mesh).unwrap();
            if r.value > jump + 1e-9 {
                failures.push(format!("n={n} case {i}: TV_eps {} above jump TV {jump}", r.value));
            }
            // eps a[dphi, dphi] <= int (u1 - u2) div(dphi)
            let dphi = tvoc::fem::P1VectorField {
                values: r.phi.values.iter().zip(&r2.phi.values).map(|(a, b)| a - b).collect(),
            };
            let du = P0Field {
                values: u.values.iter().zip(&u2.values).map(|(a, b)| a - b).collect(),
            };
            let lhs = eps * d.energy(&dphi);
            let rhs = du.inner(&divergence_p1_to_p0(&d.mesh, &dphi).unwrap(), &d.mesh).unwrap();
            if lhs > rhs + 1e-9 {
                failures.push(format!("n={n} case {i}: Lipschitz inequality {lhs} > {rhs}"));
            }
            if !(r.converged && r2.converged) {
                failures.push(format!("n={n} case {i}: oracle did not converge"));
            }
        }
    }
    let mut checks = vec![check(format!("{cases} random fields, 5 properties each"), true)];
    checks.extend(failures.into_iter().map(|f| check(f, false)));
    verdict("criterion 4", "oracle property suite", checks)
}

fn criterion_5_oracle_vs_projected_gradient() -> Verdict {
    let d = common::disc(2);
    let mut rng = common::rng(5000);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let u = common::random_p0(&mut rng, &d.mesh, 4.0);
        let eps = [1e-2, 1e-3, 1e-4, 1e-5][i % 4];
        let r = eval_tv_eps(&d, &u, eps, None).unwrap();
        let brute = common::tv_eps_projected_gradient(&d, &u, eps);
        worst = worst.max((r.value - brute).abs());
    }
    verdict(
        "criterion 5",
        "active set vs projected gradient",
        vec![check(format!("20 inputs on n=2, max |difference| = {worst:.2e} <= 1e-7"), worst <= 1e-7)],
    )
}

fn criterion_6_master_certificates() -> Verdict {
    let mut worst_kkt = 0.0f64;
    let mut worst_compl = 0.0f64;
    let mut worst_dense = 0.0f64;
    let mut active_seen = 0;
    for seed in 0..10 {
        let d = common::disc(2);
        let mut rng = common::rng(6000 + seed);
        let inst = common::random_instance(&mut rng, &d, 1.0);
        let free = solve_master(&[], &inst, &d, 1e-5, None).unwrap();
        let planes = common::violated_planes(&mut rng, &d, &free.u, 2);
        let s = solve_master(&planes, &inst, &d, 1e-5, None).unwrap();
        worst_kkt = worst_kkt.max(s.kkt.stationarity).max(s.kkt.primal).max(s.kkt.dual);
        worst_compl = worst_compl.max(s.kkt.complementarity);
        active_seen += s.active_planes.len();
        let oracle = common::dense_master_oracle(&d, &inst, &planes, 1e-5);
        for (a, b) in s.u.values.iter().zip(&oracle.u) {
            worst_dense = worst_dense.max((a - b).abs());
        }
    }

    let d = common::disc(8);
    let mut rng = common::rng(6100);
    let inst = common::random_instance(&mut rng, &d, 0.5);
    let u = common::random_p0(&mut rng, &d.mesh, 2.0);
    let g = reduced_gradient(&inst, &d, &u).unwrap();
    let h = 1e-4;
    let mut worst_fd = 0.0f64;
    for _ in 0..10 {
        let dir = common::random_p0(&mut rng, &d.mesh, 1.0);
        let at = |t: f64| P0Field {
            values: u.values.iter().zip(&dir.values).map(|(a, b)| a + t * b).collect(),
        };
        let fd = (objective(&inst, &d, &at(h)).unwrap() - objective(&inst, &d, &at(-h)).unwrap()) / (2.0 * h);
        let exact = g.inner(&dir, &d.mesh).unwrap();
        worst_fd = worst_fd.max((fd - exact).abs() / exact.abs());
    }
    verdict(
        "criterion 6",
        "master problem certificates",
        vec![
            check(format!("KKT residual {worst_kkt:.2e} <= 1e-8"), worst_kkt <= 1e-8),
            check(format!("complementarity {worst_compl:.2e} <= 1e-8"), worst_compl <= 1e-8),
            check(format!("dense QP agreement {worst_dense:.2e} <= 1e-8"), worst_dense <= 1e-8),
            check(format!("{active_seen} active cuts over 10 instances"), active_seen > 0),
            check(format!("finite-difference gradient rel. error {worst_fd:.2e} <= 1e-5"), worst_fd <= 1e-5),
        ],
    )
}

fn criterion_7_exact_construction() -> Verdict {
    let mesh = Arc::new(Mesh::friedrichs_keller(50).unwrap());
    let parts = build_exact_parts(mesh.clone(), DEFAULT_MULTIPLIER_SCALE, 1.0, 4).unwrap();
    let residual = parts.gradient_residual().values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let integral = parts.u_bar.integral(&mesh);

    // the two cubic branches written out independently
    let left = |r: f64| -8192.0 * r.powi(3) + 5376.0 * r.powi(2) - 1152.0 * r + 81.0;
    let right = |r: f64| 8192.0 * r.powi(3) - 6912.0 * r.powi(2) + 1920.0 * r - 175.0;
    let dleft = |r: f64| -24576.0 * r.powi(2) + 10752.0 * r - 1152.0;
    let dright = |r: f64| 24576.0 * r.powi(2) - 13824.0 * r + 1920.0;
    let (a, b, c) = (3.0 / 16.0, 0.25, 5.0 / 16.0);
    let knots = [
        (psi(a), 0.0),
        (psi(b), 1.0),
        (psi(c), 0.0),
        (right(b), 1.0),
        (left(a), 0.0),
        (psi_prime(a), 0.0),
        (psi_prime(b), 0.0),
        (psi_prime(c), 0.0),
        (dleft(a), 0.0),
        (dleft(b), 0.0),
        (dright(b), 0.0),
        (dright(c), 0.0),
    ];
    let knot_err = knots.iter().fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    verdict(
        "criterion 7",
        "exact solution construction",
        vec![
            check(format!("gradient residual {residual:.2e} <= 1e-10"), residual <= 1e-10),
            check(format!("Psi knots and derivatives, max error {knot_err:.1e} <= 1e-12"), knot_err <= 1e-12),
            check(format!("int u_bar = {integral:.6} within 1e-3 of 0.125"), (integral - 0.125).abs() <= 1e-3),
        ],
    )
}

fn criterion_8_cli_determinism() -> Verdict {
    let run = || {
        let out = Command::new(env!("CARGO_BIN_EXE_tvoc"))
            .args(["--instance", "exact", "--output", "csv"])
            .output()
            .unwrap();
        (out.status.code(), out.stdout)
    };
    let (c1, a) = run();
    let (c2, b) = run();
    let rows = String::from_utf8_lossy(&a).lines().count().saturating_sub(1);
    verdict(
        "criterion 8",
        "determinism",
        vec![
            check(format!("exit codes {c1:?}, {c2:?}"), c1 == Some(0) && c2 == Some(0)),
            check(format!("{rows} data rows"), rows == 8),
            check("byte-identical CSV", a == b && !a.is_empty()),
        ],
    )
}

fn note_inner_iteration_counts() -> Verdict {
    let mut checks = Vec::new();
    for (name, run) in [("exact", exact_run()), ("generic", generic_run())] {
        let p = run.records.iter().map(|r| r.it_master).max().unwrap();
        let q = run.records.iter().map(|r| r.it_oracle).max().unwrap();
        checks.push(check(format!("{name}: max it_P={p} <= 15"), p <= 15));
        checks.push(check(format!("{name}: max it_Q={q} <= 15"), q <= 15));
    }
    verdict("note", "inner iteration counts", checks)
}

fn main() {
    let criteria: [fn() -> Verdict; 9] = [
        criterion_1_exact_instance_table,
        criterion_2_convergence_rate,
        criterion_3_generic_instance_table,
        criterion_4_oracle_properties,
        criterion_5_oracle_vs_projected_gradient,
        criterion_6_master_certificates,
        criterion_7_exact_construction,
        criterion_8_cli_determinism,
        note_inner_iteration_counts,
    ];
    let mut failed = 0;
    for run in criteria {
        if !run().report() {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
