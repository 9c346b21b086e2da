//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{CommandFactory, Parser};

use crate::driver::{run_instance, InstanceKind, SolverConfig, TerminationReason};
use crate::report::{dump_run_fields, serialize_report, OutputFormat};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INNER_FAILURE: i32 = 2;
pub const EXIT_MAX_OUTER: i32 = 3;

/// TV-constrained optimal control of the Poisson equation by outer approximation.
#[derive(Debug, Parser)]
#[command(name = "tvoc", version)]
pub struct Args {
    #[arg(long, value_enum, default_value_t = InstanceKind::Exact)]
    pub instance: InstanceKind,
    /// squares per side of the unit square
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..=2000))]
    pub n: u32,
    #[arg(long, default_value_t = 1e-5)]
    pub eps_start: f64,
    #[arg(long, default_value_t = 0.5)]
    pub eps_factor: f64,
    /// defaults to 7.8e-8 (exact) or 1.6e-7 (generic)
    #[arg(long)]
    pub eps_min: Option<f64>,
    #[arg(long, default_value_t = 1e-2)]
    pub tol: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// subdivision depth of the P0 projection quadrature
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(0..=8))]
    pub depth: u32,
    #[arg(long, default_value_t = 50)]
    pub max_outer: usize,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub output: OutputFormat,
    /// write final fields as plain text into this directory
    #[arg(long, value_name = "DIR")]
    pub dump_fields: Option<PathBuf>,
    /// recorded only; the solver is deterministic
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_warm_start: bool,
}

impl Args {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            eps_start: self.eps_start,
            eps_factor: self.eps_factor,
            eps_min: self.eps_min.unwrap_or(self.instance.default_eps_min()),
            tol: self.tol,
            alpha: self.alpha,
            n: self.n as usize,
            max_outer: self.max_outer,
            subdivision_depth: self.depth,
            warm_start: !self.no_warm_start,
            ..SolverConfig::default()
        }
    }
}

pub fn exit_code(reason: TerminationReason) -> i32 {
    match reason {
        TerminationReason::ToleranceMet => EXIT_OK,
        TerminationReason::InnerFailure => EXIT_INNER_FAILURE,
        TerminationReason::MaxOuter => EXIT_MAX_OUTER,
    }
}

fn usage_error(msg: &str) -> i32 {
    eprintln!("error: {msg}\n");
    eprintln!("{}", Args::command().render_usage());
    EXIT_USAGE
}

/// Runs with stdout as the report sink.
pub fn main_with_args<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let stdout = std::io::stdout();
    run_with(args, &mut stdout.lock())
}

pub fn run_with<I: IntoIterator<Item = OsString>, W: Write>(args: I, out: &mut W) -> i32 {
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return EXIT_OK;
            }
            eprintln!("{}", e.render());
            eprintln!("{}", Args::command().render_usage());
            return EXIT_USAGE;
        }
    };
    let config = args.config();
    if let Err(e) = config.validate() {
        return usage_error(&e.to_string());
    }
    let (inst, disc, report) = match run_instance(args.instance, &config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INNER_FAILURE;
        }
    };
    let bytes = match serialize_report(&report, &config, &inst.label, args.output) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INNER_FAILURE;
        }
    };
    if out.write_all(&bytes).and_then(|_| out.flush()).is_err() {
        eprintln!("error: cannot write report");
        return EXIT_USAGE;
    }
    if let Some(dir) = &args.dump_fields {
        if let Err(e) = dump_run_fields(dir, &report, &inst, &disc) {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    }
    if let Some(msg) = &report.failure {
        eprintln!("{msg}");
    }
    eprintln!(
        "{}: {} outer iterations, {} cuts{}",
        report.terminated.as_str(),
        report.records.len(),
        report.planes.len(),
        args.seed.map(|s| format!(", seed {s}")).unwrap_or_default()
    );
    exit_code(report.terminated)
}
