//! Serialization of run reports (CSV, JSON) and plain-text field dumps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::driver::{IterationRecord, RunReport, SolverConfig};
use crate::fem::{Discretization, P0Field, P1ScalarField, P1VectorField};
use crate::instances::ProblemInstance;
use crate::master::state_adjoint;
use crate::{Error, Result};

pub const CSV_HEADER: &str = "k,eps,J,it_P,it_Q,tv_eps,tv_lb,err,eoc";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Six significant digits; fixed notation for moderate magnitudes.
pub fn format_sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.00000".to_string();
    }
    let e = x.abs().log10().floor() as i32;
    if (-4..6).contains(&e) {
        // rounding may carry into the next decade (9.999996 -> 10.0000)
        let s = format!("{:.*}", (5 - e) as usize, x);
        let digits = s.trim_start_matches('-').replace('.', "").trim_start_matches('0').len();
        if digits > 6 && e < 5 {
            return format!("{:.*}", (4 - e).max(0) as usize, x);
        }
        s
    } else {
        format_sci(x)
    }
}

/// Scientific notation with six significant digits.
pub fn format_sci(x: f64) -> String {
    format!("{x:.5e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(format_sig6).unwrap_or_default()
}

pub fn to_csv(records: &[IterationRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.k,
            format_sci(r.eps),
            format_sig6(r.objective),
            r.it_master,
            r.it_oracle,
            format_sig6(r.tv_eps),
            format_sig6(r.tv_lower_bound),
            opt(r.rel_error),
            opt(r.eoc)
        );
    }
    out
}

#[derive(Serialize)]
struct JsonReport<'a> {
    instance: &'a str,
    config: &'a SolverConfig,
    termination: &'static str,
    failure: Option<&'a str>,
    verified_tv_eps: Option<f64>,
    planes: usize,
    records: &'a [IterationRecord],
}

pub fn to_json(report: &RunReport, config: &SolverConfig, instance_label: &str) -> Result<String> {
    let doc = JsonReport {
        instance: instance_label,
        config,
        termination: report.terminated.as_str(),
        failure: report.failure.as_deref(),
        verified_tv_eps: report.verified_tv_eps,
        planes: report.planes.len(),
        records: &report.records,
    };
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::invalid(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn serialize_report(
    report: &RunReport,
    config: &SolverConfig,
    instance_label: &str,
    format: OutputFormat,
) -> Result<Vec<u8>> {
    Ok(match format {
        OutputFormat::Csv => to_csv(&report.records).into_bytes(),
        OutputFormat::Json => to_json(report, config, instance_label)?.into_bytes(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

// `{}` on f64 prints the shortest string that parses back to the same bits.
pub fn p0_to_string(f: &P0Field) -> String {
    let mut s = format!("p0 {}\n", f.len());
    for v in &f.values {
        let _ = writeln!(s, "{v}");
    }
    s
}

pub fn p1_scalar_to_string(f: &P1ScalarField) -> String {
    let mut s = format!("p1 {} 1\n", f.len());
    for v in &f.values {
        let _ = writeln!(s, "{v}");
    }
    s
}

pub fn p1_vector_to_string(f: &P1VectorField) -> String {
    let mut s = format!("p1 {} 2\n", f.node_count());
    for pair in f.values.chunks(2) {
        let _ = writeln!(s, "{} {}", pair[0], pair[1]);
    }
    s
}

pub fn dump_p0(f: &P0Field, path: &Path) -> Result<()> {
    write_text(path, &p0_to_string(f))
}

pub fn dump_p1_scalar(f: &P1ScalarField, path: &Path) -> Result<()> {
    write_text(path, &p1_scalar_to_string(f))
}

pub fn dump_p1_vector(f: &P1VectorField, path: &Path) -> Result<()> {
    write_text(path, &p1_vector_to_string(f))
}

/// A field read back from a dump.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedField {
    P0(P0Field),
    P1Scalar(P1ScalarField),
    P1Vector(P1VectorField),
}

pub fn parse_field(text: &str, path: &Path) -> Result<LoadedField> {
    let bad = |reason: String| Error::Parse {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
    let (count, width, p0) = match header.as_slice() {
        ["p0", n] => (n.parse::<usize>().map_err(|e| bad(e.to_string()))?, 1, true),
        ["p1", n, c] => {
            let c = c.parse::<usize>().map_err(|e| bad(e.to_string()))?;
            if c != 1 && c != 2 {
                return Err(bad(format!("unsupported component count {c}")));
            }
            (n.parse::<usize>().map_err(|e| bad(e.to_string()))?, c, false)
        }
        _ => return Err(bad("missing or malformed header".into())),
    };
    let mut values = Vec::with_capacity(count * width);
    for (i, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != width {
            return Err(bad(format!("line {}: expected {width} values", i + 2)));
        }
        for p in parts {
            values.push(p.parse::<f64>().map_err(|e| bad(format!("line {}: {e}", i + 2)))?);
        }
    }
    if values.len() != count * width {
        return Err(bad(format!("expected {count} entries, found {}", values.len() / width)));
    }
    Ok(match (p0, width) {
        (true, _) => LoadedField::P0(P0Field { values }),
        (false, 1) => LoadedField::P1Scalar(P1ScalarField { values }),
        _ => LoadedField::P1Vector(P1VectorField { values }),
    })
}

pub fn load_field(path: &Path) -> Result<LoadedField> {
    parse_field(&read_text(path)?, path)
}

pub fn load_p0(path: &Path) -> Result<P0Field> {
    match load_field(path)? {
        LoadedField::P0(f) => Ok(f),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            reason: "not a p0 field".into(),
        }),
    }
}

/// Writes the final control, its state and adjoint, the data and the last
/// cut into `dir`. Returns the written paths.
pub fn dump_run_fields(
    dir: &Path,
    report: &RunReport,
    inst: &ProblemInstance,
    disc: &Discretization,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let sa = state_adjoint(inst, disc, &report.final_control)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let p = dir.join(name);
        write_text(&p, &text)?;
        written.push(p);
        Ok(())
    };
    put("u.txt", p0_to_string(&report.final_control))?;
    put("y.txt", p1_scalar_to_string(&sa.y))?;
    put("p.txt", p1_scalar_to_string(&sa.p))?;
    put("u_d.txt", p0_to_string(&inst.u_d))?;
    put("y_d.txt", p1_scalar_to_string(&inst.y_d))?;
    put("f.txt", p0_to_string(&inst.f))?;
    if let Some(r) = &inst.reference_u {
        put("u_ref.txt", p0_to_string(r))?;
    }
    if let Some(pl) = report.planes.last() {
        put("phi.txt", p1_vector_to_string(&pl.phi))?;
    }
    Ok(written)
}
