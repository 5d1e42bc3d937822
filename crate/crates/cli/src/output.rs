//! Report files: JSON report, timings, CSV tables and the ledger text.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;
use crate::run::{RunOutcome, RunReport};

#[derive(Serialize)]
struct RayRow {
    id: usize,
    start: usize,
    tau: f64,
    mu: Option<usize>,
    nondegenerate: Option<bool>,
    n_conjugate: usize,
    endpoint_residual: f64,
    geodesic_residual: f64,
    null_residual: f64,
}

fn write_file(path: PathBuf, text: &str) -> Result<PathBuf, CliError> {
    fs::write(&path, text).map_err(|source| CliError::Io { path: path.clone(), source })?;
    Ok(path)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes every output file into `out_dir` and returns their paths.
pub fn emit_outputs(outcome: &RunOutcome, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out_dir).map_err(|source| CliError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let report = &outcome.report;
    let mut written = Vec::new();
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    written.push(write_file(out_dir.join("report.json"), &(json + "\n"))?);
    let timings = serde_json::to_string_pretty(&outcome.timings).expect("timings serialize");
    written.push(write_file(out_dir.join("timings.json"), &(timings + "\n"))?);
    written.push(write_file(out_dir.join("scenario.toml"), &report.scenario.to_toml())?);
    written.push(write_file(out_dir.join("ledger.txt"), &ledger_text(report))?);

    let path = out_dir.join("rays.csv");
    let mut w = csv_writer(&path)?;
    let err = |source| CliError::Csv { path: path.clone(), source };
    if report.records.is_empty() {
        w.write_record([
            "id",
            "start",
            "tau",
            "mu",
            "nondegenerate",
            "n_conjugate",
            "endpoint_residual",
            "geodesic_residual",
            "null_residual",
        ])
        .map_err(err)?;
    }
    for r in &report.records {
        w.serialize(RayRow {
            id: r.id,
            start: r.start,
            tau: r.tau,
            mu: r.mu,
            nondegenerate: r.nondegenerate,
            n_conjugate: r.conjugate_points.len(),
            endpoint_residual: r.endpoint_residual,
            geodesic_residual: r.geodesic_residual,
            null_residual: r.null_residual,
        })
        .map_err(err)?;
    }
    w.flush().map_err(|source| CliError::Io { path: path.clone(), source })?;
    written.push(path);

    for ray in &outcome.rays {
        let path = out_dir.join(format!("ray_{}.csv", ray.id));
        let mut w = csv_writer(&path)?;
        let err = |source| CliError::Csv { path: path.clone(), source };
        let width = ray.rows.first().map_or(2, |r| r.len());
        let mut header = vec!["s".to_string()];
        header.extend((1..width - 1).map(|k| format!("x{k}")));
        header.push("t".into());
        w.write_record(&header).map_err(err)?;
        for row in &ray.rows {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(err)?;
        }
        w.flush().map_err(|source| CliError::Io { path: path.clone(), source })?;
        written.push(path);
    }
    Ok(written)
}

/// Human-readable Morse audit.
pub fn ledger_text(report: &RunReport) -> String {
    let l = &report.ledger;
    let mut out = String::new();
    let _ = writeln!(out, "Morse audit up to degree {} (field {})", l.max_degree, l.field);
    if let Some(p) = &l.provenance {
        let _ = writeln!(out, "Betti source: {p}");
    }
    let _ = writeln!(out, "{:>6} {:>6} {:>6} {:>8}", "degree", "c_l", "b_l", "S_l");
    for d in 0..=l.max_degree {
        let c = l.counts.get(&d).copied().unwrap_or(0);
        let b = l.betti.get(&d).map_or("0".to_string(), |b| b.to_string());
        let s = l.relations.s[d].map_or("-".to_string(), |v| v.to_string());
        let _ = writeln!(out, "{d:>6} {c:>6} {b:>6} {s:>8}");
    }
    let _ = writeln!(out, "verdict: {}", l.relations.verdict);
    if let Some(d) = l.relations.identity_defect {
        let _ = writeln!(out, "count identity defect: {d}");
    }
    if !l.relations.below_betti.is_empty() {
        let _ = writeln!(out, "degrees with c_l < b_l: {:?}", l.relations.below_betti);
    }
    if l.excluded_degenerate > 0 {
        let _ = writeln!(out, "excluded degenerate rays: {}", l.excluded_degenerate);
    }
    let _ = writeln!(
        out,
        "parity ({}): {}",
        if l.parity.contractible { "contractible" } else { "non-contractible" },
        l.parity.message
    );
    let _ = writeln!(out, "rays:");
    for r in &report.records {
        let mu = r.mu.map_or("?".to_string(), |m| m.to_string());
        let _ = writeln!(out, "  #{} tau = {} mu = {mu}{}", r.id, r.tau, if r.nondegenerate == Some(false) { " (degenerate)" } else { "" });
    }
    for f in &report.failures {
        let _ = writeln!(out, "  start {} failed: {}", f.start, f.message);
    }
    out
}
