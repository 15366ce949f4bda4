//! Deterministic CSV and JSON output. Every numeric cell is either a finite
//! number printed with six decimals or the explicit `NA` token; datasets use
//! the shortest round-trip float format instead.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use contagion_core::likelihood::FitReport;
use contagion_core::oracle::SuiteReport;
use contagion_core::study::{CellResult, CurvePoint};

pub fn fmt_cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.6}"),
        _ => "NA".to_string(),
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// The results table, in the simulation-table column order.
pub fn write_results_csv(path: &Path, rows: &[CellResult]) -> anyhow::Result<()> {
    let mut w = create(path)?;
    writeln!(
        w,
        "scenario,cluster,treatment_scheme,beta1_hat,beta2_hat,ce,se,ie,de,ide"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.cluster_size,
            r.allocation,
            fmt_cell(r.beta1_hat),
            fmt_cell(r.beta2_hat),
            fmt_cell(r.ce),
            fmt_cell(r.se),
            fmt_cell(r.ie),
            fmt_cell(r.de),
            fmt_cell(r.ide),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Standard errors, fit diagnostics, and flags per cell.
pub fn write_diagnostics_csv(path: &Path, rows: &[CellResult]) -> anyhow::Result<()> {
    let mut w = create(path)?;
    writeln!(
        w,
        "scenario,cluster,treatment_scheme,clusters,ce_se,se_se,ie_se,de_se,ide_se,\
         log_likelihood,fit_iterations,fit_converged,tie_nudges,flags"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.cluster_size,
            r.allocation,
            r.clusters,
            fmt_cell(r.ce_se),
            fmt_cell(r.se_se),
            fmt_cell(r.ie_se),
            fmt_cell(r.de_se),
            fmt_cell(r.ide_se),
            fmt_cell(r.log_likelihood),
            r.fit_iterations.map_or("NA".into(), |v| v.to_string()),
            r.fit_converged.map_or("NA".into(), |v| v.to_string()),
            r.tie_nudges,
            r.flags.join(";"),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format comparator curves.
pub fn write_curves_csv(
    path: &Path,
    rows: &[(String, String, Vec<CurvePoint>)],
) -> anyhow::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "scenario,design,t,value,mc_se")?;
    for (scenario, design, points) in rows {
        for p in points {
            writeln!(
                w,
                "{scenario},{design},{},{},{}",
                fmt_cell(Some(p.t)),
                fmt_cell(p.value),
                fmt_cell(p.mc_se),
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_fit_csv(path: &Path, report: &FitReport) -> anyhow::Result<()> {
    let mut w = create(path)?;
    let d = report.theta1.len();
    let mut header = vec!["beta1".to_string(), "beta2".to_string()];
    header.extend((1..=d).map(|k| format!("theta1_{k}")));
    header.extend((1..=d).map(|k| format!("theta2_{k}")));
    header.extend(
        [
            "log_likelihood",
            "grad_norm",
            "iterations",
            "converged",
            "flags",
        ]
        .map(String::from),
    );
    writeln!(w, "{}", header.join(","))?;
    let mut row = vec![fmt_cell(Some(report.beta1)), fmt_cell(Some(report.beta2))];
    row.extend(report.theta1.iter().map(|&v| fmt_cell(Some(v))));
    row.extend(report.theta2.iter().map(|&v| fmt_cell(Some(v))));
    row.push(fmt_cell(Some(report.log_likelihood)));
    row.push(format!("{:e}", report.grad_norm));
    row.push(report.iterations.to_string());
    row.push(report.converged.to_string());
    row.push(report.flags.join(";"));
    writeln!(w, "{}", row.join(","))?;
    w.flush()?;
    Ok(())
}

pub fn write_fit_jsonl(path: &Path, report: &FitReport) -> anyhow::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{}", serde_json::to_string(report)?)?;
    w.flush()?;
    Ok(())
}

pub fn write_oracle_csv(path: &Path, report: &SuiteReport) -> anyhow::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "check,case,max_error,tolerance,pass")?;
    for r in &report.results {
        writeln!(
            w,
            "{},{},{:e},{:e},{}",
            r.check, r.case, r.error, r.tolerance, r.pass
        )?;
    }
    w.flush()?;
    Ok(())
}

/// File-system-safe version of a cell label.
pub fn sanitize_label(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
