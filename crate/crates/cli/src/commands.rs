//! The five subcommands: `run`, `curves`, `fit`, `estimands`, and
//! `oracle-check`.

use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use contagion_core::cohort::dataset_csv;
use contagion_core::estimands::{hazard_infectiousness_ratio, hazard_susceptibility_ratio};
use contagion_core::likelihood::fit_mle;
use contagion_core::optim::BfgsSettings;
use contagion_core::oracle::{run_suite, FaultInjection};
use contagion_core::rng::Lane;
use contagion_core::sim::simulate_study_on_lane;
use contagion_core::study::{
    cell_seed, effect_curve, run_cells, table_estimands, CellSpec, EstimandSettings, HazardScenario,
};
use serde_json::json;

use crate::config::ResolvedConfig;
use crate::output;

/// Simulate, fit, and estimate every configured cell; write the results
/// table, diagnostics, per-cell datasets, and run metadata.
pub fn run(cfg: &ResolvedConfig) -> anyhow::Result<()> {
    if cfg.cells.is_empty() {
        anyhow::bail!("nothing to run: the configuration defines no table cells");
    }
    let start = Instant::now();
    let rows = run_cells(&cfg.cells, &cfg.estimands, cfg.seed);
    for (spec, row) in cfg.cells.iter().zip(&rows) {
        eprintln!(
            "cell {:<55} beta1 {:>9} de {:>9} flags [{}]",
            spec.label(),
            output::fmt_cell(row.beta1_hat),
            output::fmt_cell(row.de),
            row.flags.join(";")
        );
    }

    output::write_results_csv(&cfg.out_dir.join("results.csv"), &rows)?;
    output::write_diagnostics_csv(&cfg.out_dir.join("diagnostics.csv"), &rows)?;

    if cfg.emit_datasets {
        for spec in &cfg.cells {
            let seed = cell_seed(cfg.seed, &spec.label());
            let data = simulate_study_on_lane(&spec.study_spec(), seed, Lane::Data)?;
            let path = cfg
                .out_dir
                .join("datasets")
                .join(format!("{}.csv", output::sanitize_label(&spec.label())));
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let file = std::fs::File::create(&path)
                .with_context(|| format!("creating {}", path.display()))?;
            dataset_csv::write_dataset(std::io::BufWriter::new(file), &data.clusters)?;
        }
    }

    write_meta(cfg, "run", start.elapsed().as_secs_f64())?;
    eprintln!(
        "wrote {} rows to {}",
        rows.len(),
        cfg.out_dir.join("results.csv").display()
    );
    Ok(())
}

/// Evaluate the comparator effects on a time grid per curve cell.
pub fn curves(cfg: &ResolvedConfig) -> anyhow::Result<()> {
    if cfg.curve_cells.is_empty() || cfg.curve_grid.is_empty() {
        anyhow::bail!("nothing to do: the configuration defines no curve cells or grid");
    }
    let start = Instant::now();
    let mut rows = Vec::new();
    for spec in &cfg.curve_cells {
        eprintln!("curve {}", spec.label());
        let points = effect_curve(spec, &cfg.curve_grid, cfg.seed)?;
        rows.push((spec.label(), spec.allocation.label().to_string(), points));
    }
    output::write_curves_csv(&cfg.out_dir.join("curves.csv"), &rows)?;
    write_meta(cfg, "curves", start.elapsed().as_secs_f64())?;
    Ok(())
}

/// Fit the hazard coefficients to an external dataset CSV, with the
/// scenario's known baselines.
pub fn fit(data_path: &Path, scenario: &str, out_dir: &Path) -> anyhow::Result<()> {
    let scenario = HazardScenario::from_label(scenario)?;
    let file = std::fs::File::open(data_path)
        .with_context(|| format!("opening {}", data_path.display()))?;
    let clusters = dataset_csv::read_dataset(std::io::BufReader::new(file))?;
    let (alpha, gamma) = scenario.baselines();
    let report = fit_mle(&clusters, alpha, gamma, &BfgsSettings::default())?;
    eprintln!(
        "fitted {} clusters: beta1 {:.4} beta2 {:.4} ({} iterations, converged {})",
        clusters.len(),
        report.beta1,
        report.beta2,
        report.iterations,
        report.converged
    );
    output::write_fit_csv(&out_dir.join("fit_report.csv"), &report)?;
    output::write_fit_jsonl(&out_dir.join("fit_report.jsonl"), &report)?;
    Ok(())
}

/// Inputs for the standalone estimand evaluation.
pub struct EstimandArgs {
    pub spec: CellSpec,
    pub settings: EstimandSettings,
    pub seed: u64,
}

/// Compute the table estimands and hazard-ratio estimands at given
/// parameters (no data, no fitting).
pub fn estimands(args: &EstimandArgs, out_dir: &Path) -> anyhow::Result<()> {
    let spec = &args.spec;
    let params = spec.params();
    let [(ce, ce_se), (se, se_se), (ie, ie_se)] = table_estimands(
        &params,
        spec.n,
        spec.t_obs,
        spec.rho,
        spec.cov_variance,
        &args.settings,
        args.seed,
    )?;
    let hse = hazard_susceptibility_ratio(&params);
    let hie = hazard_infectiousness_ratio(&params);

    let path = out_dir.join("estimands.csv");
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
    use std::io::Write;
    writeln!(w, "name,value,mc_se,t,samples,context")?;
    let total = args.settings.covariate_draws * args.settings.histories;
    let ctx = format!(
        "n={};scenario={};rho={};v={}",
        spec.n,
        spec.scenario.label(),
        spec.rho,
        spec.cov_variance
    );
    for (name, value, mc_se) in [("ce", ce, ce_se), ("se", se, se_se), ("ie", ie, ie_se)] {
        writeln!(
            w,
            "{name},{},{},{},{total},{ctx}",
            output::fmt_cell(Some(value)),
            output::fmt_cell(Some(mc_se)),
            output::fmt_cell(Some(spec.t_obs)),
        )?;
    }
    for (name, value) in [("hse", hse), ("hie", hie)] {
        writeln!(
            w,
            "{name},{},NA,{},0,{ctx}",
            output::fmt_cell(Some(value)),
            output::fmt_cell(Some(spec.t_obs)),
        )?;
    }
    w.flush()?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// Run the discrete-oracle identity suite; the process exit code is the
/// failure count.
pub fn oracle_check(out_dir: &Path, fault: FaultInjection) -> anyhow::Result<usize> {
    let report = run_suite(fault)?;
    output::write_oracle_csv(&out_dir.join("oracle_report.csv"), &report)?;
    for r in &report.results {
        eprintln!(
            "{} {:<28} {:<20} error {:>9.2e} (tol {:.0e})",
            if r.pass { "PASS" } else { "FAIL" },
            r.check,
            r.case,
            r.error,
            r.tolerance
        );
    }
    Ok(report.failures())
}

fn write_meta(cfg: &ResolvedConfig, command: &str, elapsed: f64) -> anyhow::Result<()> {
    let path = cfg.out_dir.join("run_meta.json");
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let meta = json!({
        "command": command,
        "seed": cfg.seed,
        "preset": cfg.preset,
        "cells": cfg.cells.len(),
        "curve_cells": cfg.curve_cells.len(),
        "clusters_per_cell": cfg.cells.iter().map(|c| c.clusters).collect::<Vec<_>>(),
        "estimands": { "covariate_draws": cfg.estimands.covariate_draws, "histories": cfg.estimands.histories },
        "elapsed_seconds": elapsed,
    });
    std::fs::write(&path, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}
