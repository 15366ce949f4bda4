//! Run configuration: a TOML file plus CLI overrides, with named presets
//! covering the simulation tables and the comparator figures. The schema is
//! documented in `docs/config.md`.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use contagion_core::cohort::Allocation;
use contagion_core::study::{
    observation_time, paradox_cell, paradox_grid, table_cells, CellSpec, EstimandSettings,
    HazardScenario,
};
use serde::Deserialize;

/// Raw file schema.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub clusters: Option<usize>,
    pub emit_datasets: Option<bool>,
    pub estimands: Option<EstimandsSection>,
    #[serde(default)]
    pub cells: Vec<CellSection>,
    pub curves: Option<CurvesSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimandsSection {
    pub covariate_draws: Option<usize>,
    pub histories: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSection {
    pub scenario: String,
    pub n: usize,
    pub t_obs: Option<f64>,
    pub allocation: Allocation,
    pub rho: f64,
    pub cov_variance: Option<f64>,
    pub exp_beta1: f64,
    pub exp_beta2: f64,
    pub exp_theta1: Option<f64>,
    pub exp_theta2: Option<f64>,
    pub clusters: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvesSection {
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub points: Option<usize>,
}

/// CLI-level overrides (flags beat config keys).
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub clusters: Option<usize>,
}

/// Fully resolved run configuration.
#[derive(Debug)]
pub struct ResolvedConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
    pub emit_datasets: bool,
    pub estimands: EstimandSettings,
    pub preset: Option<String>,
    /// Table-style cells consumed by `run`.
    pub cells: Vec<CellSpec>,
    /// Curve cells consumed by `curves`.
    pub curve_cells: Vec<CellSpec>,
    pub curve_grid: Vec<f64>,
}

fn uniform_grid(t_min: f64, t_max: f64, points: usize) -> anyhow::Result<Vec<f64>> {
    if !(t_min > 0.0 && t_max > t_min) || points < 2 {
        bail!("curves grid needs 0 < t_min < t_max and at least 2 points");
    }
    let step = (t_max - t_min) / (points - 1) as f64;
    Ok((0..points).map(|k| t_min + k as f64 * step).collect())
}

/// The built-in presets.
///
/// `table1..table4` reproduce the simulation-table grids (36 cells each).
/// `fig3` sweeps the comparator curves across infectiousness strengths under
/// each randomization scheme; `fig4` tracks the block-design direct effect
/// and the two-stage indirect effect across cluster sizes under a strong
/// infectiousness effect; `fig5` is the correlated-treatment sign paradox.
pub fn preset(
    name: &str,
    clusters: Option<usize>,
) -> anyhow::Result<(Vec<CellSpec>, Vec<CellSpec>, Vec<f64>)> {
    let run_clusters = clusters.unwrap_or(10_000);
    let curve_clusters = clusters.unwrap_or(100_000);
    let base = |exp_beta1: f64, exp_beta2: f64, n: usize, allocation: Allocation| CellSpec {
        scenario: HazardScenario::Constant,
        n,
        t_obs: 1.0,
        allocation,
        rho: -0.1,
        cov_variance: 1.0,
        exp_beta1,
        exp_beta2,
        exp_theta1: 0.9,
        exp_theta2: 0.9,
        clusters: curve_clusters,
    };
    match name {
        "table1" => Ok((table_cells(1, run_clusters)?, Vec::new(), Vec::new())),
        "table2" => Ok((table_cells(2, run_clusters)?, Vec::new(), Vec::new())),
        "table3" => Ok((table_cells(3, run_clusters)?, Vec::new(), Vec::new())),
        "table4" => Ok((table_cells(4, run_clusters)?, Vec::new(), Vec::new())),
        "fig3" => {
            let mut cells = Vec::new();
            for (b1, b2) in [(0.9, 0.1), (0.5, 0.5), (0.5, 0.9)] {
                for allocation in [
                    Allocation::bernoulli(),
                    Allocation::block(),
                    Allocation::cluster_level(),
                    Allocation::two_stage(),
                ] {
                    cells.push(base(b1, b2, 2, allocation));
                }
            }
            Ok((Vec::new(), cells, uniform_grid(0.025, 1.0, 40)?))
        }
        "fig4" => {
            let mut cells = Vec::new();
            for n in [2usize, 4, 8] {
                cells.push(base(0.9, 0.1, n, Allocation::block()));
                cells.push(base(0.9, 0.1, n, Allocation::two_stage()));
            }
            Ok((Vec::new(), cells, uniform_grid(0.025, 1.0, 40)?))
        }
        "fig5" => {
            let mut cells = Vec::new();
            for (n, rho) in [(2usize, 0.9), (4, 0.3), (8, 0.1)] {
                for sign in [-1.0, 1.0] {
                    let mut cell = paradox_cell(sign * rho, curve_clusters);
                    cell.n = n;
                    cell.t_obs = 1.0;
                    cells.push(cell);
                }
            }
            Ok((Vec::new(), cells, paradox_grid()))
        }
        other => bail!("unknown preset `{other}` (expected table1..table4 or fig3..fig5)"),
    }
}

fn cell_from_section(section: &CellSection, default_clusters: usize) -> anyhow::Result<CellSpec> {
    let scenario = HazardScenario::from_label(&section.scenario)?;
    Ok(CellSpec {
        scenario,
        n: section.n,
        t_obs: section.t_obs.unwrap_or_else(|| observation_time(section.n)),
        allocation: section.allocation,
        rho: section.rho,
        cov_variance: section.cov_variance.unwrap_or(1.0),
        exp_beta1: section.exp_beta1,
        exp_beta2: section.exp_beta2,
        exp_theta1: section.exp_theta1.unwrap_or(0.9),
        exp_theta2: section.exp_theta2.unwrap_or(0.9),
        clusters: section.clusters.unwrap_or(default_clusters),
    })
}

/// Loads the file (when given), applies the preset, and layers the CLI and
/// environment overrides. The seed is mandatory: reproducibility over
/// convenience, so there is no wall-clock default.
pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> anyhow::Result<ResolvedConfig> {
    let raw: FileConfig = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            toml::from_str(&text).map_err(|e| anyhow!("config file {}: {e}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let seed = overrides
        .seed
        .or(raw.seed)
        .ok_or_else(|| anyhow!("a seed is required (pass --seed or set `seed` in the config)"))?;

    let clusters = overrides.clusters.or(raw.clusters);
    let preset_name = overrides.preset.clone().or_else(|| raw.preset.clone());
    let (mut cells, curve_cells, curve_grid) = match &preset_name {
        Some(name) => preset(name, clusters)?,
        None => (Vec::new(), Vec::new(), Vec::new()),
    };

    // Explicit cells replace preset cells.
    if !raw.cells.is_empty() {
        let default_clusters = clusters.unwrap_or(10_000);
        cells = raw
            .cells
            .iter()
            .map(|s| cell_from_section(s, default_clusters))
            .collect::<anyhow::Result<_>>()?;
    }
    for cell in &cells {
        cell.design()
            .validate(cell.n)
            .with_context(|| format!("cell {}", cell.label()))?;
    }

    // A curves section overrides the preset grid; curve cells default to the
    // run cells when the preset supplies none.
    let (curve_cells, curve_grid) = if let Some(section) = &raw.curves {
        let grid = uniform_grid(
            section.t_min.unwrap_or(0.025),
            section.t_max.unwrap_or(1.0),
            section.points.unwrap_or(40),
        )?;
        let cc = if curve_cells.is_empty() {
            cells.clone()
        } else {
            curve_cells
        };
        (cc, grid)
    } else {
        (curve_cells, curve_grid)
    };

    let out_dir = overrides
        .out_dir
        .clone()
        .or_else(|| std::env::var_os("CONTAGION_OUT_DIR").map(PathBuf::from))
        .or(raw.out_dir)
        .unwrap_or_else(|| PathBuf::from("results"));
    let workers = overrides
        .workers
        .or_else(|| {
            std::env::var("CONTAGION_WORKERS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .or(raw.workers)
        .filter(|&w| w > 0);

    let est_section = raw.estimands.unwrap_or_default();
    let defaults = EstimandSettings::default();
    let estimands = EstimandSettings {
        covariate_draws: est_section
            .covariate_draws
            .unwrap_or(defaults.covariate_draws),
        histories: est_section.histories.unwrap_or(defaults.histories),
    };

    Ok(ResolvedConfig {
        seed,
        out_dir,
        workers,
        emit_datasets: raw.emit_datasets.unwrap_or(true),
        estimands,
        preset: preset_name,
        cells,
        curve_cells,
        curve_grid,
    })
}

/// Runs `body` inside a rayon pool of the requested size (or the default
/// pool when unset). Stream-addressed RNG keeps results identical either
/// way; the knob only controls resource usage.
pub fn with_workers<T: Send>(
    workers: Option<usize>,
    body: impl FnOnce() -> T + Send,
) -> anyhow::Result<T> {
    match workers {
        None => Ok(body()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .context("building worker pool")?;
            Ok(pool.install(body))
        }
    }
}
