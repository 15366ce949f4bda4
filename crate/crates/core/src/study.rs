//! Scenario grid and the per-cell pipeline: simulate a study, fit the
//! hazard coefficients, compute the causal estimands at the fitted
//! parameters, and attach the classical comparators.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{Allocation, CovariateModel, Design};
use crate::comparators::{
    adjusted_effects_obs, direct_effect, indirect_effect, DeComparison, EffectEstimate,
};
use crate::error::{Error, Result};
use crate::estimands::{covariate_marginalized, CovariateLaw, MarginalEffect, McSettings};
use crate::hazard::{BaselineHazard, ModelParams};
use crate::likelihood::fit_mle;
use crate::optim::BfgsSettings;
use crate::rng::Lane;
use crate::sim::{simulate_study_on_lane, Dataset, StudySpec};

/// The transmission-dynamics scenarios of the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HazardScenario {
    /// Constant external and internal hazards.
    Constant,
    /// Constant external hazard, exponentially decaying internal hazard.
    DecayingInternal,
    /// Seasonal external hazard, exponentially decaying internal hazard.
    SeasonalExternal,
}

impl HazardScenario {
    pub fn all() -> [HazardScenario; 3] {
        [
            HazardScenario::Constant,
            HazardScenario::DecayingInternal,
            HazardScenario::SeasonalExternal,
        ]
    }

    pub fn label(&self) -> &'static str {
        match self {
            HazardScenario::Constant => "constant",
            HazardScenario::DecayingInternal => "decaying_internal",
            HazardScenario::SeasonalExternal => "seasonal_external",
        }
    }

    pub fn from_label(label: &str) -> Result<Self> {
        match label {
            "constant" => Ok(HazardScenario::Constant),
            "decaying_internal" => Ok(HazardScenario::DecayingInternal),
            "seasonal_external" => Ok(HazardScenario::SeasonalExternal),
            other => Err(Error::config(
                "scenario",
                format!("unknown scenario `{other}`"),
            )),
        }
    }

    /// The `(alpha, gamma)` baseline pair of this scenario.
    pub fn baselines(&self) -> (BaselineHazard, BaselineHazard) {
        match self {
            HazardScenario::Constant => (
                BaselineHazard::Constant { rate: 0.3 },
                BaselineHazard::Constant { rate: 3.0 },
            ),
            HazardScenario::DecayingInternal => (
                BaselineHazard::Constant { rate: 0.3 },
                BaselineHazard::ExpDecay {
                    scale: 6.0,
                    decay: 0.5,
                },
            ),
            HazardScenario::SeasonalExternal => (
                BaselineHazard::Seasonal {
                    amplitude: 0.2,
                    phase: std::f64::consts::FRAC_PI_2,
                },
                BaselineHazard::ExpDecay {
                    scale: 6.0,
                    decay: 0.5,
                },
            ),
        }
    }
}

/// Observation window per cluster size, in years.
pub fn observation_time(n: usize) -> f64 {
    match n {
        0..=2 => 0.4,
        3..=4 => 0.3,
        _ => 0.2,
    }
}

/// One cell of the experiment grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSpec {
    pub scenario: HazardScenario,
    pub n: usize,
    pub t_obs: f64,
    pub allocation: Allocation,
    pub rho: f64,
    pub cov_variance: f64,
    pub exp_beta1: f64,
    pub exp_beta2: f64,
    pub exp_theta1: f64,
    pub exp_theta2: f64,
    pub clusters: usize,
}

impl CellSpec {
    pub fn params(&self) -> ModelParams {
        let (alpha, gamma) = self.scenario.baselines();
        ModelParams {
            beta1: self.exp_beta1.ln(),
            beta2: self.exp_beta2.ln(),
            theta1: vec![self.exp_theta1.ln()],
            theta2: vec![self.exp_theta2.ln()],
            alpha,
            gamma,
        }
    }

    pub fn design(&self) -> Design {
        Design {
            allocation: self.allocation,
            covariates: CovariateModel::new(self.rho, self.cov_variance),
        }
    }

    pub fn study_spec(&self) -> StudySpec {
        StudySpec {
            params: self.params(),
            design: self.design(),
            n: self.n,
            t_obs: self.t_obs,
            clusters: self.clusters,
        }
    }

    pub fn label(&self) -> String {
        format!(
            "{}/n{}/{}/b{}-{}/r{}",
            self.scenario.label(),
            self.n,
            self.allocation.label(),
            self.exp_beta1,
            self.exp_beta2,
            self.rho
        )
    }
}

/// Monte-Carlo budget for the estimand stage of a cell.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EstimandSettings {
    /// Outer covariate draws.
    pub covariate_draws: usize,
    /// Histories per covariate draw.
    pub histories: usize,
}

impl Default for EstimandSettings {
    fn default() -> Self {
        EstimandSettings {
            covariate_draws: 2_000,
            histories: 10,
        }
    }
}

/// One results row, mirroring the simulation-table columns; `None` cells
/// print as the NA token.
#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub scenario: String,
    pub cluster_size: usize,
    pub allocation: String,
    pub clusters: usize,
    pub beta1_hat: Option<f64>,
    pub beta2_hat: Option<f64>,
    pub ce: Option<f64>,
    pub ce_se: Option<f64>,
    pub se: Option<f64>,
    pub se_se: Option<f64>,
    pub ie: Option<f64>,
    pub ie_se: Option<f64>,
    pub de: Option<f64>,
    pub de_se: Option<f64>,
    pub ide: Option<f64>,
    pub ide_se: Option<f64>,
    pub log_likelihood: Option<f64>,
    pub fit_iterations: Option<usize>,
    pub fit_converged: Option<bool>,
    pub tie_nudges: u64,
    pub flags: Vec<String>,
}

impl CellResult {
    fn flagged(spec: &CellSpec, flags: Vec<String>) -> CellResult {
        CellResult {
            scenario: spec.scenario.label().to_string(),
            cluster_size: spec.n,
            allocation: spec.allocation.label().to_string(),
            clusters: spec.clusters,
            beta1_hat: None,
            beta2_hat: None,
            ce: None,
            ce_se: None,
            se: None,
            se_se: None,
            ie: None,
            ie_se: None,
            de: None,
            de_se: None,
            ide: None,
            ide_se: None,
            log_likelihood: None,
            fit_iterations: None,
            fit_converged: None,
            tie_nudges: 0,
            flags,
        }
    }
}

/// Stable per-cell seed: FNV-1a over the cell label mixed with the master
/// seed, so a cell's stream does not depend on which other cells run.
pub fn cell_seed(master: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^ master.rotate_left(17)
}

/// The three table estimands at the fitted parameters, covariate-marginalized
/// over the scenario's covariate law: `CE(t, 0, all-0, all-1)`,
/// `SE(t, all-0)`, and `IE(t, 0, all-0)` read as the all-1 vs all-0 integrand
/// contrast under the all-0 marginalizer.
pub fn table_estimands(
    fitted: &ModelParams,
    n: usize,
    t: f64,
    rho: f64,
    variance: f64,
    est: &EstimandSettings,
    seed: u64,
) -> Result<[(f64, f64); 3]> {
    let all0 = vec![false; n];
    let all1 = vec![true; n];
    let effects = [
        MarginalEffect::Contagion {
            own: false,
            others: all0.clone(),
            marginalizer_alt: all1.clone(),
        },
        MarginalEffect::Susceptibility {
            others: all0.clone(),
        },
        MarginalEffect::Infectiousness {
            own: false,
            others_alt: all1,
            others_base: all0.clone(),
            marginalizer: all0,
        },
    ];
    let law = CovariateLaw::Exchangeable(CovariateModel::new(rho, variance));
    let mut out = [(0.0, 0.0); 3];
    for (k, effect) in effects.iter().enumerate() {
        let mc = McSettings {
            samples: est.histories,
            seed: seed.wrapping_add(k as u64 + 1),
        };
        let r = covariate_marginalized(effect, &law, n, t, 0, fitted, est.covariate_draws, &mc)?;
        r.validate()?;
        out[k] = (r.value, r.mc_se.unwrap_or(0.0));
    }
    Ok(out)
}

/// Runs one cell end to end. The numbered lanes keep the data, paired
/// two-stage data, estimand histories, and covariate draws on disjoint
/// streams of the cell seed.
pub fn run_cell(spec: &CellSpec, est: &EstimandSettings, master_seed: u64) -> Result<CellResult> {
    let seed = cell_seed(master_seed, &spec.label());
    let (alpha, gamma) = spec.scenario.baselines();
    let data = simulate_study_on_lane(&spec.study_spec(), seed, Lane::Data)?;

    let fit = fit_mle(&data.clusters, alpha, gamma, &BfgsSettings::default())?;
    let mut flags = fit.flags.clone();
    let fitted = fit.params(alpha, gamma);

    let [(ce, ce_se), (se, se_se), (ie, ie_se)] = table_estimands(
        &fitted,
        spec.n,
        spec.t_obs,
        spec.rho,
        spec.cov_variance,
        est,
        seed,
    )?;

    // Comparators. Observational rows adjust with GEE; randomized rows use
    // the design's raw comparison sets.
    let (de, ide) = match spec.allocation {
        Allocation::Observational => {
            let adjusted = adjusted_effects_obs(&data.clusters, spec.t_obs)?;
            if !adjusted.de_fit.converged || !adjusted.ide_fit.converged {
                flags.push("gee_not_converged".to_string());
            }
            (
                Some(EffectEstimate {
                    value: adjusted.direct,
                    se: adjusted.de_fit_exchangeable.robust_covariance[1][1]
                        .max(0.0)
                        .sqrt(),
                }),
                Some(EffectEstimate {
                    value: adjusted.indirect,
                    se: 0.0,
                }),
            )
        }
        allocation => {
            let de = direct_effect(
                &data.clusters,
                DeComparison::for_allocation(&allocation),
                spec.t_obs,
            )?;
            let ide = match allocation {
                Allocation::Bernoulli { .. } => {
                    let mut paired = spec.clone();
                    paired.allocation = Allocation::two_stage();
                    let two_stage =
                        simulate_study_on_lane(&paired.study_spec(), seed, Lane::TwoStageData)?;
                    indirect_effect(&two_stage.clusters, 0.5, spec.t_obs)?
                }
                _ => None,
            };
            (de, ide)
        }
    };
    if de.is_none() {
        flags.push("de_undefined".to_string());
    }

    Ok(CellResult {
        scenario: spec.scenario.label().to_string(),
        cluster_size: spec.n,
        allocation: spec.allocation.label().to_string(),
        clusters: spec.clusters,
        beta1_hat: Some(fit.beta1),
        beta2_hat: fit.beta2_identified.then_some(fit.beta2),
        ce: Some(ce),
        ce_se: Some(ce_se),
        se: Some(se),
        se_se: Some(se_se),
        ie: Some(ie),
        ie_se: Some(ie_se),
        de: de.map(|e| e.value),
        de_se: de.map(|e| e.se),
        ide: ide.map(|e| e.value),
        ide_se: ide.map(|e| e.se),
        log_likelihood: Some(fit.log_likelihood),
        fit_iterations: Some(fit.iterations),
        fit_converged: Some(fit.converged),
        tie_nudges: data.tie_nudges,
        flags,
    })
}

/// Runs many cells; per-cell failures become flagged rows and the run
/// continues. Row order follows the input order regardless of scheduling.
pub fn run_cells(cells: &[CellSpec], est: &EstimandSettings, master_seed: u64) -> Vec<CellResult> {
    cells
        .par_iter()
        .map(|spec| match run_cell(spec, est, master_seed) {
            Ok(row) => row,
            Err(err) => CellResult::flagged(spec, vec![format!("failed: {err}")]),
        })
        .collect()
}

/// The four simulation tables: coefficient settings by table number.
pub fn table_cells(table: u8, clusters: usize) -> Result<Vec<CellSpec>> {
    let (exp_beta1, exp_beta2, rho) = match table {
        1 => (0.5, 0.5, -0.1),
        2 => (0.5, 0.5, 0.1),
        3 => (0.5, 0.9, -0.1),
        4 => (0.9, 0.1, 0.1),
        other => {
            return Err(Error::config(
                "preset",
                format!("table number must be 1-4, got {other}"),
            ))
        }
    };
    let allocations = [
        Allocation::Observational,
        Allocation::bernoulli(),
        Allocation::block(),
        Allocation::cluster_level(),
    ];
    let mut cells = Vec::new();
    for scenario in HazardScenario::all() {
        for n in [2usize, 4, 8] {
            for allocation in allocations {
                cells.push(CellSpec {
                    scenario,
                    n,
                    t_obs: observation_time(n),
                    allocation,
                    rho,
                    cov_variance: 1.0,
                    exp_beta1,
                    exp_beta2,
                    exp_theta1: 0.9,
                    exp_theta2: 0.9,
                    clusters,
                });
            }
        }
    }
    Ok(cells)
}

/// A point of a comparator curve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CurvePoint {
    pub t: f64,
    pub value: Option<f64>,
    pub mc_se: Option<f64>,
}

/// Evaluates `DE(t)` (or `IDE(t)` under a two-stage allocation) on a time
/// grid over one simulated dataset.
pub fn effect_curve(spec: &CellSpec, grid: &[f64], master_seed: u64) -> Result<Vec<CurvePoint>> {
    let seed = cell_seed(master_seed, &spec.label());
    let data: Dataset = simulate_study_on_lane(&spec.study_spec(), seed, Lane::Data)?;
    grid.iter()
        .map(|&t| {
            let estimate = match spec.allocation {
                Allocation::TwoStage { high_coverage, .. } => {
                    indirect_effect(&data.clusters, high_coverage, t)?
                }
                allocation => {
                    direct_effect(&data.clusters, DeComparison::for_allocation(&allocation), t)?
                }
            };
            Ok(CurvePoint {
                t,
                value: estimate.map(|e| e.value),
                mc_se: estimate.map(|e| e.se),
            })
        })
        .collect()
}

/// The correlated-treatment paradox scenario: null susceptibility effect,
/// strong infectiousness effect, treatments correlated through the
/// covariates. Large `cov_variance` makes the assignment nearly a threshold
/// on the latent trait, strengthening the treatment correlation toward its
/// probit limit.
pub fn paradox_cell(rho: f64, clusters: usize) -> CellSpec {
    CellSpec {
        scenario: HazardScenario::Constant,
        n: 2,
        t_obs: 1.0,
        allocation: Allocation::Observational,
        rho,
        cov_variance: 100.0,
        exp_beta1: 1.0,
        exp_beta2: 0.1,
        exp_theta1: 1.0,
        exp_theta2: 1.0,
        clusters,
    }
}

/// The time grid used by the paradox figure: 0.2 to 1.0 in steps of 0.05.
pub fn paradox_grid() -> Vec<f64> {
    (4..=20).map(|k| k as f64 * 0.05).collect()
}
