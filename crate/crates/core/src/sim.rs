//! Exact continuous-time simulation of cluster epidemics.
//!
//! The engine is event driven: after every infection, each remaining
//! susceptible draws a fresh candidate infection time by inverting its
//! cumulative hazard against a unit-exponential target, conditional on the
//! history so far. The earliest candidate becomes the next event and all
//! other candidates are discarded. Because the composite hazard is specified
//! conditionally through the current history, this memoryless restart
//! reproduces the sequential waiting-time construction exactly, with no
//! thinning or rejection.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::cohort::{
    assign_treatments, ClusterData, CovariateSampler, Covariates, Design, InfectionHistory,
};
use crate::error::Result;
use crate::hazard::{invert_cumulative_hazard, ModelParams};
use crate::rng::{lane_substream, Lane};

/// Outcome of one simulated cluster.
#[derive(Debug, Clone)]
pub struct SimulatedCluster {
    pub history: InfectionHistory,
    /// Floating-point tie collisions resolved by a one-ulp nudge.
    pub tie_nudges: u32,
}

/// Runs the epidemic over the individuals selected by `active`, stopping at
/// `t_obs`. Inactive individuals neither get infected nor transmit.
fn run_epidemic(
    p: &ModelParams,
    x: &[bool],
    l: &Covariates,
    t_obs: f64,
    active: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<SimulatedCluster> {
    let mut history = InfectionHistory::new();
    let mut susceptible: Vec<usize> = active.to_vec();
    let mut now = 0.0;
    let mut tie_nudges = 0u32;

    while !susceptible.is_empty() {
        let mut best: Option<(f64, usize)> = None;
        for &i in &susceptible {
            let target: f64 = rng.sample(Exp1);
            if let Some(s) = invert_cumulative_hazard(now, target, i, x, l, &history, p)? {
                let t = now + s;
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, i));
                }
            }
        }
        let Some((t, i)) = best else { break };
        if t >= t_obs {
            break;
        }
        let (t, nudged) = history.push_nudged(i, t)?;
        tie_nudges += u32::from(nudged);
        susceptible.retain(|&j| j != i);
        now = t;
    }
    Ok(SimulatedCluster {
        history,
        tie_nudges,
    })
}

/// Simulates one full cluster and packages it as observed data with
/// administrative censoring at `t_obs`.
pub fn simulate_cluster(
    p: &ModelParams,
    x: &[bool],
    l: &Covariates,
    t_obs: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(InfectionHistory, ClusterData)> {
    let n = x.len();
    let active: Vec<usize> = (0..n).collect();
    let sim = run_epidemic(p, x, l, t_obs, &active, rng)?;
    let data = cluster_data_from_history(&sim.history, x, l, t_obs);
    Ok((sim.history, data))
}

/// Simulates the infection history of everyone except `i` in the world where
/// `i` cannot transmit: `i` contributes no hazard terms and is not at risk.
/// This is the sampling engine for the exposure-marginalizing distribution.
pub fn simulate_history_excluding(
    i: usize,
    p: &ModelParams,
    x: &[bool],
    l: &Covariates,
    t_obs: f64,
    rng: &mut ChaCha8Rng,
) -> Result<InfectionHistory> {
    let active: Vec<usize> = (0..x.len()).filter(|&j| j != i).collect();
    Ok(run_epidemic(p, x, l, t_obs, &active, rng)?.history)
}

fn cluster_data_from_history(
    history: &InfectionHistory,
    x: &[bool],
    l: &Covariates,
    t_obs: f64,
) -> ClusterData {
    let n = x.len();
    let mut t_star = vec![t_obs; n];
    let mut delta = vec![false; n];
    for e in history.events() {
        t_star[e.individual] = e.time;
        delta[e.individual] = true;
    }
    ClusterData {
        n,
        x: x.to_vec(),
        l: l.clone(),
        t_star,
        delta,
        t_obs,
    }
}

/// A simulated study: independent clusters plus diagnostics.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub clusters: Vec<ClusterData>,
    pub tie_nudges: u64,
}

/// Scenario inputs for [`simulate_study`].
#[derive(Debug, Clone)]
pub struct StudySpec {
    pub params: ModelParams,
    pub design: Design,
    pub n: usize,
    pub t_obs: f64,
    pub clusters: usize,
}

impl StudySpec {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.design.validate(self.n)?;
        if self.n == 0 {
            return Err(crate::error::Error::config(
                "n",
                "cluster size must be positive",
            ));
        }
        if self.t_obs.is_nan() || self.t_obs <= 0.0 {
            return Err(crate::error::Error::config("t_obs", "must be positive"));
        }
        if self.clusters == 0 {
            return Err(crate::error::Error::config("clusters", "must be positive"));
        }
        Ok(())
    }
}

/// Simulates `spec.clusters` independent clusters on `lane`.
///
/// Cluster `c` draws everything (covariates, treatments, epidemic) from the
/// substream `(seed, lane, c)`, so the dataset is invariant to execution
/// order and thread count.
pub fn simulate_study_on_lane(spec: &StudySpec, seed: u64, lane: Lane) -> Result<Dataset> {
    spec.validate()?;
    let sampler = CovariateSampler::new(spec.n, &spec.design.covariates)?;
    let results: Result<Vec<(ClusterData, u32)>> = (0..spec.clusters)
        .into_par_iter()
        .map(|c| {
            let mut rng = lane_substream(seed, lane, c as u64);
            let l = sampler.sample(&mut rng);
            let x = assign_treatments(&spec.design, spec.n, &l, &mut rng)?;
            let active: Vec<usize> = (0..spec.n).collect();
            let sim = run_epidemic(&spec.params, &x, &l, spec.t_obs, &active, &mut rng)?;
            Ok((
                cluster_data_from_history(&sim.history, &x, &l, spec.t_obs),
                sim.tie_nudges,
            ))
        })
        .collect();
    let results = results?;
    let tie_nudges = results.iter().map(|(_, n)| u64::from(*n)).sum();
    Ok(Dataset {
        clusters: results.into_iter().map(|(c, _)| c).collect(),
        tie_nudges,
    })
}

/// [`simulate_study_on_lane`] on the default data lane.
pub fn simulate_study(spec: &StudySpec, seed: u64) -> Result<Dataset> {
    simulate_study_on_lane(spec, seed, Lane::Data)
}
