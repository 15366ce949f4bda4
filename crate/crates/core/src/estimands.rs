//! Exposure-controlled and exposure-marginalized potential infection
//! outcomes, the contagion / susceptibility / infectiousness effects built
//! from them, treatment- and covariate-marginalized variants, and the
//! hazard-ratio estimands.
//!
//! Controlled quantities are closed-form probabilities given a fixed
//! infection history of the others. Marginalized quantities average the
//! controlled outcome over histories sampled from the world where the focal
//! individual cannot transmit; contrasts share one history stream across
//! both arms (common random numbers), which makes structural zeroes exact
//! and is the main variance-reduction device.

use serde::Serialize;

use crate::cohort::{CovariateModel, CovariateSampler, Covariates, InfectionHistory};
use crate::error::{Error, Result};
use crate::hazard::{individual_cumulative_hazard, ModelParams};
use crate::rng::{lane_substream, Lane};
use crate::sim::simulate_history_excluding;

/// Monte-Carlo settings for history marginalization.
#[derive(Debug, Clone, Copy)]
pub struct McSettings {
    /// Histories sampled per marginalized outcome (default 10,000).
    pub samples: usize,
    pub seed: u64,
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings {
            samples: 10_000,
            seed: 0,
        }
    }
}

/// Names of the estimands this module produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectName {
    Outcome,
    Contagion,
    Susceptibility,
    Infectiousness,
    HazardSusceptibility,
    HazardInfectiousness,
    HazardContagion,
}

impl EffectName {
    pub fn label(&self) -> &'static str {
        match self {
            EffectName::Outcome => "outcome",
            EffectName::Contagion => "ce",
            EffectName::Susceptibility => "se",
            EffectName::Infectiousness => "ie",
            EffectName::HazardSusceptibility => "hse",
            EffectName::HazardInfectiousness => "hie",
            EffectName::HazardContagion => "hce",
        }
    }
}

/// Covariate conditioning of an estimand.
#[derive(Debug, Clone)]
pub enum CovariateContext {
    Fixed(Covariates),
    Marginalized {
        rho: f64,
        variance: f64,
        dim: usize,
        draws: usize,
    },
}

/// A named effect value with the context that produced it.
#[derive(Debug, Clone)]
pub struct EstimandResult {
    pub name: EffectName,
    pub value: f64,
    /// Evaluation time.
    pub time: f64,
    /// Own treatment entering the integrand; `None` when the effect
    /// contrasts own treatment (susceptibility).
    pub own_treatment: Option<bool>,
    /// Integrand treatments of the others (contrasts carry both arms).
    pub integrand_others: Vec<Vec<bool>>,
    /// Marginalizer treatments (contrasts carry both arms); empty for
    /// controlled quantities.
    pub marginalizer_others: Vec<Vec<bool>>,
    /// Fixed exposure history, for controlled quantities.
    pub history: Option<InfectionHistory>,
    pub covariates: CovariateContext,
    /// Monte-Carlo sample count; 0 for exact quantities.
    pub samples: usize,
    /// Present iff marginalization was used.
    pub mc_se: Option<f64>,
}

impl EstimandResult {
    pub fn validate(&self) -> Result<()> {
        let bounds_ok = match self.name {
            EffectName::Outcome => (0.0..=1.0).contains(&self.value),
            EffectName::Contagion | EffectName::Susceptibility | EffectName::Infectiousness => {
                (-1.0..=1.0).contains(&self.value)
            }
            _ => self.value.is_finite(),
        };
        if !bounds_ok {
            return Err(Error::Contract(format!(
                "{} value {} outside its probability-scale bounds",
                self.name.label(),
                self.value
            )));
        }
        if (self.samples > 0) != self.mc_se.is_some() {
            return Err(Error::Contract(
                "mc_se must be present exactly when marginalization was used".into(),
            ));
        }
        Ok(())
    }
}

/// Builds the full treatment vector for an integrand: `own` in the focal
/// slot, `others` elsewhere.
fn combine_treatments(i: usize, own: bool, others: &[bool]) -> Vec<bool> {
    let mut x = others.to_vec();
    x[i] = own;
    x
}

/// Exposure-controlled potential infection outcome: the probability that the
/// focal individual is infected by `t` under joint treatments `x` and the
/// deterministic infection history `hist_others`.
pub fn controlled_outcome(
    t: f64,
    i: usize,
    x: &[bool],
    hist_others: &InfectionHistory,
    l: &Covariates,
    p: &ModelParams,
) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    if hist_others.contains(i) {
        return Err(Error::Contract(format!(
            "controlled history must not contain the focal individual {i}"
        )));
    }
    let cumulative = individual_cumulative_hazard(0.0, t, i, x, l, hist_others, p)?;
    Ok(-(-cumulative).exp_m1())
}

/// One arm of a marginalized potential outcome: integrand treatments plus
/// the treatments under which the exposure histories are generated.
#[derive(Debug, Clone)]
pub struct OutcomeArm {
    pub own: bool,
    /// Integrand treatments of the others (full length, focal slot ignored).
    pub others: Vec<bool>,
    /// Treatments generating the marginalizing histories (full length, focal
    /// slot ignored).
    pub marginalizer: Vec<bool>,
}

/// A marginalized Monte-Carlo value.
#[derive(Debug, Clone, Copy)]
pub struct MarginalizedValue {
    pub value: f64,
    pub mc_se: f64,
    pub samples: usize,
}

fn sample_history(
    i: usize,
    marginalizer: &[bool],
    t: f64,
    l: &Covariates,
    p: &ModelParams,
    seed: u64,
    stream: u64,
) -> Result<InfectionHistory> {
    let mut rng = lane_substream(seed, Lane::History, stream);
    simulate_history_excluding(i, p, marginalizer, l, t, &mut rng)
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Exposure-marginalized average potential outcome,
/// `E[ Y_i(t; own, others, H*(marginalizer)) | L = l ]`, by Monte-Carlo
/// integration over sampled histories. The history substream is
/// `(seed, Lane::History, stream_base + m)` for sample `m`.
#[allow(clippy::too_many_arguments)]
pub fn marginalized_outcome_at(
    t: f64,
    i: usize,
    arm: &OutcomeArm,
    l: &Covariates,
    p: &ModelParams,
    mc: &McSettings,
    stream_base: u64,
) -> Result<MarginalizedValue> {
    if mc.samples == 0 {
        return Err(Error::config("samples", "must be at least 1"));
    }
    let x = combine_treatments(i, arm.own, &arm.others);
    let mut values = Vec::with_capacity(mc.samples);
    for m in 0..mc.samples {
        let h = sample_history(
            i,
            &arm.marginalizer,
            t,
            l,
            p,
            mc.seed,
            stream_base + m as u64,
        )?;
        values.push(controlled_outcome(t, i, &x, &h, l, p)?);
    }
    let (value, mc_se) = mean_and_se(&values);
    Ok(MarginalizedValue {
        value,
        mc_se,
        samples: mc.samples,
    })
}

/// [`marginalized_outcome_at`] from stream 0: the public entry point
/// returning `(value, MC standard error)`.
#[allow(clippy::too_many_arguments)]
pub fn marginalized_outcome(
    t: f64,
    i: usize,
    own: bool,
    integrand_others: &[bool],
    marginalizer_others: &[bool],
    l: &Covariates,
    p: &ModelParams,
    mc: &McSettings,
) -> Result<MarginalizedValue> {
    marginalized_outcome_at(
        t,
        i,
        &OutcomeArm {
            own,
            others: integrand_others.to_vec(),
            marginalizer: marginalizer_others.to_vec(),
        },
        l,
        p,
        mc,
        0,
    )
}

/// `E[arm_a] - E[arm_b]` with both arms evaluated against the same history
/// substreams. Arms with identical marginalizers see identical histories, so
/// structural zeroes (equal arms, inert coefficients) are exact, and the
/// contrast is exactly antisymmetric under arm swap.
#[allow(clippy::too_many_arguments)]
pub fn marginalized_contrast_at(
    t: f64,
    i: usize,
    arm_a: &OutcomeArm,
    arm_b: &OutcomeArm,
    l: &Covariates,
    p: &ModelParams,
    mc: &McSettings,
    stream_base: u64,
) -> Result<MarginalizedValue> {
    if mc.samples == 0 {
        return Err(Error::config("samples", "must be at least 1"));
    }
    let x_a = combine_treatments(i, arm_a.own, &arm_a.others);
    let x_b = combine_treatments(i, arm_b.own, &arm_b.others);
    let mut diffs = Vec::with_capacity(mc.samples);
    for m in 0..mc.samples {
        let stream = stream_base + m as u64;
        let h_a = sample_history(i, &arm_a.marginalizer, t, l, p, mc.seed, stream)?;
        let h_b = sample_history(i, &arm_b.marginalizer, t, l, p, mc.seed, stream)?;
        let y_a = controlled_outcome(t, i, &x_a, &h_a, l, p)?;
        let y_b = controlled_outcome(t, i, &x_b, &h_b, l, p)?;
        diffs.push(y_a - y_b);
    }
    let (value, mc_se) = mean_and_se(&diffs);
    Ok(MarginalizedValue {
        value,
        mc_se,
        samples: mc.samples,
    })
}

/// Exposure-marginalized contagion effect
/// `CE_i(t, own, others, others_alt)`: the integrand treatments are held at
/// `(own, others)` while the marginalizing history distribution switches
/// from `others` to `others_alt`.
#[allow(clippy::too_many_arguments)]
pub fn contagion_effect(
    t: f64,
    i: usize,
    own: bool,
    others: &[bool],
    others_alt: &[bool],
    l: &Covariates,
    p: &ModelParams,
    mc: &McSettings,
) -> Result<EstimandResult> {
    let arm_a = OutcomeArm {
        own,
        others: others.to_vec(),
        marginalizer: others.to_vec(),
    };
    let arm_b = OutcomeArm {
        own,
        others: others.to_vec(),
        marginalizer: others_alt.to_vec(),
    };
    let v = marginalized_contrast_at(t, i, &arm_a, &arm_b, l, p, mc, 0)?;
    Ok(EstimandResult {
        name: EffectName::Contagion,
        value: v.value,
        time: t,
        own_treatment: Some(own),
        integrand_others: vec![others.to_vec()],
        marginalizer_others: vec![others.to_vec(), others_alt.to_vec()],
        history: None,
        covariates: CovariateContext::Fixed(l.clone()),
        samples: v.samples,
        mc_se: Some(v.mc_se),
    })
}

/// Exposure-controlled contagion effect: same treatments, two fixed
/// histories.
pub fn contagion_effect_controlled(
    t: f64,
    i: usize,
    x: &[bool],
    hist: &InfectionHistory,
    hist_alt: &InfectionHistory,
    l: &Covariates,
    p: &ModelParams,
) -> Result<f64> {
    Ok(controlled_outcome(t, i, x, hist, l, p)? - controlled_outcome(t, i, x, hist_alt, l, p)?)
}

/// Exposure-marginalized susceptibility effect `SE_i(t, others)`: own
/// treatment 1 vs 0 with identical marginalizer and shared histories.
pub fn susceptibility_effect(
    t: f64,
    i: usize,
    others: &[bool],
    l: &Covariates,
    p: &ModelParams,
    mc: &McSettings,
) -> Result<EstimandResult> {
    let arm = |own| OutcomeArm {
        own,
        others: others.to_vec(),
        marginalizer: others.to_vec(),
    };
    let v = marginalized_contrast_at(t, i, &arm(true), &arm(false), l, p, mc, 0)?;
    Ok(EstimandResult {
        name: EffectName::Susceptibility,
        value: v.value,
        time: t,
        own_treatment: None,
        integrand_others: vec![others.to_vec()],
        marginalizer_others: vec![others.to_vec()],
        history: None,
        covariates: CovariateContext::Fixed(l.clone()),
        samples: v.samples,
        mc_se: Some(v.mc_se),
    })
}

/// Exposure-controlled susceptibility effect: own treatment 1 vs 0 under one
/// fixed history.
pub fn susceptibility_effect_controlled(
    t: f64,
    i: usize,
    others: &[bool],
    hist: &InfectionHistory,
    l: &Covariates,
    p: &ModelParams,
) -> Result<f64> {
    let x1 = combine_treatments(i, true, others);
    let x0 = combine_treatments(i, false, others);
    Ok(controlled_outcome(t, i, &x1, hist, l, p)? - controlled_outcome(t, i, &x0, hist, l, p)?)
}

/// Exposure-marginalized infectiousness effect: integrand source treatments
/// `others_alt` vs `others_base`, marginalizer held fixed in both arms (both
/// arms share one sampled history stream).
#[allow(clippy::too_many_arguments)]
pub fn infectiousness_effect(
    t: f64,
    i: usize,
    own: bool,
    others_alt: &[bool],
    others_base: &[bool],
    marginalizer: &[bool],
    l: &Covariates,
    p: &ModelParams,
    mc: &McSettings,
) -> Result<EstimandResult> {
    let arm = |others: &[bool]| OutcomeArm {
        own,
        others: others.to_vec(),
        marginalizer: marginalizer.to_vec(),
    };
    let v = marginalized_contrast_at(t, i, &arm(others_alt), &arm(others_base), l, p, mc, 0)?;
    Ok(EstimandResult {
        name: EffectName::Infectiousness,
        value: v.value,
        time: t,
        own_treatment: Some(own),
        integrand_others: vec![others_alt.to_vec(), others_base.to_vec()],
        marginalizer_others: vec![marginalizer.to_vec()],
        history: None,
        covariates: CovariateContext::Fixed(l.clone()),
        samples: v.samples,
        mc_se: Some(v.mc_se),
    })
}

/// Exposure-controlled infectiousness effect: source treatments contrast
/// under one fixed history.
#[allow(clippy::too_many_arguments)]
pub fn infectiousness_effect_controlled(
    t: f64,
    i: usize,
    own: bool,
    others_alt: &[bool],
    others_base: &[bool],
    hist: &InfectionHistory,
    l: &Covariates,
    p: &ModelParams,
) -> Result<f64> {
    let x_a = combine_treatments(i, own, others_alt);
    let x_b = combine_treatments(i, own, others_base);
    Ok(controlled_outcome(t, i, &x_a, hist, l, p)? - controlled_outcome(t, i, &x_b, hist, l, p)?)
}

/// Distributions over the others' treatment vectors used by treatment
/// marginalization.
#[derive(Debug, Clone)]
pub enum TreatmentDistribution {
    /// All mass on one vector (full length, focal slot ignored).
    PointMass(Vec<bool>),
    /// Independent Bernoulli(p) per other individual.
    IidBernoulli(f64),
    /// Uniform over all vectors.
    Uniform,
    /// Uniform over vectors with exactly `treated` treated others.
    ExactCount(usize),
}

impl TreatmentDistribution {
    /// Enumerates `(others_vector, probability)` pairs over the `n - 1`
    /// others of `i`; vectors are full length with the focal slot false.
    pub fn enumerate(&self, n: usize, i: usize) -> Result<Vec<(Vec<bool>, f64)>> {
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let k = others.len();
        if k > 20 {
            return Err(Error::config("n", "treatment marginalization caps at 21"));
        }
        let mut out = Vec::new();
        match self {
            TreatmentDistribution::PointMass(x) => {
                let mut v = x.clone();
                v[i] = false;
                out.push((v, 1.0));
            }
            TreatmentDistribution::IidBernoulli(p) => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::config(
                        "treatment_distribution.p",
                        "must lie in [0, 1]",
                    ));
                }
                for mask in 0..(1u32 << k) {
                    let mut v = vec![false; n];
                    let mut prob = 1.0;
                    for (bit, &j) in others.iter().enumerate() {
                        let treated = mask >> bit & 1 == 1;
                        v[j] = treated;
                        prob *= if treated { *p } else { 1.0 - *p };
                    }
                    out.push((v, prob));
                }
            }
            TreatmentDistribution::Uniform => {
                let prob = 1.0 / (1u32 << k) as f64;
                for mask in 0..(1u32 << k) {
                    let mut v = vec![false; n];
                    for (bit, &j) in others.iter().enumerate() {
                        v[j] = mask >> bit & 1 == 1;
                    }
                    out.push((v, prob));
                }
            }
            TreatmentDistribution::ExactCount(treated) => {
                if *treated > k {
                    return Err(Error::config(
                        "treatment_distribution.treated",
                        format!("cannot treat {treated} of {k} others"),
                    ));
                }
                let mut vectors = Vec::new();
                for mask in 0..(1u32 << k) {
                    if (mask.count_ones() as usize) != *treated {
                        continue;
                    }
                    let mut v = vec![false; n];
                    for (bit, &j) in others.iter().enumerate() {
                        v[j] = mask >> bit & 1 == 1;
                    }
                    vectors.push(v);
                }
                let prob = 1.0 / vectors.len() as f64;
                out.extend(vectors.into_iter().map(|v| (v, prob)));
            }
        }
        let total: f64 = out.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                "treatment_distribution",
                format!("probabilities sum to {total}, expected 1"),
            ));
        }
        Ok(out)
    }
}

/// Effect families that can be treatment- or covariate-marginalized.
#[derive(Debug, Clone)]
pub enum MarginalEffect {
    /// A single marginalized outcome; `marginalizer = None` means the
    /// consistent world (marginalizer equals the integrand treatments).
    Outcome {
        own: bool,
        others: Vec<bool>,
        marginalizer: Option<Vec<bool>>,
    },
    Contagion {
        own: bool,
        others: Vec<bool>,
        marginalizer_alt: Vec<bool>,
    },
    Susceptibility {
        others: Vec<bool>,
    },
    Infectiousness {
        own: bool,
        others_alt: Vec<bool>,
        others_base: Vec<bool>,
        marginalizer: Vec<bool>,
    },
}

impl MarginalEffect {
    pub fn name(&self) -> EffectName {
        match self {
            MarginalEffect::Outcome { .. } => EffectName::Outcome,
            MarginalEffect::Contagion { .. } => EffectName::Contagion,
            MarginalEffect::Susceptibility { .. } => EffectName::Susceptibility,
            MarginalEffect::Infectiousness { .. } => EffectName::Infectiousness,
        }
    }

    /// Evaluates at fixed covariates, with history streams starting at
    /// `stream_base`.
    pub fn eval_at(
        &self,
        t: f64,
        i: usize,
        l: &Covariates,
        p: &ModelParams,
        mc: &McSettings,
        stream_base: u64,
    ) -> Result<MarginalizedValue> {
        match self {
            MarginalEffect::Outcome {
                own,
                others,
                marginalizer,
            } => {
                let arm = OutcomeArm {
                    own: *own,
                    others: others.clone(),
                    marginalizer: marginalizer.clone().unwrap_or_else(|| others.clone()),
                };
                marginalized_outcome_at(t, i, &arm, l, p, mc, stream_base)
            }
            MarginalEffect::Contagion {
                own,
                others,
                marginalizer_alt,
            } => {
                let arm_a = OutcomeArm {
                    own: *own,
                    others: others.clone(),
                    marginalizer: others.clone(),
                };
                let arm_b = OutcomeArm {
                    own: *own,
                    others: others.clone(),
                    marginalizer: marginalizer_alt.clone(),
                };
                marginalized_contrast_at(t, i, &arm_a, &arm_b, l, p, mc, stream_base)
            }
            MarginalEffect::Susceptibility { others } => {
                let arm = |own| OutcomeArm {
                    own,
                    others: others.clone(),
                    marginalizer: others.clone(),
                };
                marginalized_contrast_at(t, i, &arm(true), &arm(false), l, p, mc, stream_base)
            }
            MarginalEffect::Infectiousness {
                own,
                others_alt,
                others_base,
                marginalizer,
            } => {
                let arm = |others: &Vec<bool>| OutcomeArm {
                    own: *own,
                    others: others.clone(),
                    marginalizer: marginalizer.clone(),
                };
                marginalized_contrast_at(
                    t,
                    i,
                    &arm(others_alt),
                    &arm(others_base),
                    l,
                    p,
                    mc,
                    stream_base,
                )
            }
        }
    }

    /// Replaces the others' treatment vector by `x` (used by treatment
    /// marginalization). The infectiousness contrast keeps its base arm and
    /// moves the alternative arm and marginalizer together.
    fn with_others(&self, x: &[bool]) -> MarginalEffect {
        match self {
            MarginalEffect::Outcome {
                own, marginalizer, ..
            } => MarginalEffect::Outcome {
                own: *own,
                others: x.to_vec(),
                marginalizer: marginalizer.clone(),
            },
            MarginalEffect::Contagion {
                own,
                marginalizer_alt,
                ..
            } => MarginalEffect::Contagion {
                own: *own,
                others: x.to_vec(),
                marginalizer_alt: marginalizer_alt.clone(),
            },
            MarginalEffect::Susceptibility { .. } => {
                MarginalEffect::Susceptibility { others: x.to_vec() }
            }
            MarginalEffect::Infectiousness {
                own, others_base, ..
            } => MarginalEffect::Infectiousness {
                own: *own,
                others_alt: x.to_vec(),
                others_base: others_base.clone(),
                marginalizer: x.to_vec(),
            },
        }
    }
}

/// Treatment-marginalized effect: the weighted sum of marginalized effects
/// over the others' treatment vectors under `dist`. Term `k` draws its
/// histories from stream block `k * mc.samples`, so a point-mass
/// distribution reproduces the unmarginalized value exactly.
pub fn treatment_marginalized(
    effect: &MarginalEffect,
    t: f64,
    i: usize,
    dist: &TreatmentDistribution,
    l: &Covariates,
    p: &ModelParams,
    mc: &McSettings,
) -> Result<EstimandResult> {
    let terms = dist.enumerate(l.n(), i)?;
    let mut value = 0.0;
    let mut var = 0.0;
    let mut samples = 0;
    for (k, (x, prob)) in terms.iter().enumerate() {
        let term = effect.with_others(x);
        let v = term.eval_at(t, i, l, p, mc, (k * mc.samples) as u64)?;
        value += prob * v.value;
        var += (prob * v.mc_se).powi(2);
        samples += v.samples;
    }
    Ok(EstimandResult {
        name: effect.name(),
        value,
        time: t,
        own_treatment: None,
        integrand_others: Vec::new(),
        marginalizer_others: Vec::new(),
        history: None,
        covariates: CovariateContext::Fixed(l.clone()),
        samples,
        mc_se: Some(var.sqrt()),
    })
}

/// Covariate laws for covariate-marginalized estimands.
#[derive(Debug, Clone)]
pub enum CovariateLaw {
    /// All mass on one covariate matrix.
    Degenerate(Covariates),
    /// The exchangeable-normal design model.
    Exchangeable(CovariateModel),
}

/// Covariate-marginalized effect: outer Monte Carlo over `L ~ law` (lane
/// [`Lane::Covariates`]), inner marginalization as in
/// [`MarginalEffect::eval_at`]. The reported standard error is the standard
/// deviation of the per-draw inner estimates over the square root of the
/// number of outer draws, which absorbs both stages of noise.
#[allow(clippy::too_many_arguments)]
pub fn covariate_marginalized(
    effect: &MarginalEffect,
    law: &CovariateLaw,
    n: usize,
    t: f64,
    i: usize,
    p: &ModelParams,
    outer_draws: usize,
    mc: &McSettings,
) -> Result<EstimandResult> {
    if outer_draws == 0 {
        return Err(Error::config("outer_draws", "must be at least 1"));
    }
    let sampler = match law {
        CovariateLaw::Degenerate(_) => None,
        CovariateLaw::Exchangeable(model) => Some(CovariateSampler::new(n, model)?),
    };
    let mut inner = Vec::with_capacity(outer_draws);
    for draw in 0..outer_draws {
        let l = match (law, &sampler) {
            (CovariateLaw::Degenerate(l), _) => l.clone(),
            (CovariateLaw::Exchangeable(_), Some(s)) => {
                let mut rng = lane_substream(mc.seed, Lane::Covariates, draw as u64);
                s.sample(&mut rng)
            }
            _ => unreachable!(),
        };
        inner.push(effect.eval_at(t, i, &l, p, mc, (draw * mc.samples) as u64)?);
    }
    let means: Vec<f64> = inner.iter().map(|v| v.value).collect();
    let (value, se_between) = mean_and_se(&means);
    // With a single outer draw the between-draw variance is unobservable;
    // fall back to that draw's inner MC error.
    let mc_se = if outer_draws == 1 {
        inner[0].mc_se
    } else {
        se_between
    };
    let covariates = match law {
        CovariateLaw::Degenerate(l) => CovariateContext::Fixed(l.clone()),
        CovariateLaw::Exchangeable(model) => CovariateContext::Marginalized {
            rho: model.rho,
            variance: model.variance,
            dim: model.dim,
            draws: outer_draws,
        },
    };
    Ok(EstimandResult {
        name: effect.name(),
        value,
        time: t,
        own_treatment: None,
        integrand_others: Vec::new(),
        marginalizer_others: Vec::new(),
        history: None,
        covariates,
        samples: outer_draws * mc.samples,
        mc_se: Some(mc_se),
    })
}

/// Controlled susceptibility hazard ratio: exactly `exp(beta1)` under the
/// model, regardless of time, history, and others' treatments.
pub fn hazard_susceptibility_ratio(p: &ModelParams) -> f64 {
    p.beta1.exp()
}

/// Controlled infectiousness hazard ratio: exactly `exp(beta2)`.
pub fn hazard_infectiousness_ratio(p: &ModelParams) -> f64 {
    p.beta2.exp()
}

/// Controlled contagion cumulative hazard ratio for source infection times
/// `t_early < t_late < t`: the ratio of internal-hazard masses accumulated
/// since each infection.
pub fn hazard_contagion_ratio(t: f64, t_early: f64, t_late: f64, p: &ModelParams) -> Result<f64> {
    if !(t_early < t_late && t_late < t) {
        return Err(Error::Contract(format!(
            "hazard contagion ratio needs t_early < t_late < t, got {t_early}, {t_late}, {t}"
        )));
    }
    if t_early < 0.0 {
        return Err(Error::NegativeTime(t_early));
    }
    let num = p.gamma.cumulative(0.0, t - t_early)?;
    let den = p.gamma.cumulative(0.0, t - t_late)?;
    if den == 0.0 {
        return Err(Error::Contract(
            "internal hazard mass is zero on the later window".into(),
        ));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hazard::BaselineHazard;

    fn table_params() -> ModelParams {
        ModelParams {
            beta1: 0.5f64.ln(),
            beta2: 0.5f64.ln(),
            theta1: vec![0.9f64.ln()],
            theta2: vec![0.9f64.ln()],
            alpha: BaselineHazard::Constant { rate: 0.3 },
            gamma: BaselineHazard::Constant { rate: 3.0 },
        }
    }

    fn untreated_params(alpha: f64, gamma: f64) -> ModelParams {
        ModelParams {
            beta1: 0.0,
            beta2: 0.0,
            theta1: vec![0.0],
            theta2: vec![0.0],
            alpha: BaselineHazard::Constant { rate: alpha },
            gamma: BaselineHazard::Constant { rate: gamma },
        }
    }

    #[test]
    fn controlled_outcome_matches_closed_forms() {
        let p = untreated_params(0.3, 3.0);
        let l = Covariates::zeros(2, 1);
        let x = vec![false, false];

        let empty = InfectionHistory::new();
        let v = controlled_outcome(1.0, 0, &x, &empty, &l, &p).unwrap();
        assert!((v - (1.0 - (-0.3f64).exp())).abs() < 1e-12);
        assert!((v - 0.259182).abs() < 1e-6);

        let h = InfectionHistory::from_events([(1, 0.5)]).unwrap();
        let v = controlled_outcome(1.0, 0, &x, &h, &l, &p).unwrap();
        assert!((v - (1.0 - (-1.8f64).exp())).abs() < 1e-12);
        assert!((v - 0.834701).abs() < 1e-6);

        assert_eq!(controlled_outcome(0.0, 0, &x, &h, &l, &p).unwrap(), 0.0);

        let own = InfectionHistory::from_events([(0, 0.5)]).unwrap();
        assert!(controlled_outcome(1.0, 0, &x, &own, &l, &p).is_err());
    }

    #[test]
    fn controlled_susceptibility_example() {
        let mut p = untreated_params(0.3, 3.0);
        p.beta1 = 0.5f64.ln();
        let l = Covariates::zeros(2, 1);
        let h = InfectionHistory::from_events([(1, 0.5)]).unwrap();
        let se = susceptibility_effect_controlled(1.0, 0, &[false, false], &h, &l, &p).unwrap();
        let expected = 0.593430 - 0.834701;
        assert!((se - expected).abs() < 1e-6, "{se} vs {expected}");
    }

    #[test]
    fn marginalized_outcome_with_zero_gamma_equals_closed_form() {
        // With no transmission the sampled history is irrelevant: every
        // sample equals the empty-history controlled outcome, so the MC mean
        // is exact and its SE is zero.
        let p = untreated_params(0.3, 0.0);
        let l = Covariates::zeros(3, 1);
        let mc = McSettings {
            samples: 200,
            seed: 4,
        };
        let v = marginalized_outcome(0.7, 0, false, &[false; 3], &[false; 3], &l, &p, &mc).unwrap();
        let closed = 1.0 - (-0.3f64 * 0.7).exp();
        assert!((v.value - closed).abs() < 1e-12);
        assert!(v.mc_se < 1e-12);
    }

    #[test]
    fn contagion_effect_zeroes() {
        let p = table_params();
        let l = Covariates::zeros(2, 1);
        let mc = McSettings {
            samples: 400,
            seed: 5,
        };

        // Same marginalizer on both sides: exactly zero via shared streams.
        let ce =
            contagion_effect(0.4, 0, false, &[false, false], &[false, false], &l, &p, &mc).unwrap();
        assert_eq!(ce.value, 0.0);
        assert_eq!(ce.mc_se, Some(0.0));
        ce.validate().unwrap();

        // gamma = 0: histories differ but contribute nothing.
        let p0 = untreated_params(0.3, 0.0);
        let ce0 =
            contagion_effect(0.4, 0, false, &[false, false], &[true, true], &l, &p0, &mc).unwrap();
        assert!(ce0.value.abs() <= 3.0 * ce0.mc_se.unwrap().max(1e-15));
    }

    #[test]
    fn susceptibility_zero_when_beta1_zero() {
        let mut p = table_params();
        p.beta1 = 0.0;
        let l = Covariates::zeros(2, 1);
        let h = InfectionHistory::from_events([(1, 0.2)]).unwrap();
        let se_c = susceptibility_effect_controlled(0.4, 0, &[false, false], &h, &l, &p).unwrap();
        assert_eq!(se_c, 0.0);

        let mc = McSettings {
            samples: 300,
            seed: 6,
        };
        let se_m = susceptibility_effect(0.4, 0, &[false, false], &l, &p, &mc).unwrap();
        assert_eq!(se_m.value, 0.0);
    }

    #[test]
    fn infectiousness_zero_when_beta2_zero_and_empty_history() {
        let mut p = table_params();
        p.beta2 = 0.0;
        let l = Covariates::zeros(2, 1);
        let mc = McSettings {
            samples: 300,
            seed: 7,
        };
        // beta2 = 0: the source terms are identical in both arms per shared
        // history, so the contrast is exactly zero.
        let ie = infectiousness_effect(
            0.4,
            0,
            false,
            &[true, true],
            &[false, false],
            &[false, false],
            &l,
            &p,
            &mc,
        )
        .unwrap();
        assert_eq!(ie.value, 0.0);

        // Controlled variant with an empty history: nothing to transmit.
        let p2 = table_params();
        let empty = InfectionHistory::new();
        let ie_c = infectiousness_effect_controlled(
            0.4,
            0,
            false,
            &[true, true],
            &[false, false],
            &empty,
            &l,
            &p2,
        )
        .unwrap();
        assert_eq!(ie_c, 0.0);
    }

    #[test]
    fn contrast_is_exactly_antisymmetric() {
        let p = table_params();
        let l = Covariates::zeros(2, 1);
        let mc = McSettings {
            samples: 250,
            seed: 8,
        };
        let fwd =
            contagion_effect(0.4, 0, false, &[false, false], &[true, true], &l, &p, &mc).unwrap();
        // Swapped arms via the raw contrast machinery.
        let arm_a = OutcomeArm {
            own: false,
            others: vec![false, false],
            marginalizer: vec![true, true],
        };
        let arm_b = OutcomeArm {
            own: false,
            others: vec![false, false],
            marginalizer: vec![false, false],
        };
        let rev = marginalized_contrast_at(0.4, 0, &arm_a, &arm_b, &l, &p, &mc, 0).unwrap();
        assert_eq!(fwd.value, -rev.value);
    }

    #[test]
    fn point_mass_marginalization_is_identity() {
        let p = table_params();
        let l = Covariates::zeros(2, 1);
        let mc = McSettings {
            samples: 150,
            seed: 9,
        };
        let effect = MarginalEffect::Susceptibility {
            others: vec![false, false],
        };
        let direct = effect.eval_at(0.4, 0, &l, &p, &mc, 0).unwrap();
        let dist = TreatmentDistribution::PointMass(vec![false, false]);
        let marg = treatment_marginalized(&effect, 0.4, 0, &dist, &l, &p, &mc).unwrap();
        assert_eq!(marg.value, direct.value);
    }

    #[test]
    fn uniform_marginalization_averages_terms() {
        let p = table_params();
        let l = Covariates::zeros(2, 1);
        let mc = McSettings {
            samples: 150,
            seed: 10,
        };
        let effect = MarginalEffect::Outcome {
            own: false,
            others: vec![false, false],
            marginalizer: None,
        };
        let dist = TreatmentDistribution::Uniform;
        let marg = treatment_marginalized(&effect, 0.4, 0, &dist, &l, &p, &mc).unwrap();
        // Hand average with the same stream blocks.
        let t0 = effect
            .with_others(&[false, false])
            .eval_at(0.4, 0, &l, &p, &mc, 0)
            .unwrap();
        let t1 = effect
            .with_others(&[false, true])
            .eval_at(0.4, 0, &l, &p, &mc, mc.samples as u64)
            .unwrap();
        let hand = 0.5 * (t0.value + t1.value);
        assert!((marg.value - hand).abs() < 1e-15);
    }

    #[test]
    fn bernoulli_sep_lies_between_arm_values() {
        let p = table_params();
        let l = Covariates::zeros(2, 1);
        let mc = McSettings {
            samples: 4000,
            seed: 11,
        };
        let se_effect = |others: Vec<bool>| MarginalEffect::Susceptibility { others };
        let se0 = se_effect(vec![false, false])
            .eval_at(0.4, 0, &l, &p, &mc, 0)
            .unwrap()
            .value;
        let se1 = se_effect(vec![true, true])
            .eval_at(0.4, 0, &l, &p, &mc, 0)
            .unwrap()
            .value;
        let sep = treatment_marginalized(
            &se_effect(vec![false, false]),
            0.4,
            0,
            &TreatmentDistribution::IidBernoulli(0.5),
            &l,
            &p,
            &mc,
        )
        .unwrap();
        let (lo, hi) = (se0.min(se1), se0.max(se1));
        let slack = 3.0 * sep.mc_se.unwrap();
        assert!(
            sep.value > lo - slack && sep.value < hi + slack,
            "SE^p {} not within [{lo}, {hi}]",
            sep.value
        );
    }

    #[test]
    fn degenerate_covariate_law_matches_fixed_computation() {
        let p = table_params();
        let l = Covariates::zeros(2, 1);
        let mc = McSettings {
            samples: 200,
            seed: 12,
        };
        let effect = MarginalEffect::Contagion {
            own: false,
            others: vec![false, false],
            marginalizer_alt: vec![true, true],
        };
        let fixed = effect.eval_at(0.4, 0, &l, &p, &mc, 0).unwrap();
        let marg = covariate_marginalized(
            &effect,
            &CovariateLaw::Degenerate(l.clone()),
            2,
            0.4,
            0,
            &p,
            1,
            &mc,
        )
        .unwrap();
        assert_eq!(marg.value, fixed.value);
    }

    #[test]
    fn covariate_marginalization_is_noise_when_thetas_vanish() {
        let mut p = table_params();
        p.theta1 = vec![0.0];
        p.theta2 = vec![0.0];
        let mc = McSettings {
            samples: 400,
            seed: 13,
        };
        let effect = MarginalEffect::Susceptibility {
            others: vec![false, false],
        };
        let fixed = effect
            .eval_at(0.4, 0, &Covariates::zeros(2, 1), &p, &mc, 0)
            .unwrap();
        let law = CovariateLaw::Exchangeable(CovariateModel::new(0.1, 1.0));
        let marg = covariate_marginalized(&effect, &law, 2, 0.4, 0, &p, 50, &mc).unwrap();
        let combined = (marg.mc_se.unwrap().powi(2) + fixed.mc_se.powi(2)).sqrt();
        assert!(
            (marg.value - fixed.value).abs() <= 3.0 * combined.max(1e-12),
            "{} vs {}",
            marg.value,
            fixed.value
        );
    }

    #[test]
    fn hazard_ratio_estimands() {
        let mut p = table_params();
        assert!((hazard_susceptibility_ratio(&p) - 0.5).abs() < 1e-15);
        p.beta2 = 0.9f64.ln();
        assert!((hazard_infectiousness_ratio(&p) - 0.9).abs() < 1e-15);

        let hce = hazard_contagion_ratio(1.0, 0.2, 0.6, &p).unwrap();
        assert!((hce - 2.0).abs() < 1e-12);

        assert!(hazard_contagion_ratio(1.0, 0.6, 0.2, &p).is_err());
        assert!(hazard_contagion_ratio(0.5, 0.2, 0.6, &p).is_err());
    }

    #[test]
    fn estimand_result_validation() {
        let l = Covariates::zeros(2, 1);
        let ok = EstimandResult {
            name: EffectName::Contagion,
            value: 0.02,
            time: 0.4,
            own_treatment: Some(false),
            integrand_others: vec![vec![false, false]],
            marginalizer_others: vec![],
            history: None,
            covariates: CovariateContext::Fixed(l.clone()),
            samples: 10,
            mc_se: Some(0.001),
        };
        ok.validate().unwrap();
        let missing_se = EstimandResult {
            mc_se: None,
            ..ok.clone()
        };
        assert!(missing_se.validate().is_err());
        let out_of_bounds = EstimandResult { value: 1.5, ..ok };
        assert!(out_of_bounds.validate().is_err());
    }
}
