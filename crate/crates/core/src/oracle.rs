//! Exact discrete-time enumeration oracle.
//!
//! The continuous model is companioned by a grid model: individuals can only
//! become infected at grid times `g * dt` (during the interval preceding
//! them), per-interval infection probabilities are `1 - exp(-integral)` with
//! the exact hazard integrals of the continuous model, and a source infected
//! at `g * dt` is active from that time on. Joint outcomes over tiny
//! clusters are enumerable, so the identification formulas can be verified
//! by literal conditioning on the enumerated distribution: no measure-zero
//! conditioning, no Monte Carlo.
//!
//! Outcome encoding: digit `0` = never infected within the horizon, digit
//! `g in 1..=steps` = infected at time `g * dt`.

use crate::cohort::{Covariates, InfectionHistory};
use crate::error::{Error, Result};
use crate::estimands::controlled_outcome;
use crate::hazard::ModelParams;

/// Discretization grid: `steps` intervals of width `dt`.
#[derive(Debug, Clone, Copy)]
pub struct Grid {
    pub dt: f64,
    pub steps: usize,
}

/// Cap on `(steps + 1)^n` enumerated states.
pub const ENUMERATION_GUARD: u128 = 1_000_000;

/// The discrete companion model: per-interval infection probabilities for
/// every susceptible given the current infected set.
#[derive(Debug, Clone)]
pub struct DiscreteModel {
    n: usize,
    grid: Grid,
    susc: Vec<f64>,
    src: Vec<f64>,
    /// Integral of the external hazard over interval `k`.
    alpha_step: Vec<f64>,
    /// `gamma_step[g][k]`: integral of the internal hazard over interval `k`
    /// for a source infected at `g * dt` (valid for `k >= g`).
    gamma_step: Vec<Vec<f64>>,
}

impl DiscreteModel {
    pub fn new(p: &ModelParams, x: &[bool], l: &Covariates, grid: Grid) -> Result<Self> {
        p.validate()?;
        let n = x.len();
        if grid.dt.is_nan() || grid.dt <= 0.0 || grid.steps == 0 {
            return Err(Error::config(
                "grid",
                "dt must be positive and steps nonzero",
            ));
        }
        let states = (grid.steps as u128 + 1).pow(n as u32);
        if states > ENUMERATION_GUARD {
            return Err(Error::GuardExceeded {
                states,
                limit: ENUMERATION_GUARD,
            });
        }
        let susc: Vec<f64> = (0..n)
            .map(|i| p.susceptibility_factor(x[i], l.row(i)))
            .collect();
        let src: Vec<f64> = (0..n).map(|j| p.source_factor(x[j], l.row(j))).collect();
        let alpha_step: Vec<f64> = (0..grid.steps)
            .map(|k| {
                p.alpha
                    .cumulative(k as f64 * grid.dt, (k + 1) as f64 * grid.dt)
            })
            .collect::<Result<_>>()?;
        let mut gamma_step = vec![Vec::new(); grid.steps + 1];
        for (g, row) in gamma_step.iter_mut().enumerate().skip(1) {
            *row = (g..grid.steps)
                .map(|k| {
                    p.gamma
                        .cumulative((k - g) as f64 * grid.dt, (k + 1 - g) as f64 * grid.dt)
                })
                .collect::<Result<_>>()?;
        }
        Ok(DiscreteModel {
            n,
            grid,
            susc,
            src,
            alpha_step,
            gamma_step,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Probability that susceptible `i` is infected during interval `k`
    /// given the infection digits of the cluster (only digits `1..=k`
    /// contribute as sources).
    pub fn step_prob(&self, i: usize, k: usize, digits: &[u16]) -> f64 {
        let mut mass = self.alpha_step[k];
        for (j, &g) in digits.iter().enumerate() {
            let g = g as usize;
            if j != i && g >= 1 && g <= k {
                mass += self.src[j] * self.gamma_step[g][k - g];
            }
        }
        -(-(self.susc[i] * mass)).exp_m1()
    }
}

/// Exact joint distribution over per-individual infection digits.
#[derive(Debug, Clone)]
pub struct JointPmf {
    pub n: usize,
    pub steps: usize,
    probs: Vec<f64>,
    digits: Vec<Vec<u16>>,
}

impl JointPmf {
    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[u16], f64)> {
        self.digits
            .iter()
            .map(Vec::as_slice)
            .zip(self.probs.iter().copied())
    }

    pub fn prob_of(&self, digits: &[u16]) -> f64 {
        let base = self.steps + 1;
        let mut idx = 0usize;
        for &d in digits {
            idx = idx * base + d as usize;
        }
        self.probs[idx]
    }
}

/// Enumerates the joint outcome distribution of the discrete model.
pub fn enumerate_joint(model: &DiscreteModel) -> Result<JointPmf> {
    let n = model.n;
    let steps = model.grid.steps;
    let base = steps + 1;
    let count = base.pow(n as u32);
    let mut probs = Vec::with_capacity(count);
    let mut digit_table = Vec::with_capacity(count);
    let mut digits = vec![0u16; n];
    for idx in 0..count {
        let mut rem = idx;
        for slot in (0..n).rev() {
            digits[slot] = (rem % base) as u16;
            rem /= base;
        }
        let mut prob = 1.0;
        'outer: for k in 0..steps {
            for i in 0..n {
                let g = digits[i] as usize;
                if g != 0 && g <= k {
                    continue;
                }
                let q = model.step_prob(i, k, &digits);
                if g == k + 1 {
                    prob *= q;
                } else {
                    prob *= 1.0 - q;
                }
                if prob == 0.0 {
                    break 'outer;
                }
            }
        }
        probs.push(prob);
        digit_table.push(digits.clone());
    }
    Ok(JointPmf {
        n,
        steps,
        probs,
        digits: digit_table,
    })
}

/// Ordered infected others of `i` in a digit history: `(individual, digit)`
/// sorted by digit.
fn ordered_events(i: usize, h: &[u16]) -> Vec<(usize, u16)> {
    let mut events: Vec<(usize, u16)> = h
        .iter()
        .enumerate()
        .filter(|&(j, &g)| j != i && g >= 1)
        .map(|(j, &g)| (j, g))
        .collect();
    events.sort_by_key(|&(_, g)| g);
    events
}

/// Discrete latent-time CDF of the focal individual's waiting time after
/// the `stage`-th infection among the others (0-based stages).
#[derive(Debug, Clone)]
pub struct LatentCdf {
    /// Grid step at which the waiting time starts.
    pub start: usize,
    /// `values[s - 1] = F(s)` for `s = 1..=window`.
    pub values: Vec<f64>,
}

impl LatentCdf {
    /// `F(s)` with `F(s <= 0) = 0`.
    pub fn at(&self, s: isize) -> f64 {
        if s <= 0 {
            0.0
        } else {
            self.values[(s as usize).min(self.values.len()) - 1]
        }
    }
}

/// Computes the latent-time CDF by literal conditioning on the enumerated
/// joint distribution: per-step conditional hazards `f_m / S_m` where both
/// numerator and denominator are pmf sums given the first `stage` infection
/// events of `h`, with the focal individual and all not-yet-infected others
/// required to survive.
pub fn oracle_latent_cdf(pmf: &JointPmf, i: usize, h: &[u16], stage: usize) -> Result<LatentCdf> {
    let events = ordered_events(i, h);
    if stage > events.len() {
        return Err(Error::Contract(format!(
            "stage {stage} exceeds the {} events in the history",
            events.len()
        )));
    }
    let steps = pmf.steps;
    let start = if stage == 0 {
        0
    } else {
        events[stage - 1].1 as usize
    };
    let window_end = if stage < events.len() {
        events[stage].1 as usize
    } else {
        steps
    };
    let cond: Vec<(usize, u16)> = events[..stage].to_vec();
    let later: Vec<usize> = (0..pmf.n)
        .filter(|&j| j != i && !cond.iter().any(|&(c, _)| c == j))
        .collect();

    // Single pass: bucket each matching assignment by the first failure time
    // among {focal} + later (for S) and record focal-infection mass (for f).
    let alive_cap = steps + 2;
    let mut s_bucket = vec![0.0; alive_cap + 1];
    let mut f_mass = vec![0.0; steps + 1];
    for (digits, prob) in pmf.entries() {
        if prob == 0.0 || !cond.iter().all(|&(j, g)| digits[j] == g) {
            continue;
        }
        let horizon = |d: u16| -> usize {
            if d == 0 {
                alive_cap
            } else {
                d as usize
            }
        };
        let later_min = later
            .iter()
            .map(|&u| horizon(digits[u]))
            .min()
            .unwrap_or(alive_cap);
        let i_dig = horizon(digits[i]);
        s_bucket[later_min.min(i_dig)] += prob;
        let d_i = digits[i] as usize;
        if d_i >= 1 && later_min >= d_i {
            f_mass[d_i - 1] += prob;
        }
    }
    // S_m = mass with every watched digit beyond m.
    let mut s_suffix = vec![0.0; alive_cap + 2];
    for b in (0..=alive_cap).rev() {
        s_suffix[b] = s_suffix[b + 1] + s_bucket[b];
    }

    let mut values = Vec::with_capacity(window_end - start);
    let mut surv = 1.0;
    for m in start..window_end {
        let s_m = s_suffix[m + 1];
        let f_m = f_mass[m];
        if s_m <= 0.0 {
            return Err(Error::ZeroMass(format!(
                "latent CDF at stage {stage}, step {m}: survivor set has zero mass"
            )));
        }
        surv *= 1.0 - f_m / s_m;
        values.push(1.0 - surv);
    }
    Ok(LatentCdf { start, values })
}

/// Exposure-and-treatment-controlled expected outcome assembled from the
/// latent CDFs: the staged sum of `F(min(t, next) - current)` times the
/// survival of all earlier stages.
#[allow(clippy::needless_range_loop)]
pub fn oracle_theorem1(pmf: &JointPmf, i: usize, h: &[u16], t_steps: usize) -> Result<f64> {
    let events = ordered_events(i, h);
    let m = events.len();
    let mut total = 0.0;
    let mut carry = 1.0;
    for j in 0..=m {
        let cdf = oracle_latent_cdf(pmf, i, h, j)?;
        let t_j = cdf.start as isize;
        let t_next = if j < m {
            events[j].1 as isize
        } else {
            isize::MAX
        };
        let upto = (t_steps as isize).min(t_next) - t_j;
        total += carry * cdf.at(upto);
        if j < m {
            carry *= 1.0 - cdf.at(t_next - t_j);
        }
    }
    Ok(total)
}

/// Model-based controlled outcome on the grid: the per-step survival product
/// under the known per-interval probabilities.
pub fn discrete_controlled(model: &DiscreteModel, i: usize, h: &[u16], t_steps: usize) -> f64 {
    let mut digits = h.to_vec();
    digits[i] = 0;
    let mut surv = 1.0;
    for k in 0..t_steps.min(model.grid.steps) {
        surv *= 1.0 - model.step_prob(i, k, &digits);
    }
    1.0 - surv
}

/// The discrete exposure distribution of everyone but `i`, verified two
/// ways: the enumerated joint pmf of the `i`-removed model, and the staged
/// product formula (event mass times survivor factors) assembled from
/// latent CDFs of that same pmf.
#[derive(Debug)]
pub struct ExposureDensity {
    /// Original indices of the others, in submodel order.
    pub others: Vec<usize>,
    /// Enumerated joint pmf of the `i`-removed model.
    pub pmf: JointPmf,
    /// Product-formula value per pmf entry.
    pub product: Vec<f64>,
    pub max_abs_diff: f64,
}

pub fn oracle_exposure_density(
    p: &ModelParams,
    x: &[bool],
    l: &Covariates,
    grid: Grid,
    i: usize,
) -> Result<ExposureDensity> {
    let others: Vec<usize> = (0..x.len()).filter(|&j| j != i).collect();
    let x_sub: Vec<bool> = others.iter().map(|&j| x[j]).collect();
    let l_sub = Covariates::from_rows(others.iter().map(|&j| l.row(j).to_vec()).collect())?;
    let model = DiscreteModel::new(p, &x_sub, &l_sub, grid)?;
    let pmf = enumerate_joint(&model)?;
    let steps = grid.steps;

    let mut product = Vec::with_capacity(pmf.probs.len());
    let mut max_abs_diff = 0.0f64;
    for (h, prob) in pmf.entries() {
        // Stage boundaries are the distinct event times; unlike continuous
        // time, the grid gives simultaneous infections positive mass, so a
        // stage may infect several individuals at once.
        let mut boundaries: Vec<u16> = h.iter().copied().filter(|&g| g >= 1).collect();
        boundaries.sort_unstable();
        boundaries.dedup();

        let mut value = 1.0;
        let mut stage_start = 0usize;
        for &digit in &boundaries {
            let e = digit as usize;
            let len = (e - stage_start) as isize;
            for u in 0..pmf.n {
                let g_u = h[u];
                if g_u >= 1 && (g_u as usize) < e {
                    continue;
                }
                // Condition on every individual event strictly before `e`.
                let stage = h
                    .iter()
                    .enumerate()
                    .filter(|&(v, &g)| v != u && g >= 1 && (g as usize) < e)
                    .count();
                let cdf = oracle_latent_cdf(&pmf, u, h, stage)?;
                if g_u as usize == e {
                    value *= cdf.at(len) - cdf.at(len - 1);
                } else {
                    value *= 1.0 - cdf.at(len);
                }
            }
            stage_start = e;
        }
        // Tail survival of the never-infected through the horizon.
        if stage_start < steps {
            let len = (steps - stage_start) as isize;
            for u in 0..pmf.n {
                if h[u] != 0 {
                    continue;
                }
                let stage = h
                    .iter()
                    .enumerate()
                    .filter(|&(v, &g)| v != u && g >= 1)
                    .count();
                let cdf = oracle_latent_cdf(&pmf, u, h, stage)?;
                value *= 1.0 - cdf.at(len);
            }
        }
        max_abs_diff = max_abs_diff.max((value - prob).abs());
        product.push(value);
    }
    Ok(ExposureDensity {
        others,
        pmf,
        product,
        max_abs_diff,
    })
}

/// Both sides of the observed-equals-marginalized identity on the discrete
/// model: the enumerated conditional mean of the full process, and the sum
/// of controlled outcomes weighted by the exposure distribution.
pub fn oracle_corollary2(
    p: &ModelParams,
    x: &[bool],
    l: &Covariates,
    grid: Grid,
    i: usize,
    t_steps: usize,
) -> Result<(f64, f64)> {
    let model = DiscreteModel::new(p, x, l, grid)?;
    let pmf = enumerate_joint(&model)?;
    let mut lhs = 0.0;
    for (digits, prob) in pmf.entries() {
        let g = digits[i] as usize;
        if g >= 1 && g <= t_steps {
            lhs += prob;
        }
    }

    let exposure = oracle_exposure_density(p, x, l, grid, i)?;
    let mut rhs = 0.0;
    for (h_sub, g_prob) in exposure.pmf.entries() {
        if g_prob == 0.0 {
            continue;
        }
        let mut h_full = vec![0u16; x.len()];
        for (slot, &j) in exposure.others.iter().enumerate() {
            h_full[j] = h_sub[slot];
        }
        rhs += g_prob * oracle_theorem1(&pmf, i, &h_full, t_steps)?;
    }
    Ok((lhs, rhs))
}

/// Converts a digit history to continuous event times `g * dt`.
pub fn history_from_digits(h: &[u16], skip: usize, dt: f64) -> Result<InfectionHistory> {
    let mut events: Vec<(usize, f64)> = h
        .iter()
        .enumerate()
        .filter(|&(j, &g)| j != skip && g >= 1)
        .map(|(j, &g)| (j, g as f64 * dt))
        .collect();
    events.sort_by(|a, b| a.1.total_cmp(&b.1));
    InfectionHistory::from_events(events)
}

/// Fault hooks for mutation-testing the suite's sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaultInjection {
    #[default]
    None,
    /// Flips the sign of `beta2` inside the continuous controlled-outcome
    /// evaluator the suite compares against.
    FlipBeta2Sign,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub check: String,
    pub case: String,
    pub error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SuiteReport {
    pub results: Vec<CheckResult>,
}

impl SuiteReport {
    fn record(&mut self, check: &str, case: &str, error: f64, tolerance: f64) {
        self.results.push(CheckResult {
            check: check.to_string(),
            case: case.to_string(),
            error,
            tolerance,
            pass: error.is_finite() && error <= tolerance,
        });
    }

    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| !r.pass).count()
    }
}

struct SuiteCase {
    name: &'static str,
    params: ModelParams,
    x: Vec<bool>,
    l: Covariates,
    steps: usize,
}

fn suite_cases() -> Vec<SuiteCase> {
    use crate::hazard::BaselineHazard;
    let constant = |alpha: f64, gamma: f64| {
        (
            BaselineHazard::Constant { rate: alpha },
            BaselineHazard::Constant { rate: gamma },
        )
    };
    let mut cases = Vec::new();

    let (alpha, gamma) = constant(0.3, 3.0);
    cases.push(SuiteCase {
        name: "n2_constant",
        params: ModelParams {
            beta1: 0.5f64.ln(),
            beta2: 0.5f64.ln(),
            theta1: vec![0.9f64.ln()],
            theta2: vec![0.9f64.ln()],
            alpha,
            gamma,
        },
        x: vec![false, true],
        l: Covariates::from_rows(vec![vec![0.2], vec![-0.4]]).unwrap(),
        steps: 40,
    });

    let (alpha, gamma) = constant(0.4, 2.0);
    cases.push(SuiteCase {
        name: "n3_constant_mixed",
        params: ModelParams {
            beta1: -0.9,
            beta2: -1.2,
            theta1: vec![0.15],
            theta2: vec![-0.2],
            alpha,
            gamma,
        },
        x: vec![true, false, true],
        l: Covariates::from_rows(vec![vec![0.1], vec![0.5], vec![-0.3]]).unwrap(),
        steps: 20,
    });

    cases.push(SuiteCase {
        name: "n3_seasonal_decay",
        params: ModelParams {
            beta1: 0.5f64.ln(),
            beta2: 0.9f64.ln(),
            theta1: vec![0.9f64.ln()],
            theta2: vec![0.9f64.ln()],
            alpha: crate::hazard::BaselineHazard::Seasonal {
                amplitude: 0.2,
                phase: std::f64::consts::FRAC_PI_2,
            },
            gamma: crate::hazard::BaselineHazard::ExpDecay {
                scale: 6.0,
                decay: 0.5,
            },
        },
        x: vec![false, true, false],
        l: Covariates::from_rows(vec![vec![-0.2], vec![0.3], vec![0.1]]).unwrap(),
        steps: 20,
    });
    cases
}

/// Continuous controlled outcome used as the suite's reference, with the
/// fault hook applied.
fn continuous_reference(
    t: f64,
    i: usize,
    x: &[bool],
    h: &InfectionHistory,
    l: &Covariates,
    p: &ModelParams,
    fault: FaultInjection,
) -> Result<f64> {
    let mut p = p.clone();
    if fault == FaultInjection::FlipBeta2Sign {
        p.beta2 = -p.beta2;
    }
    controlled_outcome(t, i, x, h, l, &p)
}

/// Closed-form `E[Y_1(t)]` for a two-person cluster with constant hazards
/// and no treatment or covariate effects.
fn two_person_marginal(alpha: f64, gamma: f64, t: f64) -> f64 {
    let both = (-2.0 * alpha * t).exp();
    let one = alpha * ((-2.0 * alpha * t).exp() - (-(alpha + gamma) * t).exp()) / (gamma - alpha);
    1.0 - (both + one)
}

/// Runs the full identity and refinement suite.
pub fn run_suite(fault: FaultInjection) -> Result<SuiteReport> {
    let mut report = SuiteReport::default();
    let tol = 1e-10;

    for case in suite_cases() {
        let steps = case.steps;
        let grid = Grid {
            dt: 0.4 / steps as f64,
            steps,
        };
        let model = DiscreteModel::new(&case.params, &case.x, &case.l, grid)?;
        let pmf = enumerate_joint(&model)?;

        report.record(
            "pmf_total_mass",
            case.name,
            (pmf.total_mass() - 1.0).abs(),
            1e-12,
        );

        // Histories to probe: empty, one early event, two events (when the
        // cluster has three members).
        let n = case.x.len();
        let mut histories: Vec<Vec<u16>> = vec![vec![0; n]];
        let mut h1 = vec![0u16; n];
        h1[if n > 1 { 1 } else { 0 }] = steps as u16 / 4;
        histories.push(h1);
        if n == 3 {
            let mut h2 = vec![0u16; n];
            h2[1] = steps as u16 / 5;
            h2[2] = steps as u16 / 2 + 1;
            histories.push(h2);
        }

        let mut worst_t1_t3 = 0.0f64;
        let mut worst_cont = 0.0f64;
        for h in &histories {
            for &t_steps in &[steps / 3, 2 * steps / 3, steps] {
                let via_conditioning = oracle_theorem1(&pmf, 0, h, t_steps)?;
                let via_model = discrete_controlled(&model, 0, h, t_steps);
                worst_t1_t3 = worst_t1_t3.max((via_conditioning - via_model).abs());

                let h_cont = history_from_digits(h, 0, grid.dt)?;
                let reference = continuous_reference(
                    t_steps as f64 * grid.dt,
                    0,
                    &case.x,
                    &h_cont,
                    &case.l,
                    &case.params,
                    fault,
                )?;
                worst_cont = worst_cont.max((via_model - reference).abs());
            }
        }
        report.record("thm1_vs_thm3", case.name, worst_t1_t3, tol);
        report.record("thm3_continuous_consistency", case.name, worst_cont, tol);

        let exposure = oracle_exposure_density(&case.params, &case.x, &case.l, grid, 0)?;
        report.record("thm2_vs_enumeration", case.name, exposure.max_abs_diff, tol);
        report.record(
            "gstar_total_mass",
            case.name,
            (exposure.pmf.total_mass() - 1.0).abs(),
            1e-12,
        );

        let (lhs, rhs) = oracle_corollary2(&case.params, &case.x, &case.l, grid, 0, 2 * steps / 3)?;
        report.record("corollary2", case.name, (lhs - rhs).abs(), tol);
    }

    // Discrete-to-continuous refinement: quantizing the others' infection
    // times is the only O(dt) error source, so the enumerated marginal
    // converges linearly to the closed-form two-person marginal.
    {
        let (alpha, gamma) = (0.3, 3.0);
        let p = ModelParams {
            beta1: 0.0,
            beta2: 0.0,
            theta1: vec![0.0],
            theta2: vec![0.0],
            alpha: crate::hazard::BaselineHazard::Constant { rate: alpha },
            gamma: crate::hazard::BaselineHazard::Constant { rate: gamma },
        };
        let x = vec![false, false];
        let l = Covariates::zeros(2, 1);
        let t = 0.4;
        let exact = two_person_marginal(alpha, gamma, t);
        let mut errs = Vec::new();
        for steps in [10usize, 20, 40] {
            let grid = Grid {
                dt: t / steps as f64,
                steps,
            };
            let model = DiscreteModel::new(&p, &x, &l, grid)?;
            let pmf = enumerate_joint(&model)?;
            let mut marginal = 0.0;
            for (digits, prob) in pmf.entries() {
                if digits[0] >= 1 {
                    marginal += prob;
                }
            }
            errs.push((marginal - exact).abs());
        }
        let worst_ratio = (errs[1] / errs[0]).max(errs[2] / errs[1]);
        report.record(
            "refinement_marginal_halving",
            "n2_constant",
            worst_ratio,
            0.55,
        );
    }

    // Off-grid controlled history: the snapped source time converges to the
    // continuous one, so the discrete controlled outcome approaches the
    // continuous reference (within 0.01 by dt = 0.01).
    {
        let case = &suite_cases()[1];
        let tau = 0.1249;
        let t = 0.4;
        let mut errs = Vec::new();
        for steps in [10usize, 20, 40] {
            let dt = t / steps as f64;
            let grid = Grid { dt, steps };
            let model = DiscreteModel::new(&case.params, &case.x, &case.l, grid)?;
            let mut h = vec![0u16; case.x.len()];
            h[1] = (tau / dt).ceil() as u16;
            let disc = discrete_controlled(&model, 0, &h, steps);
            let cont_h = InfectionHistory::from_events([(1usize, tau)])?;
            let reference =
                continuous_reference(t, 0, &case.x, &cont_h, &case.l, &case.params, fault)?;
            errs.push((disc - reference).abs());
        }
        let decreasing = errs[2] <= errs[1] * 1.05 && errs[1] <= errs[0] * 1.05;
        report.record(
            "offgrid_history_convergence",
            "n3_constant_mixed",
            if decreasing { errs[2] } else { f64::INFINITY },
            0.01,
        );
    }

    Ok(report)
}
