//! The pairwise Cox-type transmission hazard model: baseline hazard families
//! with exact antiderivatives, per-individual hazard evaluation, piecewise
//! integration, and cumulative-hazard inversion for event sampling.
//!
//! A susceptible individual `i` experiences
//!
//! ```text
//! lambda_i(t) = exp(b1 x_i + th1 . l_i) *
//!     ( alpha(t) + sum_{j infected, t_j < t} gamma(t - t_j) exp(b2 x_j + th2 . l_j) )
//! ```
//!
//! where `alpha` is the external baseline hazard and `gamma` the internal
//! (pairwise) baseline hazard measured since the source's infection. All
//! times are in years.

use serde::{Deserialize, Serialize};

use crate::cohort::{Covariates, InfectionHistory};
use crate::error::{Error, Result};

use std::f64::consts::PI;

/// Baseline hazard families. Each carries an exact antiderivative, so all
/// cumulative hazards in the crate are closed-form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum BaselineHazard {
    /// `h(s) = rate`.
    Constant { rate: f64 },
    /// `h(s) = scale * exp(-decay * s)`.
    ExpDecay { scale: f64, decay: f64 },
    /// `h(s) = amplitude * (1 + sin(2 pi s + phase))`, nonnegative by form.
    Seasonal { amplitude: f64, phase: f64 },
}

impl BaselineHazard {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            BaselineHazard::Constant { rate } => rate >= 0.0 && rate.is_finite(),
            BaselineHazard::ExpDecay { scale, decay } => {
                scale >= 0.0 && decay >= 0.0 && scale.is_finite() && decay.is_finite()
            }
            BaselineHazard::Seasonal { amplitude, phase } => {
                amplitude >= 0.0 && amplitude.is_finite() && phase.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(
                "baseline_hazard",
                format!("nonnegative finite parameters required, got {self:?}"),
            ))
        }
    }

    /// Hazard value at elapsed time `s >= 0`.
    pub fn value(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::NegativeTime(s));
        }
        Ok(match *self {
            BaselineHazard::Constant { rate } => rate,
            BaselineHazard::ExpDecay { scale, decay } => scale * (-decay * s).exp(),
            BaselineHazard::Seasonal { amplitude, phase } => {
                amplitude * (1.0 + (2.0 * PI * s + phase).sin())
            }
        })
    }

    /// Exact integral over `[a, b]`, `0 <= a <= b`.
    pub fn cumulative(&self, a: f64, b: f64) -> Result<f64> {
        if a < 0.0 {
            return Err(Error::NegativeTime(a));
        }
        if a > b {
            return Err(Error::ReversedInterval { start: a, end: b });
        }
        Ok(match *self {
            BaselineHazard::Constant { rate } => rate * (b - a),
            BaselineHazard::ExpDecay { scale, decay } => {
                if decay == 0.0 {
                    scale * (b - a)
                } else {
                    scale / decay * ((-decay * a).exp() - (-decay * b).exp())
                }
            }
            BaselineHazard::Seasonal { amplitude, phase } => {
                let anti =
                    |t: f64| amplitude * t - amplitude / (2.0 * PI) * (2.0 * PI * t + phase).cos();
                anti(b) - anti(a)
            }
        })
    }

    /// Total remaining mass on `[a, infinity)`; `None` means infinite.
    fn tail_mass(&self, a: f64) -> Option<f64> {
        match *self {
            BaselineHazard::Constant { rate } => (rate == 0.0).then_some(0.0),
            BaselineHazard::ExpDecay { scale, decay } => {
                if scale == 0.0 {
                    Some(0.0)
                } else if decay > 0.0 {
                    Some(scale / decay * (-decay * a).exp())
                } else {
                    None
                }
            }
            BaselineHazard::Seasonal { amplitude, .. } => (amplitude == 0.0).then_some(0.0),
        }
    }
}

/// Coefficients and baselines of the transmission hazard model.
///
/// `beta1` scales an individual's own susceptibility, `beta2` a source's
/// infectiousness; `theta1`/`theta2` are the matching covariate coefficients
/// (equal dimension `d >= 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta1: f64,
    pub beta2: f64,
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    /// External baseline hazard `alpha(t)`.
    pub alpha: BaselineHazard,
    /// Internal baseline hazard `gamma(s)`, `s` elapsed since the source's
    /// infection.
    pub gamma: BaselineHazard,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        self.alpha.validate()?;
        self.gamma.validate()?;
        if self.theta1.len() != self.theta2.len() || self.theta1.is_empty() {
            return Err(Error::DimensionMismatch {
                context: "theta coefficients",
                expected: self.theta1.len().max(1),
                actual: self.theta2.len(),
            });
        }
        let finite = self.beta1.is_finite()
            && self.beta2.is_finite()
            && self.theta1.iter().all(|v| v.is_finite())
            && self.theta2.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("params", "all coefficients must be finite"));
        }
        Ok(())
    }

    pub fn covariate_dim(&self) -> usize {
        self.theta1.len()
    }

    /// `exp(beta1 x_i + theta1 . l_i)`.
    pub fn susceptibility_factor(&self, x_i: bool, l_i: &[f64]) -> f64 {
        let mut eta = if x_i { self.beta1 } else { 0.0 };
        for (th, l) in self.theta1.iter().zip(l_i) {
            eta += th * l;
        }
        eta.exp()
    }

    /// `exp(beta2 x_j + theta2 . l_j)`.
    pub fn source_factor(&self, x_j: bool, l_j: &[f64]) -> f64 {
        let mut zeta = if x_j { self.beta2 } else { 0.0 };
        for (th, l) in self.theta2.iter().zip(l_j) {
            zeta += th * l;
        }
        zeta.exp()
    }
}

fn check_dims(i: usize, x: &[bool], l: &Covariates, p: &ModelParams) -> Result<()> {
    if l.dim() != p.covariate_dim() {
        return Err(Error::DimensionMismatch {
            context: "covariate dimension",
            expected: p.covariate_dim(),
            actual: l.dim(),
        });
    }
    if i >= x.len() || x.len() != l.n() {
        return Err(Error::DimensionMismatch {
            context: "treatment vector",
            expected: l.n(),
            actual: x.len(),
        });
    }
    Ok(())
}

/// The infection hazard of susceptible individual `i` at time `t`, given the
/// infection history of the others. Piecewise continuous, jumping only at
/// source infection times (a source infected at `t_j` is active for
/// `t > t_j`).
pub fn individual_hazard(
    t: f64,
    i: usize,
    x: &[bool],
    l: &Covariates,
    hist: &InfectionHistory,
    p: &ModelParams,
) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    check_dims(i, x, l, p)?;
    if let Some(t_i) = hist.infection_time(i) {
        if t_i <= t {
            return Err(Error::AlreadyInfected {
                individual: i,
                time: t_i,
            });
        }
    }
    let mut total = p.alpha.value(t)?;
    for e in hist.events() {
        if e.individual != i && e.time < t {
            total +=
                p.gamma.value(t - e.time)? * p.source_factor(x[e.individual], l.row(e.individual));
        }
    }
    Ok(p.susceptibility_factor(x[i], l.row(i)) * total)
}

/// Exact integral of [`individual_hazard`] over `[a, b]`.
///
/// Each source term integrates in its own elapsed-time coordinate, so the
/// result is a sum of closed-form baseline integrals; no quadrature.
pub fn individual_cumulative_hazard(
    a: f64,
    b: f64,
    i: usize,
    x: &[bool],
    l: &Covariates,
    hist: &InfectionHistory,
    p: &ModelParams,
) -> Result<f64> {
    if a < 0.0 {
        return Err(Error::NegativeTime(a));
    }
    if a > b {
        return Err(Error::ReversedInterval { start: a, end: b });
    }
    check_dims(i, x, l, p)?;
    if let Some(t_i) = hist.infection_time(i) {
        if t_i < b {
            return Err(Error::AlreadyInfected {
                individual: i,
                time: t_i,
            });
        }
    }
    let mut total = p.alpha.cumulative(a, b)?;
    for e in hist.events() {
        if e.individual == i || e.time >= b {
            continue;
        }
        let from = (a - e.time).max(0.0);
        total += p.gamma.cumulative(from, b - e.time)?
            * p.source_factor(x[e.individual], l.row(e.individual));
    }
    Ok(p.susceptibility_factor(x[i], l.row(i)) * total)
}

/// Absolute time tolerance of [`invert_cumulative_hazard`].
pub const INVERSION_TIME_TOL: f64 = 1e-11;

/// Smallest `s >= 0` with cumulative hazard of `i` over `[from, from + s]`
/// equal to `target`, or `None` if the total remaining mass falls short
/// (possible only when the external hazard vanishes).
///
/// The cumulative hazard is piecewise smooth with knots at source infection
/// times; the containing segment is located by its exact mass and the root
/// is then bisected to [`INVERSION_TIME_TOL`].
pub fn invert_cumulative_hazard(
    from: f64,
    target: f64,
    i: usize,
    x: &[bool],
    l: &Covariates,
    hist: &InfectionHistory,
    p: &ModelParams,
) -> Result<Option<f64>> {
    if target < 0.0 {
        return Err(Error::NegativeTarget(target));
    }
    if from < 0.0 {
        return Err(Error::NegativeTime(from));
    }
    if target == 0.0 {
        return Ok(Some(0.0));
    }
    check_dims(i, x, l, p)?;

    let cum = |b: f64| individual_cumulative_hazard(from, b, i, x, l, hist, p);

    // Knots: source infection times after `from` (hazard jumps there).
    let mut knots: Vec<f64> = hist
        .events()
        .iter()
        .filter(|e| e.individual != i && e.time > from)
        .map(|e| e.time)
        .collect();
    knots.sort_by(f64::total_cmp);

    let mut seg_start = from;
    let mut consumed = 0.0;
    for knot in knots {
        let mass = cum(knot)?;
        if mass >= target {
            return Ok(Some(bisect(seg_start, knot, target, &cum)? - from));
        }
        consumed = mass;
        seg_start = knot;
    }

    // Final open-ended segment: compare against the total remaining mass.
    if let Some(total) = total_tail_mass(seg_start, i, x, l, hist, p)? {
        if consumed + total < target {
            return Ok(None);
        }
    }
    // Bracket by doubling, then bisect.
    let mut step = 1.0f64.max(seg_start * 0.5);
    let mut hi = seg_start + step;
    while cum(hi)? < target {
        step *= 2.0;
        hi = seg_start + step;
        if step > 1e12 {
            return Ok(None);
        }
    }
    Ok(Some(bisect(seg_start, hi, target, &cum)? - from))
}

/// Mass of `i`'s hazard on `[a, infinity)` given a fixed history; `None`
/// means infinite.
fn total_tail_mass(
    a: f64,
    i: usize,
    x: &[bool],
    l: &Covariates,
    hist: &InfectionHistory,
    p: &ModelParams,
) -> Result<Option<f64>> {
    let Some(alpha_tail) = p.alpha.tail_mass(a) else {
        return Ok(None);
    };
    let mut total = alpha_tail;
    for e in hist.events() {
        if e.individual == i {
            continue;
        }
        match p.gamma.tail_mass((a - e.time).max(0.0)) {
            Some(m) => total += m * p.source_factor(x[e.individual], l.row(e.individual)),
            None => return Ok(None),
        }
    }
    Ok(Some(total * p.susceptibility_factor(x[i], l.row(i))))
}

fn bisect(mut lo: f64, mut hi: f64, target: f64, cum: &impl Fn(f64) -> Result<f64>) -> Result<f64> {
    while hi - lo > INVERSION_TIME_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cum(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
