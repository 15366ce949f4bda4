//! Classical attack-risk contrasts: the direct effect under each allocation
//! scheme, the relative-incidence vaccine effect, the two-stage indirect
//! effect, and GEE-adjusted observational versions.
//!
//! Point estimates are ratios of integer counts, so they are exactly
//! invariant to cluster ordering and individual relabeling. Standard errors
//! treat clusters as the independent units (delta method on per-cluster
//! aggregates).

use crate::cohort::{Allocation, ClusterData};
use crate::error::{Error, Result};
use crate::gee::{gee_fit, GeeCluster, GeeFit, WorkingCorrelation};

/// An effect estimate with its cluster-level standard error.
#[derive(Debug, Clone, Copy)]
pub struct EffectEstimate {
    pub value: f64,
    pub se: f64,
}

fn check_time(data: &[ClusterData], t: f64) -> Result<()> {
    if let Some(c) = data.iter().find(|c| t > c.t_obs) {
        return Err(Error::Contract(format!(
            "analysis time {t} exceeds the censoring time {} of a cluster",
            c.t_obs
        )));
    }
    Ok(())
}

/// Empirical fraction infected by `t` among the selected individuals;
/// `None` when the selection is empty (undefined, not zero).
pub fn attack_risk(
    data: &[ClusterData],
    t: f64,
    select: impl Fn(&ClusterData, usize) -> bool,
) -> Result<Option<f64>> {
    check_time(data, t)?;
    let mut events = 0u64;
    let mut size = 0u64;
    for c in data {
        for i in 0..c.n {
            if select(c, i) {
                size += 1;
                events += u64::from(c.infected_by(i, t));
            }
        }
    }
    Ok((size > 0).then(|| events as f64 / size as f64))
}

/// How the direct effect pairs its comparison groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeComparison {
    /// Treated vs untreated individuals, marginally over clusters.
    Marginal,
    /// Treated vs untreated within clusters where exactly half are treated.
    WithinHalfTreatedClusters,
    /// Individuals in all-treated clusters vs all-untreated clusters.
    BetweenClusters,
}

impl DeComparison {
    pub fn for_allocation(allocation: &Allocation) -> Self {
        match allocation {
            Allocation::Block { .. } => DeComparison::WithinHalfTreatedClusters,
            Allocation::ClusterLevel { .. } => DeComparison::BetweenClusters,
            _ => DeComparison::Marginal,
        }
    }
}

/// Per-cluster aggregate `[events_a, size_a, events_b, size_b]` feeding the
/// ratio-difference delta method.
fn contrast_units(
    data: &[ClusterData],
    t: f64,
    mut classify: impl FnMut(&ClusterData, usize) -> Option<bool>,
) -> Vec<[f64; 4]> {
    let mut units = Vec::with_capacity(data.len());
    for c in data {
        let mut u = [0.0; 4];
        let mut any = false;
        for i in 0..c.n {
            let Some(arm_a) = classify(c, i) else {
                continue;
            };
            any = true;
            let offset = if arm_a { 0 } else { 2 };
            u[offset] += f64::from(c.infected_by(i, t));
            u[offset + 1] += 1.0;
        }
        if any {
            units.push(u);
        }
    }
    units
}

/// `mean(events_a)/mean(size_a) - mean(events_b)/mean(size_b)` with a
/// delta-method standard error over the cluster units.
fn ratio_difference(units: &[[f64; 4]]) -> Option<EffectEstimate> {
    let r = units.len() as f64;
    if units.is_empty() {
        return None;
    }
    let mut mean = [0.0; 4];
    for u in units {
        for k in 0..4 {
            mean[k] += u[k];
        }
    }
    for m in &mut mean {
        *m /= r;
    }
    if mean[1] == 0.0 || mean[3] == 0.0 {
        return None;
    }
    let value = mean[0] / mean[1] - mean[2] / mean[3];
    let grad = [
        1.0 / mean[1],
        -mean[0] / (mean[1] * mean[1]),
        -1.0 / mean[3],
        mean[2] / (mean[3] * mean[3]),
    ];
    let mut var = 0.0;
    if units.len() > 1 {
        let mut cov = [[0.0; 4]; 4];
        for u in units {
            for a in 0..4 {
                for b in 0..4 {
                    cov[a][b] += (u[a] - mean[a]) * (u[b] - mean[b]);
                }
            }
        }
        for a in 0..4 {
            for b in 0..4 {
                var += grad[a] * cov[a][b] / (r - 1.0) * grad[b];
            }
        }
        var /= r;
    }
    Some(EffectEstimate {
        value,
        se: var.max(0.0).sqrt(),
    })
}

fn half_treated(c: &ClusterData) -> bool {
    2 * c.x.iter().filter(|&&x| x).count() == c.n
}

/// Direct effect `AR_1(t) - AR_0(t)` over the comparison sets implied by the
/// design; `None` when either comparison set is empty.
pub fn direct_effect(
    data: &[ClusterData],
    comparison: DeComparison,
    t: f64,
) -> Result<Option<EffectEstimate>> {
    check_time(data, t)?;
    let units = match comparison {
        DeComparison::Marginal => contrast_units(data, t, |c, i| Some(c.x[i])),
        DeComparison::WithinHalfTreatedClusters => {
            contrast_units(data, t, |c, i| half_treated(c).then_some(c.x[i]))
        }
        DeComparison::BetweenClusters => contrast_units(data, t, |c, _i| {
            let treated = c.x.iter().filter(|&&x| x).count();
            if treated == c.n {
                Some(true)
            } else if treated == 0 {
                Some(false)
            } else {
                None
            }
        }),
    };
    let has_both = units.iter().any(|u| u[1] > 0.0) && units.iter().any(|u| u[3] > 0.0);
    Ok(if has_both {
        ratio_difference(&units)
    } else {
        None
    })
}

/// `VE_AR(t) = 1 - AR_1(t) / AR_0(t)` over the marginal comparison;
/// `None` when undefined (empty arm or `AR_0 = 0`).
pub fn ve_ar(data: &[ClusterData], t: f64) -> Result<Option<f64>> {
    let ar1 = attack_risk(data, t, |c, i| c.x[i])?;
    let ar0 = attack_risk(data, t, |c, i| !c.x[i])?;
    Ok(match (ar1, ar0) {
        (Some(a1), Some(a0)) if a0 > 0.0 => Some(1.0 - a1 / a0),
        _ => None,
    })
}

/// Indirect effect under the two-stage design: mean outcome of untreated
/// individuals in high-coverage clusters minus the mean outcome in
/// zero-coverage clusters. `None` when either coverage arm is missing.
pub fn indirect_effect(
    data: &[ClusterData],
    high_coverage: f64,
    t: f64,
) -> Result<Option<EffectEstimate>> {
    check_time(data, t)?;
    let units = contrast_units(data, t, |c, i| {
        let treated = c.x.iter().filter(|&&x| x).count();
        let high = (high_coverage * c.n as f64).round() as usize;
        if treated == high && high > 0 {
            (!c.x[i]).then_some(true)
        } else if treated == 0 {
            Some(false)
        } else {
            None
        }
    });
    let has_both = units.iter().any(|u| u[1] > 0.0) && units.iter().any(|u| u[3] > 0.0);
    Ok(if has_both {
        ratio_difference(&units)
    } else {
        None
    })
}

/// GEE regression data at analysis time `t`. The mean model regresses the
/// infection indicator on the intercept, own treatment, own covariates, and
/// (for the indirect-effect variant) the count of treated others.
fn gee_clusters(data: &[ClusterData], t: f64, with_neighbor_count: bool) -> Vec<GeeCluster> {
    data.iter()
        .map(|c| {
            let treated = c.x.iter().filter(|&&x| x).count();
            let y: Vec<f64> = (0..c.n).map(|i| f64::from(c.infected_by(i, t))).collect();
            let z: Vec<Vec<f64>> = (0..c.n)
                .map(|i| {
                    let mut row = vec![1.0, f64::from(c.x[i])];
                    row.extend_from_slice(c.l.row(i));
                    if with_neighbor_count {
                        row.push((treated - usize::from(c.x[i])) as f64);
                    }
                    row
                })
                .collect();
            GeeCluster { y, z }
        })
        .collect()
}

/// GEE-adjusted effects for observational data: average predicted-probability
/// contrasts over the observed individuals.
///
/// The direct effect sets own treatment 1 vs 0 at observed covariates. The
/// indirect effect contrasts the treated-neighbor count at `n/2` vs 0 with
/// own treatment fixed at 0.
///
/// Point estimates come from the independence-weighted solve of the
/// estimating equations: its logistic score equations keep the fitted means
/// calibrated against the regressors even when the marginal mean model is
/// misspecified (as it is under transmission), which is what makes the
/// predicted-probability contrast a faithful adjusted risk difference.
/// The exchangeable-working fit is estimated alongside and carried for its
/// working correlation and robust (sandwich) covariance, which are reported
/// but never enter the point estimates.
pub struct AdjustedEffects {
    pub direct: f64,
    pub indirect: f64,
    /// Independence-weighted fits whose coefficients drive the contrasts.
    pub de_fit: GeeFit,
    pub ide_fit: GeeFit,
    /// Exchangeable-working fits, reported for the estimated within-cluster
    /// correlation and the sandwich covariance.
    pub de_fit_exchangeable: GeeFit,
    pub ide_fit_exchangeable: GeeFit,
}

pub fn adjusted_effects_obs(data: &[ClusterData], t: f64) -> Result<AdjustedEffects> {
    check_time(data, t)?;
    let de_blocks = gee_clusters(data, t, false);
    let ide_blocks = gee_clusters(data, t, true);
    let de_fit = gee_fit(&de_blocks, WorkingCorrelation::Independence)?;
    let ide_fit = gee_fit(&ide_blocks, WorkingCorrelation::Independence)?;
    let de_fit_exchangeable = gee_fit(&de_blocks, WorkingCorrelation::Exchangeable)?;
    let ide_fit_exchangeable = gee_fit(&ide_blocks, WorkingCorrelation::Exchangeable)?;

    let mut de_sum = 0.0;
    let mut ide_sum = 0.0;
    let mut count = 0.0;
    for c in data {
        let half = c.n as f64 / 2.0;
        for i in 0..c.n {
            let mut row1 = vec![1.0, 1.0];
            row1.extend_from_slice(c.l.row(i));
            let mut row0 = vec![1.0, 0.0];
            row0.extend_from_slice(c.l.row(i));
            de_sum += de_fit.predict(&row1) - de_fit.predict(&row0);

            let mut half_row = vec![1.0, 0.0];
            half_row.extend_from_slice(c.l.row(i));
            half_row.push(half);
            let mut zero_row = vec![1.0, 0.0];
            zero_row.extend_from_slice(c.l.row(i));
            zero_row.push(0.0);
            ide_sum += ide_fit.predict(&half_row) - ide_fit.predict(&zero_row);
            count += 1.0;
        }
    }
    Ok(AdjustedEffects {
        direct: de_sum / count,
        indirect: ide_sum / count,
        de_fit,
        ide_fit,
        de_fit_exchangeable,
        ide_fit_exchangeable,
    })
}
