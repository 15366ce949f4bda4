//! Domain types for clusters: infection histories, observed data, and the
//! treatment / covariate generating designs.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-individual covariate rows for one cluster (`n x d`, row major).
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl Covariates {
    pub fn zeros(n: usize, d: usize) -> Self {
        Covariates {
            n,
            d,
            data: vec![0.0; n * d],
        }
    }

    /// Single-covariate convenience constructor (d = 1).
    pub fn from_column(values: Vec<f64>) -> Self {
        Covariates {
            n: values.len(),
            d: 1,
            data: values,
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(1, Vec::len);
        let mut data = Vec::with_capacity(n * d);
        for row in &rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "covariate rows",
                    expected: d,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Covariates { n, d, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

/// One infection event inside a cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfectionEvent {
    pub individual: usize,
    pub time: f64,
}

/// Ordered infection times of (a subset of) one cluster.
///
/// Times are strictly positive and strictly increasing; individuals without
/// an event are uninfected. Exact ties are forbidden: they are measure zero
/// under the continuous-time model, and the simulator nudges any
/// floating-point collision by one ulp instead (see
/// [`InfectionHistory::push_nudged`]).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InfectionHistory {
    events: Vec<InfectionEvent>,
}

impl InfectionHistory {
    pub fn new() -> Self {
        InfectionHistory { events: Vec::new() }
    }

    pub fn from_events(events: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut h = InfectionHistory::new();
        for (individual, time) in events {
            h.push(individual, time)?;
        }
        Ok(h)
    }

    /// Appends an event; `time` must exceed the last recorded time.
    pub fn push(&mut self, individual: usize, time: f64) -> Result<()> {
        if self.events.iter().any(|e| e.individual == individual) {
            return Err(Error::DuplicateEvent { individual });
        }
        let last = self.events.last().map_or(0.0, |e| e.time);
        if !time.is_finite() || time <= last {
            return Err(Error::UnorderedHistory {
                index: self.events.len(),
                time,
            });
        }
        self.events.push(InfectionEvent { individual, time });
        Ok(())
    }

    /// Appends an event, nudging the time up by one ulp if it collides with
    /// the previous event. Returns the recorded time and whether a nudge
    /// happened.
    pub fn push_nudged(&mut self, individual: usize, time: f64) -> Result<(f64, bool)> {
        let last = self.events.last().map_or(0.0, |e| e.time);
        let (t, nudged) = if time == last {
            (last.next_up(), true)
        } else {
            (time, false)
        };
        self.push(individual, t)?;
        Ok((t, nudged))
    }

    pub fn events(&self) -> &[InfectionEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn infection_time(&self, individual: usize) -> Option<f64> {
        self.events
            .iter()
            .find(|e| e.individual == individual)
            .map(|e| e.time)
    }

    pub fn contains(&self, individual: usize) -> bool {
        self.infection_time(individual).is_some()
    }

    /// The view `h_(i)`: this history with any event of `individual` dropped.
    pub fn excluding(&self, individual: usize) -> InfectionHistory {
        InfectionHistory {
            events: self
                .events
                .iter()
                .copied()
                .filter(|e| e.individual != individual)
                .collect(),
        }
    }

    /// Reinserts an event, keeping time order. Inverse of [`Self::excluding`].
    pub fn with_event(&self, individual: usize, time: f64) -> Result<InfectionHistory> {
        let mut events: Vec<(usize, f64)> =
            self.events.iter().map(|e| (e.individual, e.time)).collect();
        let pos = events.partition_point(|&(_, t)| t < time);
        events.insert(pos, (individual, time));
        InfectionHistory::from_events(events)
    }

    /// Ordered infection times `t_(i)^1 <= t_(i)^2 <= ...` of everyone but
    /// `individual`.
    pub fn ordered_times_excluding(&self, individual: usize) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.individual != individual)
            .map(|e| e.time)
            .collect()
    }

    /// The ordering map `phi_i^k`: identity of the k-th infected individual
    /// among everyone but `individual` (0-based k).
    pub fn source_order_excluding(&self, individual: usize) -> Vec<usize> {
        self.events
            .iter()
            .filter(|e| e.individual != individual)
            .map(|e| e.individual)
            .collect()
    }
}

/// Observed data for one cluster: treatments, covariates, and censored event
/// times under administrative censoring at `t_obs`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterData {
    pub n: usize,
    /// Treatment indicators.
    pub x: Vec<bool>,
    /// Covariate rows (`n x d`).
    pub l: Covariates,
    /// `min(T_i, t_obs)` per individual.
    pub t_star: Vec<f64>,
    /// Event indicator: true = infected, false = censored.
    pub delta: Vec<bool>,
    /// Administrative censoring time.
    pub t_obs: f64,
}

impl ClusterData {
    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.n
            || self.l.n() != self.n
            || self.t_star.len() != self.n
            || self.delta.len() != self.n
        {
            return Err(Error::DimensionMismatch {
                context: "cluster fields",
                expected: self.n,
                actual: self.x.len().min(self.l.n()).min(self.t_star.len()),
            });
        }
        if self.t_obs.is_nan() || self.t_obs <= 0.0 {
            return Err(Error::config("t_obs", "must be positive"));
        }
        for i in 0..self.n {
            let t = self.t_star[i];
            if self.delta[i] {
                if !(t > 0.0 && t < self.t_obs) {
                    return Err(Error::Contract(format!(
                        "event time {t} of individual {i} must lie in (0, t_obs)"
                    )));
                }
            } else if t != self.t_obs {
                return Err(Error::Contract(format!(
                    "censored individual {i} must carry t_star = t_obs, got {t}"
                )));
            }
        }
        Ok(())
    }

    /// The realized infection history implied by `(t_star, delta)`.
    pub fn history(&self) -> Result<InfectionHistory> {
        let mut events: Vec<(usize, f64)> = (0..self.n)
            .filter(|&i| self.delta[i])
            .map(|i| (i, self.t_star[i]))
            .collect();
        events.sort_by(|a, b| a.1.total_cmp(&b.1));
        InfectionHistory::from_events(events)
    }

    /// Infection indicator `Y_i(t)`.
    pub fn infected_by(&self, i: usize, t: f64) -> bool {
        self.delta[i] && self.t_star[i] <= t
    }
}

/// Treatment-allocation schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Allocation {
    /// Independent fair coins per individual.
    Bernoulli { p: f64 },
    /// Exactly `fraction * n` treated, uniformly at random.
    Block { fraction: f64 },
    /// Whole cluster treated or untreated.
    ClusterLevel { p: f64 },
    /// Cluster randomized to a coverage arm, then block-randomized at that
    /// coverage.
    TwoStage {
        low_coverage: f64,
        high_coverage: f64,
        arm_prob: f64,
    },
    /// `X_i ~ Bernoulli(1 / (1 + exp(l_i1)))` independently given covariates.
    Observational,
}

impl Allocation {
    pub fn bernoulli() -> Self {
        Allocation::Bernoulli { p: 0.5 }
    }

    pub fn block() -> Self {
        Allocation::Block { fraction: 0.5 }
    }

    pub fn cluster_level() -> Self {
        Allocation::ClusterLevel { p: 0.5 }
    }

    pub fn two_stage() -> Self {
        Allocation::TwoStage {
            low_coverage: 0.0,
            high_coverage: 0.5,
            arm_prob: 0.5,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Allocation::Bernoulli { .. } => "bernoulli",
            Allocation::Block { .. } => "block",
            Allocation::ClusterLevel { .. } => "cluster",
            Allocation::TwoStage { .. } => "two_stage",
            Allocation::Observational => "observational",
        }
    }
}

/// Exchangeable-normal covariate model: mean 0, covariance
/// `v * ((1 - rho) I + rho J)` across cluster members, i.i.d. across the `d`
/// covariate dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateModel {
    pub rho: f64,
    pub variance: f64,
    #[serde(default = "CovariateModel::default_dim")]
    pub dim: usize,
}

impl CovariateModel {
    fn default_dim() -> usize {
        1
    }

    pub fn new(rho: f64, variance: f64) -> Self {
        CovariateModel {
            rho,
            variance,
            dim: 1,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let lower = if n > 1 { -1.0 / (n as f64 - 1.0) } else { -1.0 };
        if self.rho.is_nan() || self.rho <= lower || self.rho >= 1.0 {
            return Err(Error::config(
                "covariates.rho",
                format!(
                    "must lie in ({lower}, 1) for cluster size {n}, got {}",
                    self.rho
                ),
            ));
        }
        if self.variance.is_nan() || self.variance <= 0.0 {
            return Err(Error::config("covariates.variance", "must be positive"));
        }
        if self.dim == 0 {
            return Err(Error::config("covariates.dim", "must be at least 1"));
        }
        Ok(())
    }
}

/// A treatment design: allocation scheme plus covariate model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub allocation: Allocation,
    pub covariates: CovariateModel,
}

impl Design {
    pub fn validate(&self, n: usize) -> Result<()> {
        self.covariates.validate(n)?;
        match self.allocation {
            Allocation::Bernoulli { p } | Allocation::ClusterLevel { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::config("allocation.p", "must lie in [0, 1]"));
                }
            }
            Allocation::Block { fraction } => {
                check_integral_coverage("allocation.fraction", fraction, n)?;
            }
            Allocation::TwoStage {
                low_coverage,
                high_coverage,
                arm_prob,
            } => {
                check_integral_coverage("allocation.low_coverage", low_coverage, n)?;
                check_integral_coverage("allocation.high_coverage", high_coverage, n)?;
                if !(0.0..=1.0).contains(&arm_prob) {
                    return Err(Error::config("allocation.arm_prob", "must lie in [0, 1]"));
                }
            }
            Allocation::Observational => {}
        }
        Ok(())
    }
}

fn check_integral_coverage(field: &str, fraction: f64, n: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::config(field, "must lie in [0, 1]"));
    }
    let count = fraction * n as f64;
    if (count - count.round()).abs() > 1e-9 {
        return Err(Error::config(
            field,
            format!("coverage {fraction} times cluster size {n} must be an integer"),
        ));
    }
    Ok(())
}

/// Samples exchangeable-normal covariates via a Cholesky factor of the
/// cluster covariance, computed once per design.
#[derive(Debug, Clone)]
pub struct CovariateSampler {
    n: usize,
    dim: usize,
    chol: DMatrix<f64>,
}

impl CovariateSampler {
    pub fn new(n: usize, model: &CovariateModel) -> Result<Self> {
        model.validate(n)?;
        let sigma = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                model.variance
            } else {
                model.variance * model.rho
            }
        });
        let chol = sigma
            .cholesky()
            .ok_or_else(|| Error::config("covariates", "covariance is not positive definite"))?;
        Ok(CovariateSampler {
            n,
            dim: model.dim,
            chol: chol.unpack(),
        })
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Covariates {
        let mut data = vec![0.0; self.n * self.dim];
        for k in 0..self.dim {
            let z = DVector::from_fn(self.n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let col = &self.chol * z;
            for i in 0..self.n {
                data[i * self.dim + k] = col[i];
            }
        }
        Covariates {
            n: self.n,
            d: self.dim,
            data,
        }
    }
}

/// Draws `n` exchangeable-normal covariates with correlation `rho` and
/// variance `v` (d = 1).
pub fn draw_covariates(n: usize, rho: f64, v: f64, rng: &mut ChaCha8Rng) -> Result<Covariates> {
    let sampler = CovariateSampler::new(n, &CovariateModel::new(rho, v))?;
    Ok(sampler.sample(rng))
}

/// Assigns treatments to one cluster under `design.allocation`.
pub fn assign_treatments(
    design: &Design,
    n: usize,
    l: &Covariates,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<bool>> {
    design.validate(n)?;
    let x = match design.allocation {
        Allocation::Bernoulli { p } => (0..n).map(|_| rng.random_bool(p)).collect(),
        Allocation::Block { fraction } => {
            block_assign(n, (fraction * n as f64).round() as usize, rng)
        }
        Allocation::ClusterLevel { p } => {
            let treated = rng.random_bool(p);
            vec![treated; n]
        }
        Allocation::TwoStage {
            low_coverage,
            high_coverage,
            arm_prob,
        } => {
            let coverage = if rng.random_bool(arm_prob) {
                high_coverage
            } else {
                low_coverage
            };
            block_assign(n, (coverage * n as f64).round() as usize, rng)
        }
        Allocation::Observational => {
            if l.n() != n {
                return Err(Error::DimensionMismatch {
                    context: "observational assignment covariates",
                    expected: n,
                    actual: l.n(),
                });
            }
            (0..n)
                .map(|i| {
                    let p = 1.0 / (1.0 + l.row(i)[0].exp());
                    rng.random_bool(p)
                })
                .collect()
        }
    };
    Ok(x)
}

/// Uniformly random subset of exactly `treated` individuals.
fn block_assign(n: usize, treated: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..n).collect();
    // Partial Fisher-Yates: the first `treated` slots are a uniform subset.
    for k in 0..treated.min(n) {
        let j = rng.random_range(k..n);
        idx.swap(k, j);
    }
    let mut x = vec![false; n];
    for &i in idx.iter().take(treated) {
        x[i] = true;
    }
    x
}

/// Dataset CSV interchange: one row per individual with columns
/// `cluster_id, individual_id, x, l_1..l_d, t_star, delta, t_obs`
/// (header required, UTF-8, `.` decimal). Event times round-trip exactly
/// through the shortest-representation float format.
pub mod dataset_csv {
    use super::*;
    use std::io::{Read, Write};

    pub fn write_dataset<W: Write>(out: W, clusters: &[ClusterData]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = clusters.first().map_or(1, |c| c.l.dim());
        let mut header = vec![
            "cluster_id".to_string(),
            "individual_id".to_string(),
            "x".to_string(),
        ];
        header.extend((1..=d).map(|k| format!("l_{k}")));
        header.extend([
            "t_star".to_string(),
            "delta".to_string(),
            "t_obs".to_string(),
        ]);
        w.write_record(&header).map_err(|e| Error::Dataset {
            line: 1,
            reason: e.to_string(),
        })?;
        for (cid, c) in clusters.iter().enumerate() {
            for i in 0..c.n {
                let mut rec = vec![cid.to_string(), i.to_string(), u8::from(c.x[i]).to_string()];
                rec.extend(c.l.row(i).iter().map(|v| format!("{v}")));
                rec.push(format!("{}", c.t_star[i]));
                rec.push(u8::from(c.delta[i]).to_string());
                rec.push(format!("{}", c.t_obs));
                w.write_record(&rec).map_err(|e| Error::Dataset {
                    line: 0,
                    reason: e.to_string(),
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_dataset<R: Read>(input: R) -> Result<Vec<ClusterData>> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(input);
        let headers = reader
            .headers()
            .map_err(|e| Error::Dataset {
                line: 1,
                reason: e.to_string(),
            })?
            .clone();
        let d = headers.iter().filter(|h| h.starts_with("l_")).count();
        if d == 0 || headers.len() != 6 + d {
            return Err(Error::Dataset {
                line: 1,
                reason: format!(
                    "expected header cluster_id,individual_id,x,l_1..l_d,t_star,delta,t_obs; got {} columns",
                    headers.len()
                ),
            });
        }

        struct Row {
            cluster: usize,
            x: bool,
            l: Vec<f64>,
            t_star: f64,
            delta: bool,
            t_obs: f64,
        }
        let mut rows: Vec<Row> = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let line = idx + 2;
            let record = record.map_err(|e| Error::Dataset {
                line,
                reason: e.to_string(),
            })?;
            let field = |k: usize| -> Result<&str> {
                record.get(k).ok_or_else(|| Error::Dataset {
                    line,
                    reason: format!("missing column {k}"),
                })
            };
            let parse_f64 = |k: usize| -> Result<f64> {
                field(k)?.parse().map_err(|_| Error::Dataset {
                    line,
                    reason: format!("column `{}` is not a number", headers.get(k).unwrap_or("?")),
                })
            };
            let parse_bit = |k: usize| -> Result<bool> {
                match field(k)? {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(Error::Dataset {
                        line,
                        reason: format!(
                            "column `{}` must be 0 or 1, got `{other}`",
                            headers.get(k).unwrap_or("?")
                        ),
                    }),
                }
            };
            rows.push(Row {
                cluster: field(0)?.parse().map_err(|_| Error::Dataset {
                    line,
                    reason: "cluster_id is not an integer".into(),
                })?,
                x: parse_bit(2)?,
                l: (0..d).map(|k| parse_f64(3 + k)).collect::<Result<_>>()?,
                t_star: parse_f64(3 + d)?,
                delta: parse_bit(4 + d)?,
                t_obs: parse_f64(5 + d)?,
            });
        }

        let mut clusters = Vec::new();
        let mut start = 0;
        while start < rows.len() {
            let id = rows[start].cluster;
            let mut end = start;
            while end < rows.len() && rows[end].cluster == id {
                end += 1;
            }
            let block = &rows[start..end];
            let data = ClusterData {
                n: block.len(),
                x: block.iter().map(|r| r.x).collect(),
                l: Covariates::from_rows(block.iter().map(|r| r.l.clone()).collect())?,
                t_star: block.iter().map(|r| r.t_star).collect(),
                delta: block.iter().map(|r| r.delta).collect(),
                t_obs: block[0].t_obs,
            };
            data.validate().map_err(|e| Error::Dataset {
                line: start + 2,
                reason: format!("cluster {id}: {e}"),
            })?;
            clusters.push(data);
            start = end;
        }
        Ok(clusters)
    }
}
