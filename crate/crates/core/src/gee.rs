//! GEE1 for clustered binary outcomes: logit link, exchangeable working
//! correlation estimated by moment updates, robust (sandwich) covariance
//! reported alongside the coefficients.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// One cluster's regression block.
#[derive(Debug, Clone)]
pub struct GeeCluster {
    /// Binary outcomes, one per individual.
    pub y: Vec<f64>,
    /// Regressor rows, one per individual (include the intercept column).
    pub z: Vec<Vec<f64>>,
}

/// Working correlation structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkingCorrelation {
    Independence,
    Exchangeable,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeeFit {
    pub coefficients: Vec<f64>,
    /// Estimated exchangeable working correlation (0 under independence).
    pub working_correlation: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Robust (sandwich) covariance of the coefficients; reported only.
    pub robust_covariance: Vec<Vec<f64>>,
}

fn expit(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Inverse of the exchangeable correlation matrix `(1 - r) I + r J` of size
/// `n`, in closed form.
fn exchangeable_inverse(n: usize, r: f64) -> DMatrix<f64> {
    let denom = 1.0 + (n as f64 - 1.0) * r;
    let off = -r / ((1.0 - r) * denom);
    let diag = (1.0 + (n as f64 - 2.0) * r) / ((1.0 - r) * denom);
    DMatrix::from_fn(n, n, |i, j| if i == j { diag } else { off })
}

/// Fits the marginal logistic model `logit P(Y = 1) = z . beta` by
/// iteratively reweighted estimating equations.
///
/// Converges when the coefficient max-change drops below `1e-8`, capped at
/// 100 iterations. All-equal outcomes or a singular weight matrix are
/// reported as flagged failures.
pub fn gee_fit(clusters: &[GeeCluster], working: WorkingCorrelation) -> Result<GeeFit> {
    if clusters.len() < 2 {
        return Err(Error::GeeFailure("need at least 2 clusters".into()));
    }
    let p = clusters
        .first()
        .and_then(|c| c.z.first())
        .map(Vec::len)
        .ok_or_else(|| Error::GeeFailure("empty design matrix".into()))?;
    let total: usize = clusters.iter().map(|c| c.y.len()).sum();
    let events: f64 = clusters.iter().map(|c| c.y.iter().sum::<f64>()).sum();
    if events == 0.0 || events == total as f64 {
        return Err(Error::GeeFailure(format!(
            "separation: all outcomes equal ({events} events of {total})"
        )));
    }
    for c in clusters {
        if c.y.len() != c.z.len() || c.z.iter().any(|row| row.len() != p) {
            return Err(Error::GeeFailure("ragged cluster block".into()));
        }
    }

    let mut beta = DVector::<f64>::zeros(p);
    let mut rho = 0.0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < 100 {
        iterations += 1;

        // Moment update of the working correlation.
        if working == WorkingCorrelation::Exchangeable {
            let mut sum_sq = 0.0;
            let mut sum_cross = 0.0;
            let mut n_resid = 0.0;
            let mut n_pairs = 0.0;
            for c in clusters {
                let resid: Vec<f64> =
                    c.y.iter()
                        .zip(&c.z)
                        .map(|(&y, z)| {
                            let mu = expit(dot(z, beta.as_slice()));
                            (y - mu) / (mu * (1.0 - mu)).sqrt()
                        })
                        .collect();
                for (a, &ra) in resid.iter().enumerate() {
                    sum_sq += ra * ra;
                    n_resid += 1.0;
                    for &rb in resid.iter().skip(a + 1) {
                        sum_cross += ra * rb;
                        n_pairs += 1.0;
                    }
                }
            }
            let phi = sum_sq / (n_resid - p as f64);
            if n_pairs > p as f64 {
                rho = (sum_cross / (n_pairs - p as f64)) / phi;
            }
            // Keep the working matrix invertible.
            rho = rho.clamp(-0.99, 0.99);
        }

        // One Fisher-scoring step of the estimating equations.
        let mut lhs = DMatrix::<f64>::zeros(p, p);
        let mut rhs = DVector::<f64>::zeros(p);
        for c in clusters {
            let (bread, a_half, z, resid_std) = cluster_blocks(c, beta.as_slice(), working, rho);
            rhs += &bread * resid_std;
            lhs += bread * a_half * z;
        }
        let Some(step) = lhs.lu().solve(&rhs) else {
            return Err(Error::GeeFailure("singular weight matrix".into()));
        };
        beta += &step;
        if step.amax() < 1e-8 {
            converged = true;
            break;
        }
    }

    // Sandwich covariance: A^{-1} B A^{-1}.
    let mut bread_total = DMatrix::<f64>::zeros(p, p);
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for c in clusters {
        let (bread, a_half, z, resid_std) = cluster_blocks(c, beta.as_slice(), working, rho);
        let score = &bread * resid_std;
        meat += &score * score.transpose();
        bread_total += bread * a_half * z;
    }
    let robust = bread_total
        .clone()
        .lu()
        .solve(&meat)
        .and_then(|half| {
            bread_total
                .transpose()
                .lu()
                .solve(&half.transpose())
                .map(|m| m.transpose())
        })
        .unwrap_or_else(|| DMatrix::zeros(p, p));

    Ok(GeeFit {
        coefficients: beta.as_slice().to_vec(),
        working_correlation: rho,
        iterations,
        converged,
        robust_covariance: (0..p)
            .map(|i| (0..p).map(|j| robust[(i, j)]).collect())
            .collect(),
    })
}

/// Per-cluster pieces of the estimating equation at `beta`:
/// `(Z' A^{1/2} R^{-1}, A^{1/2}, Z, A^{-1/2}(y - mu))`.
fn cluster_blocks(
    c: &GeeCluster,
    beta: &[f64],
    working: WorkingCorrelation,
    rho: f64,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let n = c.y.len();
    let p = c.z[0].len();
    let mu: Vec<f64> = c.z.iter().map(|z| expit(dot(z, beta))).collect();
    let w: Vec<f64> = mu.iter().map(|&m| (m * (1.0 - m)).sqrt()).collect();
    let r_inv = match working {
        WorkingCorrelation::Independence => DMatrix::identity(n, n),
        WorkingCorrelation::Exchangeable => exchangeable_inverse(n, rho),
    };
    let z = DMatrix::from_fn(n, p, |i, j| c.z[i][j]);
    let a_half = DMatrix::from_diagonal(&DVector::from_vec(w.clone()));
    let bread = z.transpose() * &a_half * r_inv;
    let resid_std = DVector::from_fn(n, |i, _| (c.y[i] - mu[i]) / w[i]);
    (bread, a_half, z, resid_std)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl GeeFit {
    /// Predicted probability for a regressor row.
    pub fn predict(&self, z: &[f64]) -> f64 {
        expit(dot(z, &self.coefficients))
    }
}
