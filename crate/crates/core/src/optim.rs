//! Self-contained quasi-Newton maximizer (BFGS update, backtracking Armijo
//! line search) for smooth objectives with analytic gradients.

use nalgebra::{DMatrix, DVector};

/// Termination and line-search settings.
#[derive(Debug, Clone, Copy)]
pub struct BfgsSettings {
    /// Max-norm gradient threshold for convergence.
    pub grad_tol: f64,
    pub max_iterations: usize,
    /// Armijo sufficient-increase constant.
    pub armijo_c: f64,
    pub max_backtracks: usize,
}

impl Default for BfgsSettings {
    fn default() -> Self {
        BfgsSettings {
            grad_tol: 1e-8,
            max_iterations: 200,
            armijo_c: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsReport {
    pub x: Vec<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximizes `f` from `init`, where `eval` returns `(f(x), grad f(x))`.
///
/// Non-finite objective values reject the step during the line search, so
/// the iterate stays in the admissible region. Returns the best iterate even
/// when the iteration cap is hit.
pub fn maximize(
    init: &[f64],
    settings: &BfgsSettings,
    mut eval: impl FnMut(&[f64]) -> (f64, Vec<f64>),
) -> BfgsReport {
    let dim = init.len();
    let mut x = DVector::from_column_slice(init);
    let (mut fx, g) = eval(x.as_slice());
    let mut grad = DVector::from_vec(g);
    let mut h_inv = DMatrix::<f64>::identity(dim, dim);

    let mut iterations = 0;
    let mut converged = grad.amax() < settings.grad_tol;

    while !converged && iterations < settings.max_iterations {
        iterations += 1;
        let direction = &h_inv * &grad;
        let slope = grad.dot(&direction);
        // The BFGS direction is ascent whenever h_inv is positive definite;
        // reset to the raw gradient if roundoff breaks that.
        let (direction, slope) = if slope > 0.0 {
            (direction, slope)
        } else {
            h_inv = DMatrix::identity(dim, dim);
            let slope = grad.dot(&grad);
            (grad.clone(), slope)
        };

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..settings.max_backtracks {
            let candidate = &x + &direction * step;
            let (f_new, g_new) = eval(candidate.as_slice());
            if f_new.is_finite() && f_new >= fx + settings.armijo_c * step * slope {
                accepted = Some((candidate, f_new, DVector::from_vec(g_new)));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, grad_new)) = accepted else {
            break;
        };

        let s = &x_new - &x;
        let y = &grad_new - &grad;
        let sy = s.dot(&y);
        // Curvature condition for a maximization problem: s . y < 0.
        if sy < -1e-12 {
            let rho = -1.0 / sy;
            let identity = DMatrix::<f64>::identity(dim, dim);
            let left = &identity + &s * y.transpose() * rho;
            let right = &identity + &y * s.transpose() * rho;
            h_inv = &left * h_inv * right + &s * s.transpose() * rho;
        }

        x = x_new;
        fx = f_new;
        grad = grad_new;
        converged = grad.amax() < settings.grad_tol;
    }

    BfgsReport {
        x: x.as_slice().to_vec(),
        objective: fx,
        grad_norm: grad.amax(),
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximizes_concave_quadratic() {
        // f(x) = -(x0 - 1)^2 - 2 (x1 + 0.5)^2
        let report = maximize(&[0.0, 0.0], &BfgsSettings::default(), |x| {
            let f = -(x[0] - 1.0).powi(2) - 2.0 * (x[1] + 0.5).powi(2);
            let g = vec![-2.0 * (x[0] - 1.0), -4.0 * (x[1] + 0.5)];
            (f, g)
        });
        assert!(report.converged);
        assert!((report.x[0] - 1.0).abs() < 1e-7);
        assert!((report.x[1] + 0.5).abs() < 1e-7);
    }

    #[test]
    fn handles_non_quadratic_objective() {
        // f(x) = -exp(x^2) + x has a unique maximum where 2 x exp(x^2) = 1.
        let report = maximize(&[0.0], &BfgsSettings::default(), |x| {
            let f = -(x[0] * x[0]).exp() + x[0];
            let g = vec![-2.0 * x[0] * (x[0] * x[0]).exp() + 1.0];
            (f, g)
        });
        assert!(report.converged);
        let x = report.x[0];
        assert!((2.0 * x * (x * x).exp() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_steps_into_non_finite_region() {
        // f(x) = ln(x) - x, defined for x > 0, maximized at 1.
        let report = maximize(&[0.5], &BfgsSettings::default(), |x| {
            if x[0] <= 0.0 {
                (f64::NEG_INFINITY, vec![0.0])
            } else {
                (x[0].ln() - x[0], vec![1.0 / x[0] - 1.0])
            }
        });
        assert!(report.converged);
        assert!((report.x[0] - 1.0).abs() < 1e-7);
    }
}
