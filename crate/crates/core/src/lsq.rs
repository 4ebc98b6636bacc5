//! Small dense Levenberg–Marquardt solver.
//!
//! Problems here have a handful of parameters and at most a few thousand
//! residuals, so the normal equations are formed explicitly and solved with a
//! Cholesky factorization.

use nalgebra::{DMatrix, DVector};

/// A nonlinear least-squares problem `min ½‖r(p)‖²`.
pub trait LeastSquares {
    fn num_params(&self) -> usize;
    fn num_residuals(&self) -> usize;
    fn residuals(&self, params: &[f64], out: &mut [f64]);
    /// Row-major `num_residuals × num_params` Jacobian of the residuals.
    fn jacobian(&self, params: &[f64], out: &mut DMatrix<f64>);
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    /// Maximum number of damped linear solves.
    pub max_iterations: usize,
    /// Converged when ‖Δp‖ ≤ xtol·(‖p‖ + xtol).
    pub xtol: f64,
    /// Converged when the relative cost reduction of an accepted step is below this.
    pub ftol: f64,
    /// Converged when ‖Jᵀr‖∞ falls below this.
    pub gtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            xtol: 1e-10,
            ftol: 1e-15,
            gtol: 1e-15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    SmallStep,
    SmallCostReduction,
    SmallGradient,
    ZeroResidual,
    MaxIterations,
    NumericalFailure,
}

impl Termination {
    pub fn converged(self) -> bool {
        !matches!(self, Self::MaxIterations | Self::NumericalFailure)
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    /// ½‖r‖² at `params`.
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
}

impl LmReport {
    pub fn converged(&self) -> bool {
        self.termination.converged()
    }
}

fn half_norm_sq(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

pub fn minimize<P: LeastSquares>(problem: &P, initial: &[f64], options: &LmOptions) -> LmReport {
    let n = problem.num_params();
    let m = problem.num_residuals();
    assert_eq!(initial.len(), n, "parameter vector length");

    let mut params = initial.to_vec();
    let mut residuals = vec![0.0; m];
    let mut trial_residuals = vec![0.0; m];
    let mut jac = DMatrix::zeros(m, n);

    problem.residuals(&params, &mut residuals);
    let mut cost = half_norm_sq(&residuals);
    if !cost.is_finite() {
        return LmReport {
            params,
            cost,
            iterations: 0,
            termination: Termination::NumericalFailure,
        };
    }

    let mut lambda = 1e-3;
    let mut scale = vec![0.0f64; n];
    let mut iterations = 0;
    let mut need_jacobian = true;
    let mut jtj = DMatrix::zeros(n, n);
    let mut gradient = DVector::zeros(n);

    let termination = loop {
        if cost == 0.0 {
            break Termination::ZeroResidual;
        }
        if need_jacobian {
            problem.jacobian(&params, &mut jac);
            let r = DVector::from_column_slice(&residuals);
            jtj = jac.tr_mul(&jac);
            gradient = jac.tr_mul(&r);
            for (j, s) in scale.iter_mut().enumerate() {
                *s = s.max(jtj[(j, j)]);
            }
            need_jacobian = false;
            if gradient.amax() <= options.gtol {
                break Termination::SmallGradient;
            }
        }
        if iterations >= options.max_iterations {
            break Termination::MaxIterations;
        }
        iterations += 1;

        let mut damped = jtj.clone();
        for j in 0..n {
            damped[(j, j)] += lambda * scale[j].max(f64::MIN_POSITIVE);
        }
        let Some(chol) = damped.cholesky() else {
            lambda *= 10.0;
            if lambda > 1e30 {
                break Termination::NumericalFailure;
            }
            continue;
        };
        let step = chol.solve(&(-&gradient));
        let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, d)| p + d).collect();
        problem.residuals(&trial, &mut trial_residuals);
        let trial_cost = half_norm_sq(&trial_residuals);

        // Gain ratio against the linear model prediction.
        let predicted = -(step.dot(&gradient) + 0.5 * step.dot(&(&jtj * &step)));
        let rho = if predicted > 0.0 {
            (cost - trial_cost) / predicted
        } else {
            -1.0
        };

        if trial_cost.is_finite() && rho > 0.0 {
            let reduction = (cost - trial_cost) / cost;
            params = trial;
            std::mem::swap(&mut residuals, &mut trial_residuals);
            cost = trial_cost;
            need_jacobian = true;
            lambda *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));

            let pnorm = params.iter().map(|v| v * v).sum::<f64>().sqrt();
            if step.norm() <= options.xtol * (pnorm + options.xtol) {
                break Termination::SmallStep;
            }
            if reduction <= options.ftol {
                break Termination::SmallCostReduction;
            }
        } else {
            let pnorm = params.iter().map(|v| v * v).sum::<f64>().sqrt();
            if step.norm() <= options.xtol * (pnorm + options.xtol) {
                break Termination::SmallStep;
            }
            lambda *= 4.0;
            if lambda > 1e30 {
                break Termination::NumericalFailure;
            }
        }
    };

    LmReport {
        params,
        cost,
        iterations,
        termination,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rosenbrock as a least-squares problem: r = (10(y − x²), 1 − x).
    struct Rosenbrock;

    impl LeastSquares for Rosenbrock {
        fn num_params(&self) -> usize {
            2
        }
        fn num_residuals(&self) -> usize {
            2
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            out[0] = 10.0 * (p[1] - p[0] * p[0]);
            out[1] = 1.0 - p[0];
        }
        fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
            out[(0, 0)] = -20.0 * p[0];
            out[(0, 1)] = 10.0;
            out[(1, 0)] = -1.0;
            out[(1, 1)] = 0.0;
        }
    }

    #[test]
    fn rosenbrock_converges() {
        let report = minimize(&Rosenbrock, &[-1.2, 1.0], &LmOptions::default());
        assert!(report.converged(), "{:?}", report.termination);
        assert!((report.params[0] - 1.0).abs() < 1e-9);
        assert!((report.params[1] - 1.0).abs() < 1e-9);
    }

    /// Exponential decay y = a·exp(−k t), with exact data.
    struct Decay {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquares for Decay {
        fn num_params(&self) -> usize {
            2
        }
        fn num_residuals(&self) -> usize {
            self.t.len()
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            for (i, (t, y)) in self.t.iter().zip(&self.y).enumerate() {
                out[i] = p[0] * (-p[1] * t).exp() - y;
            }
        }
        fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
            for (i, t) in self.t.iter().enumerate() {
                let e = (-p[1] * t).exp();
                out[(i, 0)] = e;
                out[(i, 1)] = -p[0] * t * e;
            }
        }
    }

    #[test]
    fn exponential_fit_recovers_parameters() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y = t.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        let report = minimize(&Decay { t, y }, &[1.0, 0.1], &LmOptions::default());
        assert!(report.converged());
        assert!((report.params[0] - 3.0).abs() < 1e-10);
        assert!((report.params[1] - 0.7).abs() < 1e-10);
    }

    #[test]
    fn iteration_cap_reported() {
        let options = LmOptions {
            max_iterations: 1,
            ..LmOptions::default()
        };
        let report = minimize(&Rosenbrock, &[-1.2, 1.0], &options);
        assert_eq!(report.termination, Termination::MaxIterations);
        assert!(!report.converged());
    }
}
