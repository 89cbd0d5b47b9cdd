//! Damped Gauss-Newton (Levenberg-Marquardt) for small dense problems.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when the relative cost reduction of an accepted step falls below this.
    pub ftol: f64,
    /// Stop when the relative step size falls below this.
    pub xtol: f64,
    /// Stop when the scaled gradient falls below this.
    pub gtol: f64,
    pub initial_damping: f64,
    /// Relative step for the central-difference Jacobian.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            ftol: 1e-15,
            xtol: 1e-12,
            gtol: 1e-14,
            initial_damping: 1e-3,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmStatus {
    CostConverged,
    StepConverged,
    GradientConverged,
    MaxIterations,
    /// Damping grew without finding a descent step.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Half the sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub status: LmStatus,
    pub jacobian: DMatrix<f64>,
}

impl LmReport {
    pub fn converged(&self) -> bool {
        !matches!(self.status, LmStatus::MaxIterations | LmStatus::Stalled)
    }
}

/// Central-difference Jacobian of `f` at `x`.
pub fn numeric_jacobian<F>(f: &F, x: &[f64], rel_step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let base = f(x)?;
    let mut jac = DMatrix::zeros(base.len(), x.len());
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let h = rel_step * x[j].abs().max(1e-3);
        probe[j] = x[j] + h;
        let plus = f(&probe)?;
        probe[j] = x[j] - h;
        let minus = f(&probe)?;
        probe[j] = x[j];
        for i in 0..base.len() {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Ratio of smallest to largest singular value of `jac` after scaling every
/// column to unit norm. Zero columns give 0.
pub fn normalized_condition(jac: &DMatrix<f64>) -> f64 {
    let mut scaled = jac.clone();
    for mut col in scaled.column_iter_mut() {
        let norm = col.norm();
        if norm == 0.0 {
            return 0.0;
        }
        col /= norm;
    }
    let sv = scaled.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0.0;
    }
    sv.min() / max
}

/// Analytic Jacobian of the residual vector.
pub type Jacobian<'a> = &'a dyn Fn(&[f64]) -> Result<DMatrix<f64>>;

/// Minimise `½‖f(x)‖²` from `x0`. `jacobian` may be `None` to use
/// central differences.
pub fn levenberg_marquardt<F>(
    f: F,
    jacobian: Option<Jacobian<'_>>,
    x0: &[f64],
    options: &LmOptions,
) -> Result<LmReport>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let jac_at = |x: &[f64]| -> Result<DMatrix<f64>> {
        match jacobian {
            Some(j) => j(x),
            None => numeric_jacobian(&f, x, options.fd_step),
        }
    };
    let cost_of = |r: &[f64]| 0.5 * r.iter().map(|v| v * v).sum::<f64>();

    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut r = f(x.as_slice())?;
    let mut cost = cost_of(&r);
    let mut jac = jac_at(x.as_slice())?;
    let mut lambda = options.initial_damping;
    let mut scale = DVector::<f64>::from_element(n, 0.0);
    let mut status = LmStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * rv;
        for j in 0..n {
            scale[j] = scale[j].max(jtj[(j, j)]).max(1e-300);
        }
        let g_scaled = (0..n)
            .map(|j| g[j].abs() / scale[j].sqrt())
            .fold(0.0, f64::max);
        if g_scaled <= options.gtol * (2.0 * cost).sqrt().max(1e-300) || cost == 0.0 {
            status = LmStatus::GradientConverged;
            break;
        }

        let mut accepted = false;
        for _ in 0..60 {
            let mut a = jtj.clone();
            for j in 0..n {
                a[(j, j)] += lambda * scale[j];
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial = &x + &step;
            let trial_r = match f(trial.as_slice()) {
                Ok(v) => v,
                Err(_) => {
                    // outside the model's domain: shorten the step
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial_cost = cost_of(&trial_r);
            if trial_cost.is_finite() && trial_cost <= cost {
                let reduction = (cost - trial_cost) / cost.max(1e-300);
                let step_rel = step.norm() / (x.norm() + options.xtol);
                x = trial;
                r = trial_r;
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-15);
                accepted = true;
                if reduction < options.ftol {
                    status = LmStatus::CostConverged;
                } else if step_rel < options.xtol {
                    status = LmStatus::StepConverged;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            status = LmStatus::Stalled;
            // at a minimum to machine precision the damping blows up; treat as converged
            if lambda > 1e20 {
                status = LmStatus::CostConverged;
            }
            break;
        }
        jac = jac_at(x.as_slice())?;
        if matches!(status, LmStatus::CostConverged | LmStatus::StepConverged) {
            break;
        }
    }

    Ok(LmReport {
        x: x.as_slice().to_vec(),
        residuals: r,
        cost,
        iterations,
        status,
        jacobian: jac,
    })
}

/// `(JᵀJ)⁻¹`, or `None` when singular.
pub fn unscaled_covariance(jac: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    (jac.transpose() * jac).try_inverse()
}
