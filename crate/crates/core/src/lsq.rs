//! Damped least squares (Levenberg–Marquardt) with finite-difference
//! Jacobians, box bounds by projection, and asymptotic covariance.
//!
//! The fitter minimizes the sum of squared residuals `Σ rᵢ(p)²`. Complex
//! models are handled by the caller, which splits each complex point into a
//! real and an imaginary residual.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_UP: f64 = 10.0;
const LAMBDA_DOWN: f64 = 10.0;
const LAMBDA_MAX: f64 = 1e20;
const LAMBDA_MIN: f64 = 1e-20;

/// Stopping thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Stop when `max |Jᵀr| < gradient`.
    pub gradient: f64,
    /// Stop when `‖δp‖ < step · (‖p‖ + step)`.
    pub step: f64,
    /// Stop when the relative cost reduction of an accepted step is below this.
    pub cost: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { gradient: 1e-10, step: 1e-10, cost: 1e-12 }
    }
}

/// Finite-difference step policy: `hᵢ = max(min_step, relative·|pᵢ|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPolicy {
    pub relative: f64,
    pub min_step: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy { relative: 1e-6, min_step: 1e-8 }
    }
}

impl StepPolicy {
    pub fn step_for(&self, p: f64) -> f64 {
        self.min_step.max(self.relative * p.abs())
    }
}

/// A least-squares problem: residual function, starting point, bounds and
/// stopping rules.
pub struct FitProblem<F>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    residuals: F,
    initial: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    pub max_iterations: usize,
    pub tolerances: Tolerances,
    pub step_policy: StepPolicy,
}

impl<F> FitProblem<F>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    pub fn new(residuals: F, initial: Vec<f64>) -> Self {
        let n = initial.len();
        FitProblem {
            residuals,
            initial,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            max_iterations: 200,
            tolerances: Tolerances::default(),
            step_policy: StepPolicy::default(),
        }
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn residuals_at(&self, p: &[f64]) -> Vec<f64> {
        (self.residuals)(p)
    }

    fn validate(&self) -> Result<()> {
        let n = self.initial.len();
        if n == 0 {
            return Err(Error::invalid("fit problem has no parameters"));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::invalid("bounds length does not match parameter count"));
        }
        for i in 0..n {
            let (lo, hi, p) = (self.lower[i], self.upper[i], self.initial[i]);
            if !(lo <= hi) {
                return Err(Error::invalid(format!("parameter {i}: lower bound exceeds upper bound")));
            }
            if !(p >= lo && p <= hi) {
                return Err(Error::invalid(format!(
                    "parameter {i}: initial value {p} outside bounds [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Why the fitter stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    Step,
    Cost,
    /// The residuals vanished exactly.
    ZeroCost,
    MaxIterations,
}

impl Termination {
    pub fn is_converged(self) -> bool {
        !matches!(self, Termination::MaxIterations)
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// `(JᵀJ)⁻¹·SSR/(n−p)`; `None` when the normal matrix is singular or n = p.
    pub covariance: Option<DMatrix<f64>>,
    /// Final sum of squared residuals.
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    pub n_residuals: usize,
}

impl FitResult {
    /// One-sigma uncertainties, `sqrt(diag(covariance))`.
    pub fn uncertainties(&self) -> Option<Vec<f64>> {
        self.covariance
            .as_ref()
            .map(|c| (0..c.nrows()).map(|i| c[(i, i)].max(0.0).sqrt()).collect())
    }

    pub fn rms_residual(&self) -> f64 {
        (self.cost / self.n_residuals as f64).sqrt()
    }
}

fn sum_squares(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Central-difference Jacobian (rows = residuals, columns = parameters).
///
/// Where a central stencil would leave the box `[lower, upper]` the one-sided
/// difference pointing into the box is used instead.
pub fn jacobian_fd<F>(
    residuals: &F,
    params: &[f64],
    bounds: Option<(&[f64], &[f64])>,
    policy: StepPolicy,
) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Vec<f64> + ?Sized,
{
    let mut center: Option<Vec<f64>> = None;
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(params.len());
    let mut p = params.to_vec();
    for i in 0..params.len() {
        let h = policy.step_for(params[i]);
        let (lo, hi) = bounds.map_or((f64::NEG_INFINITY, f64::INFINITY), |(l, u)| (l[i], u[i]));
        let up_ok = params[i] + h <= hi;
        let down_ok = params[i] - h >= lo;

        let eval = |p: &mut Vec<f64>, x: f64| {
            p[i] = x;
            let r = residuals(p);
            p[i] = params[i];
            r
        };

        let col: Vec<f64> = if up_ok && down_ok {
            let rp = eval(&mut p, params[i] + h);
            let rm = eval(&mut p, params[i] - h);
            rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
        } else {
            let r0 = center.get_or_insert_with(|| residuals(params)).clone();
            if up_ok {
                let rp = eval(&mut p, params[i] + h);
                rp.iter().zip(&r0).map(|(a, b)| (a - b) / h).collect()
            } else if down_ok {
                let rm = eval(&mut p, params[i] - h);
                r0.iter().zip(&rm).map(|(a, b)| (a - b) / h).collect()
            } else {
                return Err(Error::invalid(format!(
                    "parameter {i}: bound interval narrower than the difference step"
                )));
            }
        };
        if col.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteJacobian { param: i });
        }
        if let Some(first) = columns.first() {
            if first.len() != col.len() {
                return Err(Error::invalid("residual vector length changed between evaluations"));
            }
        }
        columns.push(col);
    }
    let m = columns.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(m, params.len(), |r, c| columns[c][r]))
}

/// Asymptotic covariance `(JᵀJ)⁻¹·s²`, computed on the column-equilibrated
/// normal matrix.
pub fn covariance(jac: &DMatrix<f64>, cost: f64) -> Option<DMatrix<f64>> {
    let (m, n) = jac.shape();
    if m <= n {
        return None;
    }
    let s2 = cost / (m - n) as f64;
    let jtj = jac.transpose() * jac;
    let d: Vec<f64> = (0..n).map(|i| jtj[(i, i)].sqrt()).collect();
    if d.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return None;
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| jtj[(i, j)] / (d[i] * d[j]));
    let inv = scaled.cholesky()?.inverse();
    let cov = DMatrix::from_fn(n, n, |i, j| inv[(i, j)] / (d[i] * d[j]) * s2);
    if cov.iter().all(|x| x.is_finite()) {
        Some(cov)
    } else {
        None
    }
}

fn project(p: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((x, lo), hi) in p.iter_mut().zip(lower).zip(upper) {
        *x = x.clamp(*lo, *hi);
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve `(A + λ·diag(A)) δ = −g`.
fn damped_step(jtj: &DMatrix<f64>, grad: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let n = jtj.nrows();
    let scale = (0..n).map(|i| jtj[(i, i)]).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let mut a = jtj.clone();
    for i in 0..n {
        let diag = jtj[(i, i)].max(1e-12 * scale);
        a[(i, i)] += lambda * diag;
    }
    // Equilibrate before factoring so badly scaled columns do not spoil the solve.
    let d: Vec<f64> = (0..n).map(|i| a[(i, i)].sqrt()).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (d[i] * d[j]));
    let rhs = DVector::from_fn(n, |i, _| -grad[i] / d[i]);
    let y = scaled.cholesky()?.solve(&rhs);
    let step = DVector::from_fn(n, |i, _| y[i] / d[i]);
    step.iter().all(|x| x.is_finite()).then_some(step)
}

/// Run Levenberg–Marquardt on `problem`.
///
/// Every parameter vector handed to the residual function lies inside the
/// bounds. The returned cost never exceeds the initial cost.
pub fn fit<F>(problem: &FitProblem<F>) -> Result<FitResult>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    problem.validate()?;
    let f = &problem.residuals;
    let (lower, upper) = (&problem.lower[..], &problem.upper[..]);
    let tol = problem.tolerances;
    let n_params = problem.initial.len();

    let mut p = problem.initial.clone();
    let mut r = f(&p);
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::BadInitialGuess);
    }
    if r.len() < n_params {
        return Err(Error::invalid(format!(
            "{} residuals for {} parameters",
            r.len(),
            n_params
        )));
    }
    let mut cost = sum_squares(&r);
    let initial_cost = cost;
    let mut history = vec![cost];
    let mut lambda = LAMBDA_INIT;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    'outer: while iterations < problem.max_iterations {
        if cost == 0.0 {
            termination = Termination::ZeroCost;
            break;
        }
        iterations += 1;
        let jac = jacobian_fd(f, &p, Some((lower, upper)), problem.step_policy)?;
        let rv = DVector::from_column_slice(&r);
        let grad = jac.transpose() * &rv;
        if grad.amax() < tol.gradient {
            termination = Termination::Gradient;
            break;
        }
        let jtj = jac.transpose() * &jac;

        loop {
            let Some(delta) = damped_step(&jtj, &grad, lambda) else {
                lambda *= LAMBDA_UP;
                if lambda > LAMBDA_MAX {
                    termination = Termination::Step;
                    break 'outer;
                }
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            project(&mut trial, lower, upper);
            let step: Vec<f64> = trial.iter().zip(&p).map(|(a, b)| a - b).collect();
            if norm(&step) < tol.step * (norm(&p) + tol.step) {
                termination = Termination::Step;
                break 'outer;
            }

            let r_trial = f(&trial);
            let cost_trial = sum_squares(&r_trial);
            if cost_trial.is_finite() && cost_trial < cost {
                // Predicted reduction from the linear model, for the cost test.
                let sv = DVector::from_column_slice(&step);
                let lin = &rv + &jac * &sv;
                let predicted = cost - lin.norm_squared();
                let actual = cost - cost_trial;
                let prev = cost;
                p = trial;
                r = r_trial;
                cost = cost_trial;
                history.push(cost);
                lambda = (lambda / LAMBDA_DOWN).max(LAMBDA_MIN);
                if actual <= tol.cost * prev && predicted.abs() <= tol.cost * prev {
                    termination = Termination::Cost;
                    break 'outer;
                }
                break;
            }
            lambda *= LAMBDA_UP;
            if lambda > LAMBDA_MAX {
                termination = Termination::Step;
                break 'outer;
            }
        }
    }

    let covariance = match jacobian_fd(f, &p, Some((lower, upper)), problem.step_policy) {
        Ok(jac) => covariance(&jac, cost),
        Err(_) => None,
    };

    Ok(FitResult {
        params: p,
        covariance,
        cost,
        initial_cost,
        iterations,
        converged: termination.is_converged(),
        termination,
        cost_history: history,
        n_residuals: r.len(),
    })
}
