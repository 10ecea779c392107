//! Binary responses via quadratic majorisation of the logistic likelihood,
//! and missing responses (both families) via surrogate completion.

use nalgebra::DMatrix;

use crate::error::{MvrrError, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{BlockCoefficients, Family, MultiViewDesign, PenaltyWeights, ResponseData};
use crate::solver::{self, Admm, FitResult, SolverOptions, SolverState};

/// Curvature bound of the logistic majoriser: `-log h` has second
/// derivative at most 1/4, so the surrogate loss is `(1/8) ||Y* - Theta||^2`.
const BINARY_ALPHA: f64 = 0.25;
const MAX_OUTER: usize = 500;
const DEVIANCE_RTOL: f64 = 1e-6;

/// Inverse logit.
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `-log h(eta) = log(1 + exp(-eta))`, stable for any `eta`.
pub fn neg_log_logistic(eta: f64) -> f64 {
    if eta > 0.0 {
        (-eta).exp().ln_1p()
    } else {
        -eta + eta.exp().ln_1p()
    }
}

/// Negative Bernoulli log-likelihood over observed cells:
/// `-sum_O log h((2y - 1) theta)`.
pub fn neg_loglik_binary(y: &Matrix, mask: &DMatrix<bool>, theta: &Matrix) -> Result<f64> {
    if y.shape() != theta.shape() || mask.shape() != y.shape() {
        return Err(MvrrError::Dimension("response, mask and theta differ in shape".into()));
    }
    let mut total = 0.0;
    for ((&yv, &m), &t) in y.iter().zip(mask.iter()).zip(theta.iter()) {
        if m {
            total += neg_log_logistic((2.0 * yv - 1.0) * t);
        }
    }
    Ok(total)
}

/// `y*_ij = theta_ij + 4 (2 y_ij - 1) (1 - h((2 y_ij - 1) theta_ij))`.
pub fn working_response(y: &Matrix, theta_tilde: &Matrix) -> Result<Matrix> {
    if y.shape() != theta_tilde.shape() {
        return Err(MvrrError::Dimension("response and theta differ in shape".into()));
    }
    Ok(y.zip_map(theta_tilde, |yv, t| {
        let s = 2.0 * yv - 1.0;
        t + 4.0 * s * (1.0 - logistic(s * t))
    }))
}

/// Majoriser minus `-log h(eta)` for the quadratic bound tangent at `eta0`.
pub fn majorizer_gap(eta: f64, eta0: f64) -> f64 {
    let g = 1.0 - logistic(eta0);
    let d = eta - eta0 - 4.0 * g;
    let rhs = neg_log_logistic(eta0) - 2.0 * g * g + d * d / 8.0;
    rhs - neg_log_logistic(eta)
}

/// Observed cells from `y`, missing cells from `theta_tilde`.
pub fn complete_surrogate(y: &Matrix, theta_tilde: &Matrix, mask: &DMatrix<bool>) -> Result<Matrix> {
    if y.shape() != theta_tilde.shape() || mask.shape() != y.shape() {
        return Err(MvrrError::Dimension("response, theta and mask differ in shape".into()));
    }
    let mut out = y.clone();
    for ((o, &t), &m) in out.iter_mut().zip(theta_tilde.iter()).zip(mask.iter()) {
        if !m {
            *o = t;
        }
    }
    Ok(out)
}

fn theta_of(design: &MultiViewDesign, mu: &Vector, b: &Matrix) -> Matrix {
    let mut theta = design.x() * b;
    linalg::add_row_vector(&mut theta, mu);
    theta
}

/// Builds the working least-squares target at the current iterate and
/// returns `(mu, X^T (Y_work - 1 mu^T))`.
struct WorkingProblem<'a> {
    design: &'a MultiViewDesign,
    response: &'a ResponseData,
    with_intercept: bool,
}

impl WorkingProblem<'_> {
    fn target(&self, mu: &Vector, b: &Matrix) -> Result<(Vector, Matrix)> {
        let theta = theta_of(self.design, mu, b);
        let y = self.response.values();
        let work = match self.response.family() {
            Family::Gaussian => complete_surrogate(y, &theta, self.response.mask())?,
            Family::Binary => complete_surrogate(&working_response(y, &theta)?, &theta, self.response.mask())?,
        };
        let q = work.ncols();
        let mu_new = if !self.with_intercept {
            Vector::zeros(q)
        } else if self.design.is_centered() {
            linalg::column_means(&work)
        } else {
            linalg::column_means(&(&work - self.design.x() * b))
        };
        let mut centered = work;
        linalg::add_row_vector(&mut centered, &(-&mu_new));
        let xty = self.design.x().transpose() * &centered;
        Ok((mu_new, xty))
    }

    /// Loss on observed cells: `(1/2n) sum_O (y - theta)^2` or the negative
    /// log-likelihood.
    fn observed_loss(&self, mu: &Vector, b: &Matrix) -> Result<f64> {
        let theta = theta_of(self.design, mu, b);
        let y = self.response.values();
        let mask = self.response.mask();
        match self.response.family() {
            Family::Binary => neg_loglik_binary(y, mask, &theta),
            Family::Gaussian => {
                let mut ss = 0.0;
                for ((&yv, &t), &m) in y.iter().zip(theta.iter()).zip(mask.iter()) {
                    if m {
                        ss += (yv - t) * (yv - t);
                    }
                }
                Ok(ss / (2.0 * self.design.loss_n() as f64))
            }
        }
    }
}

/// Majorise-then-step loop shared by the binary and missing-Gaussian fits:
/// each ADMM iteration first rebuilds the completed working response at the
/// current iterate.
fn fit_working(
    design: &MultiViewDesign,
    response: &ResponseData,
    lambda: f64,
    weights: &PenaltyWeights,
    options: &SolverOptions,
    warm_start: Option<&BlockCoefficients>,
    alpha: f64,
    with_intercept: bool,
) -> Result<FitResult> {
    solver::check_fit_inputs(design, response.n(), lambda, weights, options)?;
    let q = response.q();
    if let Some(w) = warm_start {
        if w.view_sizes() != design.view_sizes() || w.q() != q {
            return Err(MvrrError::Dimension("warm start does not match the problem".into()));
        }
    }
    let problem = WorkingProblem {
        design,
        response,
        with_intercept,
    };
    let admm = Admm::new(design, alpha, options.ridge_lambda2, lambda, weights);
    let mut state = SolverState::zeros(design.view_sizes(), q, options.rho0);

    // start from the intercept-only model at its own fixed point
    let mut mu = if with_intercept {
        null_intercept(response)
    } else {
        Vector::zeros(q)
    };
    if let Some(w) = warm_start {
        state.a.copy_from(&w.b);
        state.b.copy_from(&w.b);
        mu = w.intercept.clone();
        let (mu_w, xty) = problem.target(&mu, &w.b)?;
        mu = mu_w;
        state.dual = admm.dual_from_coefficients(&w.b, &xty);
    }

    let max_iter = match response.family() {
        Family::Binary => options.max_iter.min(MAX_OUTER),
        Family::Gaussian => options.max_iter,
    };
    let mut converged = false;
    let mut prev_obj = f64::INFINITY;
    while state.iter < max_iter {
        let (mu_new, xty) = problem.target(&mu, &state.b)?;
        mu = mu_new;
        admm.step(&mut state, &xty)?;
        let obj = problem.observed_loss(&mu, &state.a)? + solver::penalty(&admm, &state.a)?;
        if !obj.is_finite() {
            return Err(MvrrError::Numerical(format!("objective diverged at iteration {}", state.iter)));
        }
        if options.record_trace {
            state.objective_trace.push(obj);
        }
        let stable = (prev_obj - obj).abs() <= DEVIANCE_RTOL * obj.abs().max(1e-12);
        prev_obj = obj;
        if solver::residuals_small(&state, options.tol) && (response.family() == Family::Gaussian || stable) {
            converged = true;
            break;
        }
        admm.grow_rho(&mut state, options);
    }
    let objective = problem.observed_loss(&mu, &state.a)? + solver::penalty(&admm, &state.a)?;
    solver::finish(state, mu, lambda, weights, response.family(), converged, objective, options)
}

/// Intercept of the null model: observed column means (Gaussian) or their
/// logits (binary).
pub fn null_intercept(response: &ResponseData) -> Vector {
    let means = response.observed_column_means();
    match response.family() {
        Family::Gaussian => means,
        Family::Binary => means.map(|p| {
            let p = p.clamp(1e-12, 1.0 - 1e-12);
            (p / (1.0 - p)).ln()
        }),
    }
}

/// Binary-response fit: one ADMM sweep per majorisation of the logistic
/// loss, with an unpenalised intercept updated in closed form.
pub fn fit_binary(
    design: &MultiViewDesign,
    response: &ResponseData,
    lambda: f64,
    weights: &PenaltyWeights,
    options: &SolverOptions,
    warm_start: Option<&BlockCoefficients>,
) -> Result<FitResult> {
    if response.family() != Family::Binary {
        return Err(MvrrError::InvalidArgument("fit_binary needs a binary response".into()));
    }
    fit_working(design, response, lambda, weights, options, warm_start, BINARY_ALPHA, true)
}

/// Gaussian fit with missing responses. Each iteration fills the missing
/// cells with the current fitted values before the ADMM sweep.
pub fn fit_gaussian_missing(
    design: &MultiViewDesign,
    response: &ResponseData,
    lambda: f64,
    weights: &PenaltyWeights,
    options: &SolverOptions,
    warm_start: Option<&BlockCoefficients>,
) -> Result<FitResult> {
    if response.family() != Family::Gaussian {
        return Err(MvrrError::InvalidArgument("fit_gaussian_missing needs a Gaussian response".into()));
    }
    if response.is_complete() {
        return solver::fit_gaussian(design, response.values(), lambda, weights, options, warm_start);
    }
    let alpha = 1.0 / design.loss_n() as f64;
    fit_working(design, response, lambda, weights, options, warm_start, alpha, design.is_centered())
}

/// Dispatches on family and missingness.
pub fn fit(
    design: &MultiViewDesign,
    response: &ResponseData,
    lambda: f64,
    weights: &PenaltyWeights,
    options: &SolverOptions,
    warm_start: Option<&BlockCoefficients>,
) -> Result<FitResult> {
    match response.family() {
        Family::Binary => fit_binary(design, response, lambda, weights, options, warm_start),
        Family::Gaussian => fit_gaussian_missing(design, response, lambda, weights, options, warm_start),
    }
}

/// Smallest `lambda` at which the intercept-only model is optimal, on the
/// scale of the family's working loss.
pub fn lambda_max_response(design: &MultiViewDesign, response: &ResponseData, weights: &PenaltyWeights) -> Result<f64> {
    if response.n() != design.n_rows() {
        return Err(MvrrError::Dimension("response rows differ from design".into()));
    }
    match response.family() {
        Family::Gaussian if response.is_complete() => crate::model::lambda_max(design, response.values(), weights),
        family => {
            let mu = null_intercept(response);
            // gradient of the working loss at B = 0, Theta = 1 mu^T
            let problem = WorkingProblem {
                design,
                response,
                with_intercept: family == Family::Binary || design.is_centered(),
            };
            let zero = Matrix::zeros(design.p(), response.q());
            let (_, xty) = problem.target(&mu, &zero)?;
            let alpha = match family {
                Family::Binary => BINARY_ALPHA,
                Family::Gaussian => 1.0 / design.loss_n() as f64,
            };
            let mut best: f64 = 0.0;
            for k in 0..design.k() {
                if weights.is_excluded(k) {
                    continue;
                }
                let g = xty.rows(design.offsets()[k], design.view_sizes()[k]).into_owned() * alpha;
                best = best.max(linalg::spectral_norm(&g)? / weights.w[k]);
            }
            Ok(best)
        }
    }
}
