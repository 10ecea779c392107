//! ADMM for the composite nuclear-norm penalised least-squares problem
//!
//! ```text
//! min_B (1/2n) ||Y - X B||_F^2 + lambda sum_k w_k ||B_k||_*  (+ lambda2 ||B||_F^2)
//! ```
//!
//! split as `A_k = B_k`. Each iteration solves a ridge-type linear system for
//! `B`, soft-thresholds the singular values of `B_k - Lambda_k / rho` for `A`,
//! and takes a dual ascent step on the unscaled multipliers `Lambda`.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{MvrrError, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{
    self, BlockCoefficients, Family, MultiViewDesign, PenaltyWeights, COEF_RANK_TOL,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Initial step size.
    pub rho0: f64,
    /// Multiplicative growth of the step size per iteration (1 keeps it fixed).
    pub rho_growth: f64,
    pub rho_max: f64,
    /// Both residuals must fall below `tol * max(1, ||B||_F)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Ridge penalty `lambda2 ||B||_F^2` added to the objective.
    pub ridge_lambda2: f64,
    /// Relative tolerance for reported coefficient ranks.
    pub rank_tol: f64,
    /// Record the objective at every iterate (costs one extra product per
    /// iteration).
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rho0: 0.1,
            rho_growth: 1.1,
            rho_max: 1e4,
            tol: 1e-4,
            max_iter: 5000,
            ridge_lambda2: 0.0,
            rank_tol: COEF_RANK_TOL,
            record_trace: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MvrrError::InvalidArgument(msg));
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return bad(format!("rho0 must be positive, got {}", self.rho0));
        }
        if !(1.0..=2.0).contains(&self.rho_growth) {
            return bad(format!("rho_growth must lie in [1, 2], got {}", self.rho_growth));
        }
        if !(self.rho_max >= self.rho0) {
            return bad(format!("rho_max {} below rho0 {}", self.rho_max, self.rho0));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if !(self.ridge_lambda2 >= 0.0 && self.ridge_lambda2.is_finite()) {
            return bad(format!("ridge_lambda2 must be >= 0, got {}", self.ridge_lambda2));
        }
        if !(self.rank_tol >= 0.0) {
            return bad(format!("rank_tol must be >= 0, got {}", self.rank_tol));
        }
        Ok(())
    }
}

/// ADMM iterates, stacked over views (`p x q` each).
#[derive(Clone, Debug)]
pub struct SolverState {
    pub a: Matrix,
    pub b: Matrix,
    pub dual: Matrix,
    pub rho: f64,
    pub iter: usize,
    pub r_primal: f64,
    pub r_dual: f64,
    pub objective_trace: Vec<f64>,
    view_sizes: Vec<usize>,
}

impl SolverState {
    pub fn zeros(view_sizes: &[usize], q: usize, rho: f64) -> Self {
        let p = view_sizes.iter().sum();
        SolverState {
            a: Matrix::zeros(p, q),
            b: Matrix::zeros(p, q),
            dual: Matrix::zeros(p, q),
            rho,
            iter: 0,
            r_primal: 0.0,
            r_dual: 0.0,
            objective_trace: Vec::new(),
            view_sizes: view_sizes.to_vec(),
        }
    }

    pub fn from_blocks(a: &[Matrix], b: &[Matrix], dual: &[Matrix], rho: f64) -> Result<Self> {
        let view_sizes: Vec<usize> = a.iter().map(|m| m.nrows()).collect();
        let q = a.first().map_or(0, |m| m.ncols());
        let stack = |blocks: &[Matrix]| -> Result<Matrix> {
            if blocks.len() != view_sizes.len()
                || blocks.iter().zip(&view_sizes).any(|(m, &s)| m.shape() != (s, q))
            {
                return Err(MvrrError::Dimension("state blocks are not conformable".into()));
            }
            Ok(stack_blocks(blocks, q))
        };
        let mut state = SolverState::zeros(&view_sizes, q, rho);
        state.a = stack(a)?;
        state.b = stack(b)?;
        state.dual = stack(dual)?;
        Ok(state)
    }

    pub fn view_sizes(&self) -> &[usize] {
        &self.view_sizes
    }
}

fn stack_blocks(blocks: &[Matrix], q: usize) -> Matrix {
    let p = blocks.iter().map(|m| m.nrows()).sum();
    let mut out = Matrix::zeros(p, q);
    let mut off = 0;
    for m in blocks {
        out.rows_mut(off, m.nrows()).copy_from(m);
        off += m.nrows();
    }
    out
}

#[derive(Clone, Debug)]
pub struct FitResult {
    /// Taken from the exactly low-rank `A` iterate.
    pub coefficients: BlockCoefficients,
    pub lambda: f64,
    pub weights: PenaltyWeights,
    pub family: Family,
    pub iterations: usize,
    pub converged: bool,
    pub final_r_primal: f64,
    pub final_r_dual: f64,
    /// Penalised objective at the returned coefficients. Gaussian fits use
    /// the `1/(2n)` loss over observed cells; binary fits use the negative
    /// log-likelihood.
    pub objective: f64,
    pub objective_trace: Vec<f64>,
    /// The `B` iterate at exit, kept for diagnostics.
    pub b_iterate: Matrix,
}

/// Solves `(alpha X^T X + shift I) Z = R` for arbitrary `alpha`, `shift`
/// from one symmetric eigendecomposition, so step-size changes never force a
/// refactorisation. Uses the `n x n` Gram matrix when `p > n`.
#[derive(Clone, Debug)]
pub(crate) enum GramSolver {
    Primal { v: Matrix, d: Vector },
    Dual { x: Matrix, u: Matrix, s: Vector },
}

impl GramSolver {
    pub(crate) fn new(x: &Matrix) -> Self {
        let (n, p) = x.shape();
        if p <= n {
            let eig = SymmetricEigen::new(x.transpose() * x);
            GramSolver::Primal {
                d: eig.eigenvalues.map(|v| v.max(0.0)),
                v: eig.eigenvectors,
            }
        } else {
            let eig = SymmetricEigen::new(x * x.transpose());
            GramSolver::Dual {
                x: x.clone(),
                s: eig.eigenvalues.map(|v| v.max(0.0)),
                u: eig.eigenvectors,
            }
        }
    }

    pub(crate) fn solve(&self, alpha: f64, shift: f64, rhs: &Matrix) -> Matrix {
        match self {
            GramSolver::Primal { v, d } => {
                let mut t = v.transpose() * rhs;
                for (i, mut row) in t.row_iter_mut().enumerate() {
                    row /= alpha * d[i] + shift;
                }
                v * t
            }
            GramSolver::Dual { x, u, s } => {
                let mut t = u.transpose() * (x * rhs);
                for (i, mut row) in t.row_iter_mut().enumerate() {
                    row *= alpha / (shift + alpha * s[i]);
                }
                let correction = x.transpose() * (u * t);
                (rhs - correction) / shift
            }
        }
    }
}

/// One ADMM problem instance: quadratic loss `(alpha/2) ||R||_F^2`, ridge
/// `lambda2 ||B||_F^2` and the weighted nuclear penalty.
pub(crate) struct Admm<'a> {
    pub design: &'a MultiViewDesign,
    pub gram: GramSolver,
    pub alpha: f64,
    pub ridge: f64,
    pub lambda: f64,
    pub weights: &'a PenaltyWeights,
}

impl<'a> Admm<'a> {
    pub(crate) fn new(
        design: &'a MultiViewDesign,
        alpha: f64,
        ridge: f64,
        lambda: f64,
        weights: &'a PenaltyWeights,
    ) -> Self {
        Admm {
            design,
            gram: GramSolver::new(design.x()),
            alpha,
            ridge,
            lambda,
            weights,
        }
    }

    /// Multiplier consistent with `coefficients` being a stationary point of
    /// the smooth part: `Lambda = alpha (X^T X B - X^T Y) + 2 lambda2 B`.
    pub(crate) fn dual_from_coefficients(&self, b: &Matrix, xty: &Matrix) -> Matrix {
        let x = self.design.x();
        let gb = x.transpose() * (x * b);
        (gb - xty) * self.alpha + b * (2.0 * self.ridge)
    }

    /// One primal-B, primal-A, dual sweep. `xty` is `X^T (Y - 1 mu^T)` for
    /// the current (working) response. Returns the previous `B`.
    pub(crate) fn step(&self, state: &mut SolverState, xty: &Matrix) -> Result<()> {
        let rho = state.rho;
        let rhs = xty * self.alpha + &state.a * rho + &state.dual;
        let b_new = self.gram.solve(self.alpha, 2.0 * self.ridge + rho, &rhs);
        if !linalg::all_finite(&b_new) {
            return Err(MvrrError::Numerical(format!(
                "non-finite B iterate at iteration {}",
                state.iter + 1
            )));
        }
        let a_new = stacked_a_update(&b_new, &state.dual, rho, self.lambda, self.weights, self.design.view_sizes())?;
        let diff = &a_new - &b_new;
        state.dual += &diff * rho;
        state.r_primal = diff.norm();
        state.r_dual = rho * (&b_new - &state.b).norm();
        state.a = a_new;
        state.b = b_new;
        state.iter += 1;
        Ok(())
    }

    pub(crate) fn grow_rho(&self, state: &mut SolverState, options: &SolverOptions) {
        state.rho = (state.rho * options.rho_growth).min(options.rho_max);
    }
}

pub(crate) fn residuals_small(state: &SolverState, tol: f64) -> bool {
    let thresh = tol * state.b.norm().max(1.0);
    state.r_primal <= thresh && state.r_dual <= thresh
}

fn stacked_a_update(
    b_hat: &Matrix,
    dual: &Matrix,
    rho: f64,
    lambda: f64,
    weights: &PenaltyWeights,
    view_sizes: &[usize],
) -> Result<Matrix> {
    let mut out = Matrix::zeros(b_hat.nrows(), b_hat.ncols());
    let mut off = 0;
    for (k, &s) in view_sizes.iter().enumerate() {
        let m = b_hat.rows(off, s) - dual.rows(off, s) / rho;
        let (a_k, _) = linalg::svt(&m, lambda * weights.w[k] / rho)?;
        out.rows_mut(off, s).copy_from(&a_k);
        off += s;
    }
    Ok(out)
}

/// Augmented Lagrangian of the Gaussian problem at `state`.
pub fn augmented_lagrangian(
    state: &SolverState,
    design: &MultiViewDesign,
    y: &Matrix,
    lambda: f64,
    weights: &PenaltyWeights,
) -> Result<f64> {
    if state.view_sizes() != design.view_sizes() || y.nrows() != design.n_rows() || y.ncols() != state.b.ncols() {
        return Err(MvrrError::Dimension("state, design and response are not conformable".into()));
    }
    if weights.len() != design.k() {
        return Err(MvrrError::Dimension("one weight per view required".into()));
    }
    let loss = linalg::frobenius_sq(&(y - design.x() * &state.b)) / (2.0 * design.loss_n() as f64);
    let a_blocks = model::split_blocks(&state.a, design.view_sizes());
    let pen = if lambda == 0.0 { 0.0 } else { lambda * model::weighted_nuclear(&a_blocks, weights)? };
    let diff = &state.a - &state.b;
    Ok(loss + pen + state.dual.dot(&diff) + 0.5 * state.rho * diff.norm_squared())
}

/// `B = (X^T X / n + rho I)^{-1} (X^T Y / n + rho A + Lambda)`.
pub fn primal_b_update(
    design: &MultiViewDesign,
    y: &Matrix,
    a_tilde: &Matrix,
    dual_tilde: &Matrix,
    rho: f64,
) -> Result<Matrix> {
    if !(rho > 0.0) {
        return Err(MvrrError::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    let p = design.p();
    if y.nrows() != design.n_rows() || a_tilde.shape() != (p, y.ncols()) || dual_tilde.shape() != a_tilde.shape() {
        return Err(MvrrError::Dimension("B-update inputs are not conformable".into()));
    }
    if !linalg::all_finite(y) || !linalg::all_finite(a_tilde) || !linalg::all_finite(dual_tilde) {
        return Err(MvrrError::NonFinite("B-update input".into()));
    }
    let alpha = 1.0 / design.loss_n() as f64;
    let rhs = design.x().transpose() * y * alpha + a_tilde * rho + dual_tilde;
    Ok(GramSolver::new(design.x()).solve(alpha, rho, &rhs))
}

/// `A_k = svt(B_k - Lambda_k / rho, lambda w_k / rho)` for every view.
pub fn primal_a_update(
    b_hat: &[Matrix],
    dual_tilde: &[Matrix],
    rho: f64,
    lambda: f64,
    weights: &PenaltyWeights,
) -> Result<Vec<Matrix>> {
    if !(rho > 0.0) {
        return Err(MvrrError::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    if b_hat.len() != dual_tilde.len() || b_hat.len() != weights.len() {
        return Err(MvrrError::Dimension("one block and weight per view required".into()));
    }
    b_hat
        .iter()
        .zip(dual_tilde)
        .zip(&weights.w)
        .map(|((b, l), &w)| {
            if b.shape() != l.shape() {
                return Err(MvrrError::Dimension("block shapes differ".into()));
            }
            Ok(linalg::svt(&(b - l / rho), lambda * w / rho)?.0)
        })
        .collect()
}

/// `Lambda_k + rho (A_k - B_k)`.
pub fn dual_update(dual_tilde: &[Matrix], a_hat: &[Matrix], b_hat: &[Matrix], rho: f64) -> Result<Vec<Matrix>> {
    if dual_tilde.len() != a_hat.len() || a_hat.len() != b_hat.len() {
        return Err(MvrrError::Dimension("block counts differ".into()));
    }
    dual_tilde
        .iter()
        .zip(a_hat)
        .zip(b_hat)
        .map(|((l, a), b)| {
            if l.shape() != a.shape() || a.shape() != b.shape() {
                return Err(MvrrError::Dimension("block shapes differ".into()));
            }
            Ok(l + (a - b) * rho)
        })
        .collect()
}

/// Primal residual `||A - B||_F` and dual residual `rho ||B - B_prev||_F`.
pub fn residuals(a_hat: &[Matrix], b_hat: &[Matrix], b_prev: &[Matrix], rho: f64) -> Result<(f64, f64)> {
    if a_hat.len() != b_hat.len() || b_hat.len() != b_prev.len() {
        return Err(MvrrError::Dimension("block counts differ".into()));
    }
    let mut rp = 0.0;
    let mut rd = 0.0;
    for ((a, b), bp) in a_hat.iter().zip(b_hat).zip(b_prev) {
        if a.shape() != b.shape() || b.shape() != bp.shape() {
            return Err(MvrrError::Dimension("block shapes differ".into()));
        }
        rp += (a - b).norm_squared();
        rd += (b - bp).norm_squared();
    }
    Ok((rp.sqrt(), rho * rd.sqrt()))
}

pub(crate) fn check_fit_inputs(
    design: &MultiViewDesign,
    n: usize,
    lambda: f64,
    weights: &PenaltyWeights,
    options: &SolverOptions,
) -> Result<()> {
    options.validate()?;
    if n != design.n_rows() {
        return Err(MvrrError::Dimension(format!(
            "response has {n} rows, design {}",
            design.n_rows()
        )));
    }
    if weights.len() != design.k() {
        return Err(MvrrError::Dimension(format!("{} weights for {} views", weights.len(), design.k())));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(MvrrError::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

fn check_warm(warm: Option<&BlockCoefficients>, design: &MultiViewDesign, q: usize) -> Result<()> {
    if let Some(w) = warm {
        if w.view_sizes() != design.view_sizes() || w.q() != q {
            return Err(MvrrError::Dimension("warm start does not match the problem".into()));
        }
    }
    Ok(())
}

/// Fits the Gaussian-family model at a single `lambda`.
///
/// When the design is centered the responses are centered too and the
/// intercept is their column mean; otherwise the model has no intercept.
/// Non-convergence is reported through `converged`, not as an error.
pub fn fit_gaussian(
    design: &MultiViewDesign,
    y: &Matrix,
    lambda: f64,
    weights: &PenaltyWeights,
    options: &SolverOptions,
    warm_start: Option<&BlockCoefficients>,
) -> Result<FitResult> {
    check_fit_inputs(design, y.nrows(), lambda, weights, options)?;
    check_warm(warm_start, design, y.ncols())?;
    if !linalg::all_finite(y) {
        return Err(MvrrError::NonFinite("response".into()));
    }
    let q = y.ncols();
    let mu = if design.is_centered() { linalg::column_means(y) } else { Vector::zeros(q) };
    let mut yc = y.clone();
    linalg::add_row_vector(&mut yc, &(-&mu));
    let xty = design.x().transpose() * &yc;

    let admm = Admm::new(design, 1.0 / design.loss_n() as f64, options.ridge_lambda2, lambda, weights);
    let mut state = SolverState::zeros(design.view_sizes(), q, options.rho0);
    if let Some(w) = warm_start {
        state.a.copy_from(&w.b);
        state.b.copy_from(&w.b);
        state.dual = admm.dual_from_coefficients(&w.b, &xty);
    }

    let mut converged = false;
    while state.iter < options.max_iter {
        admm.step(&mut state, &xty)?;
        if options.record_trace {
            let obj = penalised_gaussian(&admm, &yc, &state.a)?;
            state.objective_trace.push(obj);
        }
        if residuals_small(&state, options.tol) {
            converged = true;
            break;
        }
        admm.grow_rho(&mut state, options);
    }

    let objective = penalised_gaussian(&admm, &yc, &state.a)?;
    finish(state, mu, lambda, weights, Family::Gaussian, converged, objective, options)
}

/// `(1/2n) ||Yc - X A||^2 + lambda sum w_k ||A_k||_* + lambda2 ||A||^2`.
fn penalised_gaussian(admm: &Admm<'_>, yc: &Matrix, a: &Matrix) -> Result<f64> {
    let loss = linalg::frobenius_sq(&(yc - admm.design.x() * a)) * admm.alpha / 2.0;
    Ok(loss + penalty(admm, a)?)
}

pub(crate) fn penalty(admm: &Admm<'_>, a: &Matrix) -> Result<f64> {
    let nuc = if admm.lambda == 0.0 {
        0.0
    } else {
        admm.lambda * model::weighted_nuclear(&model::split_blocks(a, admm.design.view_sizes()), admm.weights)?
    };
    Ok(nuc + admm.ridge * a.norm_squared())
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn finish(
    state: SolverState,
    mu: Vector,
    lambda: f64,
    weights: &PenaltyWeights,
    family: Family,
    converged: bool,
    objective: f64,
    options: &SolverOptions,
) -> Result<FitResult> {
    let view_sizes = state.view_sizes().to_vec();
    let mut coefficients = BlockCoefficients::new(mu, state.a, view_sizes)?;
    coefficients.rank_tol = options.rank_tol;
    Ok(FitResult {
        coefficients,
        lambda,
        weights: weights.clone(),
        family,
        iterations: state.iter,
        converged,
        final_r_primal: state.r_primal,
        final_r_dual: state.r_dual,
        objective,
        objective_trace: state.objective_trace,
        b_iterate: state.b,
    })
}

/// Appends `sqrt(2 n lambda2) I` below the design and a zero block below the
/// (centered, when the design is) response.
///
/// The returned design keeps the original `n` as its loss normaliser, so the
/// unpenalised-ridge problem on the augmented data is exactly the
/// ridge-augmented problem on the original data.
pub fn augment_ridge(design: &MultiViewDesign, y: &Matrix, lambda2: f64) -> Result<(MultiViewDesign, Matrix)> {
    if !(lambda2 >= 0.0 && lambda2.is_finite()) {
        return Err(MvrrError::InvalidArgument(format!("lambda2 must be >= 0, got {lambda2}")));
    }
    if y.nrows() != design.n_rows() {
        return Err(MvrrError::Dimension("response rows differ from design".into()));
    }
    let (n, p, q) = (design.n_rows(), design.p(), y.ncols());
    let extra = Matrix::identity(p, p) * (2.0 * design.loss_n() as f64 * lambda2).sqrt();
    let aug = design.with_appended_rows(&extra)?;
    let mut y_aug = Matrix::zeros(n + p, q);
    let mut top = y.clone();
    if design.is_centered() {
        let mu = linalg::column_means(y);
        linalg::add_row_vector(&mut top, &(-&mu));
    }
    y_aug.rows_mut(0, n).copy_from(&top);
    Ok((aug, y_aug))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Preprocess;
    use crate::testutil::{self, max_abs_diff, normal};
    use proptest::prelude::*;
    use rand::Rng;

    fn tight() -> SolverOptions {
        SolverOptions {
            tol: 1e-9,
            max_iter: 50_000,
            ..SolverOptions::default()
        }
    }

    fn unit_weights(k: usize) -> PenaltyWeights {
        PenaltyWeights::custom(vec![1.0; k]).unwrap()
    }

    fn soft(z: f64, t: f64) -> f64 {
        z.signum() * (z.abs() - t).max(0.0)
    }

    #[test]
    fn b_update_matches_dense_solve() {
        let mut rng = testutil::rng(1);
        let design = testutil::design(&mut rng, 8, &[2, 3], Preprocess::NONE);
        let y = normal(&mut rng, 8, 3);
        let a = normal(&mut rng, 5, 3);
        let l = normal(&mut rng, 5, 3);
        let rho = 0.1;
        let b = primal_b_update(&design, &y, &a, &l, rho).unwrap();
        let x = design.x();
        let m = x.transpose() * x / 8.0 + Matrix::identity(5, 5) * rho;
        let rhs = x.transpose() * &y / 8.0 + &a * rho + &l;
        let oracle = m.lu().solve(&rhs).unwrap();
        assert!(max_abs_diff(&b, &oracle) < 1e-9);
    }

    #[test]
    fn b_update_special_cases() {
        let mut rng = testutil::rng(2);
        let zero = MultiViewDesign::from_full(Matrix::zeros(6, 4), vec![4], Preprocess::NONE).unwrap();
        let y = normal(&mut rng, 6, 2);
        let a = normal(&mut rng, 4, 2);
        let l = normal(&mut rng, 4, 2);
        let b = primal_b_update(&zero, &y, &a, &l, 0.5).unwrap();
        assert!(max_abs_diff(&b, &(&a + &l / 0.5)) < 1e-12);

        let design = testutil::design(&mut rng, 6, &[4], Preprocess::NONE);
        let z = Matrix::zeros(4, 2);
        let b = primal_b_update(&design, &y, &z, &z, 0.3).unwrap();
        let x = design.x();
        let ridge = (x.transpose() * x / 6.0 + Matrix::identity(4, 4) * 0.3)
            .cholesky()
            .unwrap()
            .solve(&(x.transpose() * &y / 6.0));
        assert!(max_abs_diff(&b, &ridge) < 1e-10);

        assert!(primal_b_update(&design, &y, &z, &z, 0.0).is_err());
        let mut bad = y.clone();
        bad[(0, 0)] = f64::NAN;
        assert!(primal_b_update(&design, &bad, &z, &z, 1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn b_update_normal_equations(seed in any::<u64>(), n in 3usize..20, p in 1usize..25, q in 1usize..5, rho in 1e-3f64..1e3) {
            let mut rng = testutil::rng(seed);
            let design = testutil::design(&mut rng, n, &[p], Preprocess::NONE);
            let y = normal(&mut rng, n, q);
            let a = normal(&mut rng, p, q);
            let l = normal(&mut rng, p, q);
            let b = primal_b_update(&design, &y, &a, &l, rho).unwrap();
            let x = design.x();
            let rhs = x.transpose() * &y / n as f64 + &a * rho + &l;
            let lhs = x.transpose() * (x * &b) / n as f64 + &b * rho;
            prop_assert!((lhs - &rhs).norm() <= 1e-10 * (1.0 + rhs.norm()));
        }

        #[test]
        fn a_update_is_prox_minimal(seed in any::<u64>(), rho in 0.05f64..5.0, lambda in 0.0f64..2.0) {
            let mut rng = testutil::rng(seed);
            let sizes = [3usize, 4];
            let b_hat: Vec<Matrix> = sizes.iter().map(|&s| normal(&mut rng, s, 3)).collect();
            let dual: Vec<Matrix> = sizes.iter().map(|&s| normal(&mut rng, s, 3)).collect();
            let weights = PenaltyWeights::custom(vec![0.7, 1.3]).unwrap();
            let a = primal_a_update(&b_hat, &dual, rho, lambda, &weights).unwrap();
            for k in 0..2 {
                let target = &b_hat[k] - &dual[k] / rho;
                let tau = lambda * weights.w[k] / rho;
                let f = |z: &Matrix| 0.5 * (z - &target).norm_squared() + tau * linalg::nuclear_norm(z).unwrap();
                let best = f(&a[k]);
                prop_assert!(best <= f(&target) + 1e-12);
                for scale in [1e-2, 1e-4] {
                    for _ in 0..100 {
                        let dir = testutil::uniform(&mut rng, sizes[k], 3, -1.0, 1.0) * scale;
                        prop_assert!(best <= f(&(&a[k] + dir)) + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn a_update_degenerate_cases() {
        let mut rng = testutil::rng(3);
        let b = vec![normal(&mut rng, 3, 2)];
        let l = vec![normal(&mut rng, 3, 2)];
        let w = unit_weights(1);
        let a = primal_a_update(&b, &l, 2.0, 0.0, &w).unwrap();
        assert!(max_abs_diff(&a[0], &(&b[0] - &l[0] / 2.0)) < 1e-12);
        let top = linalg::spectral_norm(&(&b[0] - &l[0] / 2.0)).unwrap();
        let a = primal_a_update(&b, &l, 2.0, 2.0 * top * 1.01, &w).unwrap();
        assert!(a[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dual_and_residual_formulas() {
        let mut rng = testutil::rng(4);
        let a = vec![normal(&mut rng, 2, 3), normal(&mut rng, 4, 3)];
        let b = vec![normal(&mut rng, 2, 3), normal(&mut rng, 4, 3)];
        let bp = vec![normal(&mut rng, 2, 3), normal(&mut rng, 4, 3)];
        let l = vec![normal(&mut rng, 2, 3), normal(&mut rng, 4, 3)];
        let z = vec![Matrix::zeros(2, 3), Matrix::zeros(4, 3)];

        assert_eq!(dual_update(&l, &a, &a, 0.7).unwrap(), l);
        let d = dual_update(&z, &a, &b, 1.0).unwrap();
        let d2 = dual_update(&l, &a, &b, 0.7).unwrap();
        for k in 0..2 {
            assert!(max_abs_diff(&d[k], &(&a[k] - &b[k])) < 1e-15);
            for i in 0..a[k].nrows() {
                for j in 0..3 {
                    let expect = l[k][(i, j)] + 0.7 * (a[k][(i, j)] - b[k][(i, j)]);
                    assert!((d2[k][(i, j)] - expect).abs() < 1e-14);
                }
            }
        }

        let (rp, rd) = residuals(&a, &a, &bp, 0.5).unwrap();
        assert_eq!(rp, 0.0);
        assert!(rd > 0.0);
        let (_, rd) = residuals(&a, &b, &b, 0.5).unwrap();
        assert_eq!(rd, 0.0);
        let (rp, rd) = residuals(&a, &b, &bp, 0.5).unwrap();
        let sq = |x: &[Matrix], y: &[Matrix]| -> f64 {
            x.iter().zip(y).flat_map(|(m, n)| m.iter().zip(n.iter()).map(|(u, v)| (u - v).powi(2)).collect::<Vec<_>>()).sum()
        };
        assert!((rp - sq(&a, &b).sqrt()).abs() < 1e-12);
        assert!((rd - 0.5 * sq(&b, &bp).sqrt()).abs() < 1e-12);
        assert!(residuals(&a[..1], &b, &bp, 0.5).is_err());
    }

    #[test]
    fn augmented_lagrangian_terms() {
        let mut rng = testutil::rng(5);
        let design = testutil::design(&mut rng, 10, &[2, 3], Preprocess::NONE);
        let y = normal(&mut rng, 10, 4);
        let w = PenaltyWeights::custom(vec![0.5, 2.0]).unwrap();
        let sizes = design.view_sizes().to_vec();

        let zero = SolverState::zeros(&sizes, 4, 1.0);
        let v = augmented_lagrangian(&zero, &design, &y, 0.3, &w).unwrap();
        assert!((v - y.norm_squared() / 20.0).abs() < 1e-12);

        let b = normal(&mut rng, 5, 4);
        let mut tied = SolverState::zeros(&sizes, 4, 1.0);
        tied.a = b.clone();
        tied.b = b.clone();
        let coef = BlockCoefficients::new(Vector::zeros(4), b.clone(), sizes.clone()).unwrap();
        let v = augmented_lagrangian(&tied, &design, &y, 0.3, &w).unwrap();
        let o = model::objective(&design, &y, &coef, 0.3, &w).unwrap();
        assert!((v - o).abs() < 1e-12 * o.abs().max(1.0));

        let ab = [normal(&mut rng, 2, 4), normal(&mut rng, 3, 4)];
        let bb = [normal(&mut rng, 2, 4), normal(&mut rng, 3, 4)];
        let lb = [normal(&mut rng, 2, 4), normal(&mut rng, 3, 4)];
        let rho = 0.8;
        let st = SolverState::from_blocks(&ab, &bb, &lb, rho).unwrap();
        let mut expect = 0.0;
        let mut fitted = Matrix::zeros(10, 4);
        for k in 0..2 {
            fitted += design.block(k) * &bb[k];
            expect += 0.3 * w.w[k] * linalg::nuclear_norm(&ab[k]).unwrap();
            let diff = &ab[k] - &bb[k];
            expect += lb[k].component_mul(&diff).sum() + rho / 2.0 * diff.norm_squared();
        }
        expect += (&y - fitted).norm_squared() / 20.0;
        let v = augmented_lagrangian(&st, &design, &y, 0.3, &w).unwrap();
        assert!((v - expect).abs() < 1e-10 * expect.abs().max(1.0));
    }

    #[test]
    fn above_lambda_max_gives_zero_model() {
        let mut rng = testutil::rng(6);
        let design = testutil::design(&mut rng, 30, &[4, 5], Preprocess::CENTER);
        let y = normal(&mut rng, 30, 3);
        let w = model::compute_weights(&design, 3).unwrap();
        let lmax = model::lambda_max(&design, &y, &w).unwrap();
        for factor in [1.0, 1.5, 10.0] {
            let fit = fit_gaussian(&design, &y, lmax * factor, &w, &SolverOptions::default(), None).unwrap();
            assert!(fit.coefficients.b.iter().all(|&v| v == 0.0), "factor {factor}");
            assert!(fit.converged);
        }
        let fit = fit_gaussian(&design, &y, lmax * 0.9, &w, &SolverOptions::default(), None).unwrap();
        assert!(fit.coefficients.b.norm() > 0.0);
    }

    #[test]
    fn nuclear_norm_case_on_orthogonal_design() {
        for seed in 0..10 {
            let mut rng = testutil::rng(100 + seed);
            let design = testutil::orthogonal_design(&mut rng, 40, &[6]);
            let y = normal(&mut rng, 40, 4);
            let z = design.x().transpose() * &y / 40.0;
            let lambda = linalg::spectral_norm(&z).unwrap() * rng.random_range(0.05..0.9);
            let fit = fit_gaussian(&design, &y, lambda, &unit_weights(1), &tight(), None).unwrap();
            let (oracle, _) = linalg::svt(&z, lambda).unwrap();
            assert!(fit.converged);
            assert!(max_abs_diff(&fit.coefficients.b, &oracle) < 1e-6, "seed {seed}");
        }
    }

    #[test]
    fn lasso_case_on_orthogonal_design() {
        let mut rng = testutil::rng(7);
        let n = 36;
        let design = testutil::orthogonal_design(&mut rng, n, &[1; 6]);
        let y = normal(&mut rng, n, 1);
        let w = PenaltyWeights::custom(vec![2.0 / (n as f64).sqrt(); 6]).unwrap();
        let z = design.x().transpose() * &y / n as f64;
        let lambda = 0.5 * z.amax() / w.w[0];
        let fit = fit_gaussian(&design, &y, lambda, &w, &tight(), None).unwrap();
        for k in 0..6 {
            assert!((fit.coefficients.b[k] - soft(z[k], lambda * w.w[k])).abs() < 1e-6);
        }
    }

    #[test]
    fn group_lasso_case_on_orthogonal_design() {
        let mut rng = testutil::rng(8);
        let sizes = [2usize, 3, 4];
        let design = testutil::orthogonal_design(&mut rng, 30, &sizes);
        let y = normal(&mut rng, 30, 1);
        let w = PenaltyWeights::custom(vec![0.6, 1.0, 1.4]).unwrap();
        let z = design.x().transpose() * &y / 30.0;
        let lambda = 0.2;
        let fit = fit_gaussian(&design, &y, lambda, &w, &tight(), None).unwrap();
        let mut off = 0;
        for (k, &s) in sizes.iter().enumerate() {
            let zk = z.rows(off, s);
            let shrink = (1.0 - lambda * w.w[k] / zk.norm()).max(0.0);
            for i in 0..s {
                assert!((fit.coefficients.b[off + i] - shrink * zk[i]).abs() < 1e-6);
            }
            off += s;
        }
    }

    #[test]
    fn weighted_penalty_equals_rescaled_design() {
        let mut rng = testutil::rng(9);
        let raw = [normal(&mut rng, 25, 3), normal(&mut rng, 25, 4)];
        let design = model::build_design(&raw, Preprocess::NONE).unwrap();
        let y = normal(&mut rng, 25, 3);
        let w = PenaltyWeights::custom(vec![0.4, 1.7]).unwrap();
        let scaled: Vec<Matrix> = raw.iter().zip(&w.w).map(|(x, &wk)| x / wk).collect();
        let design2 = model::build_design(&scaled, Preprocess::NONE).unwrap();
        let opts = SolverOptions {
            tol: 1e-13,
            max_iter: 200_000,
            ..SolverOptions::default()
        };
        let lambda = 0.3 * model::lambda_max(&design, &y, &w).unwrap();
        let direct = fit_gaussian(&design, &y, lambda, &w, &opts, None).unwrap();
        let via = fit_gaussian(&design2, &y, lambda, &unit_weights(2), &opts, None).unwrap();
        let mut back = via.coefficients.b.clone();
        back.rows_mut(0, 3).scale_mut(1.0 / w.w[0]);
        back.rows_mut(3, 4).scale_mut(1.0 / w.w[1]);
        assert!(max_abs_diff(&direct.coefficients.b, &back) < 1e-8);
    }

    #[test]
    fn ridge_augmentation_matches_direct_ridge() {
        let mut rng = testutil::rng(10);
        let design = testutil::design(&mut rng, 20, &[3, 2], Preprocess::CENTER);
        let y = normal(&mut rng, 20, 3);
        let w = model::compute_weights(&design, 3).unwrap();

        let (aug0, y0) = augment_ridge(&design, &y, 0.0).unwrap();
        assert_eq!(aug0.x().shape(), (25, 5));
        assert_eq!(y0.shape(), (25, 3));
        assert!(aug0.x().rows(20, 5).iter().all(|&v| v == 0.0));
        let lambda = 0.2 * model::lambda_max(&design, &y, &w).unwrap();
        let a = fit_gaussian(&design, &y, lambda, &w, &tight(), None).unwrap();
        let b = fit_gaussian(&aug0, &y0, lambda, &w, &tight(), None).unwrap();
        assert!(max_abs_diff(&a.coefficients.b, &b.coefficients.b) < 1e-8);

        let (aug, ya) = augment_ridge(&design, &y, 0.5).unwrap();
        let ridge = SolverOptions {
            ridge_lambda2: 0.5,
            ..tight()
        };
        let direct = fit_gaussian(&design, &y, lambda, &w, &ridge, None).unwrap();
        let via = fit_gaussian(&aug, &ya, lambda, &w, &tight(), None).unwrap();
        assert!(max_abs_diff(&direct.coefficients.b, &via.coefficients.b) < 1e-6);
        assert!(augment_ridge(&design, &y, -1.0).is_err());
    }

    #[test]
    fn converged_fit_reports_consistent_objective() {
        let mut rng = testutil::rng(11);
        let design = testutil::design(&mut rng, 40, &[5, 5], Preprocess::CENTER);
        let y = normal(&mut rng, 40, 4);
        let w = model::compute_weights(&design, 4).unwrap();
        let lambda = 0.3 * model::lambda_max(&design, &y, &w).unwrap();
        let opts = SolverOptions::default();
        let fit = fit_gaussian(&design, &y, lambda, &w, &opts, None).unwrap();
        assert!(fit.converged);
        let thresh = opts.tol * fit.b_iterate.norm().max(1.0);
        assert!(fit.final_r_primal <= thresh && fit.final_r_dual <= thresh);
        let o = model::objective(&design, &y, &fit.coefficients, lambda, &w).unwrap();
        assert!((o - fit.objective).abs() <= 1e-8 * o.abs());
    }

    #[test]
    fn restarts_reach_the_same_optimum() {
        let mut rng = testutil::rng(12);
        let design = testutil::design(&mut rng, 30, &[4, 3], Preprocess::CENTER);
        let y = normal(&mut rng, 30, 3);
        let w = model::compute_weights(&design, 3).unwrap();
        let lambda = 0.2 * model::lambda_max(&design, &y, &w).unwrap();
        let opts = SolverOptions {
            rho_growth: 1.0,
            rho0: 1.0,
            ridge_lambda2: 1e-2,
            tol: 1e-9,
            max_iter: 100_000,
            ..SolverOptions::default()
        };
        let base = fit_gaussian(&design, &y, lambda, &w, &opts, None).unwrap();
        for _ in 0..10 {
            let init = BlockCoefficients::new(Vector::zeros(3), normal(&mut rng, 7, 3) * 3.0, vec![4, 3]).unwrap();
            let fit = fit_gaussian(&design, &y, lambda, &w, &opts, Some(&init)).unwrap();
            assert!(fit.converged);
            assert!((fit.objective - base.objective).abs() <= 1e-5 * base.objective.abs());
        }
    }

    #[test]
    fn wide_design_uses_consistent_solve() {
        let mut rng = testutil::rng(13);
        let x = normal(&mut rng, 6, 15);
        let gram = GramSolver::new(&x);
        assert!(matches!(gram, GramSolver::Dual { .. }));
        let rhs = normal(&mut rng, 15, 2);
        let z = gram.solve(0.5, 0.2, &rhs);
        let lhs = x.transpose() * (&x * &z) * 0.5 + &z * 0.2;
        assert!((lhs - &rhs).norm() < 1e-10 * (1.0 + rhs.norm()));
    }

    #[test]
    fn fits_are_bitwise_reproducible() {
        let mut rng = testutil::rng(14);
        let design = testutil::design(&mut rng, 25, &[3, 4], Preprocess::CENTER);
        let y = normal(&mut rng, 25, 3);
        let w = model::compute_weights(&design, 3).unwrap();
        let lambda = 0.1 * model::lambda_max(&design, &y, &w).unwrap();
        let a = fit_gaussian(&design, &y, lambda, &w, &SolverOptions::default(), None).unwrap();
        let b = fit_gaussian(&design, &y, lambda, &w, &SolverOptions::default(), None).unwrap();
        assert_eq!(a.coefficients, b.coefficients);
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }

    #[test]
    fn invalid_inputs_rejected() {
        let mut rng = testutil::rng(15);
        let design = testutil::design(&mut rng, 10, &[2], Preprocess::CENTER);
        let y = normal(&mut rng, 10, 2);
        let w = unit_weights(1);
        let o = SolverOptions::default();
        assert!(fit_gaussian(&design, &y, -1.0, &w, &o, None).is_err());
        assert!(fit_gaussian(&design, &y, 0.1, &unit_weights(2), &o, None).is_err());
        assert!(fit_gaussian(&design, &normal(&mut rng, 9, 2), 0.1, &w, &o, None).is_err());
        let bad = SolverOptions { rho_growth: 3.0, ..o.clone() };
        assert!(fit_gaussian(&design, &y, 0.1, &w, &bad, None).is_err());
        let warm = BlockCoefficients::zeros(&[3], 2);
        assert!(fit_gaussian(&design, &y, 0.1, &w, &o, Some(&warm)).is_err());
    }

    #[test]
    fn non_convergence_is_reported_not_raised() {
        let mut rng = testutil::rng(16);
        let design = testutil::design(&mut rng, 20, &[4, 4], Preprocess::CENTER);
        let y = normal(&mut rng, 20, 3);
        let w = model::compute_weights(&design, 3).unwrap();
        let opts = SolverOptions { max_iter: 2, ..SolverOptions::default() };
        let fit = fit_gaussian(&design, &y, 0.01, &w, &opts, None).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 2);
    }
}
