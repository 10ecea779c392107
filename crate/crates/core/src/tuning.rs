//! Penalty grids, warm-started solution paths, K-fold cross-validation,
//! validation-set tuning and the adaptively reweighted refit.

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MvrrError, Result};
use crate::glm::{self, logistic};
use crate::linalg::Matrix;
use crate::metrics;
use crate::model::{
    build_design, BlockCoefficients, Family, MultiViewDesign, PenaltyWeights, Preprocess, ResponseData, WeightSource,
};
use crate::solver::{FitResult, SolverOptions};

/// Log-equispaced, strictly decreasing penalty levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub values: Vec<f64>,
    pub min_ratio: f64,
}

impl LambdaGrid {
    pub fn n_values(&self) -> usize {
        self.values.len()
    }

    /// Geometric grid from `lambda_max` down to `lambda_max * min_ratio`.
    pub fn from_max(lambda_max: f64, n_values: usize, min_ratio: f64) -> Result<Self> {
        if n_values < 2 {
            return Err(MvrrError::InvalidArgument(format!("a grid needs at least 2 values, got {n_values}")));
        }
        if !(min_ratio > 0.0 && min_ratio < 1.0) {
            return Err(MvrrError::InvalidArgument(format!("min_ratio must lie in (0, 1), got {min_ratio}")));
        }
        if !(lambda_max > 0.0 && lambda_max.is_finite()) {
            return Err(MvrrError::InvalidData(format!(
                "lambda_max is {lambda_max}; the response carries no signal to penalise"
            )));
        }
        let step = min_ratio.ln() / (n_values - 1) as f64;
        let mut values: Vec<f64> = (0..n_values).map(|i| lambda_max * (step * i as f64).exp()).collect();
        values[0] = lambda_max;
        values[n_values - 1] = lambda_max * min_ratio;
        Ok(LambdaGrid { values, min_ratio })
    }

    /// The one-point grid `{lambda_max}`.
    pub fn single(lambda_max: f64) -> Self {
        LambdaGrid {
            values: vec![lambda_max],
            min_ratio: 1.0,
        }
    }
}

/// Number of grid points and the smallest-to-largest ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridShape {
    pub n_values: usize,
    pub min_ratio: f64,
}

impl Default for GridShape {
    fn default() -> Self {
        GridShape {
            n_values: 50,
            min_ratio: 1e-3,
        }
    }
}

pub fn lambda_grid(
    design: &MultiViewDesign,
    response: &ResponseData,
    weights: &PenaltyWeights,
    n_values: usize,
    min_ratio: f64,
) -> Result<LambdaGrid> {
    let lmax = glm::lambda_max_response(design, response, weights)?;
    LambdaGrid::from_max(lmax, n_values, min_ratio)
}

/// Fits every grid value in order, each warm-started at the previous
/// solution.
pub fn solve_path(
    design: &MultiViewDesign,
    response: &ResponseData,
    grid: &LambdaGrid,
    weights: &PenaltyWeights,
    options: &SolverOptions,
) -> Result<Vec<FitResult>> {
    let mut out: Vec<FitResult> = Vec::with_capacity(grid.n_values());
    for &lambda in &grid.values {
        let warm = out.last().map(|f| &f.coefficients);
        let fit = glm::fit(design, response, lambda, weights, options, warm).map_err(|e| e.at_lambda(lambda))?;
        out.push(fit);
    }
    Ok(out)
}

/// Predicted natural parameters on an already transformed design.
pub fn predict_theta(coefficients: &BlockCoefficients, x: &Matrix) -> Result<Matrix> {
    coefficients.linear_predictor(x)
}

/// Held-out error: mean squared error over observed cells (Gaussian) or
/// average deviance (binary).
pub fn prediction_error(coefficients: &BlockCoefficients, x: &Matrix, response: &ResponseData) -> Result<f64> {
    let theta = predict_theta(coefficients, x)?;
    if theta.shape() != response.values().shape() {
        return Err(MvrrError::Dimension("held-out response does not match predictions".into()));
    }
    match response.family() {
        Family::Gaussian => {
            let terms: Vec<f64> = theta
                .iter()
                .zip(response.values().iter())
                .zip(response.mask().iter())
                .filter(|(_, &m)| m)
                .map(|((&t, &y), _)| (y - t) * (y - t))
                .collect();
            if terms.is_empty() {
                return Err(MvrrError::InvalidData("no observed held-out cells".into()));
            }
            Ok(metrics::pairwise_sum(&terms) / terms.len() as f64)
        }
        Family::Binary => metrics::avg_deviance(response.values(), &theta.map(logistic), response.mask()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    Min,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub grid: LambdaGrid,
    /// `n_values x k`; `None` marks a fold that could not be evaluated.
    pub fold_errors: Vec<Vec<Option<f64>>>,
    pub mean_error: Vec<f64>,
    pub se_error: Vec<f64>,
    pub selected_lambda: f64,
    pub selected_index: usize,
    pub selection_rule: SelectionRule,
    pub folds: usize,
    pub seed: u64,
    pub warnings: Vec<String>,
}

/// Seeded shuffle of `0..n` cut into `k` contiguous folds.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(MvrrError::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(MvrrError::InvalidArgument(format!("{k} folds but only {n} rows; some fold would be empty")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(5);
    order.shuffle(&mut rng);
    Ok((0..k).map(|f| order[f * n / k..(f + 1) * n / k].to_vec()).collect())
}

/// Index of the smallest finite error; ties resolve to the larger lambda.
fn argmin_first(errors: &[f64]) -> Option<usize> {
    errors
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_finite())
        .fold(None, |best: Option<(usize, f64)>, (i, &e)| match best {
            Some((_, b)) if b <= e => best,
            _ => Some((i, e)),
        })
        .map(|(i, _)| i)
}

fn has_both_classes(response: &ResponseData) -> bool {
    let (y, m) = (response.values(), response.mask());
    (0..response.q()).all(|j| {
        let mut seen = [false; 2];
        for i in 0..response.n() {
            if m[(i, j)] {
                seen[(y[(i, j)] == 1.0) as usize] = true;
            }
        }
        seen[0] && seen[1]
    })
}

fn fold_errors(
    raw: &Matrix,
    view_sizes: &[usize],
    preprocess: Preprocess,
    response: &ResponseData,
    held_out: &[usize],
    grid: &LambdaGrid,
    weights: &PenaltyWeights,
    options: &SolverOptions,
) -> std::result::Result<Vec<f64>, String> {
    let n = raw.nrows();
    let mut is_held = vec![false; n];
    held_out.iter().for_each(|&i| is_held[i] = true);
    let train: Vec<usize> = (0..n).filter(|&i| !is_held[i]).collect();
    let train_design = MultiViewDesign::from_full(raw.select_rows(train.iter()), view_sizes.to_vec(), preprocess)
        .map_err(|e| e.to_string())?;
    let train_resp = response.select_rows(&train).map_err(|e| e.to_string())?;
    if train_resp.family() == Family::Binary && !has_both_classes(&train_resp) {
        return Err("a response column has a single class in the training fold".into());
    }
    let val_resp = response.select_rows(held_out).map_err(|e| e.to_string())?;
    let val_x = train_design.transform_full(&raw.select_rows(held_out.iter())).map_err(|e| e.to_string())?;
    let path = solve_path(&train_design, &train_resp, grid, weights, options).map_err(|e| e.to_string())?;
    path.iter()
        .map(|fit| prediction_error(&fit.coefficients, &val_x, &val_resp).map_err(|e| e.to_string()))
        .collect()
}

/// K-fold cross-validation over `grid`. Each training fold is re-centered
/// (and re-scaled) from its own rows; the held-out rows replay that
/// transform. Folds run in parallel; results are merged by fold index.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    raw_blocks: &[Matrix],
    preprocess: Preprocess,
    response: &ResponseData,
    grid: &LambdaGrid,
    weights: &PenaltyWeights,
    k: usize,
    options: &SolverOptions,
    seed: u64,
) -> Result<CvReport> {
    let full = build_design(raw_blocks, Preprocess::NONE)?;
    let raw = full.x();
    if response.n() != raw.nrows() {
        return Err(MvrrError::Dimension("response rows differ from design".into()));
    }
    if weights.len() != full.k() {
        return Err(MvrrError::Dimension("one weight per view required".into()));
    }
    options.validate()?;
    let folds = fold_assignment(raw.nrows(), k, seed)?;
    let per_fold: Vec<std::result::Result<Vec<f64>, String>> = folds
        .par_iter()
        .map(|held| fold_errors(raw, full.view_sizes(), preprocess, response, held, grid, weights, options))
        .collect();

    let nv = grid.n_values();
    let mut fold_errors = vec![vec![None; k]; nv];
    let mut warnings = Vec::new();
    for (f, res) in per_fold.into_iter().enumerate() {
        match res {
            Ok(errs) => errs.into_iter().enumerate().for_each(|(i, e)| fold_errors[i][f] = Some(e)),
            Err(msg) => {
                let w = format!("fold {f} excluded: {msg}");
                warn!("{w}");
                warnings.push(w);
            }
        }
    }
    let mut mean_error = Vec::with_capacity(nv);
    let mut se_error = Vec::with_capacity(nv);
    for row in &fold_errors {
        let vals: Vec<f64> = row.iter().flatten().copied().collect();
        let (m, sd) = metrics::mean_sd(&vals);
        mean_error.push(m);
        se_error.push(sd / (vals.len() as f64).sqrt());
    }
    let selected_index = argmin_first(&mean_error)
        .ok_or_else(|| MvrrError::InvalidData("no fold could be evaluated".into()))?;
    Ok(CvReport {
        grid: grid.clone(),
        fold_errors,
        mean_error,
        se_error,
        selected_lambda: grid.values[selected_index],
        selected_index,
        selection_rule: SelectionRule::Min,
        folds: k,
        seed,
        warnings,
    })
}

#[derive(Clone, Debug)]
pub struct ValidationSelection {
    pub fit: FitResult,
    pub index: usize,
    pub errors: Vec<f64>,
}

/// Fits the path on the training data and returns the member with the
/// smallest validation error.
pub fn tune_validation(
    train: &MultiViewDesign,
    train_response: &ResponseData,
    validation: &MultiViewDesign,
    validation_response: &ResponseData,
    grid: &LambdaGrid,
    weights: &PenaltyWeights,
    options: &SolverOptions,
) -> Result<ValidationSelection> {
    if validation.view_sizes() != train.view_sizes() {
        return Err(MvrrError::Dimension(format!(
            "validation views {:?} differ from training views {:?}",
            validation.view_sizes(),
            train.view_sizes()
        )));
    }
    if validation_response.q() != train_response.q() || validation_response.n() != validation.n_rows() {
        return Err(MvrrError::Dimension("validation response is not conformable".into()));
    }
    let path = solve_path(train, train_response, grid, weights, options)?;
    let errors = path
        .iter()
        .map(|f| prediction_error(&f.coefficients, validation.x(), validation_response))
        .collect::<Result<Vec<f64>>>()?;
    let index = argmin_first(&errors).ok_or_else(|| MvrrError::Numerical("no finite validation error".into()))?;
    let fit = path.into_iter().nth(index).expect("index within path");
    Ok(ValidationSelection { fit, index, errors })
}

/// Reweighted penalties `w_k / ||B_k||_F` from a pilot fit. Views whose pilot
/// block norm is at most `1e-8 * max_k ||B_k||_F` get an infinite weight.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveWeights {
    pub weights: PenaltyWeights,
    pub excluded: Vec<bool>,
}

pub fn adaptive_weights(pilot: &FitResult) -> AdaptiveWeights {
    let norms = pilot.coefficients.frobenius_norms();
    let max = norms.iter().copied().fold(0.0, f64::max);
    let eps = 1e-8 * max;
    let excluded: Vec<bool> = norms.iter().map(|&nrm| max == 0.0 || nrm <= eps).collect();
    let w = pilot
        .weights
        .w
        .iter()
        .zip(&norms)
        .zip(&excluded)
        .map(|((&w, &nrm), &ex)| if ex { f64::INFINITY } else { w / nrm })
        .collect();
    AdaptiveWeights {
        weights: PenaltyWeights { w, source: WeightSource::Adaptive },
        excluded,
    }
}

/// How the adaptive refit chooses its penalty level.
pub enum Tuner<'a> {
    Validation {
        design: &'a MultiViewDesign,
        response: &'a ResponseData,
    },
    CrossValidation {
        raw_blocks: &'a [Matrix],
        preprocess: Preprocess,
        folds: usize,
        seed: u64,
    },
    Fixed(f64),
}

#[derive(Clone, Debug)]
pub struct AdaptiveFit {
    /// Coefficients cover all views; excluded views are exactly zero.
    pub fit: FitResult,
    pub excluded: Vec<bool>,
    pub grid: Option<LambdaGrid>,
    pub cv: Option<CvReport>,
}

fn expand(sub: &BlockCoefficients, keep: &[usize], view_sizes: &[usize]) -> Result<BlockCoefficients> {
    let q = sub.q();
    let mut full = BlockCoefficients::zeros(view_sizes, q);
    full.intercept = sub.intercept.clone();
    full.rank_tol = sub.rank_tol;
    let offsets: Vec<usize> = view_sizes.iter().scan(0, |a, &s| { let o = *a; *a += s; Some(o) }).collect();
    for (i, &k) in keep.iter().enumerate() {
        full.b.rows_mut(offsets[k], view_sizes[k]).copy_from(&sub.block(i));
    }
    Ok(full)
}

/// Refits with adaptive weights derived from `pilot`, dropping excluded
/// views, and re-tunes `lambda` on a fresh grid.
pub fn adaptive_refit(
    design: &MultiViewDesign,
    response: &ResponseData,
    pilot: &FitResult,
    shape: GridShape,
    options: &SolverOptions,
    tuner: Tuner<'_>,
) -> Result<AdaptiveFit> {
    if pilot.coefficients.view_sizes() != design.view_sizes() {
        return Err(MvrrError::Dimension("pilot fit does not match the design".into()));
    }
    let aw = adaptive_weights(pilot);
    let keep: Vec<usize> = (0..design.k()).filter(|&k| !aw.excluded[k]).collect();
    if keep.is_empty() {
        warn!("adaptive refit: every view excluded, returning the intercept-only model");
        let mut coefficients = BlockCoefficients::zeros(design.view_sizes(), response.q());
        coefficients.intercept = glm::null_intercept(response);
        let fit = FitResult {
            coefficients,
            lambda: f64::INFINITY,
            weights: aw.weights,
            family: response.family(),
            iterations: 0,
            converged: true,
            final_r_primal: 0.0,
            final_r_dual: 0.0,
            objective: f64::NAN,
            objective_trace: Vec::new(),
            b_iterate: Matrix::zeros(design.p(), response.q()),
        };
        return Ok(AdaptiveFit { fit, excluded: aw.excluded, grid: None, cv: None });
    }
    let sub = design.select_views(&keep)?;
    let sub_w = PenaltyWeights {
        w: keep.iter().map(|&k| aw.weights.w[k]).collect(),
        source: WeightSource::Adaptive,
    };

    let (fit, grid, cv) = match tuner {
        Tuner::Fixed(lambda) => (glm::fit(&sub, response, lambda, &sub_w, options, None)?, None, None),
        Tuner::Validation { design: val, response: val_resp } => {
            let grid = lambda_grid(&sub, response, &sub_w, shape.n_values, shape.min_ratio)?;
            let val_sub = val.select_views(&keep)?;
            let sel = tune_validation(&sub, response, &val_sub, val_resp, &grid, &sub_w, options)?;
            (sel.fit, Some(grid), None)
        }
        Tuner::CrossValidation { raw_blocks, preprocess, folds, seed } => {
            let grid = lambda_grid(&sub, response, &sub_w, shape.n_values, shape.min_ratio)?;
            let raw_sub: Vec<Matrix> = keep.iter().map(|&k| raw_blocks[k].clone()).collect();
            let report = cross_validate(&raw_sub, preprocess, response, &grid, &sub_w, folds, options, seed)?;
            let prefix = LambdaGrid {
                values: grid.values[..=report.selected_index].to_vec(),
                min_ratio: grid.min_ratio,
            };
            let fit = solve_path(&sub, response, &prefix, &sub_w, options)?.pop().expect("non-empty path");
            (fit, Some(grid), Some(report))
        }
    };
    let coefficients = expand(&fit.coefficients, &keep, design.view_sizes())?;
    let fit = FitResult {
        coefficients,
        weights: aw.weights,
        b_iterate: expand(
            &BlockCoefficients::new(fit.coefficients.intercept.clone(), fit.b_iterate.clone(), sub.view_sizes().to_vec())?,
            &keep,
            design.view_sizes(),
        )?
        .b,
        ..fit
    };
    Ok(AdaptiveFit { fit, excluded: aw.excluded, grid, cv })
}
