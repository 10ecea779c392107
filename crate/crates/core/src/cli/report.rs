use serde::{Deserialize, Serialize};

use mvrr::{FitResult, Family, MultiViewDesign, Result};

use super::io::ViewSpec;

pub const FORMAT_VERSION: u32 = 1;

/// The inputs a fit was produced from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub x: String,
    pub views: String,
    pub y: String,
    pub family: Family,
    pub center: bool,
    pub scale: bool,
    pub ridge: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub lambda: Option<f64>,
    pub folds: Option<usize>,
    pub nlambda: Option<usize>,
    pub lambda_min_ratio: Option<f64>,
    pub seed: Option<u64>,
    pub adaptive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewReport {
    pub name: String,
    pub cols: [usize; 2],
    pub p_k: usize,
    /// `None` when the view was excluded by the adaptive refit.
    pub weight: Option<f64>,
    pub frobenius_norm: f64,
    pub nuclear_norm: f64,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub center: bool,
    pub scale: bool,
    pub column_means: Vec<f64>,
    pub column_scales: Vec<f64>,
    /// Zero-based columns left unscaled because their variance is zero.
    pub zero_variance_columns: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub iterations: usize,
    pub converged: bool,
    pub final_r_primal: f64,
    pub final_r_dual: f64,
    pub objective: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub format_version: u32,
    pub command: String,
    pub config: RunConfig,
    pub family: Family,
    pub n: usize,
    pub q: usize,
    /// `None` when every view was excluded and the intercept-only model remains.
    pub lambda: Option<f64>,
    pub lambda2: f64,
    pub lambda_max: f64,
    pub rank_tol: f64,
    pub intercept: Vec<f64>,
    pub views: Vec<ViewReport>,
    pub preprocessing: Preprocessing,
    pub convergence: Convergence,
    pub timing_seconds: Option<f64>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl FitReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        command: &str,
        config: RunConfig,
        design: &MultiViewDesign,
        views: &[ViewSpec],
        fit: &FitResult,
        lambda2: f64,
        lambda_max: f64,
        timing_seconds: Option<f64>,
    ) -> Result<Self> {
        let coef = &fit.coefficients;
        let nuclear = coef.nuclear_norms()?;
        let ranks = coef.ranks()?;
        let frob = coef.frobenius_norms();
        let views = views
            .iter()
            .enumerate()
            .map(|(k, v)| ViewReport {
                name: v.name.clone(),
                cols: v.cols,
                p_k: v.width(),
                weight: finite(fit.weights.w[k]),
                frobenius_norm: frob[k],
                nuclear_norm: nuclear[k],
                rank: ranks[k],
            })
            .collect();
        Ok(FitReport {
            format_version: FORMAT_VERSION,
            command: command.to_string(),
            config,
            family: fit.family,
            n: design.n_rows(),
            q: coef.q(),
            lambda: finite(fit.lambda),
            lambda2,
            lambda_max,
            rank_tol: coef.rank_tol,
            intercept: coef.intercept.iter().copied().collect(),
            views,
            preprocessing: Preprocessing {
                center: design.preprocess().center,
                scale: design.preprocess().scale,
                column_means: design.column_means().to_vec(),
                column_scales: design.column_scales().to_vec(),
                zero_variance_columns: design
                    .zero_variance_columns()
                    .iter()
                    .enumerate()
                    .filter(|(_, &z)| z)
                    .map(|(j, _)| j)
                    .collect(),
            },
            convergence: Convergence {
                iterations: fit.iterations,
                converged: fit.converged,
                final_r_primal: fit.final_r_primal,
                final_r_dual: fit.final_r_dual,
                objective: finite(fit.objective),
            },
            timing_seconds,
        })
    }

    pub fn view_specs(&self) -> Vec<ViewSpec> {
        self.views
            .iter()
            .map(|v| ViewSpec {
                name: v.name.clone(),
                cols: v.cols,
            })
            .collect()
    }

    pub fn p(&self) -> usize {
        self.views.iter().map(|v| v.p_k).sum()
    }
}
