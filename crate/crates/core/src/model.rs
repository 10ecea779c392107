//! Domain types shared by every estimator: the multi-view design, response
//! data, penalty weights and partitioned coefficients, plus the objective and
//! a few structural diagnostics.

use nalgebra::{DMatrix, DMatrixView};
use serde::{Deserialize, Serialize};

use crate::error::{MvrrError, Result};
use crate::linalg::{self, Matrix, Vector};

/// Column pre-processing applied when a design is built.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preprocess {
    pub center: bool,
    pub scale: bool,
}

impl Preprocess {
    pub const CENTER: Preprocess = Preprocess {
        center: true,
        scale: false,
    };
    pub const NONE: Preprocess = Preprocess {
        center: false,
        scale: false,
    };
}

/// The K-block predictor matrix `X = (X_1, ..., X_K)` after pre-processing,
/// with the per-view spectral data the penalty weights need.
#[derive(Clone, Debug)]
pub struct MultiViewDesign {
    x: Matrix,
    view_sizes: Vec<usize>,
    offsets: Vec<usize>,
    view_names: Vec<String>,
    column_means: Vec<f64>,
    column_scales: Vec<f64>,
    zero_variance: Vec<bool>,
    preprocess: Preprocess,
    sigma1: Vec<f64>,
    rank: Vec<usize>,
    loss_n: usize,
}

/// Builds a design from raw view blocks, centering and/or scaling columns.
///
/// Scaling divides each column by `sqrt(x^T x / n)` (after centering) so the
/// diagonal of `X^T X / n` is one. Zero-variance columns keep scale 1 and are
/// flagged in [`MultiViewDesign::zero_variance_columns`].
pub fn build_design(raw_blocks: &[Matrix], preprocess: Preprocess) -> Result<MultiViewDesign> {
    let (raw, view_sizes) = concat_blocks(raw_blocks)?;
    MultiViewDesign::from_full(raw, view_sizes, preprocess)
}

/// Applies recorded column means and scales, `(x - mean) / scale`, to raw
/// rows. Used by designs and by stored models alike.
pub fn replay_preprocessing(raw: &Matrix, means: &[f64], scales: &[f64]) -> Result<Matrix> {
    if raw.ncols() != means.len() || means.len() != scales.len() {
        return Err(MvrrError::Dimension(format!(
            "expected {} predictor columns, got {}",
            means.len(),
            raw.ncols()
        )));
    }
    if !linalg::all_finite(raw) {
        return Err(MvrrError::NonFinite("design".into()));
    }
    let mut out = raw.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let (mean, scale) = (means[j], scales[j]);
        for v in col.iter_mut() {
            *v = (*v - mean) / scale;
        }
    }
    Ok(out)
}

fn concat_blocks(raw_blocks: &[Matrix]) -> Result<(Matrix, Vec<usize>)> {
    let first = raw_blocks
        .first()
        .ok_or_else(|| MvrrError::InvalidData("design needs at least one view".into()))?;
    let n = first.nrows();
    let mut sizes = Vec::with_capacity(raw_blocks.len());
    for (k, block) in raw_blocks.iter().enumerate() {
        if block.ncols() == 0 {
            return Err(MvrrError::EmptyBlock(k));
        }
        if block.nrows() != n {
            return Err(MvrrError::RowMismatch {
                block: k,
                expected: n,
                found: block.nrows(),
            });
        }
        sizes.push(block.ncols());
    }
    let p: usize = sizes.iter().sum();
    let mut x = Matrix::zeros(n, p);
    let mut off = 0;
    for block in raw_blocks {
        x.columns_mut(off, block.ncols()).copy_from(block);
        off += block.ncols();
    }
    Ok((x, sizes))
}

impl MultiViewDesign {
    /// Builds a design from an `n x p` matrix whose columns are split into
    /// consecutive views of the given sizes.
    pub fn from_full(raw: Matrix, view_sizes: Vec<usize>, preprocess: Preprocess) -> Result<Self> {
        if view_sizes.is_empty() {
            return Err(MvrrError::InvalidData("design needs at least one view".into()));
        }
        if let Some(k) = view_sizes.iter().position(|&s| s == 0) {
            return Err(MvrrError::EmptyBlock(k));
        }
        let p: usize = view_sizes.iter().sum();
        if p != raw.ncols() {
            return Err(MvrrError::Dimension(format!(
                "view sizes sum to {p} but the design has {} columns",
                raw.ncols()
            )));
        }
        let n = raw.nrows();
        if n == 0 {
            return Err(MvrrError::InvalidData("design has no rows".into()));
        }
        if !linalg::all_finite(&raw) {
            return Err(MvrrError::NonFinite("design".into()));
        }

        let mut column_means = vec![0.0; p];
        let mut column_scales = vec![1.0; p];
        let mut zero_variance = vec![false; p];
        for (j, col) in raw.column_iter().enumerate() {
            let mean = if preprocess.center {
                col.sum() / n as f64
            } else {
                0.0
            };
            column_means[j] = mean;
            if preprocess.scale {
                let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
                let scale = (ss / n as f64).sqrt();
                let magnitude = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if scale <= 1e-14 * magnitude.max(f64::MIN_POSITIVE) || scale == 0.0 {
                    zero_variance[j] = true;
                } else {
                    column_scales[j] = scale;
                }
            }
        }

        let offsets = offsets_of(&view_sizes);
        let mut design = MultiViewDesign {
            x: Matrix::zeros(0, 0),
            view_names: (1..=view_sizes.len()).map(|k| format!("view{k}")).collect(),
            view_sizes,
            offsets,
            column_means,
            column_scales,
            zero_variance,
            preprocess,
            sigma1: Vec::new(),
            rank: Vec::new(),
            loss_n: n,
        };
        design.x = design.transform_full(&raw)?;
        design.refresh_spectral_cache()?;
        Ok(design)
    }

    fn refresh_spectral_cache(&mut self) -> Result<()> {
        let n = self.n_rows();
        let mut sigma1 = Vec::with_capacity(self.k());
        let mut rank = Vec::with_capacity(self.k());
        for k in 0..self.k() {
            let sv = linalg::singular_values(&self.block(k).into_owned())?;
            let tol = linalg::default_rank_tol(n, self.view_sizes[k]);
            sigma1.push(sv.iter().copied().fold(0.0, f64::max));
            rank.push(linalg::rank_from_singular_values(&sv, tol));
        }
        self.sigma1 = sigma1;
        self.rank = rank;
        Ok(())
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.k() {
            return Err(MvrrError::Dimension(format!(
                "{} view names for {} views",
                names.len(),
                self.k()
            )));
        }
        self.view_names = names;
        Ok(self)
    }

    /// Replays the recorded centering/scaling on new raw rows.
    pub fn transform_full(&self, raw: &Matrix) -> Result<Matrix> {
        if raw.ncols() != self.p() {
            return Err(MvrrError::Dimension(format!(
                "expected {} predictor columns, got {}",
                self.p(),
                raw.ncols()
            )));
        }
        replay_preprocessing(raw, &self.column_means, &self.column_scales)
    }

    /// Same as [`transform_full`](Self::transform_full) for per-view blocks.
    pub fn transform(&self, raw_blocks: &[Matrix]) -> Result<Matrix> {
        let (raw, sizes) = concat_blocks(raw_blocks)?;
        if sizes != self.view_sizes {
            return Err(MvrrError::Dimension(format!(
                "view sizes {sizes:?} do not match the design's {:?}",
                self.view_sizes
            )));
        }
        self.transform_full(&raw)
    }

    /// A design over a subset of views (in the given order), keeping the
    /// recorded transforms.
    pub fn select_views(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(MvrrError::InvalidArgument("no views selected".into()));
        }
        let mut cols = Vec::new();
        for &k in keep {
            if k >= self.k() {
                return Err(MvrrError::InvalidArgument(format!("no view {k}")));
            }
            cols.extend(self.offsets[k]..self.offsets[k] + self.view_sizes[k]);
        }
        let view_sizes: Vec<usize> = keep.iter().map(|&k| self.view_sizes[k]).collect();
        Ok(MultiViewDesign {
            x: self.x.select_columns(cols.iter()),
            offsets: offsets_of(&view_sizes),
            view_sizes,
            view_names: keep.iter().map(|&k| self.view_names[k].clone()).collect(),
            column_means: cols.iter().map(|&j| self.column_means[j]).collect(),
            column_scales: cols.iter().map(|&j| self.column_scales[j]).collect(),
            zero_variance: cols.iter().map(|&j| self.zero_variance[j]).collect(),
            preprocess: self.preprocess,
            sigma1: keep.iter().map(|&k| self.sigma1[k]).collect(),
            rank: keep.iter().map(|&k| self.rank[k]).collect(),
            loss_n: self.loss_n,
        })
    }

    /// Every column becomes its own view (the multi-task-learning special
    /// case). Spectral caches are recomputed.
    pub fn regroup_columns(&self) -> Result<Self> {
        let p = self.p();
        let mut names = Vec::with_capacity(p);
        for k in 0..self.k() {
            for j in 0..self.view_sizes[k] {
                names.push(format!("{}[{j}]", self.view_names[k]));
            }
        }
        let mut out = MultiViewDesign {
            x: self.x.clone(),
            view_sizes: vec![1; p],
            offsets: (0..p).collect(),
            view_names: names,
            column_means: self.column_means.clone(),
            column_scales: self.column_scales.clone(),
            zero_variance: self.zero_variance.clone(),
            preprocess: self.preprocess,
            sigma1: Vec::new(),
            rank: Vec::new(),
            loss_n: self.loss_n,
        };
        out.refresh_spectral_cache()?;
        Ok(out)
    }

    /// Appends rows to the (already transformed) design without touching the
    /// transform record or the loss normaliser. Used by ridge augmentation.
    pub(crate) fn with_appended_rows(&self, extra: &Matrix) -> Result<Self> {
        let n = self.n_rows();
        let mut x = Matrix::zeros(n + extra.nrows(), self.p());
        x.rows_mut(0, n).copy_from(&self.x);
        x.rows_mut(n, extra.nrows()).copy_from(extra);
        let mut out = self.clone();
        out.x = x;
        out.preprocess = Preprocess::NONE;
        out.column_means = vec![0.0; self.p()];
        out.column_scales = vec![1.0; self.p()];
        out.refresh_spectral_cache()?;
        Ok(out)
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }
    pub fn block(&self, k: usize) -> DMatrixView<'_, f64> {
        self.x.columns(self.offsets[k], self.view_sizes[k])
    }
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }
    /// The `n` in the `1/(2n)` loss normaliser. Equals the row count except
    /// for ridge-augmented designs.
    pub fn loss_n(&self) -> usize {
        self.loss_n
    }
    pub fn p(&self) -> usize {
        self.column_means.len()
    }
    pub fn k(&self) -> usize {
        self.view_sizes.len()
    }
    pub fn view_sizes(&self) -> &[usize] {
        &self.view_sizes
    }
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }
    pub fn view_names(&self) -> &[String] {
        &self.view_names
    }
    pub fn column_means(&self) -> &[f64] {
        &self.column_means
    }
    pub fn column_scales(&self) -> &[f64] {
        &self.column_scales
    }
    pub fn zero_variance_columns(&self) -> &[bool] {
        &self.zero_variance
    }
    pub fn preprocess(&self) -> Preprocess {
        self.preprocess
    }
    pub fn is_centered(&self) -> bool {
        self.preprocess.center
    }
    /// Largest singular value of each view block.
    pub fn sigma1(&self) -> &[f64] {
        &self.sigma1
    }
    /// Numerical rank of each view block.
    pub fn ranks(&self) -> &[usize] {
        &self.rank
    }
}

fn offsets_of(sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .scan(0, |acc, &s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Binary,
}

/// Response matrix with its family and observation mask (`true` = observed).
#[derive(Clone, Debug)]
pub struct ResponseData {
    values: Matrix,
    family: Family,
    mask: DMatrix<bool>,
}

impl ResponseData {
    /// Validates and wraps a response. Missing cells (mask `false`) may hold
    /// any value, including NaN; they are stored as zero.
    pub fn new(mut values: Matrix, family: Family, mask: Option<DMatrix<bool>>) -> Result<Self> {
        let (n, q) = values.shape();
        if n == 0 || q == 0 {
            return Err(MvrrError::InvalidData("empty response matrix".into()));
        }
        let mask = mask.unwrap_or_else(|| DMatrix::from_element(n, q, true));
        if mask.shape() != (n, q) {
            return Err(MvrrError::Dimension(format!(
                "mask is {:?}, response is {n}x{q}",
                mask.shape()
            )));
        }
        for j in 0..q {
            if !(0..n).any(|i| mask[(i, j)]) {
                return Err(MvrrError::InvalidData(format!(
                    "response column {j} has no observed entries"
                )));
            }
            for i in 0..n {
                if !mask[(i, j)] {
                    values[(i, j)] = 0.0;
                    continue;
                }
                let v = values[(i, j)];
                if !v.is_finite() {
                    return Err(MvrrError::NonFinite(format!("response cell ({i}, {j})")));
                }
                if family == Family::Binary && v != 0.0 && v != 1.0 {
                    return Err(MvrrError::InvalidData(format!(
                        "binary response cell ({i}, {j}) is {v}, expected 0 or 1"
                    )));
                }
            }
        }
        Ok(ResponseData {
            values,
            family,
            mask,
        })
    }

    pub fn gaussian(values: Matrix) -> Result<Self> {
        Self::new(values, Family::Gaussian, None)
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }
    pub fn family(&self) -> Family {
        self.family
    }
    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }
    pub fn n(&self) -> usize {
        self.values.nrows()
    }
    pub fn q(&self) -> usize {
        self.values.ncols()
    }
    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }
    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Column means over observed cells.
    pub fn observed_column_means(&self) -> Vector {
        Vector::from_iterator(
            self.q(),
            (0..self.q()).map(|j| {
                let (s, c) = (0..self.n())
                    .filter(|&i| self.mask[(i, j)])
                    .fold((0.0, 0usize), |(s, c), i| (s + self.values[(i, j)], c + 1));
                s / c as f64
            }),
        )
    }

    /// Row subset (used for cross-validation folds).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let values = self.values.select_rows(rows.iter());
        let mask = self.mask.select_rows(rows.iter());
        ResponseData::new(values, self.family, Some(mask))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    PaperFormula,
    Adaptive,
    Custom,
}

/// Per-view penalty weights. `+inf` marks a view excluded from the fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub w: Vec<f64>,
    pub source: WeightSource,
}

impl PenaltyWeights {
    pub fn custom(w: Vec<f64>) -> Result<Self> {
        Self::checked(w, WeightSource::Custom)
    }

    pub(crate) fn checked(w: Vec<f64>, source: WeightSource) -> Result<Self> {
        if w.is_empty() {
            return Err(MvrrError::InvalidArgument("no weights".into()));
        }
        if let Some(bad) = w.iter().find(|&&v| !(v > 0.0) || v.is_nan()) {
            return Err(MvrrError::InvalidArgument(format!(
                "penalty weights must be positive, got {bad}"
            )));
        }
        Ok(PenaltyWeights { w, source })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }
    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
    pub fn is_excluded(&self, k: usize) -> bool {
        self.w[k].is_infinite()
    }
}

/// `w_k = sigma_1(X_k) (sqrt(q) + sqrt(rank(X_k))) / n`.
pub fn compute_weights(design: &MultiViewDesign, q: usize) -> Result<PenaltyWeights> {
    if q == 0 {
        return Err(MvrrError::InvalidArgument("q must be at least 1".into()));
    }
    let n = design.n_rows() as f64;
    let sq = (q as f64).sqrt();
    let mut w = Vec::with_capacity(design.k());
    for k in 0..design.k() {
        let s1 = design.sigma1()[k];
        if s1 == 0.0 {
            return Err(MvrrError::InvalidData(format!(
                "view {} is identically zero",
                design.view_names()[k]
            )));
        }
        w.push(s1 * (sq + (design.ranks()[k] as f64).sqrt()) / n);
    }
    PenaltyWeights::checked(w, WeightSource::PaperFormula)
}

/// Intercept `mu` and the stacked coefficient matrix `B = (B_1; ...; B_K)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockCoefficients {
    pub intercept: Vector,
    pub b: Matrix,
    view_sizes: Vec<usize>,
    pub rank_tol: f64,
}

/// Default relative tolerance for coefficient-block ranks.
pub const COEF_RANK_TOL: f64 = 1e-8;

impl BlockCoefficients {
    pub fn new(intercept: Vector, b: Matrix, view_sizes: Vec<usize>) -> Result<Self> {
        let p: usize = view_sizes.iter().sum();
        if b.nrows() != p || intercept.len() != b.ncols() {
            return Err(MvrrError::Dimension(format!(
                "coefficients {}x{} with intercept of length {} do not match views {:?}",
                b.nrows(),
                b.ncols(),
                intercept.len(),
                view_sizes
            )));
        }
        if !linalg::all_finite(&b) || intercept.iter().any(|v| !v.is_finite()) {
            return Err(MvrrError::NonFinite("coefficients".into()));
        }
        Ok(BlockCoefficients {
            intercept,
            b,
            view_sizes,
            rank_tol: COEF_RANK_TOL,
        })
    }

    pub fn zeros(view_sizes: &[usize], q: usize) -> Self {
        let p = view_sizes.iter().sum();
        BlockCoefficients {
            intercept: Vector::zeros(q),
            b: Matrix::zeros(p, q),
            view_sizes: view_sizes.to_vec(),
            rank_tol: COEF_RANK_TOL,
        }
    }

    pub fn q(&self) -> usize {
        self.b.ncols()
    }
    pub fn k(&self) -> usize {
        self.view_sizes.len()
    }
    pub fn view_sizes(&self) -> &[usize] {
        &self.view_sizes
    }
    pub fn block(&self, k: usize) -> DMatrixView<'_, f64> {
        let off: usize = self.view_sizes[..k].iter().sum();
        self.b.rows(off, self.view_sizes[k])
    }
    pub fn nuclear_norms(&self) -> Result<Vec<f64>> {
        (0..self.k())
            .map(|k| linalg::nuclear_norm(&self.block(k).into_owned()))
            .collect()
    }
    pub fn frobenius_norms(&self) -> Vec<f64> {
        (0..self.k()).map(|k| self.block(k).norm()).collect()
    }
    pub fn ranks(&self) -> Result<Vec<usize>> {
        (0..self.k())
            .map(|k| linalg::numerical_rank(&self.block(k).into_owned(), self.rank_tol))
            .collect()
    }

    /// Natural parameters `1 mu^T + X B` on an already transformed design.
    pub fn linear_predictor(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.b.nrows() {
            return Err(MvrrError::Dimension(format!(
                "design has {} columns, coefficients have {} rows",
                x.ncols(),
                self.b.nrows()
            )));
        }
        let mut theta = x * &self.b;
        linalg::add_row_vector(&mut theta, &self.intercept);
        Ok(theta)
    }
}

/// `sum_k w_k ||B_k||_*`, treating excluded views with zero blocks as free.
pub(crate) fn weighted_nuclear(blocks: &[Matrix], weights: &PenaltyWeights) -> Result<f64> {
    let mut total = 0.0;
    for (k, block) in blocks.iter().enumerate() {
        let nn = linalg::nuclear_norm(block)?;
        if nn == 0.0 {
            continue;
        }
        total += weights.w[k] * nn;
    }
    Ok(total)
}

pub(crate) fn split_blocks(b: &Matrix, view_sizes: &[usize]) -> Vec<Matrix> {
    let mut off = 0;
    view_sizes
        .iter()
        .map(|&s| {
            let blk = b.rows(off, s).into_owned();
            off += s;
            blk
        })
        .collect()
}

fn check_weights(design: &MultiViewDesign, weights: &PenaltyWeights) -> Result<()> {
    if weights.len() != design.k() {
        return Err(MvrrError::Dimension(format!(
            "{} weights for {} views",
            weights.len(),
            design.k()
        )));
    }
    Ok(())
}

/// `(1/2n) ||Y - 1 mu^T - X B||_F^2 + lambda sum_k w_k ||B_k||_*`.
pub fn objective(
    design: &MultiViewDesign,
    y: &Matrix,
    coeffs: &BlockCoefficients,
    lambda: f64,
    weights: &PenaltyWeights,
) -> Result<f64> {
    check_weights(design, weights)?;
    if y.nrows() != design.n_rows() || coeffs.view_sizes() != design.view_sizes() {
        return Err(MvrrError::Dimension("objective inputs are not conformable".into()));
    }
    if y.ncols() != coeffs.q() {
        return Err(MvrrError::Dimension(format!(
            "response has {} columns, coefficients {}",
            y.ncols(),
            coeffs.q()
        )));
    }
    if !(lambda >= 0.0) {
        return Err(MvrrError::InvalidArgument(format!("lambda = {lambda}")));
    }
    let resid = y - coeffs.linear_predictor(design.x())?;
    let loss = linalg::frobenius_sq(&resid) / (2.0 * design.loss_n() as f64);
    let pen = if lambda == 0.0 {
        0.0
    } else {
        lambda * weighted_nuclear(&split_blocks(&coeffs.b, design.view_sizes()), weights)?
    };
    Ok(loss + pen)
}

/// Smallest `lambda` at which `B = 0` is optimal:
/// `max_k sigma_1(X_k^T Y / n) / w_k`.
pub fn lambda_max(design: &MultiViewDesign, y: &Matrix, weights: &PenaltyWeights) -> Result<f64> {
    check_weights(design, weights)?;
    if y.nrows() != design.n_rows() {
        return Err(MvrrError::Dimension(format!(
            "response has {} rows, design {}",
            y.nrows(),
            design.n_rows()
        )));
    }
    let n = design.loss_n() as f64;
    let mut best: f64 = 0.0;
    for k in 0..design.k() {
        if weights.is_excluded(k) {
            continue;
        }
        let g = design.block(k).transpose() * y / n;
        best = best.max(linalg::spectral_norm(&g)? / weights.w[k]);
    }
    Ok(best)
}

/// Naive degrees of freedom of the view-wise low-rank, globally low-rank and
/// group-sparse models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct NaiveDf {
    pub view_low_rank: usize,
    pub global_low_rank: usize,
    pub group_sparse: usize,
}

pub fn naive_df(view_dims: &[usize], q: usize, ranks: &[usize], global_rank: usize) -> Result<NaiveDf> {
    if view_dims.len() != ranks.len() {
        return Err(MvrrError::Dimension("one rank per view required".into()));
    }
    let p: usize = view_dims.iter().sum();
    for (k, (&pk, &r)) in view_dims.iter().zip(ranks).enumerate() {
        if r > pk.min(q) {
            return Err(MvrrError::InvalidArgument(format!(
                "rank {r} of view {k} exceeds min({pk}, {q})"
            )));
        }
    }
    if global_rank > p.min(q) {
        return Err(MvrrError::InvalidArgument(format!(
            "global rank {global_rank} exceeds min({p}, {q})"
        )));
    }
    let view_low_rank = view_dims
        .iter()
        .zip(ranks)
        .map(|(&pk, &r)| (pk + q - r) * r)
        .sum();
    let global_low_rank = (p + q - global_rank) * global_rank;
    let group_sparse = view_dims
        .iter()
        .zip(ranks)
        .filter(|(_, &r)| r != 0)
        .map(|(&pk, _)| pk * q)
        .sum();
    Ok(NaiveDf {
        view_low_rank,
        global_low_rank,
        group_sparse,
    })
}
