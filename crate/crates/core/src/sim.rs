//! Seeded generators for the simulation settings.
//!
//! Random streams: every draw comes from a ChaCha20 generator keyed by
//! `(seed, replicate)` with a per-purpose stream id (see [`Purpose`]), so a
//! replicate is reproducible on its own regardless of scheduling.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{MvrrError, Result};
use crate::glm::logistic;
use crate::linalg::{self, Matrix, Vector};
use crate::model::{Family, ResponseData};

/// Replicate index reserved for the independent tuning data set.
pub const TUNING_REPLICATE: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    S7,
}

impl Setting {
    pub fn from_number(i: u8) -> Option<Setting> {
        use Setting::*;
        [S1, S2, S3, S4, S5, S6, S7].get(usize::from(i).checked_sub(1)?).copied()
    }
    pub fn family(self) -> Family {
        match self {
            Setting::S6 | Setting::S7 => Family::Binary,
            _ => Family::Gaussian,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorModel {
    Iid,
    /// AR(1) correlation across the responses of a row, unit marginal variance.
    Ar1(f64),
}

/// Stream ids of the per-replicate generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Truth = 1,
    Train = 2,
    Validation = 3,
    Evaluation = 4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub setting: Setting,
    pub n: usize,
    pub view_sizes: Vec<usize>,
    pub q: usize,
    pub ranks: Vec<usize>,
    /// Rank of the stacked coefficient matrix when views share row spaces.
    pub global_rank: Option<usize>,
    pub noise_sd: f64,
    pub predictor_corr: f64,
    pub error_model: ErrorModel,
    pub missing_frac: f64,
    /// Size of independently drawn validation/evaluation sets.
    pub validation_n: usize,
    pub seed: u64,
}

impl SimulationSpec {
    /// The full-scale configuration of each setting (Setting 3 uses
    /// `r0 = r_01 = r_02 = 20`, Setting 4 uses `K = 3`).
    pub fn standard(setting: Setting) -> Self {
        let base = SimulationSpec {
            setting,
            n: 500,
            view_sizes: vec![50, 50],
            q: 100,
            ranks: vec![10, 10],
            global_rank: None,
            noise_sd: 1.0,
            predictor_corr: 0.0,
            error_model: ErrorModel::Iid,
            missing_frac: 0.0,
            validation_n: 500,
            seed: 0,
        };
        match setting {
            Setting::S1 => base,
            Setting::S2 => SimulationSpec { predictor_corr: 0.9, ..base },
            Setting::S3 => SimulationSpec { ranks: vec![20, 20], global_rank: Some(20), ..base },
            Setting::S4 => SimulationSpec { view_sizes: vec![50; 3], ranks: vec![10; 3], ..base },
            Setting::S5 => SimulationSpec { view_sizes: vec![50; 3], ranks: vec![10, 10, 0], ..base },
            Setting::S6 => SimulationSpec { n: 200, ..base },
            Setting::S7 => SimulationSpec { n: 200, view_sizes: vec![50; 3], ranks: vec![10, 10, 0], ..base },
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_missing(mut self, frac: f64) -> Self {
        self.missing_frac = frac;
        self
    }

    pub fn with_ar1_errors(mut self) -> Self {
        self.error_model = ErrorModel::Ar1(0.5);
        self
    }

    /// Number of views for the multi-set setting: extra views copy the
    /// first view's size and rank.
    pub fn with_views(mut self, k: usize) -> Self {
        let (p1, r1) = (self.view_sizes[0], self.ranks[0]);
        self.view_sizes.resize(k, p1);
        self.ranks.resize(k, r1);
        self
    }

    /// Shared-row-space scenario: `r0` global rank, `per_view` rank per view.
    pub fn with_global_rank(mut self, r0: usize, per_view: usize) -> Self {
        self.ranks = vec![per_view; self.view_sizes.len()];
        self.global_rank = Some(r0);
        self
    }

    /// Rescales the setting: `n` rows, every view `p_k` columns, `q`
    /// responses, relevant views rank `r` (irrelevant views stay zero).
    pub fn scaled(mut self, n: usize, p_k: usize, q: usize, r: usize) -> Self {
        self.n = n;
        self.q = q;
        self.view_sizes = vec![p_k; self.view_sizes.len()];
        self.ranks = self.ranks.iter().map(|&rk| if rk == 0 { 0 } else { r }).collect();
        if self.global_rank.is_some() {
            self.global_rank = Some(r);
        }
        self
    }

    pub fn family(&self) -> Family {
        self.setting.family()
    }

    pub fn p(&self) -> usize {
        self.view_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MvrrError::InvalidArgument(m));
        if self.view_sizes.is_empty() || self.view_sizes.contains(&0) {
            return bad("every view needs at least one column".into());
        }
        if self.ranks.len() != self.view_sizes.len() {
            return bad("one rank per view required".into());
        }
        if self.n < 2 || self.q == 0 || self.validation_n < 2 {
            return bad("need n >= 2, q >= 1 and a validation set of at least 2 rows".into());
        }
        for (k, (&r, &pk)) in self.ranks.iter().zip(&self.view_sizes).enumerate() {
            if r > pk.min(self.q) {
                return bad(format!("rank {r} of view {k} exceeds min({pk}, {})", self.q));
            }
        }
        if let Some(r0) = self.global_rank {
            let total: usize = self.ranks.iter().sum();
            let max = self.ranks.iter().copied().max().unwrap_or(0);
            if r0 > total || r0 < max || r0 > self.q {
                return bad(format!("global rank {r0} must lie in [{max}, {}] and not exceed q", total.min(self.q)));
            }
        }
        if !(0.0..1.0).contains(&self.missing_frac) {
            return bad(format!("missing fraction {} outside [0, 1)", self.missing_frac));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise sd {}", self.noise_sd));
        }
        if !(self.predictor_corr > -1.0 / (self.p() as f64 - 1.0).max(1.0) && self.predictor_corr < 1.0) {
            return bad(format!("predictor correlation {} is not positive definite", self.predictor_corr));
        }
        if let ErrorModel::Ar1(phi) = self.error_model {
            if !(phi.abs() < 1.0) {
                return bad(format!("AR(1) coefficient {phi}"));
            }
        }
        Ok(())
    }

    /// Predictor covariance: unit diagonal, constant off-diagonal.
    pub fn sigma_x(&self) -> Matrix {
        let p = self.p();
        Matrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { self.predictor_corr })
    }
}

/// Ground truth for one replicate.
#[derive(Clone, Debug)]
pub struct SimulationTruth {
    pub b0: Matrix,
    pub view_sizes: Vec<usize>,
    pub mu0: Option<Vector>,
    pub sigma_x: Matrix,
}

impl SimulationTruth {
    pub fn block(&self, k: usize) -> Matrix {
        let off: usize = self.view_sizes[..k].iter().sum();
        self.b0.rows(off, self.view_sizes[k]).into_owned()
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    /// Column-centered predictors, one block per view.
    pub blocks: Vec<Matrix>,
    pub response: ResponseData,
}

#[derive(Clone, Debug)]
pub struct SimulatedDataset {
    pub truth: SimulationTruth,
    pub train: Sample,
    pub seed: u64,
    pub replicate: u64,
}

/// Generator keyed by `(seed, replicate)` on the stream of `purpose`.
pub fn stream_rng(seed: u64, replicate: u64, purpose: Purpose) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replicate.to_le_bytes());
    key[16..].copy_from_slice(b"mvrr-simulation!");
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(purpose as u64);
    rng
}

fn normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Draws the coefficient truth of a replicate.
pub fn generate_truth(spec: &SimulationSpec, replicate: u64) -> Result<SimulationTruth> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, replicate, Purpose::Truth);
    let q = spec.q;
    let k = spec.view_sizes.len();
    let mut b0 = Matrix::zeros(spec.p(), q);

    // right factors: independent per view, or column windows of a shared pool
    let right: Vec<Matrix> = match spec.global_rank {
        None => spec.ranks.iter().map(|&r| normal_matrix(&mut rng, q, r)).collect(),
        Some(r0) => {
            let pool = normal_matrix(&mut rng, q, r0);
            spec.ranks
                .iter()
                .enumerate()
                .map(|(idx, &r)| {
                    let start = if k > 1 { idx * (r0 - r) / (k - 1) } else { 0 };
                    pool.columns(start, r).into_owned()
                })
                .collect()
        }
    };
    let mut off = 0;
    for (idx, &pk) in spec.view_sizes.iter().enumerate() {
        let r = spec.ranks[idx];
        let left = normal_matrix(&mut rng, pk, r);
        if r > 0 {
            b0.rows_mut(off, pk).copy_from(&(left * right[idx].transpose()));
        }
        off += pk;
    }
    let mu0 = match spec.family() {
        Family::Binary => {
            let u = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
            Some(Vector::from_fn(q, |_, _| u.sample(&mut rng)))
        }
        Family::Gaussian => None,
    };
    Ok(SimulationTruth {
        b0,
        view_sizes: spec.view_sizes.clone(),
        mu0,
        sigma_x: spec.sigma_x(),
    })
}

/// Draws `n` rows from the model under `truth`. Predictors are centered
/// column-wise after drawing; missingness is applied only when `with_missing`.
pub fn sample(
    spec: &SimulationSpec,
    truth: &SimulationTruth,
    n: usize,
    replicate: u64,
    purpose: Purpose,
    with_missing: bool,
) -> Result<Sample> {
    let mut rng = stream_rng(spec.seed, replicate, purpose);
    let p = spec.p();
    let q = spec.q;
    let z = normal_matrix(&mut rng, n, p);
    let mut x = if spec.predictor_corr == 0.0 {
        z
    } else {
        let chol = truth
            .sigma_x
            .clone()
            .cholesky()
            .ok_or_else(|| MvrrError::InvalidArgument("predictor covariance is not positive definite".into()))?;
        z * chol.l().transpose()
    };
    let means = linalg::column_means(&x);
    linalg::add_row_vector(&mut x, &(-means));

    let mut theta = &x * &truth.b0;
    if let Some(mu0) = &truth.mu0 {
        linalg::add_row_vector(&mut theta, mu0);
    }
    let values = match spec.family() {
        Family::Gaussian => {
            let noise = match spec.error_model {
                ErrorModel::Iid => normal_matrix(&mut rng, n, q),
                ErrorModel::Ar1(phi) => {
                    let innov = (1.0 - phi * phi).sqrt();
                    let mut e = Matrix::zeros(n, q);
                    for i in 0..n {
                        let mut prev: f64 = StandardNormal.sample(&mut rng);
                        e[(i, 0)] = prev;
                        for j in 1..q {
                            let zj: f64 = StandardNormal.sample(&mut rng);
                            prev = phi * prev + innov * zj;
                            e[(i, j)] = prev;
                        }
                    }
                    e
                }
            };
            theta + noise * spec.noise_sd
        }
        Family::Binary => theta.map(|t| {
            let u: f64 = rng.random();
            if u < logistic(t) { 1.0 } else { 0.0 }
        }),
    };

    let mut mask = DMatrix::from_element(n, q, true);
    if with_missing && spec.missing_frac > 0.0 {
        let total = n * q;
        let drop = ((spec.missing_frac * total as f64).round() as usize).min(total);
        for cell in index::sample(&mut rng, total, drop) {
            mask[(cell % n, cell / n)] = false;
        }
        // keep at least one observed cell per column
        for j in 0..q {
            if (0..n).all(|i| !mask[(i, j)]) {
                mask[(rng.random_range(0..n), j)] = true;
            }
        }
    }
    let response = ResponseData::new(values, spec.family(), Some(mask))?;
    let mut blocks = Vec::with_capacity(spec.view_sizes.len());
    let mut off = 0;
    for &pk in &spec.view_sizes {
        blocks.push(x.columns(off, pk).into_owned());
        off += pk;
    }
    Ok(Sample { blocks, response })
}

/// Replicate 0 of `spec`.
pub fn generate(spec: &SimulationSpec) -> Result<SimulatedDataset> {
    generate_replicate(spec, 0)
}

pub fn generate_replicate(spec: &SimulationSpec, replicate: u64) -> Result<SimulatedDataset> {
    let truth = generate_truth(spec, replicate)?;
    let train = sample(spec, &truth, spec.n, replicate, Purpose::Train, true)?;
    Ok(SimulatedDataset {
        truth,
        train,
        seed: spec.seed,
        replicate,
    })
}
