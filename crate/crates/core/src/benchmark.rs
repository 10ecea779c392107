//! Replicated simulation studies: seeded data, validation-set tuning and
//! per-method error summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MvrrError, Result};
use crate::glm;
use crate::linalg::Matrix;
use crate::metrics;
use crate::model::{build_design, compute_weights, BlockCoefficients, Family, MultiViewDesign, Preprocess, ResponseData};
use crate::sim::{self, Purpose, Sample, SimulationSpec, SimulationTruth};
use crate::solver::{FitResult, SolverOptions};
use crate::tuning::{self, GridShape, Tuner};

/// Replicate index reserved for the independent tuning dataset.
pub const TUNING_REPLICATE: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Irrr,
    IrrrAdaptive,
    /// iRRR with every predictor its own view.
    Mtl,
    Ols,
    /// Intercept only.
    Null,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Irrr => "irrr",
            Method::IrrrAdaptive => "irrr_adaptive",
            Method::Mtl => "mtl",
            Method::Ols => "ols",
            Method::Null => "null",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = MvrrError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "irrr" => Ok(Method::Irrr),
            "irrr_adaptive" => Ok(Method::IrrrAdaptive),
            "mtl" => Ok(Method::Mtl),
            "ols" => Ok(Method::Ols),
            "null" => Ok(Method::Null),
            other => Err(MvrrError::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

/// How penalty levels are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningProtocol {
    /// Tune once on an independent dataset, then hold `lambda` fixed across
    /// replicates.
    FixedFromTuningSet,
    /// Tune each replicate on its own validation set.
    PerReplicate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub spec: SimulationSpec,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub protocol: TuningProtocol,
    pub grid: GridShape,
    pub options: SolverOptions,
    /// Rows of the evaluation set used for cross-entropy (binary settings).
    pub evaluation_n: usize,
}

impl BenchmarkConfig {
    pub fn new(spec: SimulationSpec, replicates: usize, methods: Vec<Method>) -> Self {
        BenchmarkConfig {
            spec,
            replicates,
            methods,
            protocol: TuningProtocol::FixedFromTuningSet,
            grid: GridShape::default(),
            options: SolverOptions::default(),
            evaluation_n: 500,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.options.validate()?;
        if self.replicates == 0 {
            return Err(MvrrError::InvalidArgument("need at least one replicate".into()));
        }
        if self.methods.is_empty() {
            return Err(MvrrError::InvalidArgument("no methods requested".into()));
        }
        if self.spec.family() == Family::Binary && self.methods.contains(&Method::Ols) {
            return Err(MvrrError::InvalidArgument("ols applies to Gaussian settings only".into()));
        }
        if self.methods.contains(&Method::Ols) && self.spec.n <= self.spec.p() {
            return Err(MvrrError::InvalidArgument("ols needs more rows than predictors".into()));
        }
        Ok(())
    }
}

/// One CSV row: `replicate, method, metric, value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub replicate: u64,
    pub method: Method,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub method: Method,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedReplicate {
    pub replicate: u64,
    pub method: Method,
    pub error: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub seed: u64,
    /// Penalty levels fixed by the tuning dataset (empty for per-replicate tuning).
    pub tuned_lambda: BTreeMap<Method, f64>,
    pub rows: Vec<BenchmarkRow>,
    pub summary: Vec<MetricSummary>,
    pub failures: Vec<FailedReplicate>,
}

impl BenchmarkReport {
    /// Values of `metric` for `method`, in replicate order.
    pub fn values(&self, method: Method, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    pub fn summary_for(&self, method: Method, metric: &str) -> Option<&MetricSummary> {
        self.summary.iter().find(|s| s.method == method && s.metric == metric)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| MvrrError::Parse(e.to_string());
        w.write_record(["replicate", "method", "metric", "value"]).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.replicate.to_string(),
                r.method.to_string(),
                r.metric.clone(),
                format!("{:.16e}", r.value),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| MvrrError::Parse(e.to_string()))?;
        Ok(())
    }
}

/// The error metric of a family.
pub fn metric_name(family: Family) -> &'static str {
    match family {
        Family::Gaussian => "mspe",
        Family::Binary => "cross_entropy",
    }
}

struct Replicate {
    truth: SimulationTruth,
    train: MultiViewDesign,
    response: ResponseData,
    validation: MultiViewDesign,
    validation_response: ResponseData,
    evaluation: Option<Matrix>,
}

fn design_of(sample: &Sample) -> Result<MultiViewDesign> {
    build_design(&sample.blocks, Preprocess::CENTER)
}

fn draw(config: &BenchmarkConfig, replicate: u64) -> Result<Replicate> {
    let spec = &config.spec;
    let truth = sim::generate_truth(spec, replicate)?;
    let train = sim::sample(spec, &truth, spec.n, replicate, Purpose::Train, true)?;
    let val = sim::sample(spec, &truth, spec.validation_n, replicate, Purpose::Validation, false)?;
    let evaluation = if spec.family() == Family::Binary {
        let ev = sim::sample(spec, &truth, config.evaluation_n, replicate, Purpose::Evaluation, false)?;
        Some(design_of(&ev)?.x().clone())
    } else {
        None
    };
    Ok(Replicate {
        train: design_of(&train)?,
        response: train.response,
        validation: design_of(&val)?,
        validation_response: val.response,
        evaluation,
        truth,
    })
}

fn tuned_fit(
    config: &BenchmarkConfig,
    design: &MultiViewDesign,
    rep: &Replicate,
    lambda: Option<f64>,
) -> Result<FitResult> {
    let weights = compute_weights(design, rep.response.q())?;
    match lambda {
        Some(l) => glm::fit(design, &rep.response, l, &weights, &config.options, None),
        None => {
            let grid = tuning::lambda_grid(design, &rep.response, &weights, config.grid.n_values, config.grid.min_ratio)?;
            let validation = if design.k() == rep.validation.k() {
                rep.validation.clone()
            } else {
                rep.validation.regroup_columns()?
            };
            let sel = tuning::tune_validation(
                design,
                &rep.response,
                &validation,
                &rep.validation_response,
                &grid,
                &weights,
                &config.options,
            )?;
            Ok(sel.fit)
        }
    }
}

fn adaptive_fit(config: &BenchmarkConfig, rep: &Replicate, pilot_lambda: Option<f64>, lambda: Option<f64>) -> Result<FitResult> {
    let pilot = tuned_fit(config, &rep.train, rep, pilot_lambda)?;
    let tuner = match lambda {
        Some(l) => Tuner::Fixed(l),
        None => Tuner::Validation {
            design: &rep.validation,
            response: &rep.validation_response,
        },
    };
    Ok(tuning::adaptive_refit(&rep.train, &rep.response, &pilot, config.grid, &config.options, tuner)?.fit)
}

fn estimate(config: &BenchmarkConfig, rep: &Replicate, method: Method, tuned: &BTreeMap<Method, f64>) -> Result<BlockCoefficients> {
    let lambda = |m: Method| tuned.get(&m).copied();
    match method {
        Method::Irrr => Ok(tuned_fit(config, &rep.train, rep, lambda(Method::Irrr))?.coefficients),
        Method::Mtl => {
            let regrouped = rep.train.regroup_columns()?;
            let fit = tuned_fit(config, &regrouped, rep, lambda(Method::Mtl))?;
            BlockCoefficients::new(fit.coefficients.intercept, fit.coefficients.b, rep.train.view_sizes().to_vec())
        }
        Method::IrrrAdaptive => {
            Ok(adaptive_fit(config, rep, lambda(Method::Irrr), lambda(Method::IrrrAdaptive))?.coefficients)
        }
        Method::Ols => {
            let mut coef = metrics::ols_baseline(&rep.train, rep.response.values())?;
            coef.intercept = rep.response.observed_column_means();
            Ok(coef)
        }
        Method::Null => {
            let mut coef = BlockCoefficients::zeros(rep.train.view_sizes(), rep.response.q());
            coef.intercept = glm::null_intercept(&rep.response);
            Ok(coef)
        }
    }
}

fn score(config: &BenchmarkConfig, rep: &Replicate, coef: &BlockCoefficients) -> Result<f64> {
    match config.spec.family() {
        Family::Gaussian => metrics::mspe(&rep.truth.b0, &coef.b, &rep.truth.sigma_x),
        Family::Binary => {
            let mu0 = rep.truth.mu0.as_ref().ok_or_else(|| MvrrError::InvalidData("binary truth lacks an intercept".into()))?;
            let x = rep.evaluation.as_ref().expect("binary replicate has an evaluation set");
            metrics::cross_entropy(mu0, &rep.truth.b0, &coef.intercept, &coef.b, x)
        }
    }
}

fn rows_for(config: &BenchmarkConfig, replicate: u64, method: Method, rep: &Replicate, coef: &BlockCoefficients) -> Result<Vec<BenchmarkRow>> {
    let row = |metric: String, value: f64| BenchmarkRow { replicate, method, metric, value };
    let mut rows = vec![row(metric_name(config.spec.family()).to_string(), score(config, rep, coef)?)];
    let ranks = coef.ranks()?;
    for (k, (&r, f)) in ranks.iter().zip(coef.frobenius_norms()).enumerate() {
        rows.push(row(format!("rank_view{}", k + 1), r as f64));
        rows.push(row(format!("fro_view{}", k + 1), f));
    }
    Ok(rows)
}

/// Chooses fixed penalty levels on the independent tuning dataset.
fn tune_once(config: &BenchmarkConfig) -> Result<BTreeMap<Method, f64>> {
    let rep = draw(config, TUNING_REPLICATE)?;
    let mut tuned = BTreeMap::new();
    let needs_irrr = config.methods.iter().any(|m| matches!(m, Method::Irrr | Method::IrrrAdaptive));
    if needs_irrr {
        let fit = tuned_fit(config, &rep.train, &rep, None)?;
        tuned.insert(Method::Irrr, fit.lambda);
    }
    if config.methods.contains(&Method::IrrrAdaptive) {
        let fit = adaptive_fit(config, &rep, tuned.get(&Method::Irrr).copied(), None)?;
        if fit.lambda.is_finite() {
            tuned.insert(Method::IrrrAdaptive, fit.lambda);
        }
    }
    if config.methods.contains(&Method::Mtl) {
        let fit = tuned_fit(config, &rep.train.regroup_columns()?, &rep, None)?;
        tuned.insert(Method::Mtl, fit.lambda);
    }
    Ok(tuned)
}

type ReplicateOutcome = (Vec<BenchmarkRow>, Vec<FailedReplicate>);

fn run_replicate(config: &BenchmarkConfig, replicate: u64, tuned: &BTreeMap<Method, f64>) -> ReplicateOutcome {
    let fail = |method: Method, e: &MvrrError| FailedReplicate {
        replicate,
        method,
        error: e.to_string(),
    };
    let rep = match draw(config, replicate) {
        Ok(r) => r,
        Err(e) => return (Vec::new(), config.methods.iter().map(|&m| fail(m, &e)).collect()),
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &method in &config.methods {
        match estimate(config, &rep, method, tuned).and_then(|c| rows_for(config, replicate, method, &rep, &c)) {
            Ok(r) => rows.extend(r),
            Err(e) => {
                warn!("replicate {replicate}, {method}: {e}");
                failures.push(fail(method, &e));
            }
        }
    }
    (rows, failures)
}

fn summarize(methods: &[Method], rows: &[BenchmarkRow]) -> Vec<MetricSummary> {
    let mut out = Vec::new();
    for &method in methods {
        let mut metrics: Vec<&str> = Vec::new();
        for r in rows.iter().filter(|r| r.method == method) {
            if !metrics.contains(&r.metric.as_str()) {
                metrics.push(&r.metric);
            }
        }
        for metric in metrics {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == method && r.metric == metric)
                .map(|r| r.value)
                .collect();
            let (mean, sd) = metrics::mean_sd(&vals);
            out.push(MetricSummary {
                method,
                metric: metric.to_string(),
                mean,
                sd,
                count: vals.len(),
            });
        }
    }
    out
}

/// Runs all replicates (in parallel) and summarizes each method's metrics.
/// A replicate that fails for one method is recorded and skipped.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    let tuned = match config.protocol {
        TuningProtocol::FixedFromTuningSet => tune_once(config)?,
        TuningProtocol::PerReplicate => BTreeMap::new(),
    };
    let outcomes: Vec<ReplicateOutcome> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|r| run_replicate(config, r, &tuned))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in outcomes {
        rows.extend(r);
        failures.extend(f);
    }
    Ok(BenchmarkReport {
        summary: summarize(&config.methods, &rows),
        config: config.clone(),
        seed: config.spec.seed,
        tuned_lambda: tuned,
        rows,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Setting;

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Irrr, Method::IrrrAdaptive, Method::Mtl, Method::Ols, Method::Null] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("lasso".parse::<Method>().is_err());
    }

    #[test]
    fn small_run_is_deterministic() {
        let spec = SimulationSpec::standard(Setting::S1).scaled(60, 5, 6, 2).with_seed(3);
        let mut cfg = BenchmarkConfig::new(spec, 2, vec![Method::Irrr, Method::Ols]);
        cfg.grid.n_values = 8;
        let a = run_benchmark(&cfg).unwrap();
        let b = run_benchmark(&cfg).unwrap();
        assert_eq!(a.rows, b.rows);
        assert!(a.failures.is_empty());
        assert_eq!(a.values(Method::Irrr, "mspe").len(), 2);
        assert!(a.summary_for(Method::Ols, "mspe").unwrap().mean.is_finite());
    }

    #[test]
    fn ols_rejected_for_binary() {
        let spec = SimulationSpec::standard(Setting::S6).scaled(60, 5, 6, 2);
        let cfg = BenchmarkConfig::new(spec, 1, vec![Method::Ols]);
        assert!(run_benchmark(&cfg).is_err());
    }
}
