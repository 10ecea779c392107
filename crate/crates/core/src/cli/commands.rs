use std::time::Instant;

use log::info;
use serde::Serialize;

use mvrr::benchmark::{self, BenchmarkConfig, Method, TuningProtocol};
use mvrr::glm::{self, logistic};
use mvrr::model::replay_preprocessing;
use mvrr::sim::{self, Setting, SimulationSpec};
use mvrr::tuning::{self, CvReport, GridShape, LambdaGrid, Tuner};
use mvrr::{
    build_design, compute_weights, BlockCoefficients, Family, FitResult, Matrix, MultiViewDesign, MvrrError,
    Preprocess, ResponseData, Result, SolverOptions, Vector,
};

use super::io::{self, ViewSpec};
use super::report::{FitReport, RunConfig};
use super::{CvArgs, DataArgs, FitArgs, PredictArgs, ProtocolArg, SimulateArgs};

struct Loaded {
    views: Vec<ViewSpec>,
    blocks: Vec<Matrix>,
    preprocess: Preprocess,
    design: MultiViewDesign,
    response: ResponseData,
    options: SolverOptions,
}

fn load(data: &DataArgs) -> Result<Loaded> {
    if !(data.ridge >= 0.0 && data.ridge.is_finite()) {
        return Err(MvrrError::InvalidArgument(format!("--ridge must be a non-negative number, got {}", data.ridge)));
    }
    let options = SolverOptions {
        tol: data.tol,
        max_iter: data.max_iter,
        ridge_lambda2: data.ridge,
        ..SolverOptions::default()
    };
    options.validate()?;
    let views = io::read_views(&data.views)?;
    let (x, _) = io::read_matrix(&data.x, false)?;
    let blocks = io::extract_blocks(&x, &views)?;
    let (y, mask) = io::read_matrix(&data.y, true)?;
    if y.nrows() != x.nrows() {
        return Err(MvrrError::Dimension(format!(
            "{} has {} rows but {} has {}",
            data.y.display(),
            y.nrows(),
            data.x.display(),
            x.nrows()
        )));
    }
    let preprocess = Preprocess {
        center: !data.no_center,
        scale: data.scale,
    };
    let design = build_design(&blocks, preprocess)?.with_names(views.iter().map(|v| v.name.clone()).collect())?;
    let response = ResponseData::new(y, data.family.into(), Some(mask))?;
    Ok(Loaded {
        views,
        blocks,
        preprocess,
        design,
        response,
        options,
    })
}

fn run_config(data: &DataArgs) -> RunConfig {
    RunConfig {
        x: data.x.display().to_string(),
        views: data.views.display().to_string(),
        y: data.y.display().to_string(),
        family: data.family.into(),
        center: !data.no_center,
        scale: data.scale,
        ridge: data.ridge,
        tol: data.tol,
        max_iter: data.max_iter,
        lambda: None,
        folds: None,
        nlambda: None,
        lambda_min_ratio: None,
        seed: None,
        adaptive: false,
    }
}

fn write_fit_outputs(
    data: &DataArgs,
    command: &str,
    config: RunConfig,
    loaded: &Loaded,
    fit: &FitResult,
    lambda_max: f64,
    started: Instant,
) -> Result<()> {
    io::write_matrix(&data.coef_out, &fit.coefficients.b)?;
    let intercept_out = match (&data.intercept_out, fit.family) {
        (Some(p), _) => Some(p.clone()),
        (None, Family::Binary) => Some(io::sibling(&data.coef_out, "intercept.csv")),
        (None, Family::Gaussian) => None,
    };
    if let Some(path) = intercept_out {
        let row = Matrix::from_row_slice(1, fit.coefficients.q(), fit.coefficients.intercept.as_slice());
        io::write_matrix(&path, &row)?;
    }
    let timing = data.timing.then(|| started.elapsed().as_secs_f64());
    let report = FitReport::new(command, config, &loaded.design, &loaded.views, fit, data.ridge, lambda_max, timing)?;
    io::write_json(&data.report_out, &report)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(MvrrError::InvalidArgument(format!("{name} must be a non-negative number, got {v}")))
    }
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let started = Instant::now();
    positive("--lambda", args.lambda)?;
    let loaded = load(&args.data)?;
    let weights = compute_weights(&loaded.design, loaded.response.q())?;
    let lambda_max = glm::lambda_max_response(&loaded.design, &loaded.response, &weights)?;
    let fit = glm::fit(&loaded.design, &loaded.response, args.lambda, &weights, &loaded.options, None)?;
    if !fit.converged {
        log::warn!("solver stopped after {} iterations without converging", fit.iterations);
    }
    let config = RunConfig {
        lambda: Some(args.lambda),
        ..run_config(&args.data)
    };
    write_fit_outputs(&args.data, "fit", config, &loaded, &fit, lambda_max, started)
}

#[derive(Serialize)]
struct CvOutput<'a> {
    cv: &'a CvReport,
    adaptive_cv: Option<&'a CvReport>,
    excluded_views: Vec<String>,
}

pub fn cv(args: &CvArgs) -> Result<()> {
    let started = Instant::now();
    if args.nlambda == 0 {
        return Err(MvrrError::InvalidArgument("--nlambda must be at least 1".into()));
    }
    let loaded = load(&args.data)?;
    let weights = compute_weights(&loaded.design, loaded.response.q())?;
    let lambda_max = glm::lambda_max_response(&loaded.design, &loaded.response, &weights)?;
    let grid = if args.nlambda == 1 {
        LambdaGrid::single(lambda_max)
    } else {
        LambdaGrid::from_max(lambda_max, args.nlambda, args.lambda_min_ratio)?
    };
    let report = tuning::cross_validate(
        &loaded.blocks,
        loaded.preprocess,
        &loaded.response,
        &grid,
        &weights,
        args.folds,
        &loaded.options,
        args.seed,
    )?;
    info!("selected lambda {:e} (index {})", report.selected_lambda, report.selected_index);
    let prefix = LambdaGrid {
        values: grid.values[..=report.selected_index].to_vec(),
        min_ratio: grid.min_ratio,
    };
    let mut fit = tuning::solve_path(&loaded.design, &loaded.response, &prefix, &weights, &loaded.options)?
        .pop()
        .expect("non-empty path");

    let mut adaptive_cv = None;
    let mut excluded_views = Vec::new();
    if args.adaptive {
        let refit = tuning::adaptive_refit(
            &loaded.design,
            &loaded.response,
            &fit,
            GridShape {
                n_values: args.nlambda.max(2),
                min_ratio: args.lambda_min_ratio,
            },
            &loaded.options,
            Tuner::CrossValidation {
                raw_blocks: &loaded.blocks,
                preprocess: loaded.preprocess,
                folds: args.folds,
                seed: args.seed,
            },
        )?;
        excluded_views = loaded
            .views
            .iter()
            .zip(&refit.excluded)
            .filter(|(_, &e)| e)
            .map(|(v, _)| v.name.clone())
            .collect();
        adaptive_cv = refit.cv;
        fit = refit.fit;
    }

    if let Some(path) = &args.cv_out {
        io::write_json(
            path,
            &CvOutput {
                cv: &report,
                adaptive_cv: adaptive_cv.as_ref(),
                excluded_views,
            },
        )?;
    }
    let config = RunConfig {
        folds: Some(args.folds),
        nlambda: Some(args.nlambda),
        lambda_min_ratio: Some(args.lambda_min_ratio),
        seed: Some(args.seed),
        adaptive: args.adaptive,
        ..run_config(&args.data)
    };
    write_fit_outputs(&args.data, "cv", config, &loaded, &fit, lambda_max, started)
}

fn simulation_spec(args: &SimulateArgs) -> Result<SimulationSpec> {
    let setting = Setting::from_number(args.setting)
        .ok_or_else(|| MvrrError::InvalidArgument(format!("no setting {}", args.setting)))?;
    let mut spec = SimulationSpec::standard(setting).with_seed(args.seed);
    if let Some(k) = args.views {
        if k == 0 {
            return Err(MvrrError::InvalidArgument("--views must be at least 1".into()));
        }
        spec = spec.with_views(k);
    }
    if args.n.is_some() || args.p_k.is_some() || args.q.is_some() || args.rank.is_some() {
        let r = args.rank.unwrap_or_else(|| spec.ranks.iter().copied().max().unwrap_or(0));
        let (n, p_k, q) = (
            args.n.unwrap_or(spec.n),
            args.p_k.unwrap_or(spec.view_sizes[0]),
            args.q.unwrap_or(spec.q),
        );
        spec = spec.scaled(n, p_k, q, r);
    }
    if !(0.0..1.0).contains(&args.missing) {
        return Err(MvrrError::InvalidArgument(format!("--missing must lie in [0, 1), got {}", args.missing)));
    }
    spec = spec.with_missing(args.missing);
    if args.ar1 {
        spec = spec.with_ar1_errors();
    }
    spec.validate().map_err(|e| MvrrError::InvalidArgument(e.to_string()))?;
    Ok(spec)
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let spec = simulation_spec(args)?;
    let methods: Vec<Method> = match &args.methods {
        Some(list) => list.iter().map(|m| m.parse()).collect::<Result<_>>()?,
        None => match spec.family() {
            Family::Gaussian => vec![Method::Irrr, Method::Ols],
            Family::Binary => vec![Method::Irrr, Method::Null],
        },
    };
    let mut config = BenchmarkConfig::new(spec, args.reps, methods);
    config.protocol = match args.protocol {
        ProtocolArg::Fixed => TuningProtocol::FixedFromTuningSet,
        ProtocolArg::PerReplicate => TuningProtocol::PerReplicate,
    };
    config.grid = GridShape {
        n_values: args.nlambda,
        min_ratio: args.lambda_min_ratio,
    };
    if let Some(dir) = &args.export {
        export_replicate(&config.spec, dir)?;
    }
    let report = benchmark::run_benchmark(&config)?;
    let file = std::fs::File::create(&args.out).map_err(|e| MvrrError::Io {
        path: args.out.display().to_string(),
        source: e,
    })?;
    report.write_csv(std::io::BufWriter::new(file))?;
    let summary_path = args.summary_out.clone().unwrap_or_else(|| io::sibling(&args.out, "json"));
    io::write_json(&summary_path, &report_summary(&report))?;
    for s in report.summary.iter().filter(|s| s.metric == benchmark::metric_name(config.spec.family())) {
        info!("{} {}: mean {:.4} sd {:.4} over {}", s.method, s.metric, s.mean, s.sd, s.count);
    }
    Ok(())
}

fn export_replicate(spec: &SimulationSpec, dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| MvrrError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let data = sim::generate(spec)?;
    let mut x = Matrix::zeros(spec.n, spec.p());
    let mut views = Vec::new();
    let mut off = 0;
    for (k, b) in data.train.blocks.iter().enumerate() {
        x.columns_mut(off, b.ncols()).copy_from(b);
        views.push(ViewSpec {
            name: format!("view{}", k + 1),
            cols: [off, off + b.ncols() - 1],
        });
        off += b.ncols();
    }
    io::write_matrix(&dir.join("x.csv"), &x)?;
    io::write_response(&dir.join("y.csv"), data.train.response.values(), data.train.response.mask())?;
    io::write_json(&dir.join("views.json"), &views)?;
    io::write_matrix(&dir.join("b0.csv"), &data.truth.b0)
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a BenchmarkConfig,
    seed: u64,
    replicate_seeds: Vec<u64>,
    tuned_lambda: &'a std::collections::BTreeMap<Method, f64>,
    summary: &'a [benchmark::MetricSummary],
    failures: &'a [benchmark::FailedReplicate],
}

fn report_summary(report: &benchmark::BenchmarkReport) -> Summary<'_> {
    Summary {
        config: &report.config,
        seed: report.seed,
        replicate_seeds: (0..report.config.replicates as u64).collect(),
        tuned_lambda: &report.tuned_lambda,
        summary: &report.summary,
        failures: &report.failures,
    }
}

/// Linear predictor `1 mu^T + X~ B` for raw predictors under a stored report.
pub fn predict_matrix(report: &FitReport, coef: &Matrix, x: &Matrix) -> Result<Matrix> {
    let views = report.view_specs();
    io::validate_views(&views)?;
    let p = report.p();
    if coef.nrows() != p || coef.ncols() != report.q {
        return Err(MvrrError::Dimension(format!(
            "coefficient file is {} x {}, the report describes {p} x {}",
            coef.nrows(),
            coef.ncols(),
            report.q
        )));
    }
    let last = views.iter().map(|v| v.cols[1]).max().unwrap_or(0);
    if x.ncols() != last + 1 {
        return Err(MvrrError::Dimension(format!(
            "predictor file has {} columns, the stored view spec expects {}",
            x.ncols(),
            last + 1
        )));
    }
    let blocks = io::extract_blocks(x, &views)?;
    let mut raw = Matrix::zeros(x.nrows(), p);
    let mut off = 0;
    for b in &blocks {
        raw.columns_mut(off, b.ncols()).copy_from(b);
        off += b.ncols();
    }
    let pre = &report.preprocessing;
    let xt = replay_preprocessing(&raw, &pre.column_means, &pre.column_scales)?;
    let sizes: Vec<usize> = views.iter().map(ViewSpec::width).collect();
    let coefficients = BlockCoefficients::new(Vector::from_vec(report.intercept.clone()), coef.clone(), sizes)?;
    coefficients.linear_predictor(&xt)
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let report: FitReport = io::read_json(&args.report)?;
    let (coef, _) = io::read_matrix(&args.coef, false)?;
    let (x, _) = io::read_matrix(&args.x, false)?;
    let theta = predict_matrix(&report, &coef, &x)?;
    io::write_matrix(&args.out, &theta)?;
    if report.family == Family::Binary {
        let path = args.prob_out.clone().unwrap_or_else(|| io::sibling(&args.out, "prob.csv"));
        io::write_matrix(&path, &theta.map(logistic))?;
    }
    Ok(())
}
