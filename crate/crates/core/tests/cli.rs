use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mvrr::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

fn mvrr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvrr"))
        .args(args)
        .env_remove("MVRR_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_csv(path: &Path, m: &Matrix) {
    let mut text = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:.17e}")).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

fn read_csv(path: &Path) -> Matrix {
    let text = std::fs::read_to_string(path).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split(',').map(|v| v.trim().parse().unwrap()).collect())
        .collect();
    Matrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

struct Data {
    dir: tempfile::TempDir,
    x: Matrix,
}

impl Data {
    fn p(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

/// Two views (3 and 4 columns), q = 3, low-rank signal plus noise.
fn gaussian_data(seed: u64, n: usize) -> Data {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = |r: usize, c: usize| Matrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = normal(n, 7);
    let b = normal(7, 1) * normal(1, 3);
    let y = &x * b + normal(n, 3) + Matrix::from_element(n, 3, 2.0);
    let dir = tempfile::tempdir().unwrap();
    write_csv(&dir.path().join("x.csv"), &x);
    write_csv(&dir.path().join("y.csv"), &y);
    std::fs::write(
        dir.path().join("views.json"),
        r#"[{"name": "a", "cols": [0, 2]}, {"name": "b", "cols": [3, 6]}]"#,
    )
    .unwrap();
    Data { dir, x }
}

fn data_args(d: &Data, tag: &str) -> Vec<String> {
    vec![
        "--x".into(),
        s(&d.p("x.csv")).into(),
        "--views".into(),
        s(&d.p("views.json")).into(),
        "--y".into(),
        s(&d.p("y.csv")).into(),
        "--coef-out".into(),
        s(&d.p(&format!("{tag}.csv"))).into(),
        "--report-out".into(),
        s(&d.p(&format!("{tag}.json"))).into(),
    ]
}

fn run(cmd: &str, base: Vec<String>, extra: &[&str]) -> Output {
    let mut args: Vec<&str> = vec![cmd];
    args.extend(base.iter().map(String::as_str));
    args.extend_from_slice(extra);
    mvrr(&args)
}

fn centered(x: &Matrix, means: &[f64]) -> Matrix {
    Matrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - means[j])
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&mvrr(&["--help"])), 0);
    assert_eq!(code(&mvrr(&["--version"])), 0);
    assert_eq!(code(&mvrr(&[])), 1);
    assert_eq!(code(&mvrr(&["fit", "--bogus"])), 1);
    assert_eq!(code(&mvrr(&["simulate", "--setting", "9", "--out", "x.csv"])), 1);
    let d = gaussian_data(1, 30);
    assert_eq!(code(&run("fit", data_args(&d, "f"), &["--lambda", "-1"])), 1);
    assert_eq!(code(&run("fit", data_args(&d, "f"), &["--lambda", "0.1", "--threads", "0"])), 1);
}

#[test]
fn data_errors_exit_two() {
    let d = gaussian_data(2, 30);
    let missing = d.p("absent.csv");
    let mut args = data_args(&d, "f");
    args[1] = s(&missing).into();
    assert_eq!(code(&run("fit", args, &["--lambda", "0.1"])), 2);

    std::fs::write(d.p("views.json"), r#"[{"name": "a", "cols": [0, 3]}, {"name": "b", "cols": [3, 6]}]"#).unwrap();
    let out = run("fit", data_args(&d, "f"), &["--lambda", "0.1"]);
    assert_eq!(code(&out), 2);
    let msg = stderr(&out);
    assert!(msg.contains("'a'") && msg.contains("'b'") && msg.contains("overlap"), "{msg}");

    std::fs::write(d.p("views.json"), r#"[{"name": "a", "cols": [0, 9]}]"#).unwrap();
    assert_eq!(code(&run("fit", data_args(&d, "f"), &["--lambda", "0.1"])), 2);

    std::fs::write(d.p("views.json"), r#"[{"name": "a", "cols": [0, 6]}]"#).unwrap();
    std::fs::write(d.p("y.csv"), "1,2\n3\n").unwrap();
    assert_eq!(code(&run("fit", data_args(&d, "f"), &["--lambda", "0.1"])), 2);
}

#[test]
fn lambda_above_max_gives_zero_coefficients() {
    let d = gaussian_data(3, 40);
    assert_eq!(code(&run("fit", data_args(&d, "probe"), &["--lambda", "0.01"])), 0);
    let lmax = read_json(&d.p("probe.json"))["lambda_max"].as_f64().unwrap();
    let lam = format!("{}", lmax * 1.0001);
    assert_eq!(code(&run("fit", data_args(&d, "big"), &["--lambda", &lam])), 0);
    let coef = read_csv(&d.p("big.csv"));
    assert_eq!(coef.shape(), (7, 3));
    assert!(coef.iter().all(|&v| v == 0.0));
    let probe = read_csv(&d.p("probe.csv"));
    assert!(probe.iter().any(|&v| v != 0.0));
}

#[test]
fn predict_round_trip_matches_offline_product() {
    let d = gaussian_data(4, 40);
    assert_eq!(code(&run("fit", data_args(&d, "f"), &["--lambda", "0.05", "--scale"])), 0);
    let report = read_json(&d.p("f.json"));
    let out = mvrr(&[
        "predict", "--coef", s(&d.p("f.csv")), "--report", s(&d.p("f.json")), "--x", s(&d.p("x.csv")), "--out",
        s(&d.p("pred.csv")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let pred = read_csv(&d.p("pred.csv"));
    let coef = read_csv(&d.p("f.csv"));
    let floats = |v: &Value| -> Vec<f64> { v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect() };
    let means = floats(&report["preprocessing"]["column_means"]);
    let scales = floats(&report["preprocessing"]["column_scales"]);
    let intercept = floats(&report["intercept"]);
    let z = Matrix::from_fn(40, 7, |i, j| (d.x[(i, j)] - means[j]) / scales[j]);
    let offline = Matrix::from_fn(40, 3, |i, j| (z.row(i) * coef.column(j))[0] + intercept[j]);
    let err = pred.iter().zip(offline.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-10, "{err}");

    write_csv(&d.p("x_bad.csv"), &Matrix::zeros(4, 6));
    let out = mvrr(&[
        "predict", "--coef", s(&d.p("f.csv")), "--report", s(&d.p("f.json")), "--x", s(&d.p("x_bad.csv")), "--out",
        s(&d.p("bad.csv")),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn zero_coefficients_predict_the_intercept() {
    let d = gaussian_data(5, 30);
    assert_eq!(code(&run("fit", data_args(&d, "f"), &["--lambda", "1e6"])), 0);
    let out = mvrr(&[
        "predict", "--coef", s(&d.p("f.csv")), "--report", s(&d.p("f.json")), "--x", s(&d.p("x.csv")), "--out",
        s(&d.p("pred.csv")),
    ]);
    assert_eq!(code(&out), 0);
    let pred = read_csv(&d.p("pred.csv"));
    let intercept: Vec<f64> = read_json(&d.p("f.json"))["intercept"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    for i in 0..30 {
        for j in 0..3 {
            assert_eq!(pred[(i, j)], intercept[j]);
        }
    }
}

#[test]
fn report_matches_emitted_coefficients() {
    let d = gaussian_data(6, 40);
    assert_eq!(code(&run("fit", data_args(&d, "f"), &["--lambda", "0.02"])), 0);
    let report = read_json(&d.p("f.json"));
    let coef = read_csv(&d.p("f.csv"));
    for (k, view) in report["views"].as_array().unwrap().iter().enumerate() {
        let (start, width) = if k == 0 { (0, 3) } else { (3, 4) };
        let block = coef.rows(start, width).into_owned();
        let sv = block.singular_values();
        let fro = view["frobenius_norm"].as_f64().unwrap();
        let nuc = view["nuclear_norm"].as_f64().unwrap();
        assert!((fro - block.norm()).abs() <= 1e-8 * fro.max(1.0));
        assert!((nuc - sv.sum()).abs() <= 1e-8 * nuc.max(1.0));
        let rank = sv.iter().filter(|&&v| v > 1e-8 * sv.max()).count();
        assert_eq!(view["rank"].as_u64().unwrap() as usize, rank);
    }
    assert_eq!(report["convergence"]["converged"], Value::Bool(true));
    assert!(report["timing_seconds"].is_null());
    let reparsed: Value = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    assert_eq!(reparsed, report);
}

#[test]
fn binary_fit_writes_intercept_and_probabilities() {
    let d = gaussian_data(7, 60);
    let y = read_csv(&d.p("y.csv"));
    let mut text = String::new();
    for i in 0..60 {
        let row: Vec<&str> = (0..3)
            .map(|j| if i == 0 && j == 1 { "NA" } else if y[(i, j)] > 2.0 { "1" } else { "0" })
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(d.p("y.csv"), text).unwrap();
    let out = run("fit", data_args(&d, "b"), &["--lambda", "0.01", "--family", "binary"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let intercept = read_csv(&d.p("b.intercept.csv"));
    assert_eq!(intercept.shape(), (1, 3));
    let out = mvrr(&[
        "predict", "--coef", s(&d.p("b.csv")), "--report", s(&d.p("b.json")), "--x", s(&d.p("x.csv")), "--out",
        s(&d.p("eta.csv")),
    ]);
    assert_eq!(code(&out), 0);
    let prob = read_csv(&d.p("eta.prob.csv"));
    assert_eq!(prob.shape(), (60, 3));
    assert!(prob.iter().all(|&p| (0.0..=1.0).contains(&p)));
}

#[test]
fn cv_is_byte_identical_across_runs() {
    let d = gaussian_data(8, 50);
    let mut outputs = Vec::new();
    for (tag, threads) in [("a", "1"), ("b", "3")] {
        let cv_out = d.p(&format!("{tag}.cv.json"));
        let out = run(
            "cv",
            data_args(&d, tag),
            &["--folds", "5", "--seed", "7", "--nlambda", "15", "--cv-out", s(&cv_out), "--threads", threads],
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let report = std::fs::read_to_string(d.p(&format!("{tag}.json"))).unwrap();
        outputs.push((
            std::fs::read(d.p(&format!("{tag}.csv"))).unwrap(),
            report.replace(&format!("{tag}.csv"), "").replace(&format!("{tag}.json"), ""),
            std::fs::read(&cv_out).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let cv = read_json(&d.p("a.cv.json"));
    assert_eq!(cv["cv"]["grid"]["values"].as_array().unwrap().len(), 15);
}

#[test]
fn single_value_grid_emits_the_null_model() {
    let d = gaussian_data(9, 30);
    let out = run("cv", data_args(&d, "n"), &["--nlambda", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(read_csv(&d.p("n.csv")).iter().all(|&v| v == 0.0));
    let report = read_json(&d.p("n.json"));
    assert_eq!(report["lambda"], report["lambda_max"]);
}

#[test]
fn adaptive_cv_runs() {
    let d = gaussian_data(10, 50);
    let cv_out = d.p("ad.cv.json");
    let out = run("cv", data_args(&d, "ad"), &["--adaptive", "--nlambda", "10", "--cv-out", s(&cv_out)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let cv = read_json(&cv_out);
    assert!(cv["adaptive_cv"].is_object());
    assert_eq!(read_json(&d.p("ad.json"))["config"]["adaptive"], Value::Bool(true));
}

fn simulate(dir: &Path, tag: &str, extra: &[&str]) -> (String, Value) {
    let out_path = dir.join(format!("{tag}.csv"));
    let mut args = vec!["simulate", "--out", s(&out_path)];
    args.extend_from_slice(extra);
    let out = mvrr(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    (std::fs::read_to_string(&out_path).unwrap(), read_json(&dir.join(format!("{tag}.json"))))
}

const SMALL: &[&str] = &["--n", "80", "--p-k", "8", "--q", "8", "--rank", "2", "--nlambda", "15"];

#[test]
fn simulate_smoke_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut flags = vec!["--setting", "1", "--reps", "2", "--seed", "1"];
    flags.extend_from_slice(SMALL);
    let (csv, summary) = simulate(dir.path(), "a", &flags);
    let (csv2, summary2) = simulate(dir.path(), "b", &flags);
    assert_eq!(csv, csv2);
    assert_eq!(summary, summary2);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "replicate,method,metric,value");
    for method in ["irrr", "ols"] {
        let rows = lines.iter().filter(|l| l.contains(&format!(",{method},mspe,"))).count();
        assert_eq!(rows, 2);
    }
    for entry in summary["summary"].as_array().unwrap() {
        assert!(entry["mean"].as_f64().unwrap().is_finite());
    }
}

#[test]
fn simulate_adaptive_selects_views() {
    let dir = tempfile::tempdir().unwrap();
    let mut flags = vec!["--setting", "5", "--reps", "5", "--seed", "3", "--methods", "irrr,irrr_adaptive"];
    flags.extend_from_slice(SMALL);
    let (csv, _) = simulate(dir.path(), "s5", &flags);
    let zero = csv.lines().filter(|l| l.contains(",irrr_adaptive,rank_view3,")).filter(|l| l.ends_with(",0.0000000000000000e0")).count();
    assert!(zero >= 3, "{csv}");
}

#[test]
fn exported_data_through_cv_beats_least_squares() {
    let dir = tempfile::tempdir().unwrap();
    let export = dir.path().join("export");
    let mut flags = vec!["--setting", "1", "--reps", "1", "--seed", "4", "--export", s(&export)];
    flags.extend_from_slice(SMALL);
    simulate(dir.path(), "e", &flags);
    let coef = export.join("coef.csv");
    let report = export.join("report.json");
    let out = mvrr(&[
        "cv",
        "--x", s(&export.join("x.csv")),
        "--views", s(&export.join("views.json")),
        "--y", s(&export.join("y.csv")),
        "--nlambda", "20",
        "--coef-out", s(&coef),
        "--report-out", s(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let b0 = read_csv(&export.join("b0.csv"));
    let b_hat = read_csv(&coef);
    let x = read_csv(&export.join("x.csv"));
    let y = read_csv(&export.join("y.csv"));
    let means: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
    let xc = centered(&x, &means);
    let y_means: Vec<f64> = y.column_iter().map(|c| c.mean()).collect();
    let yc = centered(&y, &y_means);
    let ols = (xc.transpose() * &xc).cholesky().unwrap().solve(&(xc.transpose() * yc));
    let irrr_mspe = (&b0 - b_hat).norm_squared();
    let ols_mspe = (&b0 - ols).norm_squared();
    assert!(irrr_mspe < ols_mspe, "{irrr_mspe} vs {ols_mspe}");
}

#[test]
fn emitted_csv_reparses_exactly() {
    let d = gaussian_data(11, 30);
    assert_eq!(code(&run("fit", data_args(&d, "f"), &["--lambda", "0.03"])), 0);
    let text = std::fs::read_to_string(d.p("f.csv")).unwrap();
    let coef = read_csv(&d.p("f.csv"));
    write_csv(&d.p("again.csv"), &coef);
    assert_eq!(read_csv(&d.p("again.csv")), coef);
    for field in text.lines().flat_map(|l| l.split(',')) {
        let mantissa = field.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
        assert_eq!(mantissa.len(), 17, "{field}");
    }
}
