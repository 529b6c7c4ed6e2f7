use std::path::{Path, PathBuf};
use std::process::Command;

use lmar::cli::io::{fmt_f64, parse_trace, read_trace, ModelFile, TraceData};
use lmar::cli::{main_with_args, metrics_csv, parse_metrics_csv, predict_records, TuneFile};
use lmar::pipeline::Hyper;
use tempfile::TempDir;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn lmar(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["lmar"];
    full.extend_from_slice(args);
    let code = main_with_args(full, &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = p(dir, name);
    std::fs::write(&path, text).unwrap();
    path
}

/// Default synthetic 3D trace of `n` samples.
fn synth(dir: &TempDir, name: &str, n: usize, seed: u64) -> PathBuf {
    let cfg = write(dir, "synth.json", "{}");
    let out = p(dir, name);
    let r = lmar(&[
        "simulate",
        "--synth-config",
        s(&cfg),
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    out
}

fn scalar_csv(values: &[f64]) -> String {
    let mut text = String::from("t,value\n");
    for (i, v) in values.iter().enumerate() {
        text.push_str(&format!("{},{}\n", i as f64 / 30.0, v));
    }
    text
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let dir = TempDir::new().unwrap();
    let a = synth(&dir, "a.csv", 300, 4);
    let b = synth(&dir, "b.csv", 300, 4);
    let c = synth(&dir, "c.csv", 300, 5);
    let (a, b, c) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), std::fs::read(c).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x,y,z"));
    assert!(lines.all(|l| l.split(',').count() == 4));
    assert_eq!(text.lines().count(), 301);
}

#[test]
fn fit_predict_round_trip() {
    let dir = TempDir::new().unwrap();
    let trace = synth(&dir, "trace.csv", 1200, 1);
    let model = p(&dir, "model.json");
    let r = lmar(&["fit", s(&trace), "--out", s(&model)]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.starts_with("fit: method=lmar p=22 m=400"));

    let file = ModelFile::load(&model).unwrap();
    assert!(file.diagnostics.as_ref().unwrap().converged);
    assert!(file.pca.is_some());
    let again = ModelFile::from_json(&file.to_json()).unwrap();
    assert_eq!(again, file);
    let (sigma, m) = file.lmar().unwrap();
    assert_eq!(m, 400);
    assert_eq!(sigma.to_row_major(), file.sigma.clone().unwrap());

    let r = lmar(&["predict", "--model", s(&model), "--history", s(&trace), "--k", "1,6,12"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let history = read_trace(&trace).unwrap();
    let records = predict_records(&file, &history, &[1, 6, 12], 0.9).unwrap();
    let lines: Vec<&str> = r.out.lines().collect();
    assert_eq!(lines[0], "k,point,lo,hi,level,x,y,z");
    for (line, rec) in lines[1..].iter().zip(&records) {
        let f = &rec.forecast;
        let p3 = rec.point_3d.unwrap();
        let want = [
            f.horizon_k.to_string(),
            fmt_f64(f.point),
            fmt_f64(f.interval.lo),
            fmt_f64(f.interval.hi),
            fmt_f64(0.9),
            fmt_f64(p3[0]),
            fmt_f64(p3[1]),
            fmt_f64(p3[2]),
        ]
        .join(",");
        assert_eq!(*line, want);
    }

    // the library path from first principles
    let TraceData::Spatial(pts) = &history.data else { panic!() };
    let basis = file.pca.clone().unwrap();
    let pc1 = lmar::pipeline::pca_project(&basis, pts).swap_remove(0);
    let predictor = lmar::LmarPredictor::new(sigma, &pc1).unwrap();
    let f1 = predictor.forecast(1, 0.9).unwrap();
    assert_eq!(f1.point.to_bits(), records[0].forecast.point.to_bits());
}

#[test]
fn ridge_model_intervals_are_gaussian() {
    let dir = TempDir::new().unwrap();
    let values: Vec<f64> = (0..300).map(|t| (t as f64 * 0.2).sin() * 4.0 + (t % 7) as f64 * 0.1).collect();
    let trace = write(&dir, "trace.csv", &scalar_csv(&values));
    let model = p(&dir, "ridge.json");
    let r = lmar(&["fit", s(&trace), "--out", s(&model), "--method", "ridge", "--p", "10", "--k", "6"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let r = lmar(&["predict", "--model", s(&model), "--history", s(&trace), "--k", "6", "--level", "0.9"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let ridge = ModelFile::load(&model).unwrap().ridge().unwrap();
    let row: Vec<f64> = r.out.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    let sd = ridge.resid_variance.sqrt();
    assert!((row[2] - (row[1] - 1.6448536269514722 * sd)).abs() < 1e-6);
    assert!((row[3] - (row[1] + 1.6448536269514722 * sd)).abs() < 1e-6);

    let r = lmar(&["predict", "--model", s(&model), "--history", s(&trace), "--k", "5"]);
    assert_eq!(r.code, 5);
}

#[test]
fn one_step_prediction_matches_conditional_mixture() {
    let dir = TempDir::new().unwrap();
    let values: Vec<f64> = (0..200).map(|t| (t as f64 * 0.3).sin() * 3.0 + ((t * 7919) % 13) as f64 * 0.05).collect();
    let trace = write(&dir, "trace.csv", &scalar_csv(&values));
    let model = p(&dir, "model.json");
    let r = lmar(&["fit", s(&trace), "--out", s(&model), "--p", "4", "--m", "50"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let r = lmar(&["predict", "--model", s(&model), "--history", s(&trace), "--k", "1"]);
    let (sigma, _) = ModelFile::load(&model).unwrap().lmar().unwrap();
    let m = values.len() - 1;
    let mut ext = values.clone();
    ext.push(0.0);
    let series = lmar::TimeSeries::with_origin(ext, 30.0, m).unwrap();
    let mix = lmar::conditional_mixture(&series, 1, &sigma, m).unwrap();
    let f = lmar::Forecast::new(1, mix, 0.9).unwrap();
    let row: Vec<f64> = r.out.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((row[1] - f.point).abs() <= 1e-12 * f.point.abs().max(1.0));
    // interval ends agree up to the quantile solver's tolerance
    assert!((row[2] - f.interval.lo).abs() < 1e-8);
    assert!((row[3] - f.interval.hi).abs() < 1e-8);
}

#[test]
fn input_validation_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "m.json");
    let cases = [
        ("nohead.csv", "0,1\n0.1,2\n0.2,3\n", 2, "bad-input"),
        ("cols.csv", "t,a,b\n0,1,2\n0.1,2,3\n", 2, "bad-input"),
        ("nan.csv", "t,value\n0,1\n0.1,nan\n", 2, "bad-input"),
        ("order.csv", "t,value\n0,1\n0.1,2\n0.05,3\n", 2, "bad-input"),
        ("short.csv", "t,value\n0,1\n", 3, "too-short"),
        ("gap.csv", "t,value\n0,1\n0.1,2\n0.2,3\n0.4,4\n", 3, "gapped"),
    ];
    for (name, text, code, kind) in cases {
        let path = write(&dir, name, text);
        let r = lmar(&["fit", s(&path), "--out", s(&out)]);
        assert_eq!(r.code, code, "{name}: {}", r.err);
        assert_eq!(r.err.lines().count(), 1, "{name}: {}", r.err);
        assert!(r.err.starts_with(&format!("{kind}: ")), "{name}: {}", r.err);
    }
    let missing = p(&dir, "missing.csv");
    assert_eq!(lmar(&["fit", s(&missing), "--out", s(&out)]).code, 2);
    let r = lmar(&["fit"]);
    assert_eq!(r.code, 2);
    assert_eq!(r.err.lines().count(), 1);
    assert!(r.err.starts_with("bad-input: "));
}

#[test]
fn short_series_and_numeric_failures() {
    let dir = TempDir::new().unwrap();
    let values: Vec<f64> = (0..100).map(|t| (t as f64).sin()).collect();
    let trace = write(&dir, "trace.csv", &scalar_csv(&values));
    let out = p(&dir, "m.json");
    assert_eq!(lmar(&["fit", s(&trace), "--out", s(&out)]).code, 3);

    let flat = write(&dir, "flat.csv", &scalar_csv(&[2.0; 100]));
    let r = lmar(&["fit", s(&flat), "--out", s(&out), "--method", "ridge", "--k", "1", "--lambda", "0", "--p", "3"]);
    assert_eq!(r.code, 4, "{}", r.err);
    assert!(r.err.lines().last().unwrap().starts_with("numeric: "), "{}", r.err);
}

#[test]
fn constant_trace_fits_with_warning() {
    let dir = TempDir::new().unwrap();
    let flat = write(&dir, "flat.csv", &scalar_csv(&[1.5; 120]));
    let out = p(&dir, "m.json");
    let r = lmar(&["fit", s(&flat), "--out", s(&out), "--p", "3", "--m", "40"]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.err.contains("warning"));
    let file = ModelFile::load(&out).unwrap();
    assert!(file.diagnostics.unwrap().jitter_applied);
}

#[test]
fn evaluate_single_method_and_csv_round_trip() {
    let dir = TempDir::new().unwrap();
    let trace = synth(&dir, "trace.csv", 600, 2);
    let short = synth(&dir, "short.csv", 100, 3);
    let r = lmar(&[
        "evaluate",
        s(&trace),
        s(&short),
        "--methods",
        "ridge",
        "--horizons",
        "6,12",
        "--train-s",
        "10",
        "--test-s",
        "8",
        "--ridge-p",
        "10",
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.err.contains("excluded") && r.err.contains("short.csv"));
    let tables = parse_metrics_csv(&r.out).unwrap();
    assert_eq!(tables.len(), 2);
    assert_eq!(tables[1].0, "mean");
    for row in &tables[0].1.rows {
        let m = row.metrics.as_ref().unwrap();
        assert_eq!(m.best_fraction, 1.0);
        assert_eq!(m.n, 240);
    }
    assert_eq!(metrics_csv(&tables), r.out);
}

#[test]
fn evaluate_with_nothing_usable_fails() {
    let dir = TempDir::new().unwrap();
    let short = synth(&dir, "short.csv", 100, 3);
    let r = lmar(&["evaluate", s(&short), "--methods", "ridge"]);
    assert_eq!(r.code, 3);
}

#[test]
fn tune_singleton_grid_echoes_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let trace = synth(&dir, "trace.csv", 1250, 6);
    let args = ["tune", s(&trace), "--method", "ridge", "--k", "6", "--ps", "12", "--lambdas", "3"];
    let a = lmar(&args);
    assert_eq!(a.code, 0, "{}", a.err);
    let tuned: TuneFile = serde_json::from_str(&a.out).unwrap();
    assert_eq!(tuned.best, Hyper::Ridge { p: 12, lambda: 3.0 });
    assert_eq!(tuned.format_version, 1);
    assert_eq!(tuned.scores.len(), 1);
    assert_eq!(lmar(&args).out, a.out);

    let value: serde_json::Value = serde_json::from_str(&a.out).unwrap();
    for key in ["format_version", "method", "k", "best", "mae", "rmse", "series", "scores"] {
        assert!(value.get(key).is_some(), "missing {key}");
    }
    assert_eq!(value["best"]["method"], "ridge");
}

#[test]
fn simulate_from_model() {
    let dir = TempDir::new().unwrap();
    let values: Vec<f64> = (0..200).map(|t| (t as f64 * 0.3).sin() * 3.0).collect();
    let trace = write(&dir, "trace.csv", &scalar_csv(&values));
    let model = p(&dir, "model.json");
    assert_eq!(lmar(&["fit", s(&trace), "--out", s(&model), "--p", "3", "--m", "60"]).code, 0);
    let args = ["simulate", "--model", s(&model), "--history", s(&trace), "--n", "50", "--seed", "3"];
    let a = lmar(&args);
    assert_eq!(a.code, 0, "{}", a.err);
    assert_eq!(lmar(&args).out, a.out);
    let parsed = parse_trace(a.out.as_bytes()).unwrap();
    assert_eq!(parsed.len(), 50);
    assert!(a.out.starts_with("t,value\n"));

    let no_n = lmar(&["simulate", "--model", s(&model)]);
    assert_eq!(no_n.code, 2);
    let bad = write(&dir, "bad.json", r#"{"duration_s": -1}"#);
    assert_eq!(lmar(&["simulate", "--synth-config", s(&bad)]).code, 2);
    let unknown = write(&dir, "unknown.json", r#"{"colour": 1}"#);
    assert_eq!(lmar(&["simulate", "--synth-config", s(&unknown)]).code, 2);
}

#[test]
fn binary_reports_exit_codes() {
    let dir = TempDir::new().unwrap();
    let gap = write(&dir, "gap.csv", "t,value\n0,1\n0.1,2\n0.2,3\n0.4,4\n");
    let out = Command::new(env!("CARGO_BIN_EXE_lmar"))
        .args(["fit", s(&gap), "--out", s(&p(&dir, "m.json"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("gapped: "));

    let ok = Command::new(env!("CARGO_BIN_EXE_lmar")).arg("--help").output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
}
