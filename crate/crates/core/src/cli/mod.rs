//! The `lmar` command-line tool.
//!
//! Every command is a pure function of its input files and flags. Errors are
//! reported as one `kind: message` line and map to exit codes 2 (bad input),
//! 3 (series too short or gapped), 4 (numerical failure) and 5 (horizon out
//! of range).

pub mod io;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::LmarError;
use crate::estimation::{fit, FitConfig, FittedModel, DEFAULT_M, DEFAULT_P};
use crate::forecast::{Forecast, LmarPredictor, DEFAULT_LEVEL};
use crate::model::simulate;
use crate::pipeline::evaluate::{
    rolling_evaluate, EvalSplit, Forecaster, LmarForecaster, Metrics, MetricsRow, MetricsTable,
    RidgeForecaster, DEFAULT_HORIZONS,
};
use crate::pipeline::pca::{pca_fit, pca_project, pca_reconstruct, PcaBasis};
use crate::pipeline::ridge::{ridge_fit, ridge_predict};
use crate::pipeline::synth::{synth_trace, SynthConfig};
use crate::pipeline::tune::{
    grid_search_corpus, CandidateScore, Hyper, MethodGrid, TUNE_FIT_LEN, TUNE_SCORE_LEN,
};
use crate::series::TimeSeries;
use io::{fmt_f64, read_trace, write_trace, ModelFile, ModelKind, Trace, TraceData};

pub const EXIT_BAD_INPUT: i32 = 2;
pub const EXIT_TOO_SHORT: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_HORIZON: i32 = 5;

/// Ridge defaults used by `fit --method ridge` and `evaluate`.
pub const DEFAULT_RIDGE_P: usize = 22;
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1.0;

pub const DEFAULT_TRAIN_S: f64 = 40.0;
pub const DEFAULT_TEST_S: f64 = 40.0;

/// Label of the cross-series average rows in `evaluate` output.
pub const AGGREGATE_LABEL: &str = "mean";

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    fn new(code: i32, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            kind,
            message: message.into().replace('\n', " "),
        }
    }

    pub fn bad_input(message: impl Into<String>) -> Self {
        Self::new(EXIT_BAD_INPUT, "bad-input", message)
    }

    pub fn too_short(message: impl Into<String>) -> Self {
        Self::new(EXIT_TOO_SHORT, "too-short", message)
    }

    pub fn gapped(message: impl Into<String>) -> Self {
        Self::new(EXIT_TOO_SHORT, "gapped", message)
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self::new(EXIT_NUMERIC, "numeric", message)
    }

    pub fn horizon(message: impl Into<String>) -> Self {
        Self::new(EXIT_HORIZON, "horizon", message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(EXIT_BAD_INPUT, "io", message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<LmarError> for CliError {
    fn from(e: LmarError) -> Self {
        let msg = e.to_string();
        match e {
            LmarError::InvalidSeries(_)
            | LmarError::InvalidParameter(_)
            | LmarError::InvalidProbability(_)
            | LmarError::ShapeMismatch(_) => CliError::bad_input(msg),
            LmarError::Io(_) => CliError::io(msg),
            LmarError::SeriesTooShort(_)
            | LmarError::SeedTooShort { .. }
            | LmarError::EmptyLagSet(_)
            | LmarError::IndexOutOfRange { .. } => CliError::too_short(msg),
            LmarError::SingularMatrix(_)
            | LmarError::DegenerateCovariance(_)
            | LmarError::AllGridFailures(_) => CliError::numeric(msg),
            LmarError::HorizonOutOfRange { .. } => CliError::horizon(msg),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "lmar",
    version,
    about = "Location-mixture autoregressive forecasting of quasi-periodic traces"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to a trace and write it as JSON.
    Fit(FitArgs),
    /// Forecast from a fitted model and a history trace.
    Predict(PredictArgs),
    /// Rolling-origin evaluation of one or more methods over a set of traces.
    Evaluate(EvaluateArgs),
    /// Grid search of hyperparameters over a set of traces.
    Tune(TuneArgs),
    /// Write a simulated trace.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lmar,
    Ridge,
}

#[derive(Debug, Clone, Args)]
pub struct EmArgs {
    /// Relative change of the monitored log-likelihood that stops EM.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
}

impl EmArgs {
    fn config(&self) -> FitConfig {
        FitConfig {
            rel_tol: self.tol,
            max_iter: self.max_iter,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Lmar)]
    pub method: Method,
    /// Window length (LMAR) or number of inputs (ridge).
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_M)]
    pub m: usize,
    #[command(flatten)]
    pub em: EmArgs,
    /// Ridge horizon.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_RIDGE_LAMBDA)]
    pub lambda: f64,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub history: PathBuf,
    /// Horizons in steps; repeat the flag or give a comma-separated list.
    #[arg(long, required = true, value_delimiter = ',')]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    pub level: f64,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Method::Lmar, Method::Ridge])]
    pub methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_HORIZONS)]
    pub horizons: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_TRAIN_S)]
    pub train_s: f64,
    #[arg(long, default_value_t = DEFAULT_TEST_S)]
    pub test_s: f64,
    #[arg(long, default_value_t = DEFAULT_P)]
    pub p: usize,
    #[arg(long, default_value_t = DEFAULT_M)]
    pub m: usize,
    #[command(flatten)]
    pub em: EmArgs,
    #[arg(long, default_value_t = DEFAULT_RIDGE_P)]
    pub ridge_p: usize,
    #[arg(long, default_value_t = DEFAULT_RIDGE_LAMBDA)]
    pub ridge_lambda: f64,
    /// Output of `lmar tune`; its best hyperparameters replace the flags above.
    #[arg(long)]
    pub tuned: Vec<PathBuf>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TuneArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long, default_value_t = 12)]
    pub k: usize,
    #[arg(long, value_delimiter = ',')]
    pub ps: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub ms: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[command(flatten)]
    pub em: EmArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Simulate from a fitted LMAR model.
    #[arg(long, conflicts_with = "synth_config", required_unless_present = "synth_config")]
    pub model: Option<PathBuf>,
    /// Simulate a 3D trace from a generator config (JSON).
    #[arg(long)]
    pub synth_config: Option<PathBuf>,
    /// Seed values for model simulation (the last m are used); zeros if absent.
    #[arg(long, requires = "model")]
    pub history: Option<PathBuf>,
    /// Number of samples to write.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const DEFAULT_LMAR_PS: [usize; 5] = [8, 12, 16, 22, 30];
pub const DEFAULT_RIDGE_PS: [usize; 5] = [5, 10, 20, 30, 45];
pub const DEFAULT_LAMBDAS: [f64; 4] = [1e-2, 1.0, 1e2, 1e4];

/// Output of `lmar tune`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneFile {
    pub format_version: u32,
    pub method: Method,
    pub k: usize,
    pub best: Hyper,
    pub mae: f64,
    pub rmse: f64,
    pub series: Vec<String>,
    pub scores: Vec<CandidateScore>,
}

/// Runs one command, writing results to `out` and warnings or per-series
/// problems to `err`.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Fit(a) => cmd_fit(&a, out, err),
        Command::Predict(a) => cmd_predict(&a, out),
        Command::Evaluate(a) => cmd_evaluate(&a, out, err),
        Command::Tune(a) => cmd_tune(&a, out, err),
        Command::Simulate(a) => cmd_simulate(&a, out),
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::io(format!("writing output: {e}")))
}

fn warn(err: &mut dyn Write, text: &str) {
    let _ = writeln!(err, "{text}");
}

fn write_target(path: &Option<PathBuf>, out: &mut dyn Write, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", p.display()))),
        None => write_out(out, text),
    }
}

/// The modelled scalar series: the trace itself, or its first principal
/// component with the basis fitted on the first `basis_len` points.
pub fn modelled_series(
    trace: &Trace,
    basis_len: usize,
) -> CliResult<(Vec<f64>, Option<PcaBasis>, bool)> {
    match &trace.data {
        TraceData::Scalar(v) => Ok((v.clone(), None, false)),
        TraceData::Spatial(pts) => {
            let fit_pts = &pts[..basis_len.min(pts.len())];
            let (basis, degenerate) = match pca_fit(fit_pts) {
                Ok(b) => (b, false),
                Err(LmarError::DegenerateCovariance(_)) => {
                    let n = fit_pts.len() as f64;
                    let mean = [0, 1, 2].map(|a| fit_pts.iter().map(|p| p[a]).sum::<f64>() / n);
                    (PcaBasis::identity(mean), true)
                }
                Err(e) => return Err(e.into()),
            };
            let pc1 = pca_project(&basis, pts).swap_remove(0);
            Ok((pc1, Some(basis), degenerate))
        }
    }
}

pub fn cmd_fit(args: &FitArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let trace = read_trace(&args.input)?;
    let rate = trace.sample_rate_hz();
    let (values, pca, degenerate) = modelled_series(&trace, trace.len())?;
    if degenerate {
        warn(err, "warning: trace is constant in 3D; using the identity basis");
    }
    if values.iter().all(|&v| v == values[0]) {
        warn(
            err,
            "warning: modelled series is constant; the fitted covariance is pure jitter",
        );
    }
    let file = match args.method {
        Method::Lmar => {
            let p = args.p.unwrap_or(DEFAULT_P);
            if values.len() <= args.m {
                return Err(CliError::too_short(format!(
                    "{} samples, m = {} conditioning samples plus at least one target needed",
                    values.len(),
                    args.m
                )));
            }
            let series = TimeSeries::with_origin(values, rate, args.m)?;
            let model = fit(&series, p, args.m, &args.em.config())?;
            write_out(
                out,
                &format!(
                    "fit: method=lmar p={} m={} iterations={} converged={} monitor={} exact_loglik={}\n",
                    model.p,
                    model.m,
                    model.iterations,
                    model.converged,
                    fmt_f64(*model.monitor_trace.last().expect("nonempty trace")),
                    fmt_f64(model.exact_loglik_final)
                ),
            )?;
            if !model.converged {
                warn(err, "warning: EM stopped at max-iter before converging");
            }
            ModelFile::from_lmar(&model, rate, pca)
        }
        Method::Ridge => {
            let p = args.p.unwrap_or(DEFAULT_RIDGE_P);
            let k = args
                .k
                .ok_or_else(|| CliError::bad_input("ridge needs --k"))?;
            let model = ridge_fit(&values, p, k, args.lambda)?;
            write_out(
                out,
                &format!(
                    "fit: method=ridge p={} k={} lambda={} resid_variance={}\n",
                    model.p,
                    model.k,
                    fmt_f64(model.lambda),
                    fmt_f64(model.resid_variance)
                ),
            )?;
            ModelFile::from_ridge(&model, rate, pca)
        }
    };
    file.save(&args.out)
}

/// One forecast row of `lmar predict`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictRecord {
    pub forecast: Forecast,
    /// Back-transformed point for models of 3D traces.
    pub point_3d: Option<[f64; 3]>,
}

/// Forecasts for each horizon in `ks` from `history`.
pub fn predict_records(
    model: &ModelFile,
    history: &Trace,
    ks: &[usize],
    level: f64,
) -> CliResult<Vec<PredictRecord>> {
    if history.is_spatial() != model.pca.is_some() {
        return Err(CliError::bad_input(
            "history dimensionality does not match the model (1D vs 3D)",
        ));
    }
    let rate = history.sample_rate_hz();
    if ((rate - model.sample_rate_hz) / model.sample_rate_hz).abs() > 1e-6 {
        return Err(CliError::bad_input(format!(
            "history sampled at {rate} Hz, model at {} Hz",
            model.sample_rate_hz
        )));
    }
    let (values, tail) = match (&history.data, &model.pca) {
        (TraceData::Scalar(v), _) => (v.clone(), None),
        (TraceData::Spatial(pts), Some(basis)) => {
            let mut pcs = pca_project(basis, pts);
            let last = [pcs[1][pcs[1].len() - 1], pcs[2][pcs[2].len() - 1]];
            (pcs.swap_remove(0), Some((basis, last)))
        }
        (TraceData::Spatial(_), None) => unreachable!("checked above"),
    };
    let forecasts: Vec<Forecast> = match model.model_kind {
        ModelKind::Lmar => {
            let (sigma, _) = model.lmar()?;
            let p = sigma.p();
            if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > p) {
                return Err(LmarError::HorizonOutOfRange { k, max: p }.into());
            }
            let predictor = LmarPredictor::new(sigma, &values)?;
            ks.iter()
                .map(|&k| predictor.forecast(k, level))
                .collect::<Result<_, _>>()?
        }
        ModelKind::Ridge => {
            let ridge = model.ridge()?;
            if let Some(&k) = ks.iter().find(|&&k| k != ridge.k) {
                return Err(CliError::horizon(format!(
                    "ridge model was fitted for k = {}, got k = {k}",
                    ridge.k
                )));
            }
            ks.iter()
                .map(|_| ridge_predict(&ridge, &values, level))
                .collect::<Result<_, _>>()?
        }
    };
    forecasts
        .into_iter()
        .map(|forecast| {
            let point_3d = match tail {
                Some((basis, [pc2, pc3])) => Some(
                    pca_reconstruct(basis, &[vec![forecast.point], vec![pc2], vec![pc3]])?[0],
                ),
                None => None,
            };
            Ok(PredictRecord { forecast, point_3d })
        })
        .collect()
}

pub fn cmd_predict(args: &PredictArgs, out: &mut dyn Write) -> CliResult<()> {
    let model = ModelFile::load(&args.model)?;
    let history = read_trace(&args.history)?;
    let records = predict_records(&model, &history, &args.k, args.level)?;
    let spatial = model.pca.is_some();
    let mut text = String::from("k,point,lo,hi,level");
    if spatial {
        text.push_str(",x,y,z");
    }
    text.push('\n');
    for r in &records {
        let f = &r.forecast;
        text.push_str(&format!(
            "{},{},{},{},{}",
            f.horizon_k,
            fmt_f64(f.point),
            fmt_f64(f.interval.lo),
            fmt_f64(f.interval.hi),
            fmt_f64(f.interval.level)
        ));
        if let Some(p) = r.point_3d {
            text.push_str(&format!(",{},{},{}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2])));
        }
        text.push('\n');
    }
    write_out(out, &text)
}

/// Hyperparameters used by `evaluate`.
#[derive(Debug, Clone)]
pub struct EvalHypers {
    pub lmar_p: usize,
    pub lmar_m: usize,
    pub fit: FitConfig,
    pub ridge_p: usize,
    pub ridge_lambda: f64,
}

impl EvalHypers {
    fn forecaster(&self, method: Method) -> Box<dyn Forecaster> {
        match method {
            Method::Lmar => Box::new(LmarForecaster {
                p: self.lmar_p,
                m: self.lmar_m,
                config: self.fit.clone(),
            }),
            Method::Ridge => Box::new(RidgeForecaster::new(self.ridge_p, self.ridge_lambda)),
        }
    }

    fn apply(&mut self, hyper: Hyper) {
        match hyper {
            Hyper::Lmar { p, m } => {
                self.lmar_p = p;
                self.lmar_m = m;
            }
            Hyper::Ridge { p, lambda } => {
                self.ridge_p = p;
                self.ridge_lambda = lambda;
            }
        }
    }
}

/// Outcome for one input of `evaluate`.
#[derive(Debug, Clone)]
pub enum SeriesOutcome {
    Evaluated(MetricsTable),
    Excluded(CliError),
}

fn seconds_to_samples(s: f64, rate: f64) -> CliResult<usize> {
    if !(s.is_finite() && s > 0.0) {
        return Err(CliError::bad_input(format!("duration {s} s must be positive")));
    }
    Ok((s * rate).round() as usize)
}

/// Evaluates one trace; 3D traces are reduced to their first principal
/// component with the basis fitted on the training window only.
pub fn evaluate_trace(
    trace: &Trace,
    methods: &[Method],
    horizons: &[usize],
    train_s: f64,
    test_s: f64,
    hypers: &EvalHypers,
) -> CliResult<MetricsTable> {
    let rate = trace.sample_rate_hz();
    let split = EvalSplit {
        train_len: seconds_to_samples(train_s, rate)?,
        test_len: seconds_to_samples(test_s, rate)?,
    };
    let need = split.train_len + split.test_len + horizons.iter().copied().max().unwrap_or(0);
    if trace.len() < need {
        return Err(CliError::too_short(format!(
            "{} samples, evaluation needs {need}",
            trace.len()
        )));
    }
    let (values, _, _) = modelled_series(trace, split.train_len)?;
    let boxed: Vec<Box<dyn Forecaster>> = methods.iter().map(|&m| hypers.forecaster(m)).collect();
    let refs: Vec<&dyn Forecaster> = boxed.iter().map(|b| b.as_ref()).collect();
    Ok(rolling_evaluate(&values, rate, &refs, horizons, split)?)
}

fn thread_pool() -> CliResult<Option<rayon::ThreadPool>> {
    match std::env::var("LMAR_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::bad_input(format!("LMAR_THREADS='{v}' is not a positive integer")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::bad_input(format!("thread pool: {e}")))?;
            Ok(Some(pool))
        }
        Err(_) => Ok(None),
    }
}

fn in_pool<T: Send>(f: impl FnOnce() -> T + Send) -> CliResult<T> {
    Ok(match thread_pool()? {
        Some(pool) => pool.install(f),
        None => f(),
    })
}

pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    if args.methods.is_empty() {
        return Err(CliError::bad_input("no methods given"));
    }
    let mut methods = args.methods.clone();
    methods.dedup();
    let mut hypers = EvalHypers {
        lmar_p: args.p,
        lmar_m: args.m,
        fit: args.em.config(),
        ridge_p: args.ridge_p,
        ridge_lambda: args.ridge_lambda,
    };
    for path in &args.tuned {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::bad_input(format!("cannot read {}: {e}", path.display())))?;
        let tuned: TuneFile = serde_json::from_str(&text)
            .map_err(|e| CliError::bad_input(format!("invalid tune file {}: {e}", path.display())))?;
        hypers.apply(tuned.best);
    }
    let outcomes: Vec<SeriesOutcome> = in_pool(|| {
        args.inputs
            .par_iter()
            .map(|path| {
                let res = read_trace(path).and_then(|trace| {
                    evaluate_trace(&trace, &methods, &args.horizons, args.train_s, args.test_s, &hypers)
                });
                match res {
                    Ok(t) => SeriesOutcome::Evaluated(t),
                    Err(e) => SeriesOutcome::Excluded(e),
                }
            })
            .collect()
    })?;

    let mut labelled = Vec::new();
    let mut first_error = None;
    for (path, outcome) in args.inputs.iter().zip(outcomes) {
        let label = path.display().to_string();
        match outcome {
            SeriesOutcome::Evaluated(table) => {
                for row in &table.rows {
                    if let Some(f) = &row.failure {
                        warn(err, &format!("failed {label} {} k={}: {f}", row.method, row.horizon));
                    }
                }
                labelled.push((label, table));
            }
            SeriesOutcome::Excluded(e) => {
                warn(err, &format!("excluded {label}: {e}"));
                first_error.get_or_insert(e);
            }
        }
    }
    if labelled.is_empty() {
        return Err(first_error.unwrap_or_else(|| CliError::bad_input("no series evaluated")));
    }
    let tables: Vec<MetricsTable> = labelled.iter().map(|(_, t)| t.clone()).collect();
    labelled.push((AGGREGATE_LABEL.to_string(), MetricsTable::average(&tables)));
    write_target(&args.out, out, &metrics_csv(&labelled))
}

pub const METRICS_HEADER: &str = "series,method,horizon,rmse,mae,best,coverage90,log_ps,n";

/// CSV with one row per (series, method, horizon); failed cells have empty metrics.
pub fn metrics_csv(tables: &[(String, MetricsTable)]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(METRICS_HEADER.split(',')).expect("in-memory write");
    for (label, table) in tables {
        for row in &table.rows {
            let mut rec = vec![label.clone(), row.method.clone(), row.horizon.to_string()];
            match &row.metrics {
                Some(m) => rec.extend([
                    fmt_f64(m.rmse),
                    fmt_f64(m.mae),
                    fmt_f64(m.best_fraction),
                    fmt_f64(m.coverage90),
                    fmt_f64(m.mean_log_score),
                    m.n.to_string(),
                ]),
                None => rec.extend(std::iter::repeat_n(String::new(), 5).chain(["0".to_string()])),
            }
            w.write_record(&rec).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// Inverse of [`metrics_csv`]. Failed cells come back with no metrics and no
/// failure message.
pub fn parse_metrics_csv(text: &str) -> CliResult<Vec<(String, MetricsTable)>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| CliError::bad_input(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != METRICS_HEADER {
        return Err(CliError::bad_input(format!("unexpected header '{header}'")));
    }
    let mut out: Vec<(String, MetricsTable)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::bad_input(e.to_string()))?;
        let num = |i: usize| -> CliResult<f64> {
            rec[i]
                .parse()
                .map_err(|_| CliError::bad_input(format!("bad number '{}'", &rec[i])))
        };
        let metrics = if rec[3].is_empty() {
            None
        } else {
            Some(Metrics {
                rmse: num(3)?,
                mae: num(4)?,
                best_fraction: num(5)?,
                coverage90: num(6)?,
                mean_log_score: num(7)?,
                n: rec[8]
                    .parse()
                    .map_err(|_| CliError::bad_input(format!("bad count '{}'", &rec[8])))?,
            })
        };
        let row = MetricsRow {
            method: rec[1].to_string(),
            horizon: rec[2]
                .parse()
                .map_err(|_| CliError::bad_input(format!("bad horizon '{}'", &rec[2])))?,
            metrics,
            failure: None,
        };
        match out.last_mut() {
            Some((label, table)) if label == &rec[0] => table.rows.push(row),
            _ => out.push((rec[0].to_string(), MetricsTable { rows: vec![row] })),
        }
    }
    Ok(out)
}

pub fn cmd_tune(args: &TuneArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let window = TUNE_FIT_LEN + TUNE_SCORE_LEN;
    let mut series = Vec::new();
    let mut labels = Vec::new();
    let mut rate = None;
    let mut first_error = None;
    for path in &args.inputs {
        let res = read_trace(path).and_then(|trace| {
            if trace.len() < window {
                return Err(CliError::too_short(format!(
                    "{} samples, tuning needs {window}",
                    trace.len()
                )));
            }
            let r = trace.sample_rate_hz();
            let (values, _, _) = modelled_series(&trace, window)?;
            Ok((values, r))
        });
        match res {
            Ok((values, r)) => {
                rate.get_or_insert(r);
                series.push(values);
                labels.push(path.display().to_string());
            }
            Err(e) => {
                warn(err, &format!("excluded {}: {e}", path.display()));
                first_error.get_or_insert(e);
            }
        }
    }
    let Some(rate) = rate else {
        return Err(first_error.unwrap_or_else(|| CliError::bad_input("no series to tune on")));
    };
    let grid = match args.method {
        Method::Lmar => MethodGrid::Lmar {
            ps: args.ps.clone().unwrap_or(DEFAULT_LMAR_PS.to_vec()),
            ms: args.ms.clone().unwrap_or(vec![DEFAULT_M]),
            fit: args.em.config(),
        },
        Method::Ridge => MethodGrid::Ridge {
            ps: args.ps.clone().unwrap_or(DEFAULT_RIDGE_PS.to_vec()),
            lambdas: args.lambdas.clone().unwrap_or(DEFAULT_LAMBDAS.to_vec()),
        },
    };
    let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
    let result = in_pool(|| grid_search_corpus(&refs, rate, args.k, std::slice::from_ref(&grid)))??
        .swap_remove(0);
    let file = TuneFile {
        format_version: io::MODEL_FORMAT_VERSION,
        method: args.method,
        k: result.k,
        best: result.best,
        mae: result.mae,
        rmse: result.rmse,
        series: labels,
        scores: result.scores,
    };
    let text = serde_json::to_string_pretty(&file).expect("tune output serializes") + "\n";
    write_target(&args.out, out, &text)
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    let trace = if let Some(path) = &args.model {
        let model = ModelFile::load(path)?;
        let (sigma, m) = model.lmar()?;
        let n = args
            .n
            .ok_or_else(|| CliError::bad_input("--n is required with --model"))?;
        let seed_values = match &args.history {
            Some(h) => {
                let trace = read_trace(h)?;
                modelled_series(&trace, trace.len())?.0
            }
            None => vec![0.0; m],
        };
        let seed = TimeSeries::with_origin(seed_values, model.sample_rate_hz, 0)?;
        let sim = simulate(&sigma, m, &seed, n, args.seed.unwrap_or(0))?;
        let values = sim.values()[sim.origin()..].to_vec();
        Trace::uniform(0.0, model.sample_rate_hz, TraceData::Scalar(values))
    } else {
        let path = args.synth_config.as_ref().expect("clap group");
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::bad_input(format!("cannot read {}: {e}", path.display())))?;
        let mut config: SynthConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::bad_input(format!("invalid synth config: {e}")))?;
        if let Some(seed) = args.seed {
            config.rng_seed = seed;
        }
        if let Some(n) = args.n {
            config.duration_s = n as f64 / config.sample_rate_hz;
        }
        let synth = synth_trace(&config)?;
        Trace::uniform(0.0, synth.sample_rate_hz, TraceData::Spatial(synth.points))
    };
    match &args.out {
        Some(p) => {
            let file = std::fs::File::create(p)
                .map_err(|e| CliError::io(format!("cannot create {}: {e}", p.display())))?;
            write_trace(file, &trace)
        }
        None => write_trace(out, &trace),
    }
}

/// Fits LMAR to the first principal component (or the values) of a trace,
/// anchoring the first `m` samples as conditioning history.
pub fn fit_trace(trace: &Trace, p: usize, m: usize, config: &FitConfig) -> CliResult<(FittedModel, Option<PcaBasis>)> {
    let (values, pca, _) = modelled_series(trace, trace.len())?;
    let series = TimeSeries::with_origin(values, trace.sample_rate_hz(), m)?;
    Ok((fit(&series, p, m, config)?, pca))
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let text = e.to_string();
                let first = text.lines().next().unwrap_or_default();
                let _ = writeln!(err, "bad-input: {}", first.trim_start_matches("error: "));
                return EXIT_BAD_INPUT;
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    match run(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.code
        }
    }
}
