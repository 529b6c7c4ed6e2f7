//! Trace CSV files and JSON model files.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::estimation::FittedModel;
use crate::param::MixtureParam;
use crate::pipeline::pca::PcaBasis;
use crate::pipeline::ridge::RidgeModel;

/// Allowed deviation of any time step from the first one, in seconds.
pub const SPACING_TOL_S: f64 = 1e-6;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Decimal with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceData {
    Scalar(Vec<f64>),
    Spatial(Vec<[f64; 3]>),
}

/// A uniformly sampled trace: `t,value` or `t,x,y,z` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub t: Vec<f64>,
    pub data: TraceData,
}

impl Trace {
    /// Trace with times `t0 + s / rate`.
    pub fn uniform(t0: f64, sample_rate_hz: f64, data: TraceData) -> Self {
        let n = match &data {
            TraceData::Scalar(v) => v.len(),
            TraceData::Spatial(v) => v.len(),
        };
        Self {
            t: (0..n).map(|s| t0 + s as f64 / sample_rate_hz).collect(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn is_spatial(&self) -> bool {
        matches!(self.data, TraceData::Spatial(_))
    }

    pub fn sample_rate_hz(&self) -> f64 {
        let n = self.t.len();
        (n - 1) as f64 / (self.t[n - 1] - self.t[0])
    }
}

pub fn parse_trace<R: Read>(reader: R) -> Result<Trace, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| CliError::bad_input(format!("unreadable trace header: {e}")))?
        .clone();
    if header.len() == 0 || header.iter().any(|h| h.parse::<f64>().is_ok()) {
        return Err(CliError::bad_input(
            "trace has no header row (expected t,value or t,x,y,z)",
        ));
    }
    let cols = header.len();
    if cols != 2 && cols != 4 {
        return Err(CliError::bad_input(format!(
            "trace has {cols} columns, expected 2 (t,value) or 4 (t,x,y,z)"
        )));
    }
    let mut t = Vec::new();
    let mut scalar = Vec::new();
    let mut spatial = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| CliError::bad_input(format!("line {line}: {e}")))?;
        let mut vals = [0.0; 4];
        for (c, field) in rec.iter().enumerate() {
            vals[c] = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    CliError::bad_input(format!("line {line}: '{field}' is not a finite number"))
                })?;
        }
        t.push(vals[0]);
        if cols == 2 {
            scalar.push(vals[1]);
        } else {
            spatial.push([vals[1], vals[2], vals[3]]);
        }
    }
    if t.len() < 2 {
        return Err(CliError::too_short(format!(
            "trace has {} rows, at least 2 are needed",
            t.len()
        )));
    }
    if let Some(i) = (1..t.len()).find(|&i| t[i] <= t[i - 1]) {
        return Err(CliError::bad_input(format!(
            "time column is not strictly increasing at data row {}",
            i + 1
        )));
    }
    let dt = t[1] - t[0];
    if let Some(i) = (2..t.len()).find(|&i| ((t[i] - t[i - 1]) - dt).abs() > SPACING_TOL_S) {
        return Err(CliError::gapped(format!(
            "sampling interval changes from {dt} s to {} s at data row {}",
            t[i] - t[i - 1],
            i + 1
        )));
    }
    let data = if cols == 2 {
        TraceData::Scalar(scalar)
    } else {
        TraceData::Spatial(spatial)
    };
    Ok(Trace { t, data })
}

pub fn read_trace(path: &Path) -> Result<Trace, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::bad_input(format!("cannot open {}: {e}", path.display())))?;
    parse_trace(file)
}

pub fn write_trace<W: Write>(out: W, trace: &Trace) -> Result<(), CliError> {
    let mut w = BufWriter::new(out);
    let res = (|| -> std::io::Result<()> {
        match &trace.data {
            TraceData::Scalar(v) => {
                writeln!(w, "t,value")?;
                for (t, y) in trace.t.iter().zip(v) {
                    writeln!(w, "{},{}", fmt_f64(*t), fmt_f64(*y))?;
                }
            }
            TraceData::Spatial(v) => {
                writeln!(w, "t,x,y,z")?;
                for (t, p) in trace.t.iter().zip(v) {
                    writeln!(
                        w,
                        "{},{},{},{}",
                        fmt_f64(*t),
                        fmt_f64(p[0]),
                        fmt_f64(p[1]),
                        fmt_f64(p[2])
                    )?;
                }
            }
        }
        w.flush()
    })();
    res.map_err(|e| CliError::io(format!("writing trace: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lmar,
    Ridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub monitor_trace: Vec<f64>,
    pub exact_loglik_final: f64,
    pub best_iterate_used: bool,
    pub jitter_applied: bool,
}

/// Serialized model. Floats are written in their shortest round-trip
/// decimal form, so loading restores them bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub model_kind: ModelKind,
    pub sample_rate_hz: f64,
    pub p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Row-major `(p+1) x (p+1)` covariance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<FitDiagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resid_variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalize_intercept: Option<bool>,
    /// Present when the model was fitted to the first principal component of a 3D trace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca: Option<PcaBasis>,
}

impl ModelFile {
    pub fn from_lmar(model: &FittedModel, sample_rate_hz: f64, pca: Option<PcaBasis>) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            model_kind: ModelKind::Lmar,
            sample_rate_hz,
            p: model.p,
            m: Some(model.m),
            sigma: Some(model.sigma_hat.to_row_major()),
            diagnostics: Some(FitDiagnostics {
                iterations: model.iterations,
                converged: model.converged,
                monitor_trace: model.monitor_trace.clone(),
                exact_loglik_final: model.exact_loglik_final,
                best_iterate_used: model.best_iterate_used,
                jitter_applied: model.jitter_applied,
            }),
            k: None,
            lambda: None,
            beta0: None,
            beta: None,
            resid_variance: None,
            penalize_intercept: None,
            pca,
        }
    }

    pub fn from_ridge(model: &RidgeModel, sample_rate_hz: f64, pca: Option<PcaBasis>) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            model_kind: ModelKind::Ridge,
            sample_rate_hz,
            p: model.p,
            m: None,
            sigma: None,
            diagnostics: None,
            k: Some(model.k),
            lambda: Some(model.lambda),
            beta0: Some(model.beta0),
            beta: Some(model.beta.clone()),
            resid_variance: Some(model.resid_variance),
            penalize_intercept: Some(model.penalize_intercept),
            pca,
        }
    }

    /// `Σ` and `m` of an LMAR model.
    pub fn lmar(&self) -> Result<(MixtureParam, usize), CliError> {
        let (Some(sigma), Some(m)) = (&self.sigma, self.m) else {
            return Err(CliError::bad_input("LMAR model file lacks sigma or m"));
        };
        if self.model_kind != ModelKind::Lmar {
            return Err(CliError::bad_input("model file is not an LMAR model"));
        }
        let dim = self.p + 1;
        if sigma.len() != dim * dim {
            return Err(CliError::bad_input(format!(
                "sigma has {} entries, expected {}",
                sigma.len(),
                dim * dim
            )));
        }
        Ok((MixtureParam::from_row_slice(dim, sigma)?, m))
    }

    pub fn ridge(&self) -> Result<RidgeModel, CliError> {
        if self.model_kind != ModelKind::Ridge {
            return Err(CliError::bad_input("model file is not a ridge model"));
        }
        match (
            self.k,
            self.lambda,
            self.beta0,
            &self.beta,
            self.resid_variance,
        ) {
            (Some(k), Some(lambda), Some(beta0), Some(beta), Some(rv)) if beta.len() == self.p => {
                Ok(RidgeModel {
                    p: self.p,
                    k,
                    lambda,
                    beta0,
                    beta: beta.clone(),
                    resid_variance: rv,
                    penalize_intercept: self.penalize_intercept.unwrap_or(true),
                })
            }
            _ => Err(CliError::bad_input("ridge model file is incomplete")),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let model: ModelFile = serde_json::from_str(text)
            .map_err(|e| CliError::bad_input(format!("invalid model file: {e}")))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(CliError::bad_input(format!(
                "unsupported model format_version {}",
                model.format_version
            )));
        }
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::bad_input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
    }
}
