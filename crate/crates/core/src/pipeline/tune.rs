//! Hyperparameter grid search.
//!
//! Each candidate is fitted on the first 900 observations of a series and
//! scored by rolling forecasts whose targets fall in the next 300. With
//! several series, a candidate's MAE and RMSE are averaged across them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LmarError, Result};
use crate::estimation::FitConfig;
use crate::pipeline::evaluate::{
    rolling_evaluate, EvalSplit, Forecaster, LmarForecaster, RidgeForecaster,
};

/// 30 s at 30 Hz.
pub const TUNE_FIT_LEN: usize = 900;
pub const TUNE_SCORE_LEN: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Hyper {
    Lmar { p: usize, m: usize },
    Ridge { p: usize, lambda: f64 },
}

impl Hyper {
    pub fn method(&self) -> &'static str {
        match self {
            Hyper::Lmar { .. } => "lmar",
            Hyper::Ridge { .. } => "ridge",
        }
    }

    pub fn p(&self) -> usize {
        match *self {
            Hyper::Lmar { p, .. } | Hyper::Ridge { p, .. } => p,
        }
    }

    fn forecaster(&self, fit: &FitConfig) -> Box<dyn Forecaster> {
        match *self {
            Hyper::Lmar { p, m } => Box::new(LmarForecaster {
                p,
                m,
                config: fit.clone(),
            }),
            Hyper::Ridge { p, lambda } => Box::new(RidgeForecaster::new(p, lambda)),
        }
    }

    /// Order used to break MAE/RMSE ties: smaller `p`, then smaller `lambda` or `m`.
    fn secondary(&self) -> (usize, f64) {
        match *self {
            Hyper::Lmar { p, m } => (p, m as f64),
            Hyper::Ridge { p, lambda } => (p, lambda),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MethodGrid {
    Lmar {
        ps: Vec<usize>,
        ms: Vec<usize>,
        fit: FitConfig,
    },
    Ridge {
        ps: Vec<usize>,
        lambdas: Vec<f64>,
    },
}

impl MethodGrid {
    pub fn method(&self) -> &'static str {
        match self {
            MethodGrid::Lmar { .. } => "lmar",
            MethodGrid::Ridge { .. } => "ridge",
        }
    }

    pub fn candidates(&self) -> Vec<Hyper> {
        match self {
            MethodGrid::Lmar { ps, ms, .. } => ps
                .iter()
                .flat_map(|&p| ms.iter().map(move |&m| Hyper::Lmar { p, m }))
                .collect(),
            MethodGrid::Ridge { ps, lambdas } => ps
                .iter()
                .flat_map(|&p| lambdas.iter().map(move |&lambda| Hyper::Ridge { p, lambda }))
                .collect(),
        }
    }

    fn fit_config(&self) -> FitConfig {
        match self {
            MethodGrid::Lmar { fit, .. } => fit.clone(),
            MethodGrid::Ridge { .. } => FitConfig::default(),
        }
    }
}

/// Score of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub hyper: Hyper,
    /// Mean over series; `None` if the candidate failed on some series.
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub method: String,
    pub k: usize,
    pub best: Hyper,
    pub mae: f64,
    pub rmse: f64,
    pub scores: Vec<CandidateScore>,
}

/// Best hyperparameters per method for horizon `k` on one training series.
pub fn grid_search(
    train: &[f64],
    sample_rate_hz: f64,
    k: usize,
    grids: &[MethodGrid],
) -> Result<Vec<TuneResult>> {
    grid_search_corpus(&[train], sample_rate_hz, k, grids)
}

/// As [`grid_search`], averaging each candidate's errors across `series`. A
/// candidate must succeed on every series to be eligible.
pub fn grid_search_corpus(
    series: &[&[f64]],
    sample_rate_hz: f64,
    k: usize,
    grids: &[MethodGrid],
) -> Result<Vec<TuneResult>> {
    if series.is_empty() {
        return Err(LmarError::InvalidParameter("no series to tune on".into()));
    }
    if k == 0 || k >= TUNE_SCORE_LEN {
        return Err(LmarError::HorizonOutOfRange {
            k,
            max: TUNE_SCORE_LEN - 1,
        });
    }
    for s in series {
        if s.len() < TUNE_FIT_LEN + TUNE_SCORE_LEN {
            return Err(LmarError::SeriesTooShort(format!(
                "tuning needs {} observations, got {}",
                TUNE_FIT_LEN + TUNE_SCORE_LEN,
                s.len()
            )));
        }
    }
    let split = EvalSplit {
        train_len: TUNE_FIT_LEN,
        test_len: TUNE_SCORE_LEN - k,
    };
    grids
        .iter()
        .map(|grid| {
            let cands = grid.candidates();
            if cands.is_empty() {
                return Err(LmarError::InvalidParameter(format!(
                    "empty grid for {}",
                    grid.method()
                )));
            }
            let fit = grid.fit_config();
            let scores: Vec<CandidateScore> = cands
                .par_iter()
                .map(|h| score_candidate(h, &fit, series, sample_rate_hz, k, split))
                .collect();
            select(grid.method(), k, scores)
        })
        .collect()
}

fn score_candidate(
    hyper: &Hyper,
    fit: &FitConfig,
    series: &[&[f64]],
    sample_rate_hz: f64,
    k: usize,
    split: EvalSplit,
) -> CandidateScore {
    let forecaster = hyper.forecaster(fit);
    let mut mae = 0.0;
    let mut rmse = 0.0;
    for s in series {
        let window = &s[..TUNE_FIT_LEN + TUNE_SCORE_LEN];
        let cell = rolling_evaluate(window, sample_rate_hz, &[forecaster.as_ref()], &[k], split)
            .map_err(|e| e.to_string())
            .and_then(|t| {
                let row = t.rows.into_iter().next().expect("one row");
                row.metrics.ok_or(row.failure.unwrap_or_default())
            });
        match cell {
            Ok(m) => {
                mae += m.mae;
                rmse += m.rmse;
            }
            Err(e) => {
                return CandidateScore {
                    hyper: *hyper,
                    mae: None,
                    rmse: None,
                    failure: Some(e),
                }
            }
        }
    }
    let c = series.len() as f64;
    CandidateScore {
        hyper: *hyper,
        mae: Some(mae / c),
        rmse: Some(rmse / c),
        failure: None,
    }
}

fn select(method: &str, k: usize, scores: Vec<CandidateScore>) -> Result<TuneResult> {
    let best = scores
        .iter()
        .filter_map(|s| Some((s.mae?, s.rmse?, s)))
        .min_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.hyper.secondary().0.cmp(&b.2.hyper.secondary().0))
                .then(a.2.hyper.secondary().1.total_cmp(&b.2.hyper.secondary().1))
        })
        .map(|(mae, rmse, s)| (mae, rmse, s.hyper));
    match best {
        Some((mae, rmse, hyper)) => Ok(TuneResult {
            method: method.to_string(),
            k,
            best: hyper,
            mae,
            rmse,
            scores,
        }),
        None => Err(LmarError::AllGridFailures(format!(
            "{method}: {}",
            scores
                .first()
                .and_then(|s| s.failure.clone())
                .unwrap_or_default()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(hyper: Hyper, mae: f64, rmse: f64) -> CandidateScore {
        CandidateScore {
            hyper,
            mae: Some(mae),
            rmse: Some(rmse),
            failure: None,
        }
    }

    #[test]
    fn tie_breaks() {
        let r = select(
            "ridge",
            6,
            vec![
                score(Hyper::Ridge { p: 8, lambda: 1.0 }, 1.0, 2.0),
                score(Hyper::Ridge { p: 4, lambda: 10.0 }, 1.0, 2.0),
                score(Hyper::Ridge { p: 4, lambda: 0.1 }, 1.0, 2.0),
                score(Hyper::Ridge { p: 2, lambda: 0.1 }, 1.0, 2.5),
            ],
        )
        .unwrap();
        assert_eq!(r.best, Hyper::Ridge { p: 4, lambda: 0.1 });
        let failed = CandidateScore {
            hyper: Hyper::Lmar { p: 4, m: 50 },
            mae: None,
            rmse: None,
            failure: Some("x".into()),
        };
        assert!(matches!(
            select("lmar", 6, vec![failed]),
            Err(LmarError::AllGridFailures(_))
        ));
    }

    #[test]
    fn hyper_json() {
        let h = Hyper::Ridge { p: 3, lambda: 0.5 };
        let s = serde_json::to_string(&h).unwrap();
        assert_eq!(s, r#"{"method":"ridge","p":3,"lambda":0.5}"#);
        assert_eq!(serde_json::from_str::<Hyper>(&s).unwrap(), h);
    }
}
