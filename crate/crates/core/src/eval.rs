//! Repeated train/test splits and hyperparameter grid search.
//!
//! Each of `folds` runs draws its own random edge split from `(seed, run)`,
//! so every combination in a grid is scored on exactly the same splits.

use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::domain::{validate_hyperparams, FieldError, Hyperparams};
use crate::ingest::{BipartiteIndex, PreparedScore};
use crate::solver::{fit, lowest_half_mean, predict_score, RatingState, SolverError, SolverOptions};
use crate::util::round_count;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("need at least 2 edges to split, got {0}")]
    TooFewEdges(usize),
    #[error("invalid split: {0}")]
    Split(&'static str),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub folds: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.8, folds: 5, seed: 0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(EvalError::Split("train_fraction must be in (0,1)"));
        }
        if self.folds == 0 {
            return Err(EvalError::Split("folds must be at least 1"));
        }
        Ok(())
    }
}

/// How test edges touching nodes without training edges are scored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnseenNodes {
    /// Predict with `default_rating` for the unseen side.
    #[default]
    DefaultRating,
    /// Leave such edges out of the test error.
    Skip,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    #[serde(flatten)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub unseen_nodes: UnseenNodes,
}

/// Deterministic random partition of `edges` for run `run` of `spec`.
/// Both halves keep the input order.
pub fn split(
    edges: &[PreparedScore],
    spec: &SplitSpec,
    run: u64,
) -> Result<(Vec<PreparedScore>, Vec<PreparedScore>), EvalError> {
    spec.validate()?;
    let n = edges.len();
    if n < 2 {
        return Err(EvalError::TooFewEdges(n));
    }
    let n_train = round_count(spec.train_fraction, n).clamp(1, n - 1);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(run);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut in_train = vec![false; n];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }
    let (train, test): (Vec<_>, Vec<_>) =
        edges.iter().cloned().zip(in_train).partition(|(_, t)| *t);
    Ok((train.into_iter().map(|(e, _)| e).collect(), test.into_iter().map(|(e, _)| e).collect()))
}

/// Lowest-half mean absolute error of a fitted state on held-out edges.
/// `graph` is the index the state was fitted on.
pub fn test_error(
    state: &RatingState,
    graph: &BipartiteIndex,
    test: &[PreparedScore],
    hp: &Hyperparams,
    unseen: UnseenNodes,
) -> f64 {
    let mut errors = Vec::with_capacity(test.len());
    for e in test {
        let skill = graph
            .player_index(&e.player)
            .filter(|&p| !graph.player_edges(p).is_empty())
            .map(|p| state.skill[p]);
        let ease = graph
            .map_index(&e.map)
            .filter(|&m| !graph.map_edges(m).is_empty())
            .map(|m| state.ease[m]);
        let (skill, ease) = match (skill, ease, unseen) {
            (Some(p), Some(m), _) => (p, m),
            (_, _, UnseenNodes::Skip) => continue,
            (p, m, UnseenNodes::DefaultRating) => {
                (p.unwrap_or(hp.default_rating), m.unwrap_or(hp.default_rating))
            }
        };
        errors.push((e.value.get() - predict_score(skill, ease)).abs());
    }
    lowest_half_mean(&mut errors)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub run: u64,
    pub train_mae: f64,
    pub test_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub train_mae: f64,
    pub test_mae: f64,
    pub folds: Vec<FoldResult>,
}

fn run_fold(
    edges: &[PreparedScore],
    hp: &Hyperparams,
    spec: &SplitSpec,
    opts: &EvalOptions,
    run: u64,
) -> Result<FoldResult, EvalError> {
    let (train, test) = split(edges, spec, run)?;
    // Nodes that only occur in the test half stay in the index with no
    // edges, so they keep default_rating.
    let graph = BipartiteIndex::with_nodes(
        train,
        test.iter().map(|e| e.player.clone()),
        test.iter().map(|e| e.map.clone()),
    );
    let (state, _) = fit(&graph, hp, &opts.solver)?;
    Ok(FoldResult {
        run,
        train_mae: state.mae,
        test_mae: test_error(&state, &graph, &test, hp, opts.unseen_nodes),
    })
}

fn summarize(folds: Vec<FoldResult>) -> CvResult {
    let n = folds.len() as f64;
    CvResult {
        train_mae: folds.iter().map(|f| f.train_mae).sum::<f64>() / n,
        test_mae: folds.iter().map(|f| f.test_mae).sum::<f64>() / n,
        folds,
    }
}

/// Fits on the train half of runs `1..=folds` and averages train and test MAE.
pub fn cross_validate(
    edges: &[PreparedScore],
    hp: &Hyperparams,
    spec: &SplitSpec,
    opts: &EvalOptions,
) -> Result<CvResult, EvalError> {
    spec.validate()?;
    let folds = (1..=spec.folds as u64)
        .into_par_iter()
        .map(|run| run_fold(edges, hp, spec, opts, run))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(folds))
}

/// Ordered list of `(hyperparameter field, candidate values)`; the first
/// field varies slowest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grid {
    axes: Vec<(String, Vec<Value>)>,
}

impl Grid {
    pub fn new(axes: Vec<(String, Vec<Value>)>) -> Result<Self, EvalError> {
        for (i, (field, values)) in axes.iter().enumerate() {
            if !Hyperparams::FIELDS.contains(&field.as_str()) {
                return Err(FieldError::Unknown(field.clone()).into());
            }
            if values.is_empty() {
                return Err(EvalError::Grid(format!("`{field}` has no values")));
            }
            if axes[..i].iter().any(|(f, _)| f == field) {
                return Err(EvalError::Grid(format!("`{field}` listed twice")));
            }
        }
        Ok(Self { axes })
    }

    /// Parses `{"field": [v1, v2, ...], ...}`, keeping key order.
    pub fn from_json(value: &Value) -> Result<Self, EvalError> {
        let obj = value.as_object().ok_or_else(|| EvalError::Grid("expected a JSON object".into()))?;
        let axes = obj
            .iter()
            .map(|(k, v)| match v {
                Value::Array(vals) => Ok((k.clone(), vals.clone())),
                _ => Err(EvalError::Grid(format!("`{k}` must map to a list of values"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(axes)
    }

    pub fn fields(&self) -> Vec<String> {
        self.axes.iter().map(|(f, _)| f.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All combinations in row-major order.
    pub fn combos(&self) -> Vec<Vec<(String, Value)>> {
        let mut out: Vec<Vec<(String, Value)>> = vec![Vec::new()];
        for (field, values) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut row = prefix.clone();
                        row.push((field.clone(), v.clone()));
                        row
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub params: Map<String, Value>,
    pub train_mae: Option<f64>,
    pub test_mae: Option<f64>,
    pub folds: Vec<FoldResult>,
    pub failed: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fields: Vec<String>,
    pub rows: Vec<ReportRow>,
    /// Index of the row with the lowest mean test MAE.
    pub best: Option<usize>,
}

/// Cross-validates every grid combination layered over `fixed`. Invalid or
/// failing combinations become failed rows.
pub fn grid_search(
    edges: &[PreparedScore],
    fixed: &Hyperparams,
    grid: &Grid,
    spec: &SplitSpec,
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    spec.validate()?;
    if edges.len() < 2 {
        return Err(EvalError::TooFewEdges(edges.len()));
    }
    let combos = grid.combos();
    let hps: Vec<Result<Hyperparams, String>> = combos
        .iter()
        .map(|combo| {
            let mut hp = fixed.clone();
            for (field, value) in combo {
                hp = hp.with_field(field, value).map_err(|e| e.to_string())?;
            }
            validate_hyperparams(&hp)
                .map_err(|errs| errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))?;
            Ok(hp)
        })
        .collect();

    let jobs: Vec<(usize, u64)> = (0..combos.len())
        .filter(|&c| hps[c].is_ok())
        .flat_map(|c| (1..=spec.folds as u64).map(move |run| (c, run)))
        .collect();
    let results: Vec<Result<FoldResult, EvalError>> = jobs
        .par_iter()
        .map(|&(c, run)| {
            let hp = hps[c].as_ref().expect("valid combo");
            run_fold(edges, hp, spec, opts, run)
        })
        .collect();

    let mut per_combo: Vec<Vec<Result<FoldResult, EvalError>>> = vec![Vec::new(); combos.len()];
    for ((c, _), r) in jobs.into_iter().zip(results) {
        per_combo[c].push(r);
    }

    let rows: Vec<ReportRow> = combos
        .into_iter()
        .zip(hps)
        .zip(per_combo)
        .map(|((combo, hp), folds)| {
            let params: Map<String, Value> = combo.into_iter().collect();
            let failure = match hp {
                Err(e) => Some(e),
                Ok(_) => folds.iter().find_map(|r| r.as_ref().err().map(ToString::to_string)),
            };
            match failure {
                Some(error) => ReportRow {
                    params,
                    train_mae: None,
                    test_mae: None,
                    folds: Vec::new(),
                    failed: true,
                    error: Some(error),
                },
                None => {
                    let cv = summarize(folds.into_iter().map(|r| r.expect("checked")).collect());
                    ReportRow {
                        params,
                        train_mae: Some(cv.train_mae),
                        test_mae: Some(cv.test_mae),
                        folds: cv.folds,
                        failed: false,
                        error: None,
                    }
                }
            }
        })
        .collect();

    let best = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.test_mae.map(|t| (i, t)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i);

    Ok(EvalReport { fields: grid.fields(), rows, best })
}

impl EvalReport {
    /// One row per combination: grid fields, `train_mae`, `test_mae`, `failed`.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.fields.clone();
        header.extend(["train_mae", "test_mae", "failed"].map(String::from));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec: Vec<String> = self
                .fields
                .iter()
                .map(|f| match row.params.get(f) {
                    None | Some(Value::Null) => String::new(),
                    Some(Value::String(s)) => s.clone(),
                    Some(v) => v.to_string(),
                })
                .collect();
            rec.push(row.train_mae.map(|v| v.to_string()).unwrap_or_default());
            rec.push(row.test_mae.map(|v| v.to_string()).unwrap_or_default());
            rec.push(row.failed.to_string());
            w.write_record(&rec)?;
        }
        w.flush()
    }

    pub fn best_row(&self) -> Option<&ReportRow> {
        self.best.map(|i| &self.rows[i])
    }
}
