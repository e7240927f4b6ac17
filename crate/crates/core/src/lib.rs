//! Joint estimation of player skill and map ease from score records.
//!
//! Players and maps form the two node classes of a bipartite graph whose
//! edges are the best score a player set on a map. Under the bilinear model
//! `s = p * e` a score value `s` is explained by a player skill `p` and a map
//! ease `e`. Skills and eases are estimated by alternately averaging the
//! per-score estimates `s / e` (for players) and `s / p` (for maps) until the
//! mean absolute prediction error stops changing.
//!
//! The crate is organised as a pipeline:
//!
//! - [`domain`]: identifiers, raw records, hyperparameters and the modifier table.
//! - [`transform`]: the raw-score to score-value linearization.
//! - [`ingest`]: parsing, cleaning and the bipartite index.
//! - [`solver`]: the iterative averaging engine and its error measure.
//! - [`eval`]: cross-validation and grid search.
//! - [`export`]: rescaling eases onto an external difficulty scale, reports.
//! - [`synth`]: ground-truth synthetic data and recovery metrics.
//! - [`config`]: the JSON run configuration shared by the CLI.

pub mod config;
pub mod domain;
pub mod eval;
pub mod export;
pub mod ingest;
pub mod solver;
pub mod synth;
pub mod transform;

mod util;

pub use domain::{
    validate_hyperparams, Hyperparams, HyperparamViolation, MapId, ModifierTable, PlayerId,
    ScoreRecord,
};
pub use ingest::{build_graph, clean_and_filter, parse_scores, BipartiteIndex, Dataset, PreparedScore};
pub use solver::{fit, FitTrace, FittedModel, HaltReason, RatingState, SolverOptions};
pub use transform::{score_to_value, ScoreValue};
