//! Iterative mutual averaging of player skills and map eases.
//!
//! With the bilinear model `s = p * e`, every edge yields a skill estimate
//! `s / e` for its player and an ease estimate `s / p` for its map. One
//! iteration replaces each skill by the aggregate of its edges' skill
//! estimates, then each ease by the aggregate of its edges' ease estimates.
//! The model error is the mean of the lowest half of the absolute prediction
//! errors `|s - p * e|`; it only controls halting and never feeds back into
//! the updates.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{validate_hyperparams, Hyperparams, MapId, PlayerId};
use crate::ingest::BipartiteIndex;
use crate::util::{ceil_count, mean};

/// Below this many nodes the per-node updates run sequentially.
const PAR_MIN_LEN: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("no estimates to aggregate")]
    NoEstimates,
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(String),
    #[error("score value {value} of player `{player}` on map `{map}` is not positive")]
    NonPositiveScore { player: PlayerId, map: MapId, value: f64 },
    #[error("iteration {iteration}: {node} diverged to {value}")]
    Diverged { iteration: usize, node: String, value: f64 },
}

/// How the two half-steps of an iteration share values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateSchedule {
    /// Maps are updated from the freshly updated skills.
    #[default]
    Sequential,
    /// Both sides are updated from the previous iteration's values.
    Simultaneous,
}

/// Which quantity ranks a map's edges for top-proportion selection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapEdgeRanking {
    /// The per-edge ease estimate `s / p`.
    #[default]
    Estimate,
    /// The skill of the player who set the score.
    PlayerSkill,
}

/// Which side of the mean the standard-deviation filter trims.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdFilter {
    #[default]
    Upper,
    TwoSided,
}

/// Solver switches that are not hyperparameters of the model itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub update_schedule: UpdateSchedule,
    pub rank_map_edges_by: MapEdgeRanking,
    pub sd_filter: SdFilter,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            update_schedule: UpdateSchedule::Sequential,
            rank_map_edges_by: MapEdgeRanking::Estimate,
            sd_filter: SdFilter::Upper,
            max_iterations: 100,
        }
    }
}

/// Top-proportion selection followed by an optional standard-deviation trim
/// and an arithmetic mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregation {
    pub top_p: f64,
    pub sd_range: Option<f64>,
    pub sd_filter: SdFilter,
}

impl Aggregation {
    pub fn new(hp: &Hyperparams, opts: &SolverOptions) -> Self {
        Self {
            top_p: hp.aggregation_topscores_p,
            sd_range: hp.aggregation_topscores_sd_range,
            sd_filter: opts.sd_filter,
        }
    }

    /// Aggregates estimates ranked by their own value. Reorders `estimates`.
    pub fn aggregate(&self, estimates: &mut [f64]) -> Option<f64> {
        if estimates.is_empty() {
            return None;
        }
        estimates.sort_unstable_by(|a, b| b.total_cmp(a));
        let k = ceil_count(self.top_p, estimates.len());
        Some(self.trimmed_mean(&mut estimates[..k]))
    }

    /// Aggregates `(rank key, estimate)` pairs, selecting by descending key.
    /// Ties on the key are broken by the estimate so the result does not
    /// depend on input order.
    pub fn aggregate_ranked(&self, items: &mut [(f64, f64)]) -> Option<f64> {
        if items.is_empty() {
            return None;
        }
        items.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
        let k = ceil_count(self.top_p, items.len());
        let mut kept: Vec<f64> = items[..k].iter().map(|&(_, e)| e).collect();
        kept.sort_unstable_by(|a, b| b.total_cmp(a));
        Some(self.trimmed_mean(&mut kept))
    }

    /// `kept` must be sorted descending and non-empty.
    fn trimmed_mean(&self, kept: &mut [f64]) -> f64 {
        let m = mean(kept);
        let Some(range) = self.sd_range else { return m };
        if kept.len() < 3 {
            return m;
        }
        // sample standard deviation
        let var = kept.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (kept.len() - 1) as f64;
        let d = var.sqrt();
        let hi = m + range * d;
        let lo = m - range * d;
        let survivors: Vec<f64> = kept
            .iter()
            .copied()
            .filter(|&x| match self.sd_filter {
                SdFilter::Upper => x <= hi,
                SdFilter::TwoSided => x <= hi && x >= lo,
            })
            .collect();
        if survivors.is_empty() {
            m
        } else {
            mean(&survivors)
        }
    }
}

/// Aggregates per-edge estimates with the hyperparameters' top-proportion
/// and (upper) standard-deviation rules.
pub fn aggregate_estimates(estimates: &[f64], hp: &Hyperparams) -> Result<f64, SolverError> {
    let mut buf = estimates.to_vec();
    Aggregation::new(hp, &SolverOptions::default())
        .aggregate(&mut buf)
        .ok_or(SolverError::NoEstimates)
}

/// `p = s / e`
pub fn edge_skill_estimate(value: f64, ease: f64) -> f64 {
    value / ease
}

/// `e = s / p`
pub fn edge_ease_estimate(value: f64, skill: f64) -> f64 {
    value / skill
}

/// `s = p * e`
pub fn predict_score(skill: f64, ease: f64) -> f64 {
    skill * ease
}

/// Skills and eases aligned with a [`BipartiteIndex`]'s node order.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingState {
    pub skill: Vec<f64>,
    pub ease: Vec<f64>,
    pub iteration: usize,
    pub mae: f64,
}

/// All skills and eases at `default_rating`, with the error of that state.
pub fn init_state(graph: &BipartiteIndex, hp: &Hyperparams) -> Result<RatingState, SolverError> {
    if graph.is_empty() {
        return Err(SolverError::EmptyGraph);
    }
    for e in graph.edges() {
        let v = e.value.get();
        if !(v > 0.0 && v.is_finite()) {
            return Err(SolverError::NonPositiveScore {
                player: e.player.clone(),
                map: e.map.clone(),
                value: v,
            });
        }
    }
    let mut state = RatingState {
        skill: vec![hp.default_rating; graph.players().len()],
        ease: vec![hp.default_rating; graph.maps().len()],
        iteration: 0,
        mae: 0.0,
    };
    state.mae = model_error(&state, graph);
    Ok(state)
}

/// New skill vector from the current eases. Players without edges keep
/// `default_rating`.
pub fn update_players(
    state: &RatingState,
    graph: &BipartiteIndex,
    hp: &Hyperparams,
    opts: &SolverOptions,
) -> Vec<f64> {
    let agg = Aggregation::new(hp, opts);
    (0..graph.players().len())
        .into_par_iter()
        .with_min_len(PAR_MIN_LEN)
        .map(|p| {
            let mut est: Vec<f64> = graph
                .player_edges(p)
                .iter()
                .map(|&i| edge_skill_estimate(graph.value(i), state.ease[graph.endpoints(i).1]))
                .collect();
            agg.aggregate(&mut est).unwrap_or(hp.default_rating)
        })
        .collect()
}

/// New ease vector from the current skills. Maps without edges keep
/// `default_rating`.
pub fn update_maps(
    state: &RatingState,
    graph: &BipartiteIndex,
    hp: &Hyperparams,
    opts: &SolverOptions,
) -> Vec<f64> {
    let agg = Aggregation::new(hp, opts);
    (0..graph.maps().len())
        .into_par_iter()
        .with_min_len(PAR_MIN_LEN)
        .map(|m| {
            let edges = graph.map_edges(m);
            let agg_value = match opts.rank_map_edges_by {
                MapEdgeRanking::Estimate => {
                    let mut est: Vec<f64> = edges
                        .iter()
                        .map(|&i| edge_ease_estimate(graph.value(i), state.skill[graph.endpoints(i).0]))
                        .collect();
                    agg.aggregate(&mut est)
                }
                MapEdgeRanking::PlayerSkill => {
                    let mut items: Vec<(f64, f64)> = edges
                        .iter()
                        .map(|&i| {
                            let p = state.skill[graph.endpoints(i).0];
                            (p, edge_ease_estimate(graph.value(i), p))
                        })
                        .collect();
                    agg.aggregate_ranked(&mut items)
                }
            };
            agg_value.unwrap_or(hp.default_rating)
        })
        .collect()
}

/// Mean of the lowest `floor(n / 2)` values (all values when `n <= 1`).
/// Reorders `errors`.
pub fn lowest_half_mean(errors: &mut [f64]) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    errors.sort_unstable_by(f64::total_cmp);
    let k = if errors.len() <= 1 { errors.len() } else { errors.len() / 2 };
    mean(&errors[..k])
}

/// Selected mean absolute error of the state's predictions over the graph.
pub fn model_error(state: &RatingState, graph: &BipartiteIndex) -> f64 {
    let mut errors: Vec<f64> = (0..graph.edge_count())
        .map(|i| {
            let (p, m) = graph.endpoints(i);
            (graph.value(i) - predict_score(state.skill[p], state.ease[m])).abs()
        })
        .collect();
    lowest_half_mean(&mut errors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    /// Relative MAE change fell below `error_change_prop`.
    Converged,
    /// The MAE increased with `finish_early` set; the last update was undone.
    Reverted,
    MaxIterations,
}

/// MAE after every iteration, starting with the initial state as iteration 0.
/// A reverted iteration is recorded even though its update was discarded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub points: Vec<(usize, f64)>,
    pub halt_reason: HaltReason,
}

fn check_finite(values: &[f64], ids: &[impl std::fmt::Display], kind: &str, iteration: usize) -> Result<(), SolverError> {
    match values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        None => Ok(()),
        Some(i) => Err(SolverError::Diverged {
            iteration,
            node: format!("{kind} `{}`", ids[i]),
            value: values[i],
        }),
    }
}

/// Runs the alternating updates until the relative MAE change drops below
/// `error_change_prop`, the MAE rises under `finish_early`, or
/// `opts.max_iterations` is reached.
pub fn fit(
    graph: &BipartiteIndex,
    hp: &Hyperparams,
    opts: &SolverOptions,
) -> Result<(RatingState, FitTrace), SolverError> {
    validate_hyperparams(hp).map_err(|errs| {
        SolverError::Hyperparams(errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
    })?;
    let mut state = init_state(graph, hp)?;
    let mut points = vec![(0, state.mae)];

    for iteration in 1..=opts.max_iterations {
        let skill = update_players(&state, graph, hp, opts);
        check_finite(&skill, graph.players(), "player", iteration)?;
        let ease = match opts.update_schedule {
            UpdateSchedule::Sequential => {
                let half = RatingState { skill: skill.clone(), ..state.clone() };
                update_maps(&half, graph, hp, opts)
            }
            UpdateSchedule::Simultaneous => update_maps(&state, graph, hp, opts),
        };
        check_finite(&ease, graph.maps(), "map", iteration)?;

        let mut next = RatingState { skill, ease, iteration, mae: 0.0 };
        next.mae = model_error(&next, graph);
        points.push((iteration, next.mae));

        let prev_mae = state.mae;
        if hp.finish_early && next.mae > prev_mae {
            return Ok((state, FitTrace { points, halt_reason: HaltReason::Reverted }));
        }
        state = next;
        if prev_mae == 0.0 || (state.mae - prev_mae).abs() / prev_mae < hp.error_change_prop {
            return Ok((state, FitTrace { points, halt_reason: HaltReason::Converged }));
        }
    }
    Ok((state, FitTrace { points, halt_reason: HaltReason::MaxIterations }))
}

/// A fitted state keyed by node id, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub players: BTreeMap<PlayerId, f64>,
    pub maps: BTreeMap<MapId, f64>,
    pub trace: Vec<(usize, f64)>,
    pub halt_reason: HaltReason,
}

impl FittedModel {
    pub fn new(graph: &BipartiteIndex, state: &RatingState, trace: &FitTrace) -> Self {
        Self {
            players: graph.players().iter().cloned().zip(state.skill.iter().copied()).collect(),
            maps: graph.maps().iter().cloned().zip(state.ease.iter().copied()).collect(),
            trace: trace.points.clone(),
            halt_reason: trace.halt_reason,
        }
    }

    /// The final MAE recorded for the returned state.
    pub fn final_mae(&self) -> f64 {
        let idx = match self.halt_reason {
            HaltReason::Reverted => self.trace.len().saturating_sub(2),
            _ => self.trace.len().saturating_sub(1),
        };
        self.trace.get(idx).map_or(0.0, |&(_, m)| m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::PreparedScore;
    use crate::transform::ScoreValue;
    use approx::assert_relative_eq;

    fn plain() -> Hyperparams {
        Hyperparams { aggregation_topscores_p: 1.0, aggregation_topscores_sd_range: None, ..Default::default() }
    }

    fn edge(p: &str, m: &str, v: f64) -> PreparedScore {
        PreparedScore {
            player: PlayerId::new(p).unwrap(),
            map: MapId::new(m).unwrap(),
            value: ScoreValue::new(v).unwrap(),
            adjusted_raw: None,
            timestamp: 0,
        }
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_estimates(&[4.0, 2.0], &plain()).unwrap(), 3.0);
        let hp = Hyperparams { aggregation_topscores_p: 0.75, ..plain() };
        assert_eq!(aggregate_estimates(&[10.0, 9.0, 8.0, 1.0], &hp).unwrap(), 9.0);
        let hp = Hyperparams { aggregation_topscores_sd_range: Some(1.0), ..plain() };
        // m = 17.5, sample sd = 15, cutoff 32.5 drops 40
        assert_eq!(aggregate_estimates(&[10.0, 10.0, 10.0, 40.0], &hp).unwrap(), 10.0);
        assert_eq!(aggregate_estimates(&[], &hp), Err(SolverError::NoEstimates));
    }

    #[test]
    fn sd_filter_needs_three_kept() {
        let hp = Hyperparams { aggregation_topscores_sd_range: Some(0.1), ..plain() };
        assert_eq!(aggregate_estimates(&[1.0, 5.0], &hp).unwrap(), 3.0);
    }

    #[test]
    fn two_sided_sd_filter_trims_low_outliers() {
        let agg = Aggregation { top_p: 1.0, sd_range: Some(1.0), sd_filter: SdFilter::TwoSided };
        let mut est = vec![10.0, 10.0, 10.0, -20.0];
        assert_eq!(agg.aggregate(&mut est), Some(10.0));
        let upper = Aggregation { sd_filter: SdFilter::Upper, ..agg };
        let mut est = vec![10.0, 10.0, 10.0, -20.0];
        assert_eq!(upper.aggregate(&mut est), Some(2.5));
    }

    #[test]
    fn ranked_aggregation_selects_by_key() {
        let agg = Aggregation { top_p: 0.5, sd_range: None, sd_filter: SdFilter::Upper };
        // the two highest keys carry estimates 1 and 3
        let mut items = vec![(9.0, 1.0), (1.0, 100.0), (8.0, 3.0), (2.0, 50.0)];
        assert_eq!(agg.aggregate_ranked(&mut items), Some(2.0));
    }

    #[test]
    fn worked_bilinear_examples() {
        assert_eq!(edge_skill_estimate(1.0, 0.25), 4.0);
        assert_eq!(edge_skill_estimate(7.5, 1.0), 7.5);
        assert_eq!(edge_skill_estimate(0.75, 0.5), 1.5);
        assert_eq!(predict_score(1.5, 0.5), 0.75);
        assert_eq!(predict_score(3.25, 1.0), 3.25);
        assert_eq!(predict_score(4.0, 0.25), 1.0);
    }

    #[test]
    fn lowest_half_examples() {
        assert_eq!(lowest_half_mean(&mut [1.0, 3.0]), 1.0);
        assert_eq!(lowest_half_mean(&mut [10.0, 0.0, 4.0, 2.0]), 1.0);
        assert_eq!(lowest_half_mean(&mut [5.0]), 5.0);
        assert_eq!(lowest_half_mean(&mut [3.0, 1.0, 2.0]), 1.0);
    }

    #[test]
    fn init_state_at_defaults() {
        let g = BipartiteIndex::from_edges(vec![edge("a", "x", 100.0)]);
        let s = init_state(&g, &Hyperparams::default()).unwrap();
        assert_eq!(s.skill, [10.0]);
        assert_eq!(s.ease, [10.0]);
        assert_eq!(s.iteration, 0);
        assert_eq!(s.mae, 0.0);
        assert_eq!(init_state(&BipartiteIndex::from_edges(vec![]), &plain()), Err(SolverError::EmptyGraph));
        let g = BipartiteIndex::from_edges(vec![edge("a", "x", 0.0)]);
        assert!(matches!(init_state(&g, &plain()), Err(SolverError::NonPositiveScore { .. })));
    }

    #[test]
    fn init_state_error_by_hand() {
        // errors |s - 100| = [90, 80, 70, 95] -> lowest half mean (70 + 80) / 2
        let g = BipartiteIndex::from_edges(vec![
            edge("a", "x", 10.0),
            edge("a", "y", 20.0),
            edge("b", "x", 30.0),
            edge("b", "y", 5.0),
        ]);
        assert_eq!(init_state(&g, &plain()).unwrap().mae, 75.0);
    }

    #[test]
    fn consistent_edges_average_exactly() {
        let g = BipartiteIndex::from_edges(vec![edge("a", "x", 8.0), edge("a", "y", 12.0), edge("s", "y", 6.0)]);
        let state = RatingState { skill: vec![2.0, 2.0], ease: vec![2.0, 3.0], iteration: 0, mae: 0.0 };
        let skill = update_players(&state, &g, &plain(), &SolverOptions::default());
        assert_eq!(skill, [4.0, 2.0]);

        let g = BipartiteIndex::from_edges(vec![edge("a", "x", 8.0), edge("b", "x", 12.0), edge("a", "y", 6.0)]);
        let state = RatingState { skill: vec![2.0, 3.0], ease: vec![1.0, 1.0], iteration: 0, mae: 0.0 };
        let ease = update_maps(&state, &g, &plain(), &SolverOptions::default());
        assert_eq!(ease, [4.0, 3.0]);
    }

    #[test]
    fn isolated_nodes_keep_default() {
        let g = BipartiteIndex::with_nodes(
            vec![edge("a", "x", 5.0)],
            [PlayerId::new("ghost").unwrap()],
            [MapId::new("void").unwrap()],
        );
        let state = init_state(&g, &plain()).unwrap();
        let skill = update_players(&state, &g, &plain(), &SolverOptions::default());
        assert_eq!(skill[1], 10.0);
        let ease = update_maps(&state, &g, &plain(), &SolverOptions::default());
        assert_eq!(ease[g.map_index(&MapId::new("void").unwrap()).unwrap()], 10.0);
        assert_eq!(ease[g.map_index(&MapId::new("x").unwrap()).unwrap()], 0.5);
    }

    #[test]
    fn consistent_graph_converges_to_zero_error() {
        // s = p * e with p = (1, 2, 4), e = (1, 3)
        let g = BipartiteIndex::from_edges(vec![
            edge("a", "x", 1.0),
            edge("a", "y", 3.0),
            edge("b", "x", 2.0),
            edge("b", "y", 6.0),
            edge("c", "x", 4.0),
            edge("c", "y", 12.0),
        ]);
        let (state, trace) = fit(&g, &plain(), &SolverOptions::default()).unwrap();
        assert!(state.mae < 1e-9, "mae {}", state.mae);
        assert_eq!(trace.points[0].0, 0);
        assert_relative_eq!(state.skill[1] / state.skill[0], 2.0, max_relative = 1e-9);
        assert_relative_eq!(state.ease[1] / state.ease[0], 3.0, max_relative = 1e-9);
    }

    #[test]
    fn lowest_half_error_can_vanish_before_every_edge_fits() {
        // after one sweep the two x edges are fitted exactly, which is half of
        // the edges, so the selected error is zero although the y edges are not
        let g = BipartiteIndex::from_edges(vec![
            edge("a", "x", 1.0),
            edge("a", "y", 3.0),
            edge("b", "x", 2.0),
            edge("b", "y", 6.0),
            edge("c", "y", 12.0),
        ]);
        let (state, trace) = fit(&g, &plain(), &SolverOptions::default()).unwrap();
        assert_eq!(trace.points[1].1, 0.0);
        assert_eq!(trace.halt_reason, HaltReason::Converged);
        assert_eq!(state.mae, 0.0);
        assert!((state.ease[1] / state.ease[0] - 3.0).abs() > 1e-3);
    }

    #[test]
    fn fit_rejects_invalid_hyperparams() {
        let g = BipartiteIndex::from_edges(vec![edge("a", "x", 1.0)]);
        let hp = Hyperparams { error_change_prop: 0.0, ..plain() };
        assert!(matches!(fit(&g, &hp, &SolverOptions::default()), Err(SolverError::Hyperparams(_))));
    }

    #[test]
    fn finish_early_never_ends_above_initial_error() {
        // reversed orderings: a beats b on x, b beats a on y
        let g = BipartiteIndex::from_edges(vec![
            edge("a", "x", 9.0),
            edge("a", "y", 1.0),
            edge("b", "x", 1.0),
            edge("b", "y", 9.0),
        ]);
        let hp = Hyperparams { finish_early: true, ..plain() };
        let (state, trace) = fit(&g, &hp, &SolverOptions::default()).unwrap();
        assert!(state.mae <= trace.points[0].1);
        if trace.halt_reason == HaltReason::Reverted {
            let last = trace.points.last().unwrap();
            assert!(last.1 > state.mae);
            assert_eq!(state.iteration + 1, last.0);
        }
    }

    #[test]
    fn fitted_model_maps_ids() {
        let g = BipartiteIndex::from_edges(vec![edge("b", "x", 6.0), edge("a", "x", 3.0)]);
        let state = RatingState { skill: vec![1.0, 2.0], ease: vec![3.0], iteration: 1, mae: 0.0 };
        let trace = FitTrace { points: vec![(0, 5.0), (1, 0.0)], halt_reason: HaltReason::Converged };
        let model = FittedModel::new(&g, &state, &trace);
        assert_eq!(model.players[&PlayerId::new("a").unwrap()], 1.0);
        assert_eq!(model.players[&PlayerId::new("b").unwrap()], 2.0);
        assert_eq!(model.final_mae(), 0.0);
        let json = serde_json::to_string(&model).unwrap();
        assert_eq!(
            json,
            r#"{"players":{"a":1.0,"b":2.0},"maps":{"x":3.0},"trace":[[0,5.0],[1,0.0]],"halt_reason":"converged"}"#
        );
        let back: FittedModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);
    }
}
