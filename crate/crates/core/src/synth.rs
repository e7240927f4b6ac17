//! Synthetic score graphs with known skills and eases.
//!
//! Edge values follow the bilinear model with multiplicative log-normal
//! noise, `s = p* * e* * exp(eta)` with `eta ~ Normal(0, noise_sd^2)`, so a
//! noiseless graph has an exact zero-error solution.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Hyperparams, MapId, PlayerId, ScoreRecord};
use crate::ingest::{Dataset, PreparedScore};
use crate::transform::{value_to_score, ScoreValue, TransformError};

const BASE_TIMESTAMP: u64 = 1_600_000_000;
const SKILL_RANGE: (f64, f64) = (2.0, 8.0);
const EASE_RANGE: (f64, f64) = (0.5, 3.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("need at least one player and one map")]
    Empty,
    #[error("edge density must be in (0,1], got {0}")]
    Density(f64),
    #[error("noise sd must be finite and non-negative, got {0}")]
    Noise(f64),
    #[error("max value must be positive, got {0}")]
    MaxValue(f64),
    #[error("true values must be positive and finite")]
    NonPositiveTruth,
    #[error("fitted state and truth cover different {0}")]
    KeyMismatch(&'static str),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(rename = "players")]
    pub true_skill: BTreeMap<PlayerId, f64>,
    #[serde(rename = "maps")]
    pub true_ease: BTreeMap<MapId, f64>,
    pub noise_sd: f64,
    pub seed: u64,
}

fn player_id(i: usize) -> PlayerId {
    PlayerId::new(format!("p{i:05}")).expect("non-empty")
}

fn map_id(i: usize) -> MapId {
    MapId::new(format!("m{i:05}")).expect("non-empty")
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

impl GroundTruth {
    /// Skills log-uniform in [2, 8], eases log-uniform in [0.5, 3].
    pub fn random(n_players: usize, n_maps: usize, noise_sd: f64, seed: u64) -> Result<Self, SynthError> {
        if n_players == 0 || n_maps == 0 {
            return Err(SynthError::Empty);
        }
        if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
            return Err(SynthError::Noise(noise_sd));
        }
        // distinct stream from the one generate() uses for edges
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let true_skill = (0..n_players).map(|i| (player_id(i), log_uniform(&mut rng, SKILL_RANGE))).collect();
        let true_ease = (0..n_maps).map(|i| (map_id(i), log_uniform(&mut rng, EASE_RANGE))).collect();
        Ok(Self { true_skill, true_ease, noise_sd, seed })
    }
}

/// Samples each (player, map) pair with probability `density`, patches the
/// graph to be connected, and draws a noisy bilinear value per edge, clamped
/// into `(0, max_value)`.
pub fn generate(truth: &GroundTruth, density: f64, max_value: f64) -> Result<Dataset, SynthError> {
    let players: Vec<(&PlayerId, f64)> = truth.true_skill.iter().map(|(k, &v)| (k, v)).collect();
    let maps: Vec<(&MapId, f64)> = truth.true_ease.iter().map(|(k, &v)| (k, v)).collect();
    if players.is_empty() || maps.is_empty() {
        return Err(SynthError::Empty);
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(SynthError::Density(density));
    }
    if !(max_value > 0.0 && max_value.is_finite()) {
        return Err(SynthError::MaxValue(max_value));
    }
    if players.iter().map(|p| p.1).chain(maps.iter().map(|m| m.1)).any(|v| !(v > 0.0 && v.is_finite())) {
        return Err(SynthError::NonPositiveTruth);
    }
    let noise = Normal::new(0.0, truth.noise_sd).map_err(|_| SynthError::Noise(truth.noise_sd))?;
    let mut rng = ChaCha8Rng::seed_from_u64(truth.seed);

    let (np, nm) = (players.len(), maps.len());
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for p in 0..np {
        for m in 0..nm {
            if density >= 1.0 || rng.random_bool(density) {
                pairs.push((p, m));
            }
        }
    }
    connect(&mut pairs, np, nm, &mut rng);

    let hi = max_value * (1.0 - 1e-12);
    let edges = pairs
        .iter()
        .enumerate()
        .map(|(i, &(p, m))| {
            let eta: f64 = noise.sample(&mut rng);
            let s = (players[p].1 * maps[m].1 * eta.exp()).clamp(f64::MIN_POSITIVE, hi);
            PreparedScore {
                player: players[p].0.clone(),
                map: maps[m].0.clone(),
                value: ScoreValue::new(s).expect("finite positive"),
                adjusted_raw: None,
                timestamp: BASE_TIMESTAMP + i as u64,
            }
        })
        .collect();
    Ok(Dataset::from_edges(edges).expect("pairs are unique"))
}

/// Gives every node an edge, then chains the remaining components together.
fn connect(pairs: &mut Vec<(usize, usize)>, np: usize, nm: usize, rng: &mut ChaCha8Rng) {
    let mut player_deg = vec![0usize; np];
    let mut map_deg = vec![0usize; nm];
    for &(p, m) in pairs.iter() {
        player_deg[p] += 1;
        map_deg[m] += 1;
    }
    for p in 0..np {
        if player_deg[p] == 0 {
            let m = rng.random_range(0..nm);
            pairs.push((p, m));
            player_deg[p] += 1;
            map_deg[m] += 1;
        }
    }
    for m in 0..nm {
        if map_deg[m] == 0 {
            let p = rng.random_range(0..np);
            pairs.push((p, m));
            map_deg[m] += 1;
        }
    }

    // union-find over players 0..np and maps np..np+nm
    let mut parent: Vec<usize> = (0..np + nm).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(p, m) in pairs.iter() {
        let (a, b) = (find(&mut parent, p), find(&mut parent, np + m));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    // first player and first map of each component, in node order
    let mut firsts: BTreeMap<usize, (Option<usize>, Option<usize>)> = BTreeMap::new();
    for node in 0..np + nm {
        let root = find(&mut parent, node);
        let slot = firsts.entry(root).or_default();
        if node < np {
            slot.0.get_or_insert(node);
        } else {
            slot.1.get_or_insert(node - np);
        }
    }
    let comps: Vec<_> = firsts.into_values().collect();
    for w in comps.windows(2) {
        let p = w[0].0.expect("component has a player");
        let m = w[1].1.expect("component has a map");
        pairs.push((p, m));
    }
}

/// Root-mean-square log errors of fitted skills and eases against the truth
/// after removing the scale degeneracy: skills are multiplied by the `c`
/// minimising the skill error (the geometric mean of `p* / p`) and eases are
/// divided by it.
pub fn recovery_error(
    skill: &BTreeMap<PlayerId, f64>,
    ease: &BTreeMap<MapId, f64>,
    truth: &GroundTruth,
) -> Result<(f64, f64), SynthError> {
    if !skill.keys().eq(truth.true_skill.keys()) {
        return Err(SynthError::KeyMismatch("players"));
    }
    if !ease.keys().eq(truth.true_ease.keys()) {
        return Err(SynthError::KeyMismatch("maps"));
    }
    let skill_logs: Vec<f64> = skill.values().zip(truth.true_skill.values()).map(|(p, t)| t.ln() - p.ln()).collect();
    let ln_c = skill_logs.iter().sum::<f64>() / skill_logs.len() as f64;
    let rms = |xs: &mut dyn Iterator<Item = f64>| {
        let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
        (sum / n as f64).sqrt()
    };
    let skill_err = rms(&mut skill_logs.iter().map(|d| d - ln_c));
    let ease_err = rms(&mut ease.values().zip(truth.true_ease.values()).map(|(e, t)| e.ln() - ln_c - t.ln()));
    Ok((skill_err, ease_err))
}

/// Expresses linear edge values as raw percentages under `hp`'s transform,
/// so a synthetic graph can be fed through the full preparation pipeline.
pub fn to_raw_records(ds: &Dataset, hp: &Hyperparams) -> Result<Vec<ScoreRecord>, SynthError> {
    ds.edges
        .iter()
        .map(|e| {
            Ok(ScoreRecord {
                player: e.player.clone(),
                map: e.map.clone(),
                raw: value_to_score(e.value.get(), hp)?,
                timestamp: e.timestamp,
                modifiers: Vec::new(),
            })
        })
        .collect()
}
