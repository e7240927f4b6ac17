//! Score dump parsing, the cleaning pipeline, and the bipartite index.

mod clean;
mod graph;
mod parse;

use std::collections::BTreeSet;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{MapId, PlayerId};
use crate::transform::{ScoreValue, TransformError};

pub use clean::{clean_and_filter, Manifest};
pub use graph::{build_graph, BipartiteIndex};
pub use parse::{parse_scores, write_scores, Format, ParseOutcome, RowError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv header: {0}")]
    Header(String),
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(String),
    #[error("transform failed: {0}")]
    Transform(#[from] TransformError),
    #[error("line {line}: {message}")]
    Prepared { line: usize, message: String },
    #[error("duplicate edge for player `{player}` on map `{map}`")]
    DuplicateEdge { player: PlayerId, map: MapId },
}

/// One edge of the bipartite graph: a player's best linearized score on a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedScore {
    #[serde(rename = "player_id")]
    pub player: PlayerId,
    #[serde(rename = "map_id")]
    pub map: MapId,
    pub value: ScoreValue,
    /// Post-modifier raw score. Absent for synthetic edges that were
    /// generated directly as linear values.
    pub adjusted_raw: Option<f64>,
    pub timestamp: u64,
}

/// Deduplicated, transformed edge list plus the node sets it spans.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub edges: Vec<PreparedScore>,
    pub players: BTreeSet<PlayerId>,
    pub maps: BTreeSet<MapId>,
    pub manifest: Manifest,
}

impl Dataset {
    /// Wraps an already-prepared edge list. Rejects repeated (player, map) pairs.
    pub fn from_edges(edges: Vec<PreparedScore>) -> Result<Self, IngestError> {
        let mut seen = BTreeSet::new();
        for e in &edges {
            if !seen.insert((&e.player, &e.map)) {
                return Err(IngestError::DuplicateEdge {
                    player: e.player.clone(),
                    map: e.map.clone(),
                });
            }
        }
        let players = edges.iter().map(|e| e.player.clone()).collect();
        let maps = edges.iter().map(|e| e.map.clone()).collect();
        Ok(Self { edges, players, maps, manifest: Manifest::default() })
    }
}

/// Writes edges as JSON lines, one [`PreparedScore`] per line.
pub fn write_prepared_jsonl<W: Write>(mut out: W, edges: &[PreparedScore]) -> io::Result<()> {
    for e in edges {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_prepared_jsonl<R: BufRead>(input: R) -> Result<Vec<PreparedScore>, IngestError> {
    let mut edges = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let edge: PreparedScore = serde_json::from_str(&line)
            .map_err(|e| IngestError::Prepared { line: i + 1, message: e.to_string() })?;
        edges.push(edge);
    }
    Ok(edges)
}
