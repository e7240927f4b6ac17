use std::fmt;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::domain::{MapId, PlayerId, ScoreRecord};

const COLUMNS: [&str; 5] = ["player_id", "map_id", "score", "timestamp", "modifiers"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Format::Csv),
            "jsonl" | "ndjson" => Some(Format::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(format!("unknown format `{other}` (expected csv or jsonl)")),
        }
    }
}

/// A malformed input row. `line` is 1-based and counts the header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseOutcome {
    pub records: Vec<ScoreRecord>,
    pub errors: Vec<RowError>,
}

/// Parses a score dump. Well-formed rows become records; malformed rows are
/// collected with their line numbers. Only an unreadable stream (or a CSV
/// without the required header) is fatal.
pub fn parse_scores<R: Read>(input: R, format: Format) -> Result<ParseOutcome, IngestError> {
    match format {
        Format::Csv => parse_csv(input),
        Format::Jsonl => parse_jsonl(BufReader::new(input)),
    }
}

fn build_record(
    player: &str,
    map: &str,
    raw: f64,
    timestamp: u64,
    modifiers: Vec<String>,
) -> Result<ScoreRecord, String> {
    let player = PlayerId::new(player.trim()).map_err(|_| "empty player_id".to_string())?;
    let map = MapId::new(map.trim()).map_err(|_| "empty map_id".to_string())?;
    if !(0.0..=1.0).contains(&raw) {
        return Err(format!("raw out of [0,1]: {raw}"));
    }
    Ok(ScoreRecord { player, map, raw, timestamp, modifiers })
}

fn parse_csv<R: Read>(input: R) -> Result<ParseOutcome, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let headers = reader.headers().map_err(csv_fatal)?.clone();
    let mut index = [0usize; 5];
    for (slot, col) in index.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == col)
            .ok_or_else(|| IngestError::Header(format!("missing column `{col}`")))?;
    }
    let [i_player, i_map, i_score, i_ts, i_mods] = index;

    let mut out = ParseOutcome::default();
    let mut row = csv::StringRecord::new();
    loop {
        let line = reader.position().line() as usize;
        match reader.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(csv_fatal(e)),
            Err(e) => {
                out.errors.push(RowError { line, message: e.to_string() });
                continue;
            }
        }
        let line = row.position().map_or(line, |p| p.line() as usize);
        if row.len() != headers.len() {
            out.errors.push(RowError {
                line,
                message: format!("expected {} fields, found {}", headers.len(), row.len()),
            });
            continue;
        }
        match csv_row(&row, i_player, i_map, i_score, i_ts, i_mods) {
            Ok(rec) => out.records.push(rec),
            Err(message) => out.errors.push(RowError { line, message }),
        }
    }
    Ok(out)
}

fn csv_row(
    row: &csv::StringRecord,
    i_player: usize,
    i_map: usize,
    i_score: usize,
    i_ts: usize,
    i_mods: usize,
) -> Result<ScoreRecord, String> {
    let score = &row[i_score];
    let raw: f64 = score.parse().map_err(|_| format!("invalid score `{score}`"))?;
    let ts = &row[i_ts];
    if ts.is_empty() {
        return Err("missing timestamp".into());
    }
    let timestamp: u64 = ts.parse().map_err(|_| format!("invalid timestamp `{ts}`"))?;
    let modifiers = row[i_mods]
        .split('|')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(String::from)
        .collect();
    build_record(&row[i_player], &row[i_map], raw, timestamp, modifiers)
}

fn csv_fatal(e: csv::Error) -> IngestError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IngestError::Io(io),
        other => IngestError::Header(format!("{other:?}")),
    }
}

#[derive(Serialize, Deserialize)]
struct JsonRow {
    player_id: String,
    map_id: String,
    score: f64,
    timestamp: Option<u64>,
    #[serde(default)]
    modifiers: Vec<String>,
}

fn parse_jsonl<R: BufRead>(input: R) -> Result<ParseOutcome, IngestError> {
    let mut out = ParseOutcome::default();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let result = serde_json::from_str::<JsonRow>(&line)
            .map_err(|e| e.to_string())
            .and_then(|row| {
                let timestamp = row.timestamp.ok_or("missing timestamp")?;
                let modifiers = row.modifiers.into_iter().map(|m| m.trim().to_string()).collect();
                build_record(&row.player_id, &row.map_id, row.score, timestamp, modifiers)
            });
        match result {
            Ok(rec) => out.records.push(rec),
            Err(message) => out.errors.push(RowError { line: i + 1, message }),
        }
    }
    Ok(out)
}

/// Writes records in the same layout [`parse_scores`] reads.
pub fn write_scores<W: Write>(mut out: W, records: &[ScoreRecord], format: Format) -> io::Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(COLUMNS)?;
            for r in records {
                w.write_record([
                    r.player.to_string(),
                    r.map.to_string(),
                    r.raw.to_string(),
                    r.timestamp.to_string(),
                    r.modifiers.join("|"),
                ])?;
            }
            w.flush()
        }
        Format::Jsonl => {
            for r in records {
                let row = JsonRow {
                    player_id: r.player.to_string(),
                    map_id: r.map.to_string(),
                    score: r.raw,
                    timestamp: Some(r.timestamp),
                    modifiers: r.modifiers.clone(),
                };
                serde_json::to_writer(&mut out, &row)?;
                out.write_all(b"\n")?;
            }
            out.flush()
        }
    }
}
