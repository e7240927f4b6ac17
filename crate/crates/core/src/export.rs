//! Difficulty-scale export and comparison reports.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use thiserror::Error;

use crate::domain::MapId;
use crate::solver::FitTrace;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("degenerate scale: need at least two distinct ease values")]
    DegenerateScale,
    #[error("hard anchor ({hard}) must exceed easy anchor ({easy})")]
    Anchors { hard: f64, easy: f64 },
    #[error("ease of map `{0}` is not a positive finite number")]
    BadEase(MapId),
    #[error("reference shares no map with the fitted state")]
    NoOverlap,
    #[error("reference line {line}: {message}")]
    Reference { line: usize, message: String },
    #[error("trace is empty")]
    EmptyTrace,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Affine map from ease to difficulty: the lowest ease lands exactly on
/// `anchor_hard`, the highest exactly on `anchor_easy`, and everything in
/// between is interpolated linearly. Higher ease gives lower difficulty.
pub fn ease_to_difficulty(
    eases: &BTreeMap<MapId, f64>,
    anchor_hard: f64,
    anchor_easy: f64,
) -> Result<BTreeMap<MapId, f64>, ExportError> {
    if !(anchor_hard > anchor_easy && anchor_hard.is_finite() && anchor_easy.is_finite()) {
        return Err(ExportError::Anchors { hard: anchor_hard, easy: anchor_easy });
    }
    for (id, &e) in eases {
        if !(e > 0.0 && e.is_finite()) {
            return Err(ExportError::BadEase(id.clone()));
        }
    }
    let lo = eases.values().copied().fold(f64::INFINITY, f64::min);
    let hi = eases.values().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(ExportError::DegenerateScale);
    }
    let span = hi - lo;
    let step = anchor_easy - anchor_hard;
    Ok(eases
        .iter()
        .map(|(id, &e)| {
            let d = if e == hi { anchor_easy } else { anchor_hard + (e - lo) * step / span };
            (id.clone(), d)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub map: MapId,
    pub ours: f64,
    pub reference: Option<f64>,
    /// `ours - reference`
    pub delta: Option<f64>,
    pub flagged: bool,
}

/// Rows sorted hardest-first (ties by map id). A row is flagged when
/// `|delta| >= flag_threshold`. Maps missing from `reference` get blank
/// reference and delta cells.
pub fn comparison_report(
    difficulties: &BTreeMap<MapId, f64>,
    reference: &BTreeMap<MapId, f64>,
    flag_threshold: f64,
) -> Result<Vec<ComparisonRow>, ExportError> {
    if !reference.is_empty() && !difficulties.keys().any(|k| reference.contains_key(k)) {
        return Err(ExportError::NoOverlap);
    }
    let mut rows: Vec<ComparisonRow> = difficulties
        .iter()
        .map(|(map, &ours)| {
            let reference = reference.get(map).copied();
            let delta = reference.map(|r| ours - r);
            ComparisonRow {
                map: map.clone(),
                ours,
                reference,
                delta,
                flagged: delta.is_some_and(|d| d.abs() >= flag_threshold),
            }
        })
        .collect();
    rows.sort_by(|a, b| b.ours.total_cmp(&a.ours).then_with(|| a.map.cmp(&b.map)));
    Ok(rows)
}

/// Writes `map_id,ours,reference,delta,flagged`.
pub fn write_comparison_csv<W: Write>(out: W, rows: &[ComparisonRow]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["map_id", "ours", "reference", "delta", "flagged"])?;
    for r in rows {
        w.write_record([
            r.map.to_string(),
            r.ours.to_string(),
            r.reference.map(|v| v.to_string()).unwrap_or_default(),
            r.delta.map(|v| v.to_string()).unwrap_or_default(),
            r.flagged.to_string(),
        ])?;
    }
    w.flush()
}

/// Reads a `map_id,stars` reference scale.
pub fn read_reference_csv<R: Read>(input: R) -> Result<BTreeMap<MapId, f64>, ExportError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let bad_header = || ExportError::Reference { line: 1, message: "expected header map_id,stars".into() };
    let headers = reader.headers().map_err(|_| bad_header())?.clone();
    let i_map = headers.iter().position(|h| h == "map_id").ok_or_else(bad_header)?;
    let i_stars = headers.iter().position(|h| h == "stars").ok_or_else(bad_header)?;

    let mut out = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => ExportError::Io(io),
            other => ExportError::Reference { line: 0, message: format!("{other:?}") },
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let err = |message: String| ExportError::Reference { line, message };
        let map = MapId::new(rec.get(i_map).unwrap_or_default()).map_err(|e| err(e.to_string()))?;
        let stars_text = rec.get(i_stars).unwrap_or_default();
        let stars: f64 = stars_text.parse().map_err(|_| err(format!("invalid stars `{stars_text}`")))?;
        out.insert(map, stars);
    }
    Ok(out)
}

/// Writes the error-vs-iteration series as `iteration,mae` rows.
pub fn trace_series<W: Write>(out: W, trace: &FitTrace) -> Result<(), ExportError> {
    if trace.points.is_empty() {
        return Err(ExportError::EmptyTrace);
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "mae"]).map_err(io::Error::from)?;
    for (it, mae) in &trace.points {
        w.write_record([it.to_string(), mae.to_string()]).map_err(io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}
