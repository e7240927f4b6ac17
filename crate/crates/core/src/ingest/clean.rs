use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{Dataset, IngestError, PreparedScore};
use crate::domain::{validate_hyperparams, Hyperparams, ModifierTable, ScoreRecord};
use crate::transform::{apply_modifiers, score_to_value, TransformError};
use crate::util::ceil_count;

/// Records dropped by each cleaning rule, in pipeline order.
///
/// `total_dropped() + edges == input records` for every dataset produced by
/// [`clean_and_filter`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub unknown_modifier: usize,
    pub below_min_score: usize,
    pub perfect_score: usize,
    pub recency: usize,
    pub duplicate: usize,
}

impl Manifest {
    pub fn total_dropped(&self) -> usize {
        self.unknown_modifier + self.below_min_score + self.perfect_score + self.recency + self.duplicate
    }
}

struct Candidate<'a> {
    input_pos: usize,
    record: &'a ScoreRecord,
    adjusted: f64,
}

/// Runs the cleaning pipeline:
///
/// 1. apply modifier multipliers (unknown codes drop the record);
/// 2. drop adjusted scores below `min_raw_score`;
/// 3. drop adjusted scores of exactly 1;
/// 4. keep the `ceil(recency_keep_fraction * n)` most recent records
///    (stable on equal timestamps);
/// 5. keep the best adjusted score per (player, map);
/// 6. transform survivors into score values.
///
/// Surviving edges keep their input order.
pub fn clean_and_filter(
    records: &[ScoreRecord],
    hp: &Hyperparams,
    table: &ModifierTable,
) -> Result<Dataset, IngestError> {
    validate_hyperparams(hp).map_err(|errs| {
        IngestError::Hyperparams(errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
    })?;
    let mut manifest = Manifest::default();

    let mut kept: Vec<Candidate<'_>> = Vec::with_capacity(records.len());
    for (input_pos, record) in records.iter().enumerate() {
        let adjusted = match apply_modifiers(record.raw, &record.modifiers, table) {
            Ok(a) => a,
            Err(TransformError::UnknownModifier(_)) => {
                manifest.unknown_modifier += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        if adjusted < hp.min_raw_score {
            manifest.below_min_score += 1;
        } else if adjusted == 1.0 {
            manifest.perfect_score += 1;
        } else {
            kept.push(Candidate { input_pos, record, adjusted });
        }
    }

    let keep = ceil_count(hp.recency_keep_fraction, kept.len());
    manifest.recency = kept.len() - keep;
    // stable: equal timestamps keep input order
    kept.sort_by(|a, b| b.record.timestamp.cmp(&a.record.timestamp));
    kept.truncate(keep);

    let mut best: HashMap<(&str, &str), usize> = HashMap::with_capacity(kept.len());
    for (i, c) in kept.iter().enumerate() {
        let key = (c.record.player.as_str(), c.record.map.as_str());
        match best.get(&key) {
            Some(&j) if !beats(c, &kept[j]) => {}
            _ => {
                best.insert(key, i);
            }
        }
    }
    manifest.duplicate = kept.len() - best.len();
    let mut winners: Vec<&Candidate<'_>> = best.values().map(|&i| &kept[i]).collect();
    winners.sort_by_key(|c| c.input_pos);

    let mut edges = Vec::with_capacity(winners.len());
    for c in winners {
        edges.push(PreparedScore {
            player: c.record.player.clone(),
            map: c.record.map.clone(),
            value: score_to_value(c.adjusted, hp)?,
            adjusted_raw: Some(c.adjusted),
            timestamp: c.record.timestamp,
        });
    }

    let players: BTreeSet<_> = edges.iter().map(|e| e.player.clone()).collect();
    let maps: BTreeSet<_> = edges.iter().map(|e| e.map.clone()).collect();
    Ok(Dataset { edges, players, maps, manifest })
}

/// Higher adjusted score wins, then the more recent record, then input order.
fn beats(a: &Candidate<'_>, b: &Candidate<'_>) -> bool {
    (a.adjusted, a.record.timestamp, std::cmp::Reverse(a.input_pos))
        .partial_cmp(&(b.adjusted, b.record.timestamp, std::cmp::Reverse(b.input_pos)))
        == Some(std::cmp::Ordering::Greater)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{MapId, PlayerId};

    fn rec(p: &str, m: &str, raw: f64, ts: u64, mods: &[&str]) -> ScoreRecord {
        ScoreRecord {
            player: PlayerId::new(p).unwrap(),
            map: MapId::new(m).unwrap(),
            raw,
            timestamp: ts,
            modifiers: mods.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn keep_all() -> Hyperparams {
        Hyperparams { recency_keep_fraction: 1.0, ..Default::default() }
    }

    #[test]
    fn low_and_perfect_scores_are_dropped() {
        let records = vec![
            rec("a", "x", 0.70, 1, &[]),
            rec("a", "y", 1.0, 2, &[]),
            rec("a", "z", 0.9, 3, &["NO"]),
            rec("a", "w", 0.99, 4, &["SF"]),
            rec("a", "v", 0.9, 5, &["??"]),
            rec("a", "u", 0.9, 6, &[]),
        ];
        let ds = clean_and_filter(&records, &keep_all(), &ModifierTable::default()).unwrap();
        assert_eq!(
            ds.manifest,
            Manifest { unknown_modifier: 1, below_min_score: 2, perfect_score: 2, recency: 0, duplicate: 0 }
        );
        assert_eq!(ds.edges.len(), 1);
        assert_eq!(ds.edges[0].map.as_str(), "u");
        assert_eq!(ds.edges[0].adjusted_raw, Some(0.9));
    }

    #[test]
    fn recency_keeps_ceil_fraction_most_recent() {
        let records: Vec<_> =
            (0..10).map(|i| rec(&format!("p{i}"), "m", 0.9, 100 + i as u64, &[])).collect();
        let hp = Hyperparams { recency_keep_fraction: 0.35, ..Default::default() };
        let ds = clean_and_filter(&records, &hp, &ModifierTable::default()).unwrap();
        assert_eq!(ds.manifest.recency, 6);
        let kept: Vec<_> = ds.edges.iter().map(|e| e.timestamp).collect();
        assert_eq!(kept, [106, 107, 108, 109]);
    }

    #[test]
    fn recency_ties_prefer_input_order() {
        let records = vec![
            rec("a", "m", 0.9, 5, &[]),
            rec("b", "m", 0.9, 5, &[]),
            rec("c", "m", 0.9, 5, &[]),
            rec("d", "m", 0.9, 1, &[]),
        ];
        let hp = Hyperparams { recency_keep_fraction: 0.5, ..Default::default() };
        let ds = clean_and_filter(&records, &hp, &ModifierTable::default()).unwrap();
        let kept: Vec<_> = ds.edges.iter().map(|e| e.player.as_str()).collect();
        assert_eq!(kept, ["a", "b"]);
    }

    #[test]
    fn dedup_keeps_best_adjusted_score() {
        let records = vec![
            rec("a", "m", 0.92, 1, &[]),
            rec("a", "m", 0.95, 2, &["SS"]),
            rec("a", "m", 0.96, 3, &[]),
            rec("a", "n", 0.80, 4, &[]),
        ];
        let ds = clean_and_filter(&records, &keep_all(), &ModifierTable::default()).unwrap();
        assert_eq!(ds.manifest.below_min_score, 1);
        assert_eq!(ds.manifest.duplicate, 1);
        assert_eq!(ds.edges.len(), 2);
        assert_eq!(ds.edges[0].adjusted_raw, Some(0.96));
        assert_eq!(ds.edges[1].map.as_str(), "n");
        assert_eq!(ds.manifest.total_dropped() + ds.edges.len(), records.len());
    }

    #[test]
    fn invalid_hyperparams_are_rejected() {
        let hp = Hyperparams { recency_keep_fraction: 0.0, ..Default::default() };
        assert!(matches!(
            clean_and_filter(&[], &hp, &ModifierTable::default()),
            Err(IngestError::Hyperparams(_))
        ));
    }
}
