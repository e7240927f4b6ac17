//! Identifiers, raw score records, hyperparameters and the modifier table.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("identifier must be non-empty")]
pub struct EmptyId;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Result<Self, EmptyId> {
                let id = id.into();
                if id.is_empty() {
                    Err(EmptyId)
                } else {
                    Ok(Self(id))
                }
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = EmptyId;

            fn try_from(id: String) -> Result<Self, Self::Error> {
                Self::new(id)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

string_id!(
    /// Opaque player identifier.
    PlayerId
);
string_id!(
    /// Opaque map (leaderboard) identifier.
    MapId
);

/// One raw observation as it arrives from a score dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub player: PlayerId,
    pub map: MapId,
    /// Proportion of the maximum achievable score, in `[0, 1]`.
    pub raw: f64,
    /// Seconds since the epoch.
    pub timestamp: u64,
    /// Modifier codes as written in the source. Unknown codes are kept and
    /// rejected later by the cleaning step.
    pub modifiers: Vec<String>,
}

/// Algorithm and data-preparation tunables.
///
/// Field names double as the JSON configuration keys. Defaults are the
/// final tuned values: `beta_alpha = 25`, `beta_beta = 1.02`,
/// `default_rating = 10`, `finish_early = true`, `error_change_prop = 0.005`,
/// `truncexp_base_mean = 10`, `truncexp_max = 100`,
/// `aggregation_topscores_p = 0.9`, `aggregation_topscores_sd_range = 1`,
/// plus `min_raw_score = 0.75` and `recency_keep_fraction = 0.35`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Proportion of the best per-node estimates kept when averaging.
    pub aggregation_topscores_p: f64,
    /// Kept estimates above `mean + sd_range * sd` are discarded.
    pub aggregation_topscores_sd_range: Option<f64>,
    pub beta_alpha: f64,
    pub beta_beta: f64,
    /// Initial value of every skill and ease.
    pub default_rating: f64,
    /// Relative MAE change below which the fit halts.
    pub error_change_prop: f64,
    /// Revert the last update and halt when the MAE increases.
    pub finish_early: bool,
    /// Scale of the (untruncated) exponential base distribution.
    pub truncexp_base_mean: f64,
    /// Upper truncation bound of the exponential; the largest score value.
    pub truncexp_max: f64,
    pub min_raw_score: f64,
    pub recency_keep_fraction: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            aggregation_topscores_p: 0.9,
            aggregation_topscores_sd_range: Some(1.0),
            beta_alpha: 25.0,
            beta_beta: 1.02,
            default_rating: 10.0,
            error_change_prop: 0.005,
            finish_early: true,
            truncexp_base_mean: 10.0,
            truncexp_max: 100.0,
            min_raw_score: 0.75,
            recency_keep_fraction: 0.35,
        }
    }
}

impl Hyperparams {
    /// Names of every field, in declaration order.
    pub const FIELDS: [&'static str; 11] = [
        "aggregation_topscores_p",
        "aggregation_topscores_sd_range",
        "beta_alpha",
        "beta_beta",
        "default_rating",
        "error_change_prop",
        "finish_early",
        "truncexp_base_mean",
        "truncexp_max",
        "min_raw_score",
        "recency_keep_fraction",
    ];

    /// Returns a copy with one field replaced by a JSON value.
    pub fn with_field(&self, field: &str, value: &serde_json::Value) -> Result<Self, FieldError> {
        if !Self::FIELDS.contains(&field) {
            return Err(FieldError::Unknown(field.to_string()));
        }
        let mut obj = serde_json::to_value(self).expect("hyperparams serialize");
        obj[field] = value.clone();
        serde_json::from_value(obj).map_err(|e| FieldError::BadValue {
            field: field.to_string(),
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("unknown hyperparameter `{0}`")]
    Unknown(String),
    #[error("bad value for `{field}`: {reason}")]
    BadValue { field: String, reason: String },
}

/// A single violated hyperparameter invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HyperparamViolation {
    pub field: &'static str,
    pub message: &'static str,
}

impl fmt::Display for HyperparamViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks every field invariant and reports all violations at once.
pub fn validate_hyperparams(hp: &Hyperparams) -> Result<(), Vec<HyperparamViolation>> {
    let mut errs = Vec::new();
    let mut check = |ok: bool, field: &'static str, message: &'static str| {
        if !ok {
            errs.push(HyperparamViolation { field, message });
        }
    };

    let p = hp.aggregation_topscores_p;
    check(p > 0.0 && p <= 1.0, "aggregation_topscores_p", "proportion must be in (0,1]");
    if let Some(sd) = hp.aggregation_topscores_sd_range {
        check(
            sd > 0.0 && sd.is_finite(),
            "aggregation_topscores_sd_range",
            "sd range must be positive",
        );
    }
    check(hp.beta_alpha > 0.0 && hp.beta_alpha.is_finite(), "beta_alpha", "must be positive");
    check(hp.beta_beta > 0.0 && hp.beta_beta.is_finite(), "beta_beta", "must be positive");
    check(
        hp.default_rating > 0.0 && hp.default_rating.is_finite(),
        "default_rating",
        "must be positive",
    );
    check(
        hp.error_change_prop > 0.0 && hp.error_change_prop.is_finite(),
        "error_change_prop",
        "must be positive",
    );
    check(
        hp.truncexp_base_mean > 0.0 && hp.truncexp_base_mean.is_finite(),
        "truncexp_base_mean",
        "must be positive",
    );
    check(
        hp.truncexp_max.is_finite() && hp.truncexp_max > hp.truncexp_base_mean,
        "truncexp_max",
        "max must exceed mean",
    );
    check(
        (0.0..1.0).contains(&hp.min_raw_score),
        "min_raw_score",
        "threshold must be in [0,1)",
    );
    check(
        hp.recency_keep_fraction > 0.0 && hp.recency_keep_fraction <= 1.0,
        "recency_keep_fraction",
        "fraction must be in (0,1]",
    );

    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

/// Score multipliers per gameplay modifier code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct ModifierTable(BTreeMap<String, f64>);

#[derive(Debug, Error, Clone, PartialEq)]
#[error("modifier `{code}` has non-positive multiplier {multiplier}")]
pub struct BadMultiplier {
    pub code: String,
    pub multiplier: f64,
}

impl ModifierTable {
    pub fn new(entries: BTreeMap<String, f64>) -> Result<Self, BadMultiplier> {
        for (code, &multiplier) in &entries {
            if !(multiplier > 0.0 && multiplier.is_finite()) {
                return Err(BadMultiplier { code: code.clone(), multiplier });
            }
        }
        Ok(Self(entries))
    }

    pub fn multiplier(&self, code: &str) -> Option<f64> {
        self.0.get(code).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

impl Default for ModifierTable {
    fn default() -> Self {
        let entries = [
            ("SF", 1.05), // super fast song
            ("SA", 1.02), // strict angles
            ("NO", 0.5),  // no obstacles
            ("SS", 0.65), // slow song
            ("FS", 1.02), // fast song
            ("NB", 0.5),  // no bombs
            ("NA", 0.5),  // no arrows
            ("OP", 0.5),  // out of platform
        ];
        Self(entries.iter().map(|&(k, v)| (k.to_string(), v)).collect())
    }
}

impl TryFrom<BTreeMap<String, f64>> for ModifierTable {
    type Error = BadMultiplier;

    fn try_from(entries: BTreeMap<String, f64>) -> Result<Self, Self::Error> {
        Self::new(entries)
    }
}

impl From<ModifierTable> for BTreeMap<String, f64> {
    fn from(table: ModifierTable) -> Self {
        table.0
    }
}
