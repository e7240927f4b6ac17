//! Flat JSON run configuration.
//!
//! A config is one JSON object. Hyperparameter fields use their own names as
//! keys; solver switches (`update_schedule`, `rank_map_edges_by`,
//! `sd_filter`, `max_iterations`), `unseen_nodes` and a `modifiers` table may
//! sit alongside them. Absent keys take their defaults.

use std::io::Read;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::domain::{validate_hyperparams, Hyperparams, ModifierTable};
use crate::eval::EvalOptions;

const OPTION_KEYS: [&str; 5] =
    ["update_schedule", "rank_map_edges_by", "sd_filter", "max_iterations", "unseen_nodes"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config must be a JSON object")]
    NotObject,
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("invalid hyperparameters: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub hyperparams: Hyperparams,
    pub options: EvalOptions,
    pub modifiers: ModifierTable,
}

impl RunConfig {
    pub fn from_reader<R: Read>(input: R) -> Result<Self, ConfigError> {
        Self::from_value(serde_json::from_reader(input)?)
    }

    pub fn from_value(value: Value) -> Result<Self, ConfigError> {
        let Value::Object(obj) = value else {
            return Err(ConfigError::NotObject);
        };
        let mut hp = Map::new();
        let mut opts = Map::new();
        let mut modifiers = None;
        for (key, v) in obj {
            if Hyperparams::FIELDS.contains(&key.as_str()) {
                hp.insert(key, v);
            } else if OPTION_KEYS.contains(&key.as_str()) {
                opts.insert(key, v);
            } else if key == "modifiers" {
                modifiers = Some(v);
            } else {
                return Err(ConfigError::UnknownKey(key));
            }
        }
        let bad = |key: &str, e: serde_json::Error| ConfigError::BadValue { key: key.to_string(), reason: e.to_string() };
        let hyperparams: Hyperparams = serde_json::from_value(Value::Object(hp)).map_err(|e| bad("hyperparameters", e))?;
        let options: EvalOptions = serde_json::from_value(Value::Object(opts)).map_err(|e| bad("options", e))?;
        let modifiers = match modifiers {
            Some(v) => serde_json::from_value(v).map_err(|e| bad("modifiers", e))?,
            None => ModifierTable::default(),
        };
        let cfg = Self { hyperparams, options, modifiers };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replaces one hyperparameter or option by key, as a command-line flag
    /// would.
    pub fn set(&mut self, key: &str, value: Value) -> Result<(), ConfigError> {
        let mut obj = self.to_value();
        if !obj.as_object().is_some_and(|o| o.contains_key(key)) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        obj[key] = value;
        *self = Self::from_value(obj)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        validate_hyperparams(&self.hyperparams).map_err(|violations| {
            let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            ConfigError::Invalid(text.join("; "))
        })
    }

    /// The flat JSON form; parsing it back gives the same config.
    pub fn to_value(&self) -> Value {
        let mut out = Map::new();
        for source in [
            serde_json::to_value(&self.hyperparams).expect("hyperparams serialize"),
            serde_json::to_value(self.options).expect("options serialize"),
        ] {
            if let Value::Object(o) = source {
                out.extend(o);
            }
        }
        out.insert("modifiers".into(), serde_json::to_value(&self.modifiers).expect("table serialize"));
        Value::Object(out)
    }
}
