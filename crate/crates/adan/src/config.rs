//! Flat `key = value` configuration files with `#` comments. Command-line
//! flags override file values, so the parse result is a plain map applied
//! onto the config structs before the flag overrides land on top.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{AdanError, Result};
use crate::model::ModelConfig;
use crate::trainer::TrainConfig;

pub fn parse_config_str(text: &str, origin: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = match raw.split_once('#') {
            Some((before, _)) => before,
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| AdanError::Format {
            path: origin.to_string(),
            line: idx + 1,
            msg: format!("expected key = value, got {raw}"),
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    parse_config_str(&text, &path.display().to_string())
}

fn bad_value(key: &str, value: &str) -> AdanError {
    AdanError::Config(format!("bad value {value} for config key {key}"))
}

/// Applies recognized training keys; unknown keys are left for
/// `apply_model_keys` and flagged only if neither consumer knows them.
pub fn apply_train_keys(map: &BTreeMap<String, String>, cfg: &mut TrainConfig) -> Result<()> {
    for (key, value) in map {
        match key.as_str() {
            "lambda" => cfg.lambda = value.parse().map_err(|_| bad_value(key, value))?,
            "k" => cfg.k = value.parse().map_err(|_| bad_value(key, value))?,
            "lr_fp" => cfg.lr_fp = value.parse().map_err(|_| bad_value(key, value))?,
            "lr_q" => cfg.lr_q = value.parse().map_err(|_| bad_value(key, value))?,
            "clip_bound" => cfg.clip_bound = value.parse().map_err(|_| bad_value(key, value))?,
            "epochs" => cfg.epochs = value.parse().map_err(|_| bad_value(key, value))?,
            "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad_value(key, value))?,
            "seed" => cfg.seed = value.parse().map_err(|_| bad_value(key, value))?,
            "clip_exempt_norm" => {
                cfg.clip_exempt_norm = value.parse().map_err(|_| bad_value(key, value))?
            }
            _ => {}
        }
    }
    Ok(())
}

pub fn apply_model_keys(map: &BTreeMap<String, String>, cfg: &mut ModelConfig) -> Result<()> {
    for (key, value) in map {
        match key.as_str() {
            "hidden_width" => cfg.hidden_width = value.parse().map_err(|_| bad_value(key, value))?,
            "f_depth" => cfg.f_depth = value.parse().map_err(|_| bad_value(key, value))?,
            "p_depth" => cfg.p_depth = value.parse().map_err(|_| bad_value(key, value))?,
            "q_depth" => cfg.q_depth = value.parse().map_err(|_| bad_value(key, value))?,
            "num_classes" => {
                cfg.num_classes = value.parse().map_err(|_| bad_value(key, value))?
            }
            _ => {}
        }
    }
    Ok(())
}

const KNOWN_KEYS: &[&str] = &[
    "lambda",
    "k",
    "lr_fp",
    "lr_q",
    "clip_bound",
    "epochs",
    "batch_size",
    "seed",
    "clip_exempt_norm",
    "hidden_width",
    "f_depth",
    "p_depth",
    "q_depth",
    "num_classes",
];

pub fn reject_unknown_keys(map: &BTreeMap<String, String>) -> Result<()> {
    for key in map.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(AdanError::Config(format!("unknown config key {key}")));
        }
    }
    Ok(())
}
