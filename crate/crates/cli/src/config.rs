//! Flat `key = value` configuration files for training runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use lambertpo_core::{AdvantageMethod, ObjectiveKind, OptimizerKind, TrainConfig};

use crate::error::CliError;

pub const KEYS: [&str; 13] = [
    "objective",
    "advantage",
    "beta",
    "beta2",
    "lag",
    "group_size",
    "steps",
    "learning_rate",
    "optimizer",
    "seed",
    "groups_per_step",
    "clip_epsilon",
    "sigma_floor",
];

const REQUIRED: [&str; 3] = ["objective", "advantage", "beta"];

/// Splits `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::validation(format!("line {}: expected `key = value`", i + 1)))?;
        let key = k.trim().to_string();
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(CliError::validation(format!("line {}: duplicate key `{key}`", i + 1)));
        }
    }
    Ok(out)
}

fn typed<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::validation(format!("`{key}`: cannot parse `{value}`: {e}")))
}

/// Resolves a config file's text into a validated [`TrainConfig`].
pub fn parse_config(text: &str) -> Result<TrainConfig, CliError> {
    let pairs = parse_pairs(text)?;
    if let Some(unknown) = pairs.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(CliError::validation(format!("unknown key `{unknown}`")));
    }
    if let Some(missing) = REQUIRED.iter().find(|k| !pairs.contains_key(**k)) {
        return Err(CliError::validation(format!("missing required key `{missing}`")));
    }
    let objective: ObjectiveKind = typed("objective", &pairs["objective"])?;
    let advantage: AdvantageMethod = typed("advantage", &pairs["advantage"])?;
    let beta: f64 = typed("beta", &pairs["beta"])?;
    let mut cfg = TrainConfig::new(objective, advantage, beta);
    for (key, value) in &pairs {
        match key.as_str() {
            "beta2" => cfg.beta2 = Some(typed(key, value)?),
            "lag" => cfg.lag = typed(key, value)?,
            "group_size" => cfg.group_size = typed(key, value)?,
            "steps" => cfg.steps = typed(key, value)?,
            "learning_rate" => cfg.learning_rate = typed(key, value)?,
            "optimizer" => cfg.optimizer = typed::<OptimizerKind>(key, value)?,
            "seed" => cfg.seed = typed(key, value)?,
            "groups_per_step" => cfg.groups_per_step = typed(key, value)?,
            "clip_epsilon" => cfg.clip_epsilon = typed(key, value)?,
            "sigma_floor" => cfg.sigma_floor = typed(key, value)?,
            _ => {}
        }
    }
    cfg.validate().map_err(CliError::from_core)?;
    Ok(cfg)
}

/// Every resolved key, in [`KEYS`] order. Parsing the result gives back
/// the same config.
pub fn render_config(cfg: &TrainConfig) -> String {
    let mut out = String::new();
    for (k, v) in config_pairs(cfg) {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

pub fn config_pairs(cfg: &TrainConfig) -> Vec<(&'static str, String)> {
    let mut pairs = vec![
        ("objective", cfg.objective.name().to_string()),
        ("advantage", cfg.advantage_method.name().to_string()),
        ("beta", format!("{:e}", cfg.beta)),
    ];
    if let Some(b2) = cfg.beta2 {
        pairs.push(("beta2", format!("{b2:e}")));
    }
    pairs.extend([
        ("lag", cfg.lag.to_string()),
        ("group_size", cfg.group_size.to_string()),
        ("steps", cfg.steps.to_string()),
        ("learning_rate", format!("{:e}", cfg.learning_rate)),
        ("optimizer", cfg.optimizer.name().to_string()),
        ("seed", cfg.seed.to_string()),
        ("groups_per_step", cfg.groups_per_step.to_string()),
        ("clip_epsilon", format!("{:e}", cfg.clip_epsilon)),
        ("sigma_floor", format!("{:e}", cfg.sigma_floor)),
    ]);
    pairs
}
