//! Plain-text instance files.
//!
//! ```text
//! # lambertpo instance
//! contexts 2
//! outcomes 3
//! seed 7
//! weights 5.0000000000000000e-1 5.0000000000000000e-1
//! rewards
//! 1.0000000000000000e0 0.0000000000000000e0 2.5000000000000000e-1
//! 3.0000000000000000e-1 9.0000000000000000e-1 1.0000000000000000e-1
//! ```
//!
//! The `weights` line is optional and defaults to uniform.
//!
//! `target` also reads a single-context file holding the target problem
//! directly:
//!
//! ```text
//! behavior 0.5 0.5
//! advantages 1.5 0.5
//! beta 1
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context as _;
use lambertpo_core::{BanditInstance, Dist};

use crate::error::CliError;
use crate::output::num;

pub fn render(inst: &BanditInstance) -> String {
    let mut out = String::from("# lambertpo instance\n");
    let _ = writeln!(out, "contexts {}", inst.num_contexts());
    let _ = writeln!(out, "outcomes {}", inst.outcomes());
    let _ = writeln!(out, "seed {}", inst.seed());
    let weights: Vec<String> = inst.context_weights().probs().iter().map(|w| num(*w)).collect();
    let _ = writeln!(out, "weights {}", weights.join(" "));
    out.push_str("rewards\n");
    for c in 0..inst.num_contexts() {
        let row: Vec<String> = inst.rewards(c).iter().map(|r| num(*r)).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

fn bad(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::validation(format!("instance line {line}: {msg}"))
}

pub fn parse(text: &str) -> Result<BanditInstance, CliError> {
    let mut contexts: Option<usize> = None;
    let mut outcomes: Option<usize> = None;
    let mut seed = 0u64;
    let mut weights: Option<Vec<f64>> = None;
    let mut rewards: Option<Vec<f64>> = None;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(table) = rewards.as_mut() {
            for tok in line.split_whitespace() {
                table.push(tok.parse().map_err(|e| bad(n, format!("reward `{tok}`: {e}")))?);
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        let rest: Vec<&str> = parts.collect();
        let single = || -> Result<&str, CliError> {
            match rest.as_slice() {
                [v] => Ok(*v),
                _ => Err(bad(n, format!("`{key}` takes one value"))),
            }
        };
        match key {
            "contexts" => contexts = Some(single()?.parse().map_err(|e| bad(n, e))?),
            "outcomes" => outcomes = Some(single()?.parse().map_err(|e| bad(n, e))?),
            "seed" => seed = single()?.parse().map_err(|e| bad(n, e))?,
            "weights" => {
                let w: Result<Vec<f64>, _> = rest.iter().map(|t| t.parse::<f64>()).collect();
                weights = Some(w.map_err(|e| bad(n, e))?);
            }
            "rewards" if rest.is_empty() => rewards = Some(Vec::new()),
            _ => return Err(bad(n, format!("unexpected `{line}`"))),
        }
    }
    let contexts = contexts.ok_or_else(|| CliError::validation("instance is missing `contexts`"))?;
    let outcomes = outcomes.ok_or_else(|| CliError::validation("instance is missing `outcomes`"))?;
    let rewards = rewards.ok_or_else(|| CliError::validation("instance is missing the `rewards` table"))?;
    let weights = match weights {
        Some(w) => Dist::new(w).map_err(CliError::from_core)?,
        None => Dist::uniform(contexts).map_err(CliError::from_core)?,
    };
    BanditInstance::new(contexts, outcomes, rewards, weights, seed).map_err(CliError::from_core)
}

/// A behavior policy and advantages to solve a target for.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetProblem {
    pub behavior: Dist,
    pub advantages: Vec<f64>,
    pub beta: Option<f64>,
}

pub enum InputFile {
    Bandit(BanditInstance),
    Target(TargetProblem),
}

fn is_target_file(text: &str) -> bool {
    text.lines()
        .any(|l| l.split('#').next().unwrap_or("").split_whitespace().next() == Some("advantages"))
}

pub fn parse_target(text: &str) -> Result<TargetProblem, CliError> {
    let mut behavior = None;
    let mut advantages = None;
    let mut beta = None;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        let values: Vec<f64> = parts
            .map(|t| t.parse::<f64>().map_err(|e| bad(n, format!("`{t}`: {e}"))))
            .collect::<Result<_, _>>()?;
        match key {
            "behavior" => behavior = Some(Dist::new(values).map_err(|e| bad(n, e))?),
            "advantages" => advantages = Some(values),
            "beta" => match values.as_slice() {
                [b] => beta = Some(*b),
                _ => return Err(bad(n, "`beta` takes one value")),
            },
            _ => return Err(bad(n, format!("unexpected `{key}`"))),
        }
    }
    let advantages = advantages.ok_or_else(|| CliError::validation("target file is missing `advantages`"))?;
    let behavior = match behavior {
        Some(b) => b,
        None => Dist::uniform(advantages.len()).map_err(CliError::from_core)?,
    };
    if behavior.len() != advantages.len() {
        return Err(CliError::validation(format!(
            "target file has {} behavior probabilities but {} advantages",
            behavior.len(),
            advantages.len()
        )));
    }
    Ok(TargetProblem { behavior, advantages, beta })
}

fn read(path: &Path) -> Result<String, CliError> {
    Ok(fs::read_to_string(path).with_context(|| format!("cannot read instance file {}", path.display()))?)
}

fn name_path(path: &Path) -> impl Fn(CliError) -> CliError + '_ {
    move |e| match e {
        CliError::Validation(msg) => CliError::Validation(format!("{}: {msg}", path.display())),
        other => other,
    }
}

/// Reads either a bandit instance or a target file.
pub fn load_any(path: &Path) -> Result<InputFile, CliError> {
    let text = read(path)?;
    if is_target_file(&text) {
        parse_target(&text).map(InputFile::Target).map_err(name_path(path))
    } else {
        parse(&text).map(InputFile::Bandit).map_err(name_path(path))
    }
}

/// Reads an instance file; a missing or unreadable file is a runtime error
/// naming the path.
pub fn load(path: &Path) -> Result<BanditInstance, CliError> {
    parse(&read(path)?).map_err(name_path(path))
}
