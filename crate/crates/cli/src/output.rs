//! Diff-stable output: CSV metrics, summary records and run manifests.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use lambertpo_core::trainer::SweepSummary;
use lambertpo_core::MetricsRecord;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

/// Header of every metrics file.
pub const METRICS_HEADER: &str = "step,expected_reward,entropy,kl,max_ratio,regime";

/// Seventeen significant digits in scientific notation.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn metrics_row(r: &MetricsRecord) -> String {
    format!(
        "{},{},{},{},{},{}",
        r.step,
        num(r.expected_reward),
        num(r.entropy),
        num(r.kl_to_snapshot),
        num(r.max_ratio),
        r.regime.map_or("na", |g| g.name())
    )
}

pub fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create directory {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> anyhow::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{METRICS_HEADER}")?;
    for r in records {
        writeln!(w, "{}", metrics_row(r))?;
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))
}

#[derive(Debug, Serialize)]
pub struct SummaryRecord<'a> {
    pub method: &'a str,
    pub axis: &'a str,
    pub value: f64,
    pub seed: u64,
    pub initial_entropy: f64,
    pub terminal_reward: f64,
    pub terminal_entropy: f64,
    pub pessimistic_at_every_refresh: bool,
    pub worst_regime: &'a str,
    pub metrics: String,
}

impl<'a> SummaryRecord<'a> {
    pub fn new(s: &'a SweepSummary, metrics: &Path) -> Self {
        SummaryRecord {
            method: s.method.name(),
            axis: s.axis.name(),
            value: s.value,
            seed: s.seed,
            initial_entropy: s.initial_entropy,
            terminal_reward: s.terminal_reward,
            terminal_entropy: s.terminal_entropy,
            pessimistic_at_every_refresh: s.pessimistic_at_every_refresh,
            worst_regime: s.worst_regime.map_or("na", |g| g.name()),
            metrics: metrics.display().to_string(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// Fully resolved configuration, one entry per key, in input order.
    #[serde(serialize_with = "ordered_map")]
    pub config_echo: Vec<(String, String)>,
    pub seed: u64,
    pub timestamp: String,
    pub output_paths: Vec<PathBuf>,
}

fn ordered_map<S: Serializer>(pairs: &[(String, String)], s: S) -> Result<S::Ok, S::Error> {
    let mut m = s.serialize_map(Some(pairs.len()))?;
    for (k, v) in pairs {
        m.serialize_entry(k, v)?;
    }
    m.end()
}

impl RunManifest {
    pub fn new(command: &str, config_echo: Vec<(String, String)>, seed: u64) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_echo,
            seed,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            output_paths: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush().with_context(|| format!("cannot write {}", path.display()))
    }
}
