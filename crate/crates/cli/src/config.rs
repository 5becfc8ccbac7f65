//! Device configuration from a TOML file, `--set` overrides and toggles.

use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use qrng_core::device::DeviceConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML config file; a run manifest also works (its [config] table is used).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set feedback.integrator_gain=2e-4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Run with the bias held at its initial value.
    #[arg(long)]
    pub no_feedback: bool,
    /// Disable afterpulsing.
    #[arg(long)]
    pub no_afterpulsing: bool,
    /// Relative amplitude of the sinusoidal light modulation.
    #[arg(long, value_name = "AMPLITUDE")]
    pub modulation: Option<f64>,
    /// Light modulation frequency.
    #[arg(long, value_name = "HZ", requires = "modulation")]
    pub modulation_hz: Option<f64>,
}

/// Parses a config document. A manifest is recognised by its `[run]` and
/// `[config]` tables.
pub fn parse_table(text: &str, origin: &str) -> CliResult<toml::Table> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Io(format!("{origin}: {e}")))?;
    if table.contains_key("run") {
        if let Some(toml::Value::Table(inner)) = table.remove("config") {
            return Ok(inner);
        }
    }
    Ok(table)
}

/// Sets `dotted.key` to `raw`, read as a TOML value when it parses as one
/// and as a string otherwise.
pub fn set_key(table: &mut toml::Table, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("`--set {assignment}`: expected KEY=VALUE")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::usage(format!("`--set {assignment}`: empty key segment")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::usage(format!("`--set {assignment}`: `{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn from_table(table: toml::Table) -> CliResult<DeviceConfig> {
    DeviceConfig::deserialize(toml::Value::Table(table))
        .map_err(|e| CliError::Io(format!("invalid config: {}", e.message())))
}

impl ConfigArgs {
    pub fn load(&self) -> CliResult<DeviceConfig> {
        let mut table = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                parse_table(&text, &path.display().to_string())?
            }
            None => toml::Table::new(),
        };
        for s in &self.set {
            set_key(&mut table, s)?;
        }
        let mut cfg = from_table(table)?;
        if self.no_feedback {
            cfg.feedback.enabled = false;
        }
        if self.no_afterpulsing {
            cfg.detectors.afterpulse_prob = 0.0;
        }
        if let Some(a) = self.modulation {
            cfg.modulation.amplitude = a;
        }
        if let Some(f) = self.modulation_hz {
            cfg.modulation.frequency_hz = f;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn to_toml(cfg: &DeviceConfig) -> String {
    toml::to_string(cfg).expect("device config serializes")
}

/// Hex SHA-256 of the canonical TOML form of `cfg`.
pub fn config_hash(cfg: &DeviceConfig) -> String {
    hex(&Sha256::digest(to_toml(cfg).as_bytes()))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
