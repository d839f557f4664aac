//! Run configuration files.
//!
//! JSON, with a mandatory `version`. Frequencies are in GHz, angles in rad
//! and times in ns. Any object may carry `_comment` (or `_comment_*`) keys,
//! which are dropped before parsing; every other unknown key is an error.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sfq_core::{GateSpec, OptimizerConfig, PulseShape, SeedConfig, TransmonParams};

use crate::error::{CliError, CliResult, Context};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockConfig {
    /// SFQ clock frequency in GHz.
    pub f_clock: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub transmon: TransmonParams,
    pub clock: ClockConfig,
    #[serde(default)]
    pub gate: GateSpec,
    #[serde(default)]
    pub seed: SeedConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub shape: PulseShape,
    /// Used when `--out` is not given. Relative paths resolve against the
    /// working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// The parameter block echoed into every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsBlock {
    pub transmon: TransmonParams,
    pub clock: ClockConfig,
    pub gate: GateSpec,
    pub seed: SeedConfig,
    pub optimizer: OptimizerConfig,
    pub shape: PulseShape,
}

impl RunConfig {
    pub fn f_clock(&self) -> f64 {
        self.clock.f_clock
    }

    pub fn params(&self) -> ParamsBlock {
        ParamsBlock {
            transmon: self.transmon.clone(),
            clock: self.clock.clone(),
            gate: self.gate.clone(),
            seed: self.seed.clone(),
            optimizer: self.optimizer.clone(),
            shape: self.shape.clone(),
        }
    }

    pub fn validate(&self, file: &str) -> CliResult<()> {
        let bad = |key: &str, e: sfq_core::Error| CliError::Config { file: file.into(), key: key.into(), reason: e.to_string() };
        self.transmon.validate().map_err(|e| bad("transmon", e))?;
        if !(self.clock.f_clock > 0.0 && self.clock.f_clock.is_finite()) {
            return Err(CliError::Config {
                file: file.into(),
                key: "clock.f_clock".into(),
                reason: format!("must be positive, got {}", self.clock.f_clock),
            });
        }
        self.seed.validate().map_err(|e| bad("seed", e))?;
        self.optimizer.validate().map_err(|e| bad("optimizer", e))?;
        self.shape.validate().map_err(|e| bad("shape", e))?;
        Ok(())
    }

    pub fn from_str(text: &str, file: &str) -> CliResult<Self> {
        let mut value: Value = serde_json::from_str(text)
            .map_err(|e| CliError::Config { file: file.into(), key: "<document>".into(), reason: e.to_string() })?;
        strip_comments(&mut value);
        match value.get("version") {
            None => {
                return Err(CliError::Config { file: file.into(), key: "version".into(), reason: "missing".into() });
            }
            Some(v) if v.as_u64() != Some(CONFIG_VERSION as u64) => {
                return Err(CliError::Config {
                    file: file.into(),
                    key: "version".into(),
                    reason: format!("unsupported version {v}, expected {CONFIG_VERSION}"),
                });
            }
            _ => {}
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let key = e.path().to_string();
            CliError::Config { file: file.into(), key, reason: e.into_inner().to_string() }
        })?;
        cfg.validate(file)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_str(&text, &path.display().to_string())
    }

    pub fn model(&self) -> CliResult<sfq_core::StaticModel> {
        sfq_core::model::build_static(&self.transmon).context(|| "building the transmon model".into())
    }
}

fn is_comment(key: &str) -> bool {
    key == "_comment" || key.starts_with("_comment_")
}

fn strip_comments(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| !is_comment(k));
            map.values_mut().for_each(strip_comments);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_comments),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "_comment": "GHz, rad, ns",
        "version": 1,
        "transmon": {"f01": 5.0, "mu_mag": 0.25, "theta": 0.024, "_comment": "row 3"},
        "clock": {"f_clock": 25.0}
    }"#;

    fn key_of(r: CliResult<RunConfig>) -> String {
        match r {
            Err(CliError::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_str(MINIMAL, "t").unwrap();
        assert_eq!(c.transmon.dim, 10);
        assert_eq!(c.gate, GateSpec::default());
        assert_eq!(c.optimizer, OptimizerConfig::default());
        assert_eq!(c.f_clock(), 25.0);
    }

    #[test]
    fn unknown_keys_are_named() {
        let text = MINIMAL.replace("\"clock\"", "\"optimizer\": {\"beam_widht\": 2}, \"clock\"");
        let err = RunConfig::from_str(&text, "t").unwrap_err();
        assert!(err.to_string().contains("beam_widht"), "{err}");
        assert_eq!(err.exit_code(), 2);
        let text = MINIMAL.replace("\"mu_mag\"", "\"mu\"");
        assert_eq!(key_of(RunConfig::from_str(&text, "t")), "transmon.mu");
        let text = MINIMAL.replace("\"version\": 1,", "\"version\": 1, \"extra\": true,");
        assert!(RunConfig::from_str(&text, "t").unwrap_err().to_string().contains("extra"));
    }

    #[test]
    fn version_is_required_and_checked() {
        assert_eq!(key_of(RunConfig::from_str(&MINIMAL.replace("\"version\": 1,", ""), "t")), "version");
        assert_eq!(key_of(RunConfig::from_str(&MINIMAL.replace("\"version\": 1", "\"version\": 2"), "t")), "version");
    }

    #[test]
    fn type_errors_carry_a_path() {
        let text = MINIMAL.replace("25.0", "\"fast\"");
        assert_eq!(key_of(RunConfig::from_str(&text, "t")), "clock.f_clock");
        let text = MINIMAL.replace("0.024", "0.5");
        assert_eq!(key_of(RunConfig::from_str(&text, "t")), "transmon");
    }
}
