//! Run configuration: a TOML file with `[scenario]`, `[algorithm]` and
//! `[execution]` sections. Every field has a default and unknown keys are
//! rejected.
//!
//! ```toml
//! [scenario]
//! width = 10
//! height = 10
//! target_density = 0.2
//! horizon = 200
//! comm_restrictions = 0
//! init = "max_entropy"          # max_entropy | prior_knowledge | random
//! sensor = { p_detect = 0.9, p_false_alarm = 0.2 }
//! start_poses = [{ row = 0, col = 0 }, { row = 9, col = 9 }]   # N decreases row
//!
//! [algorithm]
//! name = "enforce_ac"           # baseline_i | baseline_ii | enforce_ac | r_enforce_ac | r_enforce_ac_simp
//! epsilon = 0.3
//! m_batch = 4
//! initial_fraction = 0.25
//! slot_cap = 12
//! planning_horizon = 1
//!
//! [execution]
//! seeds = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]
//! parallelism = 0               # 0 = all cores
//! out_dir = "runs/example"      # optional
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;
use crate::sim::AlgorithmParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutionConfig {
    pub seeds: Vec<u64>,
    pub parallelism: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        Self { seeds: (0..10).collect(), parallelism: 0, out_dir: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub algorithm: AlgorithmParams,
    pub execution: ExecutionConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.algorithm.validate()?;
        if self.execution.seeds.is_empty() {
            return Err(Error::input("execution.seeds is empty"));
        }
        Ok(())
    }

    /// Short content hash of the resolved configuration.
    pub fn run_id(&self) -> String {
        let json = serde_json::to_string(self).expect("configs serialize");
        let digest = Sha256::digest(json.as_bytes());
        format!("{digest:x}")[..12].to_string()
    }

    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::input(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: RunConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::input(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::input(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides).map_err(|e| match e {
            Error::InvalidInput(msg) => Error::input(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

/// Applies `section.key=value`. The value is parsed as a TOML literal and
/// falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| Error::input(format!("override `{assignment}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::input(format!("override key `{key}` is malformed")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::input(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::InitKind;
    use crate::sim::AlgorithmKind;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.execution.seeds.len(), 10);
    }

    #[test]
    fn sections_and_overrides() {
        let text = "[scenario]\ninit = \"prior_knowledge\"\nsensor = { p_detect = 0.8 }\n[algorithm]\nname = \"r_enforce_ac\"\n";
        let c = RunConfig::from_toml_str(text, &["algorithm.epsilon=0.7".into(), "execution.seeds=[3,4]".into()]).unwrap();
        assert_eq!(c.scenario.init, InitKind::PriorKnowledge);
        assert_eq!(c.scenario.sensor.p_detect, 0.8);
        assert_eq!(c.scenario.sensor.p_false_alarm, 0.2);
        assert_eq!(c.algorithm.name, AlgorithmKind::REnforceAc);
        assert_eq!(c.algorithm.epsilon, 0.7);
        assert_eq!(c.execution.seeds, vec![3, 4]);
        let c = RunConfig::from_toml_str("", &["algorithm.name=baseline_ii".into()]).unwrap();
        assert_eq!(c.algorithm.name, AlgorithmKind::BaselineII);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::from_toml_str("[scenario]\ncolour = 3\n", &[]).is_err());
        assert!(RunConfig::from_toml_str("[algorithm]\nname = \"nope\"\n", &[]).is_err());
        assert!(RunConfig::from_toml_str("", &["algorithm.epsilon=1.5".into()]).is_err());
        assert!(RunConfig::from_toml_str("", &["noequals".into()]).is_err());
        assert!(RunConfig::from_toml_str("", &["execution.seeds=[]".into()]).is_err());
    }

    #[test]
    fn run_id_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.run_id(), b.run_id());
        b.algorithm.epsilon = 0.5;
        assert_ne!(a.run_id(), b.run_id());
        assert_eq!(a.run_id().len(), 12);
    }
}
