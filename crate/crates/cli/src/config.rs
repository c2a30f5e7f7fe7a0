use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use oodil::cluster::ClusterHyper;
use oodil::envs::{DrivingConfig, EnvConfig, ScriptedDriver};
use oodil::imitate::{ImitateHyper, Variant};
use oodil::rl::RlHyper;
use oodil::transfer::GailHyper;

pub const SEED_ENV: &str = "OODIL_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub tag: String,
    pub env: DrivingConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoSettings {
    pub per_source: usize,
    pub driver: ScriptedDriver,
}

impl Default for DemoSettings {
    fn default() -> Self {
        Self {
            per_source: 200,
            driver: ScriptedDriver::default(),
        }
    }
}

/// Everything a run depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub variant: Variant,
    pub sources: Vec<SourceSpec>,
    pub target: EnvConfig,
    pub demos: DemoSettings,
    pub cluster: ClusterHyper,
    pub rl: RlHyper,
    pub transfer: GailHyper,
    pub imitate: ImitateHyper,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            variant: Variant::Ours,
            sources: DrivingConfig::standard_sources()
                .into_iter()
                .map(|(tag, env)| SourceSpec { tag, env })
                .collect(),
            target: EnvConfig::Driving(DrivingConfig::target()),
            demos: DemoSettings::default(),
            cluster: ClusterHyper::default(),
            rl: RlHyper::default(),
            transfer: GailHyper::default(),
            imitate: ImitateHyper::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Config file (or defaults), then `--set` overrides, then `OODIL_SEED`.
    pub fn resolve(path: Option<&Path>, sets: &[String]) -> Result<Self> {
        let base = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        let mut cfg = base.with_overrides(sets)?;
        if let Ok(s) = std::env::var(SEED_ENV) {
            cfg.seed = s.trim().parse().with_context(|| format!("{SEED_ENV}={s:?} is not an unsigned integer"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `section.key=value` assignments. Values are parsed as JSON
    /// when possible and taken as strings otherwise; unknown keys are errors.
    pub fn with_overrides(&self, sets: &[String]) -> Result<Self> {
        let mut doc = serde_json::to_value(self)?;
        for set in sets {
            let (path, raw) = set
                .split_once('=')
                .ok_or_else(|| anyhow!("--set {set:?} is not of the form section.key=value"))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut slot = &mut doc;
            for key in path.split('.') {
                slot = match slot {
                    Value::Object(map) => map.get_mut(key),
                    Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                    _ => None,
                }
                .ok_or_else(|| anyhow!("--set: unknown key {path:?}"))?;
            }
            *slot = value;
        }
        serde_json::from_value(doc).context("applying --set overrides")
    }

    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        for s in &self.sources {
            s.env.validate().with_context(|| format!("source {}", s.tag))?;
        }
        self.cluster.validate()?;
        self.rl.validate()?;
        self.transfer.validate()?;
        self.imitate.gail.validate()?;
        if self.target.state_dim() != 2 && !self.sources.is_empty() {
            bail!("driving demonstrations need a 2-dimensional target");
        }
        Ok(())
    }
}
