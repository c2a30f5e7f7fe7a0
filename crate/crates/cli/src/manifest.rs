use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FAILED_MARKER: &str = "FAILED";

/// Record of one run: the resolved config, code version, stage timings and
/// a content hash of every artifact.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub execution: String,
    pub config: RunConfig,
    pub stages: Vec<StageTiming>,
    pub artifacts: BTreeMap<String, String>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_tree(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.filter_map(|e| e.ok()).map(|e| e.path()).collect();
    entries.sort();
    for path in entries {
        if path.is_dir() {
            hash_tree(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root)?.to_string_lossy().replace('\\', "/");
            if rel != MANIFEST_FILE {
                out.insert(rel, sha256_hex(&std::fs::read(&path)?));
            }
        }
    }
    Ok(())
}

impl Manifest {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            code_version: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            execution: oodil::par::MODE.to_string(),
            config: config.clone(),
            stages: Vec::new(),
            artifacts: BTreeMap::new(),
            failure: None,
        }
    }

    pub fn stage(&mut self, name: &str, started: Instant) {
        self.stages.push(StageTiming {
            stage: name.to_string(),
            seconds: started.elapsed().as_secs_f64(),
        });
    }

    /// Hashes the run directory and writes the manifest into it.
    pub fn finish(&mut self, dir: &Path) -> Result<()> {
        self.artifacts.clear();
        hash_tree(dir, dir, &mut self.artifacts)?;
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?)
    }
}
