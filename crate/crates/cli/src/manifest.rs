//! Per-run manifest. Its id is a digest of everything that determines the
//! run's results, and every artifact carries that id.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex_sha256(&bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub id: String,
    pub command: String,
    pub config_hash: String,
    pub graph_hash: String,
    pub seed: u64,
    /// Input role to content digest.
    pub inputs: BTreeMap<String, String>,
    /// Artifact file name (relative to the output directory) to content digest.
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, graph_hash: String, inputs: BTreeMap<String, String>) -> Self {
        let mut m = Manifest {
            id: String::new(),
            command: command.to_string(),
            config_hash: cfg.result_hash(),
            graph_hash,
            seed: cfg.seed,
            inputs,
            artifacts: BTreeMap::new(),
        };
        let key = serde_json::to_vec(&m).expect("manifest serializes");
        m.id = hex_sha256(&key)[..16].to_string();
        m
    }

    /// Comment line that opens every text artifact.
    pub fn header(&self) -> String {
        format!("# manifest {}\n", self.id)
    }

    pub fn file_name(&self) -> String {
        format!("manifest-{}.json", self.command)
    }

    /// Records an artifact already written under `out_dir`.
    pub fn record(&mut self, out_dir: &Path, name: &str) -> Result<()> {
        let digest = file_sha256(&out_dir.join(name))?;
        self.artifacts.insert(name.to_string(), digest);
        Ok(())
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join(self.file_name());
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }
}

/// Id named by the `# manifest` line at the top of a text artifact.
pub fn artifact_manifest_id(text: &str) -> Option<&str> {
    text.lines().next()?.strip_prefix("# manifest ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_depends_on_inputs_only() {
        let cfg = RunConfig::default();
        let a = Manifest::new("train", &cfg, "g".into(), BTreeMap::new());
        let b = Manifest::new("train", &cfg, "g".into(), BTreeMap::new());
        assert_eq!(a.id, b.id);
        let c = Manifest::new("train", &cfg, "h".into(), BTreeMap::new());
        assert_ne!(a.id, c.id);
        let d = Manifest::new("predict", &cfg, "g".into(), BTreeMap::new());
        assert_ne!(a.id, d.id);
        assert_eq!(artifact_manifest_id(&a.header()), Some(a.id.as_str()));
    }
}
