use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use connlab::experiments::ExperimentConfig;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance record written into a run directory before any compute starts.
/// The timestamp lives only here, so every other artifact is reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub config_path: PathBuf,
    pub config: ExperimentConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub created_at: String,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: &str, config_path: &Path, config: &ExperimentConfig, output_dir: &Path) -> Self {
        RunManifest {
            command: command.to_string(),
            config_path: config_path.to_path_buf(),
            config: config.clone(),
            output_dir: output_dir.to_path_buf(),
            seed: config.seed,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            tool_version: concat!("connlab ", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }

    pub fn write(&self) -> Result<()> {
        let path = self.output_dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))
    }
}

/// Creates `root/name`, or `root/name-1`, `root/name-2`, ... if taken.
pub fn unique_dir(root: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
    for i in 0u32.. {
        let candidate = if i == 0 {
            root.join(name)
        } else {
            root.join(format!("{name}-{i}"))
        };
        match fs::create_dir(&candidate) {
            Ok(()) => return Ok(candidate),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).with_context(|| format!("creating {}", candidate.display())),
        }
    }
    unreachable!("u32 suffixes exhausted")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffix_counter() {
        let tmp = tempfile::tempdir().unwrap();
        let a = unique_dir(tmp.path(), "run").unwrap();
        let b = unique_dir(tmp.path(), "run").unwrap();
        let c = unique_dir(tmp.path(), "run").unwrap();
        assert_eq!(a, tmp.path().join("run"));
        assert_eq!(b, tmp.path().join("run-1"));
        assert_eq!(c, tmp.path().join("run-2"));
    }

    #[test]
    fn manifest_round_trips() {
        let c = ExperimentConfig::one_layer_recipe(3);
        let m = RunManifest::new("train", Path::new("cfg.json"), &c, Path::new("runs/x"));
        let back: RunManifest = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.seed, 3);
    }
}
