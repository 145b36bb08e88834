//! Run directories: `<out>/<digest12>-<timestamp>[-n]` holding the exact
//! config used, all outputs, and a JSON summary.

use crate::config::{canonical_json, config_digest, RunConfig};
use crate::error::CliResult;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub struct RunDir {
    pub path: PathBuf,
    pub digest: String,
    summary: serde_json::Map<String, serde_json::Value>,
}

impl RunDir {
    /// Create a fresh run directory and write the canonical config into it.
    pub fn create(out_root: &Path, command: &str, cfg: &RunConfig) -> CliResult<Self> {
        let digest = config_digest(cfg)?;
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default().as_secs();
        let base = format!("{}-{}", &digest[..12], ts);
        let mut path = out_root.join(&base);
        let mut n = 0;
        while path.exists() {
            n += 1;
            path = out_root.join(format!("{base}-{n}"));
        }
        std::fs::create_dir_all(&path)?;
        std::fs::write(path.join("config.json"), canonical_json(cfg)?)?;
        let mut summary = serde_json::Map::new();
        summary.insert("command".into(), json!(command));
        summary.insert("config_digest".into(), json!(digest));
        summary.insert("seed".into(), json!(cfg.seed));
        Ok(Self { path, digest, summary })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn record(&mut self, key: &str, value: serde_json::Value) {
        self.summary.insert(key.to_string(), value);
    }

    pub fn record_output(&mut self, name: &str) {
        let outputs = self
            .summary
            .entry("outputs")
            .or_insert_with(|| serde_json::Value::Array(Vec::new()));
        if let Some(arr) = outputs.as_array_mut() {
            arr.push(json!(name));
        }
    }

    /// Write `summary.json`; call once at the end of a command.
    pub fn finish(&self) -> CliResult<()> {
        let text = serde_json::to_string_pretty(&serde_json::Value::Object(self.summary.clone()))?;
        std::fs::write(self.path.join("summary.json"), text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rundir_contains_roundtrippable_config() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = RunConfig::with_seed(9);
        let mut rd = RunDir::create(tmp.path(), "test", &cfg).unwrap();
        rd.record("metric", json!(1.5));
        rd.record_output("a.png");
        rd.finish().unwrap();
        let text = std::fs::read_to_string(rd.file("config.json")).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(config_digest(&back).unwrap(), rd.digest);
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(rd.file("summary.json")).unwrap())
                .unwrap();
        assert_eq!(summary["command"], "test");
        assert_eq!(summary["outputs"][0], "a.png");
    }

    #[test]
    fn colliding_names_get_suffixes() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = RunConfig::with_seed(9);
        let a = RunDir::create(tmp.path(), "t", &cfg).unwrap();
        let b = RunDir::create(tmp.path(), "t", &cfg).unwrap();
        assert_ne!(a.path, b.path);
    }
}
