use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use mcgc::experiment::StageTiming;

pub const MANIFEST: &str = "manifest.json";

/// A run directory. Files are recorded as they are written and the manifest,
/// written last, lists their digests.
pub struct RunDir {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl RunDir {
    /// Creates `dir`, refusing one that already holds a finished run.
    pub fn create(dir: PathBuf) -> Result<Self> {
        if dir.join(MANIFEST).exists() {
            return Err(mcgc::Error::Config(format!(
                "{} already holds a finished run; choose another --out",
                dir.display()
            ))
            .into());
        }
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            root: dir,
            files: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let bytes = bytes.as_ref();
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        self.write(name, serde_json::to_string_pretty(value)? + "\n")
    }

    /// Writes the manifest through a temporary file and a rename.
    pub fn finish(self, command: &str, config: &impl Serialize, timings: &[StageTiming]) -> Result<PathBuf> {
        let manifest = serde_json::json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "timings": timings,
            "files": self.files,
        });
        let tmp = self.root.join(".manifest.json.tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(&manifest)? + "\n")?;
        std::fs::rename(&tmp, self.root.join(MANIFEST))?;
        Ok(self.root)
    }
}

pub fn seeds_digest(seeds: &[u64]) -> String {
    let mut h = Sha256::new();
    for s in seeds {
        h.update(s.to_le_bytes());
    }
    hex::encode(h.finalize())
}
