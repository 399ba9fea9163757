//! Run manifest: what was computed, with which settings, into which files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::params::{PhysParams, Tolerances, TOLERANCES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Path relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub code_version: String,
    pub params: PhysParams,
    pub tolerances: Tolerances,
    /// Free-form description of the run (task, grid, policies).
    pub settings: serde_json::Value,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<OutputFile>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn sha256_file(path: &Path) -> io::Result<(String, u64)> {
    let bytes = fs::read(path)?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

impl RunManifest {
    pub fn new(name: impl Into<String>, params: PhysParams, settings: serde_json::Value) -> Self {
        Self {
            name: name.into(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            params,
            tolerances: TOLERANCES,
            settings,
            started_unix: unix_now(),
            finished_unix: 0.0,
            outputs: Vec::new(),
        }
    }

    /// Hashes `file` (which must live under `root`) and records it.
    pub fn record_output(&mut self, root: &Path, file: &Path) -> io::Result<()> {
        let (sha256, bytes) = sha256_file(file)?;
        let rel = file.strip_prefix(root).unwrap_or(file);
        self.outputs.push(OutputFile {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256,
            bytes,
        });
        Ok(())
    }

    pub fn finish(&mut self) {
        self.finished_unix = unix_now();
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(path, text + "\n")
    }

    pub fn read(path: &Path) -> io::Result<RunManifest> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(io::Error::other)
    }

    /// Returns the outputs that are missing or whose digest no longer matches.
    pub fn verify(&self, root: &Path) -> Vec<PathBuf> {
        self.outputs
            .iter()
            .filter_map(|o| {
                let p = root.join(&o.path);
                match sha256_file(&p) {
                    Ok((digest, _)) if digest == o.sha256 => None,
                    _ => Some(p),
                }
            })
            .collect()
    }

    /// The manifest with timestamps zeroed, for comparing two runs.
    pub fn without_timestamps(&self) -> RunManifest {
        RunManifest { started_unix: 0.0, finished_unix: 0.0, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_track_file_contents() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.csv");
        fs::write(&f, "x,y\n1,2\n").unwrap();
        let mut m = RunManifest::new("t", PhysParams::default(), serde_json::json!({}));
        m.record_output(dir.path(), &f).unwrap();
        m.finish();
        assert_eq!(m.outputs[0].path, "a.csv");
        assert!(m.verify(dir.path()).is_empty());

        let mpath = dir.path().join("manifest.json");
        m.write(&mpath).unwrap();
        assert_eq!(RunManifest::read(&mpath).unwrap(), m);

        fs::write(&f, "x,y\n1,3\n").unwrap();
        assert_eq!(m.verify(dir.path()), vec![f.clone()]);
        fs::remove_file(&f).unwrap();
        assert_eq!(m.verify(dir.path()), vec![f]);
    }
}
