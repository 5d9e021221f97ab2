//! Run manifests: what ran, on which inputs, and what it produced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Digest of every input file and of the settings that shape the output.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub version: String,
    /// Wall time per phase in seconds.
    pub timings: BTreeMap<String, f64>,
    pub clamp_count: u64,
    pub degenerate_pert_count: u64,
    pub divergence_count: u64,
    /// Digest of each output file, keyed by file name.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>) -> Self {
        Self { command: command.to_string(), seed, version: env!("CARGO_PKG_VERSION").to_string(), ..Default::default() }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let s = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        fs::write(dir.join(MANIFEST_FILE), s + "\n")
    }

    pub fn read(dir: &Path) -> std::io::Result<Self> {
        let s = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&s).map_err(std::io::Error::other)
    }

    /// Records the digests of `files`.
    pub fn add_outputs(&mut self, files: &[PathBuf]) -> std::io::Result<()> {
        for f in files {
            let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            self.outputs.insert(name, hex::encode(Sha256::digest(fs::read(f)?)));
        }
        Ok(())
    }
}

/// Accumulates a digest over named inputs; the same names and bytes in any
/// order give the same digest.
#[derive(Default)]
pub struct InputHash {
    parts: BTreeMap<String, Vec<u8>>,
}

impl InputHash {
    pub fn file(&mut self, label: &str, path: &Path) -> std::io::Result<()> {
        self.parts.insert(format!("file:{label}"), fs::read(path)?);
        Ok(())
    }

    /// Every regular file of `dir` except manifests, under `label/`.
    pub fn dir(&mut self, label: &str, dir: &Path) -> std::io::Result<()> {
        for e in fs::read_dir(dir)? {
            let p = e?.path();
            let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
            if p.is_file() && name != MANIFEST_FILE {
                self.file(&format!("{label}/{name}"), &p)?;
            }
        }
        Ok(())
    }

    pub fn setting(&mut self, key: &str, value: impl ToString) {
        self.parts.insert(format!("setting:{key}"), value.to_string().into_bytes());
    }

    pub fn finish(self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.parts {
            h.update((k.len() as u64).to_le_bytes());
            h.update(k.as_bytes());
            h.update((v.len() as u64).to_le_bytes());
            h.update(v);
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_hash_ignores_insertion_order() {
        let mut a = InputHash::default();
        a.setting("seed", 3);
        a.setting("probes", "0.5");
        let mut b = InputHash::default();
        b.setting("probes", "0.5");
        b.setting("seed", 3);
        let (a, b) = (a.finish(), b.finish());
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        let mut c = InputHash::default();
        c.setting("seed", 4);
        c.setting("probes", "0.5");
        assert_ne!(a, c.finish());
    }

    #[test]
    fn names_and_values_do_not_run_together() {
        let mut a = InputHash::default();
        a.setting("ab", "c");
        let mut b = InputHash::default();
        b.setting("a", "bc");
        assert_ne!(a.finish(), b.finish());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("x.csv");
        fs::write(&out, "a\n1\n").unwrap();
        let mut m = RunManifest::new("simulate", Some(7));
        m.clamp_count = 3;
        m.timings.insert("simulate".into(), 0.25);
        m.add_outputs(&[out]).unwrap();
        // sha256 of "a\n1\n"
        assert_eq!(m.outputs["x.csv"], hex::encode(Sha256::digest(b"a\n1\n")));
        m.write(dir.path()).unwrap();
        assert_eq!(RunManifest::read(dir.path()).unwrap(), m);
        let mut h = InputHash::default();
        h.dir("out", dir.path()).unwrap();
        let with_manifest = h.finish();
        fs::remove_file(dir.path().join(MANIFEST_FILE)).unwrap();
        let mut h = InputHash::default();
        h.dir("out", dir.path()).unwrap();
        assert_eq!(h.finish(), with_manifest);
    }
}
