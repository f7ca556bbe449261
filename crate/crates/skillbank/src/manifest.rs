//! Run directories and reproducibility manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io::{write_json, IoError};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of a file, or of a directory as the sorted (relative path,
/// file digest) list of its regular files.
pub fn digest_path(path: &Path) -> Result<String, IoError> {
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, path, &mut files)?;
        files.sort();
        let mut listing = String::new();
        for (rel, digest) in files {
            listing.push_str(&format!("{digest}  {rel}\n"));
        }
        Ok(sha256_hex(listing.as_bytes()))
    } else {
        let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
        Ok(sha256_hex(&bytes))
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<(String, String)>) -> Result<(), IoError> {
    for entry in fs::read_dir(dir).map_err(|e| IoError::io(dir, e))? {
        let path = entry.map_err(|e| IoError::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path
            .file_name()
            .is_some_and(|n| n != MANIFEST_FILE && !n.to_string_lossy().starts_with('.'))
        {
            let rel = path
                .strip_prefix(root)
                .unwrap_or(&path)
                .to_string_lossy()
                .replace('\\', "/");
            let bytes = fs::read(&path).map_err(|e| IoError::io(&path, e))?;
            out.push((rel, sha256_hex(&bytes)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    /// Input path to digest.
    pub inputs: BTreeMap<String, String>,
    /// Output path (relative to the run dir) to digest.
    pub outputs: BTreeMap<String, String>,
    /// Set when the run did not complete every unit of work.
    pub partial: bool,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            partial: false,
            warnings: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), IoError> {
        self.inputs.insert(path.display().to_string(), digest_path(path)?);
        Ok(())
    }

    /// Digest of command, config and inputs; names the run directory.
    pub fn input_digest(&self) -> String {
        let key = serde_json::json!({
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
        });
        sha256_hex(key.to_string().as_bytes())
    }

    /// Record digests of everything in `run_dir` and write the manifest.
    pub fn finish(mut self, run_dir: &Path) -> Result<Self, IoError> {
        let mut files = Vec::new();
        collect_files(run_dir, run_dir, &mut files)?;
        self.outputs = files.into_iter().collect();
        write_json(&run_dir.join(MANIFEST_FILE), &self)?;
        Ok(self)
    }
}

/// `<root>/<UTC timestamp>-<first 12 hex of digest>` unless `explicit` is given.
pub fn run_dir(root: &Path, explicit: Option<&Path>, command: &str, digest: &str) -> Result<PathBuf, IoError> {
    let dir = match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
            root.join(format!("{stamp}-{command}-{}", &digest[..12.min(digest.len())]))
        }
    };
    fs::create_dir_all(&dir).map_err(|e| IoError::io(&dir, e))?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn directory_digest_ignores_order_and_manifest() {
        let a = tempfile::tempdir().unwrap();
        fs::write(a.path().join("x"), "1").unwrap();
        fs::create_dir(a.path().join("d")).unwrap();
        fs::write(a.path().join("d/y"), "2").unwrap();
        let before = digest_path(a.path()).unwrap();
        fs::write(a.path().join(MANIFEST_FILE), "{}").unwrap();
        assert_eq!(digest_path(a.path()).unwrap(), before);
        fs::write(a.path().join("x"), "changed").unwrap();
        assert_ne!(digest_path(a.path()).unwrap(), before);
    }

    #[test]
    fn manifest_records_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        fs::write(&input, "hello").unwrap();
        let mut m = Manifest::new("eval", serde_json::json!({"k": 1}));
        m.add_input(&input).unwrap();
        let d1 = m.input_digest();
        let run = run_dir(dir.path(), None, "eval", &d1).unwrap();
        assert!(run
            .file_name()
            .unwrap()
            .to_string_lossy()
            .ends_with(&format!("eval-{}", &d1[..12])));
        fs::write(run.join("out.txt"), "x").unwrap();
        let m = m.finish(&run).unwrap();
        assert_eq!(m.outputs["out.txt"], sha256_hex(b"x"));
        assert!(run.join(MANIFEST_FILE).exists());
    }
}
