use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// An error the user caused through arguments; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Git-style object hash: SHA-256 over `blob <len>\0` followed by the bytes.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

pub fn hash_file(path: &Path) -> Result<FileHash> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FileHash {
        path: path.display().to_string(),
        sha256: blob_hash(&bytes),
    })
}

/// Output directory for one command. Files are claimed up front so a run
/// never starts work it would refuse to write.
pub struct OutDir {
    pub root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn claim(root: &Path, files: &[String], force: bool) -> Result<Self> {
        for f in files {
            let p = root.join(f);
            if p.exists() && !force {
                return Err(usage(format!("{} already exists (use --force to overwrite)", p.display())));
            }
        }
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_owned(),
            written: Vec::new(),
        })
    }

    /// Path of an output file, recorded for the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        let p = self.root.join(name);
        self.written.push(p.clone());
        p
    }

    pub fn write_manifest<C: Serialize>(
        &mut self,
        name: &str,
        command: &str,
        config: &C,
        seed: u64,
        inputs: &[PathBuf],
    ) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a, C> {
            tool: &'static str,
            version: &'static str,
            command: &'a str,
            seed: u64,
            config: &'a C,
            inputs: Vec<FileHash>,
            outputs: Vec<FileHash>,
        }
        let m = Manifest {
            tool: "modelsel",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config,
            inputs: inputs.iter().map(|p| hash_file(p)).collect::<Result<_>>()?,
            outputs: self.written.iter().map(|p| hash_file(p)).collect::<Result<_>>()?,
        };
        let path = self.root.join(name);
        let text = serde_json::to_string_pretty(&m)? + "\n";
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_of_empty_input() {
        // sha256 of the 7 bytes "blob 0\0"
        assert_eq!(
            blob_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }

    #[test]
    fn claim_refuses_existing_files_without_force() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.csv"), "x").unwrap();
        let names = vec!["a.csv".to_owned()];
        let err = OutDir::claim(dir.path(), &names, false).err().unwrap();
        assert!(err.downcast_ref::<UsageError>().is_some());
        assert!(OutDir::claim(dir.path(), &names, true).is_ok());
    }
}
