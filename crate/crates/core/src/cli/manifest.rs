use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};

use super::config::ExperimentConfig;

/// SHA-256 of `blob <len>\0<content>`, the object hash git uses in its
/// SHA-256 repository format.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

/// Create `<parent>/<prefix>-NNNN` with the smallest unused number.
pub fn fresh_run_dir(parent: &Path, prefix: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(parent)?;
    for i in 1..100_000 {
        let dir = parent.join(format!("{prefix}-{i:04}"));
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::Io(e)),
        }
    }
    Err(Error::Config(format!("no free run directory under {}", parent.display())))
}

#[derive(Clone, Debug, Serialize)]
pub struct InputRecord {
    pub role: String,
    pub path: PathBuf,
    pub hash: String,
}

/// Snapshot written beside every run's outputs.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub crate_version: String,
    pub config: ExperimentConfig,
    /// Constants of the configured environment after overrides.
    pub env_params: Vec<(String, f64)>,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
}

/// Records inputs and outputs of one run and writes them into its fresh
/// directory. Files are written once; an existing file is an error.
pub struct Run {
    pub dir: PathBuf,
    manifest: Manifest,
}

impl Run {
    pub fn start(command: &str, config: &ExperimentConfig) -> Result<Self> {
        let dir = fresh_run_dir(&config.out, command)?;
        let env = config.environment()?;
        Ok(Self {
            dir,
            manifest: Manifest {
                command: command.to_string(),
                crate_version: env!("CARGO_PKG_VERSION").to_string(),
                config: config.clone(),
                env_params: env.params().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
        })
    }

    /// Read an input file, recording its hash. Missing files are reported as
    /// `kind` not found.
    pub fn read_input(&mut self, role: &str, kind: &'static str, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound {
                kind,
                path: path.to_path_buf(),
            },
            _ => Error::Io(e),
        })?;
        self.manifest.inputs.push(InputRecord {
            role: role.to_string(),
            path: path.to_path_buf(),
            hash: content_hash(&bytes),
        });
        Ok(bytes)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = std::fs::OpenOptions::new().write(true).create_new(true).open(&path)?;
        std::io::Write::write_all(&mut file, bytes)?;
        self.manifest.outputs.push(name.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Write `manifest.json` and `config.toml`, returning the run directory.
    pub fn finish(mut self) -> Result<PathBuf> {
        let config = self.manifest.config.to_toml();
        self.write("config.toml", config.as_bytes())?;
        let manifest = serde_json::to_string_pretty(&self.manifest).map_err(|e| Error::Format(e.to_string()))?;
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, manifest + "\n")?;
        Ok(self.dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_matches_git_object_format() {
        assert_eq!(
            content_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
        assert_ne!(content_hash(b"a"), content_hash(b"b"));
    }

    #[test]
    fn run_dirs_are_fresh_and_outputs_write_once() {
        let tmp = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            out: tmp.path().to_path_buf(),
            ..ExperimentConfig::default()
        };
        let mut a = Run::start("collect", &config).unwrap();
        let b = Run::start("collect", &config).unwrap();
        assert_ne!(a.dir, b.dir);
        a.write("x.csv", b"1\n").unwrap();
        assert!(a.write("x.csv", b"2\n").is_err());
        let dir = a.finish().unwrap();
        assert!(dir.join("manifest.json").exists() && dir.join("config.toml").exists());
        let reread = ExperimentConfig::from_toml(&std::fs::read_to_string(dir.join("config.toml")).unwrap()).unwrap();
        assert_eq!(reread, config);
    }
}
