//! Stage artifacts on disk: canonical JSON, atomic writes and the
//! metadata hash chain.
//!
//! Every stage writes `<stage>.meta.json` next to its outputs. The meta
//! file records the SHA-256 of each output and of each input the stage
//! read. Before a stage reads an artifact, the chain behind it is checked:
//! the artifact must still hash to what its producer recorded, and so must
//! every upstream artifact the producer consumed.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("missing artifact: {}", .0.display())]
    Missing(PathBuf),
    #[error("{artifact} does not match the hash recorded by stage {stage} (re-run {stage} or pass --force)")]
    HashMismatch { artifact: String, stage: String },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("io error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl ArtifactError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            ArtifactError::Missing(path.to_path_buf())
        } else {
            ArtifactError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Pretty JSON with lexicographically sorted object keys and a trailing
/// newline. Byte-stable for equal values.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    // serde_json's Value map is ordered by key.
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ArtifactError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| ArtifactError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| ArtifactError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| ArtifactError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| ArtifactError::io(path, e))?;
    // Temporary files are created owner-only; artifacts are ordinary files.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))
            .map_err(|e| ArtifactError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| ArtifactError::io(path, e.error))?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ArtifactError> {
    let bytes = std::fs::read(path).map_err(|e| ArtifactError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| ArtifactError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Provenance of one stage run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMeta {
    pub stage: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    /// Artifact (or external file) name → SHA-256 at read time.
    pub inputs: BTreeMap<String, String>,
    /// Artifact name → SHA-256 as written.
    pub outputs: BTreeMap<String, String>,
    /// Backend identities used by the stage.
    pub backends: BTreeMap<String, String>,
    /// Stage-specific notes, e.g. the question text.
    pub notes: BTreeMap<String, serde_json::Value>,
}

impl StageMeta {
    pub fn new<C: Serialize>(stage: &str, config: &C) -> Self {
        StageMeta {
            stage: stage.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            backends: BTreeMap::new(),
            notes: BTreeMap::new(),
        }
    }
}

/// A run directory holding stage artifacts.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
    /// Downgrade hash mismatches to warnings.
    pub force: bool,
    producers: BTreeMap<&'static str, &'static str>,
}

impl Workspace {
    /// `producers` maps each artifact file name to the stage that writes it.
    pub fn new(root: impl Into<PathBuf>, producers: &[(&'static str, &'static str)]) -> Self {
        Workspace {
            root: root.into(),
            force: false,
            producers: producers.iter().copied().collect(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn meta_path(&self, stage: &str) -> PathBuf {
        self.root.join(format!("{stage}.meta.json"))
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).exists()
    }

    pub fn read_meta(&self, stage: &str) -> Result<StageMeta, ArtifactError> {
        read_json(&self.meta_path(stage))
    }

    pub fn hash_of(&self, name: &str) -> Result<String, ArtifactError> {
        let path = self.path(name);
        let bytes = std::fs::read(&path).map_err(|e| ArtifactError::io(&path, e))?;
        Ok(sha256_hex(&bytes))
    }

    fn mismatch(&self, artifact: &str, stage: &str) -> Result<(), ArtifactError> {
        let err = ArtifactError::HashMismatch {
            artifact: artifact.to_string(),
            stage: stage.to_string(),
        };
        if self.force {
            log::warn!("{err}; continuing because of --force");
            Ok(())
        } else {
            Err(err)
        }
    }

    /// Checks the chain behind `name` and returns its current hash.
    pub fn verify(&self, name: &str) -> Result<String, ArtifactError> {
        let mut seen = BTreeSet::new();
        self.verify_inner(name, &mut seen)
    }

    fn verify_inner(&self, name: &str, seen: &mut BTreeSet<String>) -> Result<String, ArtifactError> {
        let current = self.hash_of(name)?;
        if !seen.insert(name.to_string()) {
            return Ok(current);
        }
        let Some(stage) = self.producers.get(name).copied() else {
            return Ok(current);
        };
        let meta = self.read_meta(stage)?;
        if meta.outputs.get(name) != Some(&current) {
            self.mismatch(name, stage)?;
        }
        for (input, recorded) in &meta.inputs {
            if !self.producers.contains_key(input.as_str()) {
                continue;
            }
            let upstream = self.verify_inner(input, seen)?;
            if &upstream != recorded {
                self.mismatch(input, stage)?;
            }
        }
        Ok(current)
    }

    /// Writes `bytes` atomically and records the output hash in `meta`.
    pub fn write(&self, meta: &mut StageMeta, name: &str, bytes: &[u8]) -> Result<(), ArtifactError> {
        write_atomic(&self.path(name), bytes)?;
        meta.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(
        &self,
        meta: &mut StageMeta,
        name: &str,
        value: &T,
    ) -> Result<(), ArtifactError> {
        let text = canonical_json(value).map_err(|e| ArtifactError::Format {
            path: self.path(name),
            message: e.to_string(),
        })?;
        self.write(meta, name, text.as_bytes())
    }

    /// Writes the stage meta last, so a crash never leaves a meta that
    /// vouches for half-written outputs.
    pub fn finish(&self, meta: &StageMeta) -> Result<(), ArtifactError> {
        let text = canonical_json(meta).map_err(|e| ArtifactError::Format {
            path: self.meta_path(&meta.stage),
            message: e.to_string(),
        })?;
        write_atomic(&self.meta_path(&meta.stage), text.as_bytes())
    }
}
