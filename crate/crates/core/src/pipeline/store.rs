use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Stage;

pub const MANIFEST_FILE: &str = "manifest.json";

/// A completed stage run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub scope: String,
    pub input_hash: String,
    /// File name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    /// Keyed by `{stage}/{scope}`.
    pub stages: BTreeMap<String, StageRecord>,
}

fn key(stage: Stage, scope: &str) -> String {
    format!("{stage}/{scope}")
}

pub(crate) fn hash_file(path: &Path) -> io::Result<String> {
    let mut hasher = Sha256::new();
    let mut file = fs::File::open(path)?;
    io::copy(&mut file, &mut hasher)?;
    Ok(hex::encode(hasher.finalize()))
}

/// Incremental hash over labelled, length-prefixed parts.
#[derive(Clone, Default)]
pub(crate) struct InputHash(Sha256);

impl InputHash {
    pub(crate) fn new(stage: Stage) -> Self {
        let mut h = InputHash::default();
        h.part("stage", stage.name().as_bytes());
        h.part("version", env!("CARGO_PKG_VERSION").as_bytes());
        h
    }

    pub(crate) fn part(&mut self, label: &str, bytes: &[u8]) -> &mut Self {
        for chunk in [label.as_bytes(), bytes] {
            self.0.update((chunk.len() as u64).to_le_bytes());
            self.0.update(chunk);
        }
        self
    }

    pub(crate) fn json<T: Serialize>(&mut self, label: &str, value: &T) -> &mut Self {
        let bytes = serde_json::to_vec(value).expect("config values serialize");
        self.part(label, &bytes)
    }

    pub(crate) fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

/// On-disk stage outputs plus the manifest that vouches for them.
#[derive(Debug)]
pub struct ArtifactStore {
    root: PathBuf,
    manifest: Manifest,
}

impl ArtifactStore {
    /// Opens (or starts) a store; an unreadable manifest is treated as empty.
    pub fn open(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        let manifest = match fs::read(root.join(MANIFEST_FILE)) {
            Ok(bytes) => serde_json::from_slice(&bytes).unwrap_or_else(|e| {
                log::warn!("ignoring unreadable manifest: {e}");
                Manifest::default()
            }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Manifest::default(),
            Err(e) => return Err(e),
        };
        Ok(ArtifactStore {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn dir(&self, stage: Stage, scope: &str) -> PathBuf {
        self.root.join(stage.name()).join(scope)
    }

    pub fn file(&self, stage: Stage, scope: &str, name: &str) -> PathBuf {
        self.dir(stage, scope).join(name)
    }

    /// The record of a stage whose files are all present and unmodified.
    pub fn valid(&self, stage: Stage, scope: &str) -> Option<&StageRecord> {
        let record = self.manifest.stages.get(&key(stage, scope))?;
        let dir = self.dir(stage, scope);
        let intact = record
            .outputs
            .iter()
            .all(|(name, hash)| hash_file(&dir.join(name)).is_ok_and(|h| &h == hash));
        intact.then_some(record)
    }

    /// True when the stage can be skipped for `input_hash`.
    pub fn is_fresh(&self, stage: Stage, scope: &str, input_hash: &str) -> bool {
        self.valid(stage, scope)
            .is_some_and(|r| r.input_hash == input_hash)
    }

    /// Empty scratch directory for a stage run.
    pub fn scratch(&self, stage: Stage, scope: &str) -> io::Result<PathBuf> {
        let dir = self
            .root
            .join(stage.name())
            .join(format!(".{scope}.partial"));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    /// Moves a finished scratch directory into place and records it.
    pub fn commit(
        &mut self,
        stage: Stage,
        scope: &str,
        input_hash: String,
        scratch: &Path,
    ) -> io::Result<&StageRecord> {
        let mut outputs = BTreeMap::new();
        for entry in fs::read_dir(scratch)? {
            let entry = entry?;
            if entry.file_type()?.is_file() {
                let name = entry.file_name().to_string_lossy().into_owned();
                outputs.insert(name, hash_file(&entry.path())?);
            }
        }
        // Forget the old record first so a crash never leaves it vouching
        // for files that are gone.
        let k = key(stage, scope);
        self.manifest.stages.remove(&k);
        self.save()?;
        let dir = self.dir(stage, scope);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::rename(scratch, &dir)?;
        self.manifest.stages.insert(
            k.clone(),
            StageRecord {
                stage,
                scope: scope.to_owned(),
                input_hash,
                outputs,
            },
        );
        self.save()?;
        Ok(&self.manifest.stages[&k])
    }

    /// Drops a failed run's scratch directory.
    pub fn discard(&self, scratch: &Path) {
        if let Err(e) = fs::remove_dir_all(scratch) {
            log::warn!("cannot remove {}: {e}", scratch.display());
        }
    }

    fn save(&self) -> io::Result<()> {
        let tmp = self.root.join(format!(".{MANIFEST_FILE}.tmp"));
        let mut bytes = serde_json::to_vec_pretty(&self.manifest).map_err(io::Error::other)?;
        bytes.push(b'\n');
        fs::write(&tmp, bytes)?;
        fs::rename(tmp, self.root.join(MANIFEST_FILE))
    }
}
