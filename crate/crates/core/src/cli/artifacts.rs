//! Content-addressed artifact directories under the output root.
//!
//! Each stage writes `<out>/<stage>-<hash>/`, where the hash covers the
//! stage's configuration subset and the names of its input artifacts, and
//! points `<out>/<ref>.ref` at it.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{LaserError, Result};
use crate::ingest::InteractionMatrix;

/// First 16 hex digits of the SHA-256 of the newline-joined parts.
pub fn digest(parts: &[String]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())[..16].to_string()
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| LaserError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn new(root: &Path) -> Self {
        Store {
            root: root.to_path_buf(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Fresh (emptied) artifact directory for `stage` with content `hash`.
    pub fn create(&self, stage: &str, hash: &str) -> Result<PathBuf> {
        let dir = self.root.join(format!("{stage}-{hash}"));
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| LaserError::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| LaserError::io(&dir, e))?;
        Ok(dir)
    }

    pub fn set_ref(&self, name: &str, dir: &Path) -> Result<()> {
        let target = dir
            .file_name()
            .ok_or_else(|| LaserError::Format(format!("bad artifact dir {}", dir.display())))?;
        let path = self.root.join(format!("{name}.ref"));
        fs::write(&path, format!("{}\n", target.to_string_lossy())).map_err(|e| LaserError::io(&path, e))
    }

    /// Directory a reference points at; missing references name the
    /// command that produces them.
    pub fn get_ref(&self, name: &str, command: &'static str) -> Result<PathBuf> {
        let path = self.root.join(format!("{name}.ref"));
        let missing = |path: PathBuf| LaserError::MissingArtifact { path, command };
        let text = fs::read_to_string(&path).map_err(|_| missing(path.clone()))?;
        let dir = self.root.join(text.trim());
        if !dir.is_dir() {
            return Err(missing(dir));
        }
        Ok(dir)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| LaserError::io(path, e))
}

pub fn read_text(path: &Path, command: &'static str) -> Result<String> {
    if !path.exists() {
        return Err(LaserError::MissingArtifact {
            path: path.to_path_buf(),
            command,
        });
    }
    fs::read_to_string(path).map_err(|e| LaserError::io(path, e))
}

/// Shape of the ingested matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub n_users: usize,
    pub n_items: usize,
    pub r_max: f64,
}

impl Shape {
    pub fn of(m: &InteractionMatrix) -> Self {
        Shape {
            n_users: m.n_users(),
            n_items: m.n_items(),
            r_max: m.r_max(),
        }
    }

    pub fn to_text(self) -> String {
        format!("n_users={}\nn_items={}\nr_max={}\n", self.n_users, self.n_items, self.r_max)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = key_values(text);
        let get = |k: &str| {
            kv.iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| LaserError::Format(format!("shape file is missing `{k}`")))
        };
        let bad = |k: &str| LaserError::Format(format!("bad `{k}` in shape file"));
        Ok(Shape {
            n_users: get("n_users")?.parse().map_err(|_| bad("n_users"))?,
            n_items: get("n_items")?.parse().map_err(|_| bad("n_items"))?,
            r_max: get("r_max")?.parse().map_err(|_| bad("r_max"))?,
        })
    }
}

pub fn key_values(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

pub fn save_matrix(path: &Path, m: &InteractionMatrix) -> Result<()> {
    write_text(path, &m.to_dump())
}

pub fn load_matrix(path: &Path, shape: Shape, command: &'static str) -> Result<InteractionMatrix> {
    InteractionMatrix::from_dump(&read_text(path, command)?, shape.n_users, shape.n_items, shape.r_max)
}
