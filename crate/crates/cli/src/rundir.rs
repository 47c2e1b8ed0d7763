//! Run directory layout and atomic file writes.
//!
//! A completed run directory holds exactly four artifacts:
//!
//! | file              | content                                   |
//! |-------------------|-------------------------------------------|
//! | `config.txt`      | complete key=value run configuration      |
//! | `checkpoint.ckpt` | model + optimizer state                   |
//! | `metrics.csv`     | per-category validation metrics           |
//! | `train.log`       | split line + per-epoch loss breakdowns    |
//!
//! Every file is written via write-then-rename, so a crash can leave a
//! missing file but never a partially written one.

use std::path::{Path, PathBuf};

use dbvae_core::error::{Error, Result};

/// Paths of one run's artifacts.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// Create the directory (and parents) if needed.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::Io {
            path: root.clone(),
            source: e,
        })?;
        Ok(Self { root })
    }

    /// Wrap an existing run directory.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.is_dir() {
            return Err(Error::Io {
                path: root,
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "run directory not found"),
            });
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.txt")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.root.join("checkpoint.ckpt")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn log_path(&self) -> PathBuf {
        self.root.join("train.log")
    }
}

/// Write a file atomically: write `<path>.tmp`, then rename over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    std::fs::write(&tmp, bytes).map_err(|e| Error::Io {
        path: tmp.clone(),
        source: e,
    })?;
    std::fs::rename(&tmp, path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
