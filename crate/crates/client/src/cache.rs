//! Content-addressed replay cache: a directory of files named by the hex
//! hash of (prompt, temperature, sampling index), each holding one raw
//! response text. Writes go through a temp file and rename, so readers
//! never observe partial content.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::BackendError;

/// Hex cache key over the request identity.
pub fn cache_key(prompt: &str, temperature: f64, index: u32) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    hasher.update([0]);
    // Bit pattern, so 0.0 and -0.0 or any formatting drift cannot collide.
    hasher.update(temperature.to_bits().to_be_bytes());
    hasher.update(index.to_be_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone)]
pub struct ReplayCache {
    dir: PathBuf,
}

impl ReplayCache {
    /// Open (creating if needed) a cache directory.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| BackendError::CacheIo {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(ReplayCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(key)
    }

    pub fn get(&self, key: &str) -> Result<Option<String>, BackendError> {
        match fs::read_to_string(self.path_for(key)) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(BackendError::CacheIo {
                path: self.path_for(key).display().to_string(),
                source,
            }),
        }
    }

    /// Atomic write: temp file in the same directory, then rename.
    pub fn put(&self, key: &str, response: &str) -> Result<(), BackendError> {
        let target = self.path_for(key);
        let tmp = self.dir.join(format!(".{key}.tmp"));
        let io_err = |source: io::Error| BackendError::CacheIo {
            path: target.display().to_string(),
            source,
        };
        fs::write(&tmp, response).map_err(io_err)?;
        fs::rename(&tmp, &target).map_err(io_err)?;
        Ok(())
    }

    pub fn len(&self) -> Result<usize, BackendError> {
        let entries = fs::read_dir(&self.dir).map_err(|source| BackendError::CacheIo {
            path: self.dir.display().to_string(),
            source,
        })?;
        Ok(entries.filter_map(Result::ok).count())
    }

    pub fn is_empty(&self) -> Result<bool, BackendError> {
        Ok(self.len()? == 0)
    }
}
