use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub fingerprint: String,
    pub model_id: String,
    pub response: String,
}

/// One immutable JSON file per fingerprint. Writes go to a temp file in the
/// same directory and are renamed into place; an existing entry is never
/// overwritten.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(ResponseCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, fingerprint: &str) -> PathBuf {
        self.dir.join(format!("{fingerprint}.json"))
    }

    pub fn get(&self, fingerprint: &str) -> std::io::Result<Option<String>> {
        let path = self.path_for(fingerprint);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        let entry: CacheEntry = serde_json::from_slice(&bytes)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        if entry.fingerprint != fingerprint {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("cache file {} holds another fingerprint", path.display()),
            ));
        }
        Ok(Some(entry.response))
    }

    pub fn put(&self, entry: &CacheEntry) -> std::io::Result<()> {
        let target = self.path_for(&entry.fingerprint);
        if target.exists() {
            return Ok(());
        }
        let mut tmp = tempfile_in(&self.dir, &entry.fingerprint)?;
        tmp.1.write_all(&serde_json::to_vec_pretty(entry)?)?;
        tmp.1.sync_all()?;
        drop(tmp.1);
        std::fs::rename(&tmp.0, &target)
    }
}

/// Creates a uniquely named temp file next to the final location.
pub(crate) fn tempfile_in(dir: &Path, stem: &str) -> std::io::Result<(PathBuf, std::fs::File)> {
    let pid = std::process::id();
    for n in 0u32.. {
        let path = dir.join(format!(".{stem}.{pid}.{n}.tmp"));
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => return Ok((path, f)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!("u32 range exhausted creating temp file")
}
