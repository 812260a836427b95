use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::data::hex_digest;
use crate::error::{Error, Result};

const LOCK_FILE: &str = ".soiln.lock";
const STAGING_DIR: &str = ".soiln-staging";

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// Exclusive, staged access to an output directory. Files are written to a
/// staging directory and moved into place only by [`Staging::commit`];
/// dropping without committing discards them. A lock file keeps concurrent
/// commands out of the same directory.
pub struct Staging {
    dir: PathBuf,
    staging: PathBuf,
    lock: PathBuf,
    outputs: BTreeMap<String, String>,
}

impl Staging {
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let lock = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => {}
            Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                return Err(Error::Locked(lock.display().to_string()))
            }
            Err(e) => return Err(io_err(&lock, e)),
        }
        let staging = dir.join(STAGING_DIR);
        let s = Self {
            dir: dir.to_path_buf(),
            staging,
            lock,
            outputs: BTreeMap::new(),
        };
        if s.staging.exists() {
            fs::remove_dir_all(&s.staging).map_err(|e| io_err(&s.staging, e))?;
        }
        fs::create_dir(&s.staging).map_err(|e| io_err(&s.staging, e))?;
        Ok(s)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Stage `bytes` under `name`; returns the SHA-256 of the content.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<String> {
        let path = self.staging.join(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        let digest = hex_digest(bytes);
        self.outputs.insert(name.to_string(), digest.clone());
        Ok(digest)
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<String> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<String>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    /// Output name → SHA-256 for everything staged so far.
    pub fn outputs(&self) -> &BTreeMap<String, String> {
        &self.outputs
    }

    /// Move every staged file into the directory.
    pub fn commit(self) -> Result<BTreeMap<String, String>> {
        for name in self.outputs.keys() {
            let from = self.staging.join(name);
            let to = self.dir.join(name);
            fs::rename(&from, &to).map_err(|e| io_err(&to, e))?;
        }
        Ok(self.outputs.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.staging);
        let _ = fs::remove_file(&self.lock);
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(hex_digest(&bytes))
}
