//! Record/replay store: request digest -> completion text, kept as one JSON
//! object with sorted keys.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FixtureStore {
    entries: BTreeMap<String, String>,
    path: Option<PathBuf>,
}

impl FixtureStore {
    pub fn in_memory() -> Self {
        FixtureStore::default()
    }

    /// Loads an existing store file.
    pub fn load(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref();
        let raw = fs::read(path)?;
        let entries: BTreeMap<String, String> = serde_json::from_slice(&raw)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
        Ok(FixtureStore {
            entries,
            path: Some(path.to_path_buf()),
        })
    }

    /// Loads the store if the file exists, otherwise starts empty. Either way
    /// later inserts are written back to `path`.
    pub fn open_or_create(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref();
        if path.exists() {
            Self::load(path)
        } else {
            Ok(FixtureStore {
                entries: BTreeMap::new(),
                path: Some(path.to_path_buf()),
            })
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, digest: &str) -> Option<&str> {
        self.entries.get(digest).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn digests(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Inserts and, when backed by a file, persists immediately.
    pub fn insert(&mut self, digest: String, completion: String) -> io::Result<()> {
        self.entries.insert(digest, completion);
        if let Some(path) = &self.path {
            write_atomically(path, &self.to_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(&self.entries).expect("string map serializes");
        out.push(b'\n');
        out
    }

    pub fn save_to(&self, path: impl AsRef<Path>) -> io::Result<()> {
        write_atomically(path.as_ref(), &self.to_bytes())
    }
}

pub(crate) fn write_atomically(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("fixtures"),
        std::process::id()
    ));
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)
}
