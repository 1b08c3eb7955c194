use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{ModelRecord, Registry, RegistryError, Result};

/// A registry on disk: `index.json` plus content-addressed blobs under
/// `blobs/<sha256>.bin`. Every write produces a new snapshot version.
#[derive(Debug, Clone)]
pub struct RegistryStore {
    root: PathBuf,
}

impl RegistryStore {
    /// Opens (creating if needed) the store at `root`.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("blobs"))?;
        Ok(Self { root })
    }

    pub fn index_path(&self) -> PathBuf {
        self.root.join("index.json")
    }

    pub fn load(&self) -> Result<Registry> {
        let path = self.index_path();
        if !path.exists() {
            return Ok(Registry::default());
        }
        let reg: Registry = serde_json::from_slice(&fs::read(path)?)?;
        reg.validate()?;
        Ok(reg)
    }

    fn save(&self, reg: &Registry) -> Result<()> {
        let tmp = self.root.join("index.json.tmp");
        let mut bytes = serde_json::to_vec_pretty(reg)?;
        bytes.push(b'\n');
        fs::write(&tmp, bytes)?;
        fs::rename(tmp, self.index_path())?;
        Ok(())
    }

    /// Stores `bytes` under their SHA-256 and returns the hex address.
    pub fn put_blob(&self, bytes: &[u8]) -> Result<String> {
        let hash = hex::encode(Sha256::digest(bytes));
        let path = self.blob_path(&hash);
        if !path.exists() {
            fs::write(path, bytes)?;
        }
        Ok(hash)
    }

    pub fn blob_path(&self, hash: &str) -> PathBuf {
        self.root.join("blobs").join(format!("{hash}.bin"))
    }

    pub fn get_blob(&self, hash: &str) -> Result<Vec<u8>> {
        fs::read(self.blob_path(hash)).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => RegistryError::MissingBlob(hash.to_string()),
            _ => RegistryError::Io(e),
        })
    }

    /// Adds `record`, storing `blob` first if given, and writes the next snapshot.
    pub fn add(&self, mut record: ModelRecord, blob: Option<&[u8]>) -> Result<Registry> {
        if let Some(bytes) = blob {
            record.blob = Some(self.put_blob(bytes)?);
        }
        let next = self.load()?.with_record(record)?;
        self.save(&next)?;
        Ok(next)
    }
}
