//! Output directory handling: every file written goes through [`Artifacts`]
//! so the manifest can list its content hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thickstab_core::io::encode_field;
use thickstab_core::SpectralField;

use crate::error::CliError;

/// Git-style object hash: `sha256("blob <len>\0" || bytes)`, hex encoded.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub struct Artifacts {
    dir: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hashes: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.hashes.insert(name.to_string(), content_hash(bytes));
        Ok(())
    }

    pub fn write_field(&mut self, name: &str, field: &SpectralField) -> Result<(), CliError> {
        self.write(name, &encode_field(field))
    }

    pub fn hashes(&self) -> &BTreeMap<String, String> {
        &self.hashes
    }
}
