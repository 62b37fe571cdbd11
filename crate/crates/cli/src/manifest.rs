//! Per-stage manifests. A manifest pins the stage's config digest and the
//! digest of every file it read and wrote; upstream artifacts count as
//! inputs, so the chain of manifests leads back to the raw files.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, CliError};

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub config_sha256: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut reader = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = reader.read(&mut buf).map_err(|e| io_err(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn read(dir: &Path) -> Option<Manifest> {
        let body = std::fs::read(dir.join(FILE_NAME)).ok()?;
        serde_json::from_slice(&body).ok()
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(FILE_NAME);
        let body = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(&path, body).map_err(|e| io_err(&path, e))
    }

    /// True when every recorded output still exists with the recorded digest.
    pub fn outputs_intact(&self, dir: &Path) -> bool {
        self.outputs
            .iter()
            .all(|f| sha256_file(&dir.join(&f.path)).is_ok_and(|h| h == f.sha256))
    }
}
