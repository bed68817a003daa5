use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Command, PipelineConfig, PipelineError};
use crate::tokenizer::{TokenStream, TOKEN_STREAM_VERSION, VOCAB_FORMAT_VERSION};

/// Names the directory for cached intermediate results. Caching is off when
/// the variable is unset or empty.
pub const CACHE_DIR_ENV: &str = "LANGSCALE_CACHE_DIR";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self, PipelineError> {
        let bytes = std::fs::metadata(path).map_err(|e| PipelineError::io(path, e))?.len();
        Ok(Self {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
            bytes,
        })
    }
}

/// Everything needed to re-run a command: the command with its input paths,
/// the full configuration (every range, grid, tolerance and seed), digests of
/// inputs and outputs, and component versions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub formats: Vec<(String, u32)>,
    pub command: Command,
    pub config_hash: String,
    pub config: PipelineConfig,
    pub inputs: Vec<FileDigest>,
    /// Output files relative to the run directory.
    pub outputs: Vec<FileDigest>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

impl RunManifest {
    pub(crate) fn begin(command: Command, config: PipelineConfig, inputs: Vec<FileDigest>) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            formats: vec![
                ("token_stream".into(), TOKEN_STREAM_VERSION),
                ("vocabulary".into(), VOCAB_FORMAT_VERSION),
            ],
            command,
            config_hash: config.hash(),
            config,
            inputs,
            outputs: Vec::new(),
            started_unix: now(),
            finished_unix: 0,
        }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| PipelineError::io(path, e))
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    use std::io::Read;
    let mut file = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let k = file.read(&mut buf).map_err(|e| PipelineError::io(path, e))?;
        if k == 0 {
            break;
        }
        hasher.update(&buf[..k]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub(crate) fn stream_digest(stream: &TokenStream) -> String {
    let mut hasher = Sha256::new();
    hasher.update(stream.vocab_size().to_le_bytes());
    for &id in stream.ids() {
        hasher.update(id.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

pub(crate) fn cache_key(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p.as_bytes());
    }
    hex::encode(hasher.finalize())
}

/// `<cache>/<kind>-<key>.<ext>`, creating the directory; `None` when caching
/// is off or the directory cannot be created.
pub(crate) fn cache_path(kind: &str, key: &str, ext: &str) -> Option<PathBuf> {
    let dir = std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty())?;
    let dir = PathBuf::from(dir);
    std::fs::create_dir_all(&dir).ok()?;
    Some(dir.join(format!("{kind}-{key}.{ext}")))
}
