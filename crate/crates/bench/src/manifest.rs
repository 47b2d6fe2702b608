use std::path::Path;

use isqp::problems::ManifestEntry;
use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub problem: Vec<ManifestEntry>,
}

pub fn parse_manifest(text: &str) -> Result<Manifest, BenchError> {
    toml::from_str(text).map_err(|e| BenchError::Config(format!("manifest: {e}")))
}

pub fn load_manifest(path: &Path) -> Result<Manifest, BenchError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_manifest(&text)
}

pub fn render_manifest(entries: &[ManifestEntry]) -> Result<String, BenchError> {
    toml::to_string(&Manifest { problem: entries.to_vec() }).map_err(|e| BenchError::Internal(e.to_string()))
}
