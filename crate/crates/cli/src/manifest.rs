//! Run manifests and canonical configuration hashing.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use deblur_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Serializes with object keys sorted at every level.
pub fn canonical_json(v: &Value) -> String {
    fn sort(v: &Value) -> Value {
        match v {
            Value::Object(m) => {
                let sorted: BTreeMap<&String, Value> = m.iter().map(|(k, x)| (k, sort(x))).collect();
                Value::Object(sorted.into_iter().map(|(k, x)| (k.clone(), x)).collect())
            }
            Value::Array(a) => Value::Array(a.iter().map(sort).collect()),
            x => x.clone(),
        }
    }
    serde_json::to_string(&sort(v)).expect("JSON values serialize")
}

pub fn config_hash(v: &Value) -> String {
    sha256_hex(canonical_json(v).as_bytes())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Stage record written next to the stage outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub config_hash: String,
    /// Configuration sections this stage depends on.
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub summary: Value,
}

/// Digest of `dir/rel`, recorded under the relative name.
pub fn digest(dir: &Path, rel: &str) -> Result<FileDigest> {
    let bytes = fs::read(dir.join(rel)).map_err(|e| Error::Format(format!("cannot read {rel}: {e}")))?;
    Ok(FileDigest { path: rel.to_string(), sha256: sha256_hex(&bytes) })
}

impl RunManifest {
    pub fn path(dir: &Path, stage: &str) -> std::path::PathBuf {
        dir.join(format!("{stage}.manifest.json"))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(Self::path(dir, &self.stage), text)?;
        Ok(())
    }

    pub fn read(dir: &Path, stage: &str) -> Result<Self> {
        let p = Self::path(dir, stage);
        let text = fs::read_to_string(&p).map_err(|e| Error::Format(format!("missing manifest {}: {e}", p.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}
