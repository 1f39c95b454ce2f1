//! Line-delimited record files with a schema header.
//!
//! The first line names the record kind and format version:
//!
//! ```text
//! {"schema":"groundkit.agent_step","version":1}
//! {"task":"...","screenshot_ref":"...","history":[],"gt_action":{...}}
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: missing schema header")]
    NoHeader { path: String },
    #[error("{path}: expected schema {expected} v{version}, found {found}")]
    Schema {
        path: String,
        expected: String,
        version: u32,
        found: String,
    },
    #[error("{path}:{line}: {message}")]
    Line {
        path: String,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
}

pub fn schema_name(kind: &str) -> String {
    format!("groundkit.{kind}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Serialize records with their header into one buffer.
pub fn encode<T: Serialize>(kind: &str, items: &[T]) -> Vec<u8> {
    let mut out = serde_json::to_vec(&Header {
        schema: schema_name(kind),
        version: RECORD_VERSION,
    })
    .expect("header serializes");
    out.push(b'\n');
    for item in items {
        serde_json::to_writer(&mut out, item).expect("records serialize");
        out.push(b'\n');
    }
    out
}

/// Write through a temporary file and rename, so readers never see a
/// partial file. Returns the content digest.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<String, RecordError> {
    let io = |source| RecordError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)?;
    Ok(sha256_hex(bytes))
}

pub fn write_records<T: Serialize>(path: &Path, kind: &str, items: &[T]) -> Result<String, RecordError> {
    write_atomic(path, &encode(kind, items))
}

pub fn decode<T: DeserializeOwned>(path_label: &str, kind: &str, src: &str) -> Result<Vec<T>, RecordError> {
    let mut lines = src.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| RecordError::NoHeader {
        path: path_label.into(),
    })?;
    let header: Header = serde_json::from_str(first).map_err(|_| RecordError::NoHeader {
        path: path_label.into(),
    })?;
    let expected = schema_name(kind);
    if header.schema != expected || header.version != RECORD_VERSION {
        return Err(RecordError::Schema {
            path: path_label.into(),
            expected,
            version: RECORD_VERSION,
            found: format!("{} v{}", header.schema, header.version),
        });
    }
    lines
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| RecordError::Line {
                path: path_label.into(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_records<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<Vec<T>, RecordError> {
    let src = fs::read_to_string(path).map_err(|source| RecordError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&path.display().to_string(), kind, &src)
}
