//! Canonical document persistence.
//!
//! One self-describing file per video: UTF-8 JSON with sorted keys, fixed
//! six-decimal floats, and an explicit `schema_version`. Two saves of the
//! same document are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{validate_document, VideoDocument, Violation};
use crate::canon;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DocError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unsupported schema_version {found} (this build reads {expected})")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("document failed validation with {} violation(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<Violation>),
}

#[derive(Serialize, Deserialize)]
struct DocumentFile {
    schema_version: u32,
    #[serde(flatten)]
    doc: VideoDocument,
}

/// Serialize a document to its canonical text form without touching disk.
pub fn document_to_string(doc: &VideoDocument) -> Result<String, DocError> {
    let violations = validate_document(doc);
    if !violations.is_empty() {
        return Err(DocError::Invalid(violations));
    }
    canon::to_canonical_string(&DocumentFile {
        schema_version: SCHEMA_VERSION,
        doc: doc.clone(),
    })
    .map_err(|e| DocError::Parse {
        offset: 0,
        message: e.to_string(),
    })
}

pub fn save_document(doc: &VideoDocument, path: &Path) -> Result<(), DocError> {
    let text = document_to_string(doc)?;
    fs::write(path, text).map_err(|source| DocError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_document(path: &Path) -> Result<VideoDocument, DocError> {
    let text = fs::read_to_string(path).map_err(|source| DocError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    document_from_str(&text)
}

pub fn document_from_str(text: &str) -> Result<VideoDocument, DocError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| parse_error(text, &e))?;
    let found = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .unwrap_or(0);
    if found != u64::from(SCHEMA_VERSION) {
        return Err(DocError::VersionMismatch {
            found,
            expected: SCHEMA_VERSION,
        });
    }
    let file: DocumentFile = serde_json::from_value(value).map_err(|e| DocError::Parse {
        offset: 0,
        message: e.to_string(),
    })?;
    let violations = validate_document(&file.doc);
    if !violations.is_empty() {
        return Err(DocError::Invalid(violations));
    }
    Ok(file.doc)
}

/// Translate serde_json's (line, column) into a byte offset into `text`.
fn parse_error(text: &str, err: &serde_json::Error) -> DocError {
    let line = err.line();
    let column = err.column();
    let mut offset = 0usize;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            offset += column.saturating_sub(1);
            break;
        }
        offset += l.len();
    }
    DocError::Parse {
        offset,
        message: err.to_string(),
    }
}
