//! Index persistence: magic `MVIX`, version byte, length-prefixed embedder
//! fingerprint, dim and row counts, entry table, then the packed
//! little-endian float matrix. Floats round-trip bit-exactly, so a reloaded
//! index ranks identically.

use std::fs;
use std::path::Path;

use super::{IndexEntry, RetrievalError, TimelineIndex};
use crate::repr::TimeInterval;

pub const INDEX_MAGIC: &[u8; 4] = b"MVIX";
pub const INDEX_VERSION: u8 = 1;

pub fn save_index(index: &TimelineIndex, path: &Path) -> Result<(), RetrievalError> {
    let mut out = Vec::new();
    out.extend_from_slice(INDEX_MAGIC);
    out.push(INDEX_VERSION);
    write_bytes(&mut out, index.fingerprint().as_bytes());
    out.extend_from_slice(&(index.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(index.len() as u32).to_le_bytes());
    for entry in index.entries() {
        write_bytes(&mut out, entry.video_id.as_bytes());
        out.extend_from_slice(&(entry.clip_id as u32).to_le_bytes());
        out.extend_from_slice(&entry.interval.start_s.to_le_bytes());
        out.extend_from_slice(&entry.interval.end_s.to_le_bytes());
        write_bytes(&mut out, entry.summary.as_bytes());
    }
    for x in index.matrix() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, out).map_err(|source| RetrievalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_index(path: &Path) -> Result<TimelineIndex, RetrievalError> {
    let bytes = fs::read(path).map_err(|source| RetrievalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if !bytes.starts_with(INDEX_MAGIC) {
        return Err(RetrievalError::Malformed("missing MVIX magic".into()));
    }
    let mut cur = Cursor {
        bytes: &bytes,
        pos: INDEX_MAGIC.len(),
    };
    let version = cur.u8()?;
    if version != INDEX_VERSION {
        return Err(RetrievalError::Malformed(format!(
            "unsupported index version {version} (this build reads {INDEX_VERSION})"
        )));
    }
    let fingerprint = cur.string()?;
    let dim = cur.u32()? as usize;
    let rows = cur.u32()? as usize;
    let mut entries = Vec::with_capacity(rows);
    for _ in 0..rows {
        let video_id = cur.string()?;
        let clip_id = cur.u32()? as usize;
        let start_s = cur.f64()?;
        let end_s = cur.f64()?;
        let summary = cur.string()?;
        entries.push(IndexEntry {
            video_id,
            clip_id,
            interval: TimeInterval::new(start_s, end_s),
            summary,
        });
    }
    let mut matrix = Vec::with_capacity(rows * dim);
    for _ in 0..rows * dim {
        matrix.push(cur.f64()?);
    }
    if cur.pos != bytes.len() {
        return Err(RetrievalError::Malformed(format!(
            "{} trailing bytes after the matrix",
            bytes.len() - cur.pos
        )));
    }
    TimelineIndex::from_parts(entries, matrix, dim, fingerprint)
}

fn write_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], RetrievalError> {
        if self.pos + len > self.bytes.len() {
            return Err(RetrievalError::Malformed(format!(
                "truncated at byte {} (wanted {len} more)",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, RetrievalError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, RetrievalError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, RetrievalError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, RetrievalError> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|e| RetrievalError::Malformed(format!("non-UTF-8 string: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::super::{build_index, retrieve};
    use super::*;
    use crate::gateway::OfflineGateway;
    use crate::repr::fixtures::doc_with_boundaries;

    #[test]
    fn round_trip_preserves_rankings_and_bytes() {
        let boundaries: Vec<f64> = (0..=8).map(|i| 100.0 * i as f64).collect();
        let doc = doc_with_boundaries("vid", 800.0, &boundaries);
        let gateway = OfflineGateway::with_dim(64);
        let index = build_index(std::slice::from_ref(&doc), &gateway).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("timeline.mvix");
        save_index(&index, &path).unwrap();
        let loaded = load_index(&path).unwrap();
        assert_eq!(loaded, index);

        let query = index.entries()[3].summary.clone();
        let a = retrieve(&index, &query, 5, &gateway).unwrap();
        let b = retrieve(&loaded, &query, 5, &gateway).unwrap();
        assert_eq!(a.hits, b.hits);

        // Two saves are byte-identical.
        let first = fs::read(&path).unwrap();
        save_index(&loaded, &path).unwrap();
        assert_eq!(first, fs::read(&path).unwrap());
    }

    #[test]
    fn truncated_index_is_malformed() {
        let doc = doc_with_boundaries("vid", 200.0, &[0.0, 200.0]);
        let gateway = OfflineGateway::with_dim(32);
        let index = build_index(std::slice::from_ref(&doc), &gateway).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("timeline.mvix");
        save_index(&index, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(
            load_index(&path),
            Err(RetrievalError::Malformed(_))
        ));
    }
}
