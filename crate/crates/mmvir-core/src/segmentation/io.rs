//! Embedding-series files.
//!
//! Two interchangeable encodings are accepted:
//! - text: header line `n d fps video_id`, then one `timestamp v1 .. vd`
//!   line per frame, floats in shortest round-trip form;
//! - binary: magic `MVES`, version byte, `n: u32`, `d: u32`, `fps: f64`,
//!   length-prefixed video id, then packed little-endian rows of
//!   `timestamp` plus `d` values.

use std::fs;
use std::path::Path;

use super::{FrameEmbeddingSeries, SeriesError};

pub const SERIES_MAGIC: &[u8; 4] = b"MVES";
pub const SERIES_VERSION: u8 = 1;

pub fn read_series(path: &Path) -> Result<FrameEmbeddingSeries, SeriesError> {
    let bytes = fs::read(path).map_err(|source| SeriesError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_series_bytes(&bytes)
}

pub fn read_series_bytes(bytes: &[u8]) -> Result<FrameEmbeddingSeries, SeriesError> {
    if bytes.starts_with(SERIES_MAGIC) {
        read_binary(bytes)
    } else {
        let text = std::str::from_utf8(bytes)
            .map_err(|e| SeriesError::Malformed(format!("not UTF-8: {e}")))?;
        read_text(text)
    }
}

fn read_text(text: &str) -> Result<FrameEmbeddingSeries, SeriesError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| SeriesError::Malformed("empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(SeriesError::Malformed(format!(
            "header must be 'n d fps video_id' (got {} fields)",
            fields.len()
        )));
    }
    let n: usize = fields[0]
        .parse()
        .map_err(|_| SeriesError::Malformed(format!("bad n '{}'", fields[0])))?;
    let d: usize = fields[1]
        .parse()
        .map_err(|_| SeriesError::Malformed(format!("bad d '{}'", fields[1])))?;
    let fps: f64 = fields[2]
        .parse()
        .map_err(|_| SeriesError::Malformed(format!("bad fps '{}'", fields[2])))?;
    let video_id = fields[3].to_string();

    let mut timestamps = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n * d);
    for (line_no, line) in lines {
        let mut it = line.split_whitespace();
        let ts: f64 = it
            .next()
            .ok_or_else(|| SeriesError::Malformed(format!("line {}: empty row", line_no + 1)))?
            .parse()
            .map_err(|_| SeriesError::Malformed(format!("line {}: bad timestamp", line_no + 1)))?;
        timestamps.push(ts);
        let mut count = 0usize;
        for tok in it {
            let x: f64 = tok.parse().map_err(|_| {
                SeriesError::Malformed(format!("line {}: bad value '{tok}'", line_no + 1))
            })?;
            vectors.push(x);
            count += 1;
        }
        if count != d {
            return Err(SeriesError::Malformed(format!(
                "line {}: expected {d} values, got {count}",
                line_no + 1
            )));
        }
    }
    if timestamps.len() != n {
        return Err(SeriesError::Malformed(format!(
            "header declared {n} rows, file holds {}",
            timestamps.len()
        )));
    }
    FrameEmbeddingSeries::new(video_id, fps, timestamps, vectors, d)
}

fn read_binary(bytes: &[u8]) -> Result<FrameEmbeddingSeries, SeriesError> {
    let mut cur = Cursor {
        bytes,
        pos: SERIES_MAGIC.len(),
    };
    let version = cur.u8()?;
    if version != SERIES_VERSION {
        return Err(SeriesError::Malformed(format!(
            "unsupported series version {version} (this build reads {SERIES_VERSION})"
        )));
    }
    let n = cur.u32()? as usize;
    let d = cur.u32()? as usize;
    let fps = cur.f64()?;
    let id_len = cur.u32()? as usize;
    let video_id = String::from_utf8(cur.take(id_len)?.to_vec())
        .map_err(|e| SeriesError::Malformed(format!("video_id not UTF-8: {e}")))?;

    let mut timestamps = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n * d);
    for _ in 0..n {
        timestamps.push(cur.f64()?);
        for _ in 0..d {
            vectors.push(cur.f64()?);
        }
    }
    if cur.pos != bytes.len() {
        return Err(SeriesError::Malformed(format!(
            "{} trailing bytes after the last row",
            bytes.len() - cur.pos
        )));
    }
    FrameEmbeddingSeries::new(video_id, fps, timestamps, vectors, d)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], SeriesError> {
        if self.pos + len > self.bytes.len() {
            return Err(SeriesError::Malformed(format!(
                "truncated at byte {} (wanted {len} more)",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, SeriesError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, SeriesError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, SeriesError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn write_series_text(series: &FrameEmbeddingSeries, path: &Path) -> Result<(), SeriesError> {
    let mut out = String::new();
    out.push_str(&format!(
        "{} {} {} {}\n",
        series.len(),
        series.dim(),
        series.fps(),
        series.video_id()
    ));
    for i in 0..series.len() {
        out.push_str(&format!("{}", series.timestamps()[i]));
        for x in series.row(i) {
            out.push_str(&format!(" {x}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| SeriesError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_series_binary(series: &FrameEmbeddingSeries, path: &Path) -> Result<(), SeriesError> {
    let mut out = Vec::new();
    out.extend_from_slice(SERIES_MAGIC);
    out.push(SERIES_VERSION);
    out.extend_from_slice(&(series.len() as u32).to_le_bytes());
    out.extend_from_slice(&(series.dim() as u32).to_le_bytes());
    out.extend_from_slice(&series.fps().to_le_bytes());
    out.extend_from_slice(&(series.video_id().len() as u32).to_le_bytes());
    out.extend_from_slice(series.video_id().as_bytes());
    for i in 0..series.len() {
        out.extend_from_slice(&series.timestamps()[i].to_le_bytes());
        for x in series.row(i) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|source| SeriesError::Io {
        path: path.to_path_buf(),
        source,
    })
}
