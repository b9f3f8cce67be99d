//! Session JSONL: one `SessionRecord` per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use tgl_core::session::SessionRecord;

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Loaded {
    pub sessions: Vec<SessionRecord>,
    /// Sessions left without events after metadata filtering.
    pub dropped_empty: usize,
}

/// Parses, filters metadata events and validates every session.
pub fn load_sessions(path: &Path) -> Result<Loaded> {
    let file = File::open(path).map_err(io_err(path))?;
    parse_sessions(BufReader::new(file), path)
}

pub fn parse_sessions(reader: impl BufRead, path: &Path) -> Result<Loaded> {
    let mut out = Loaded::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SessionRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { path: path.to_path_buf(), line: i + 1, msg: e.to_string() })?;
        match rec.sanitize().map_err(|e| Error::Parse { path: path.to_path_buf(), line: i + 1, msg: e.to_string() })? {
            Some(s) => out.sessions.push(s),
            None => out.dropped_empty += 1,
        }
    }
    Ok(out)
}

pub fn write_sessions(path: &Path, sessions: &[SessionRecord]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for s in sessions {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(serde_json::from_slice(&bytes)?)
}
