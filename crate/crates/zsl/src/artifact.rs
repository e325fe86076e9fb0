//! Versioned JSON envelopes, line-oriented records and content digests.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Current version of every artifact format written by this crate.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    format: &'a str,
    version: u32,
    data: &'a T,
}

#[derive(Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    format: String,
    version: u32,
    data: serde_json::Value,
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    create_parent(path)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Byte offset of a serde_json error inside `text` (`base` is where `text`
/// starts in the file).
pub fn error_offset(text: &str, err: &serde_json::Error, base: usize) -> usize {
    let line = err.line().max(1);
    let start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    base + (start + err.column().saturating_sub(1)).min(text.len())
}

pub fn parse_error(path: &Path, text: &str, err: serde_json::Error, base: usize) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        offset: error_offset(text, &err, base),
        message: err.to_string(),
    }
}

pub fn check_header(path: &Path, expected: &str, format: &str, version: u32) -> Result<()> {
    if format != expected {
        return Err(Error::format(
            path,
            format!("expected a {expected} artifact, found {format}"),
        ));
    }
    if version > FORMAT_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            format: format.to_string(),
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    Ok(())
}

pub fn to_json_bytes<T: Serialize>(format: &str, data: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(&EnvelopeOut {
        format,
        version: FORMAT_VERSION,
        data,
    })
    .map_err(|e| Error::Config(format!("cannot serialize {format}: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, format: &str, data: &T) -> Result<()> {
    write_bytes(path, &to_json_bytes(format, data)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path, format: &str) -> Result<T> {
    let text = read_text(path)?;
    let env: EnvelopeIn = serde_json::from_str(&text).map_err(|e| parse_error(path, &text, e, 0))?;
    check_header(path, format, &env.format, env.version)?;
    serde_json::from_value(env.data).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes one JSON value per line.
pub fn write_jsonl<T: Serialize>(path: &Path, header: Option<&serde_json::Value>, records: &[T]) -> Result<()> {
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| Error::io(path, e);
    if let Some(h) = header {
        serde_json::to_writer(&mut w, h).map_err(|e| Error::format(path, e.to_string()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::format(path, e.to_string()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Non-blank lines with their 1-based line number and starting byte offset.
pub fn lines(text: &str) -> impl Iterator<Item = (usize, usize, &str)> {
    let mut offset = 0;
    text.split_inclusive('\n').enumerate().filter_map(move |(i, raw)| {
        let start = offset;
        offset += raw.len();
        let line = raw.trim_end_matches(['\n', '\r']);
        (!line.trim().is_empty()).then_some((i + 1, start, line))
    })
}

pub fn parse_line<T: DeserializeOwned>(path: &Path, line: &str, start: usize) -> Result<T> {
    serde_json::from_str(line).map_err(|e| parse_error(path, line, e, start))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}
