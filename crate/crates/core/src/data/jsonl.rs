//! JSONL persistence: one serialized record per line.
//!
//! Readers report 1-based line numbers on malformed input so a bad line in a
//! large corpus can be located directly.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

/// Parse a whole JSONL document from memory (fuzzed entry point).
pub fn parse_jsonl_str<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    parse_jsonl_str(&text)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = String::new();
    for item in items {
        buf.push_str(
            &serde_json::to_string(item)
                .map_err(|e| Error::data(format!("serialization failed: {e}")))?,
        );
        buf.push('\n');
    }
    fs::write(path, buf)?;
    Ok(())
}
