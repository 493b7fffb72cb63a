//! JSON file helpers shared by every on-disk format.

use std::path::Path;

use serde::Serialize;

use crate::{Error, Result};

/// Two-step parse: syntax errors become [`Error::Parse`], shape errors become
/// [`Error::SchemaViolation`] with a JSON-pointer location.
pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    serde_path_to_error::deserialize(value).map_err(|e| Error::SchemaViolation {
        path: path.to_path_buf(),
        pointer: json_pointer(e.path()),
        message: e.inner().to_string(),
    })
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for segment in path.iter() {
        out.push('/');
        match segment {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

/// Pretty JSON with a trailing newline.
pub(crate) fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes to JSON");
    s.push('\n');
    s
}

pub(crate) fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_pretty(value)).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_json(path, &text)
}
