use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde_json::Value;

use super::{io_err, DataError};
use crate::decoder::normalize_tokens;

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    /// Audio path relative to the manifest's directory.
    pub audio: PathBuf,
    pub captions: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    /// Directory audio paths are resolved against.
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn audio_path(&self, e: &ManifestEntry) -> PathBuf {
        self.root.join(&e.audio)
    }
}

/// Parses JSON Lines with `id`, `audio` and 1–5 `captions` per line.
/// Blank lines are ignored.
pub fn parse_manifest_str(text: &str) -> Result<Vec<ManifestEntry>, DataError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(raw).map_err(|e| DataError::MalformedLine {
            line,
            message: e.to_string(),
        })?;
        let obj = v.as_object().ok_or_else(|| DataError::MalformedLine {
            line,
            message: "expected a JSON object".into(),
        })?;
        let missing = |field: &str| DataError::MissingField {
            line,
            field: field.to_string(),
        };
        let string = |field: &str| {
            obj.get(field)
                .and_then(Value::as_str)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .ok_or_else(|| missing(field))
        };
        let id = string("id")?;
        let audio = PathBuf::from(string("audio")?);
        let captions: Vec<String> = obj
            .get("captions")
            .and_then(Value::as_array)
            .and_then(|a| a.iter().map(|c| c.as_str().map(str::to_string)).collect::<Option<Vec<_>>>())
            .ok_or_else(|| missing("captions"))?;
        if captions.is_empty() || captions.iter().any(|c| normalize_tokens(c).is_empty()) {
            return Err(missing("captions"));
        }
        if captions.len() > 5 {
            return Err(DataError::MalformedLine {
                line,
                message: format!("{} captions, at most 5 allowed", captions.len()),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(DataError::DuplicateId { line, id });
        }
        out.push(ManifestEntry { id, audio, captions });
    }
    Ok(out)
}

pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Manifest, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(Manifest {
        root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        entries: parse_manifest_str(&text)?,
    })
}
