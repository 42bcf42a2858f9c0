use std::io::Write;
use std::path::{Path, PathBuf};

use ouq_core::{ConvergenceTrace, OptimizerConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::failure::{byte_offset, json_pointer, Failure, EXIT_INPUT, EXIT_INTERNAL};

/// Provenance of one CLI invocation, embedded in every output document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub input: Option<String>,
    pub seeds: Vec<u64>,
    pub config: Option<OptimizerConfig>,
    pub output_dir: Option<String>,
    pub version: String,
}

impl RunManifest {
    pub fn new(subcommand: &str, input: Option<&Path>, output_dir: Option<&Path>) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            input: input.map(|p| p.display().to_string()),
            seeds: Vec::new(),
            config: None,
            output_dir: output_dir.map(|p| p.display().to_string()),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Parses a JSON document, reporting the JSON pointer and byte offset of
/// the first offending value.
pub fn parse_json<T: DeserializeOwned>(text: &str, file: Option<&Path>) -> Result<T, Failure> {
    let located = |err: serde_json::Error, pointer: String| {
        let (line, column) = (err.line(), err.column());
        let mut f = Failure::new(EXIT_INPUT, "parse", err.to_string());
        f.file = file.map(|p| p.display().to_string());
        f.pointer = Some(pointer);
        f.line = Some(line);
        f.column = Some(column);
        f.byte_offset = Some(byte_offset(text, line, column));
        f
    };
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let pointer = json_pointer(err.path());
        located(err.into_inner(), pointer)
    })?;
    de.end().map_err(|err| located(err, String::new()))?;
    Ok(value)
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        let mut f = Failure::io(path, e);
        f.code = EXIT_INPUT;
        f
    })?;
    parse_json(&text, Some(path))
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and a rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Failure::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Failure::io(path, e))?;
    tmp.persist(path).map_err(|e| Failure::io(path, e.error))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::new(EXIT_INTERNAL, "serialize", e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn csv_bytes<R: Serialize>(
    rows: impl IntoIterator<Item = R>,
    header: &[&str],
) -> Result<Vec<u8>, Failure> {
    let internal = |e: csv::Error| Failure::new(EXIT_INTERNAL, "serialize", e.to_string());
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header).map_err(internal)?;
    for row in rows {
        w.serialize(row).map_err(internal)?;
    }
    w.into_inner()
        .map_err(|e| Failure::new(EXIT_INTERNAL, "serialize", e.to_string()))
}

pub fn write_trace(path: &Path, trace: &ConvergenceTrace) -> Result<(), Failure> {
    let bytes = csv_bytes(
        &trace.rows,
        &["generation", "best_value", "residual", "evals", "seconds"],
    )?;
    write_atomic(path, &bytes)
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Deserialize)]
    #[allow(dead_code)]
    struct Doc {
        items: Vec<Item>,
    }

    #[derive(Debug, Deserialize)]
    #[allow(dead_code)]
    struct Item {
        x: f64,
    }

    #[test]
    fn parse_errors_carry_pointer_and_offset() {
        let text = r#"{"items": [{"x": 1}, {"x": "no"}]}"#;
        let err = parse_json::<Doc>(text, None).unwrap_err();
        assert_eq!(err.pointer.as_deref(), Some("/items/1/x"));
        assert_eq!(err.code, EXIT_INPUT);
        let bad = text.find(r#""no""#).unwrap();
        assert!(
            (bad..=bad + 4).contains(&err.byte_offset.unwrap()),
            "{err:?}"
        );

        let err = parse_json::<Doc>("{\"items\": [}", None).unwrap_err();
        assert_eq!(err.byte_offset, Some(11));
        assert!(parse_json::<Doc>(r#"{"items": []} trailing"#, None).is_err());
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("out.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
