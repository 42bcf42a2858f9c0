use std::path::Path;

use ouq_core::OuqError;
use serde::Serialize;

pub const EXIT_UNDECIDED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Error report written to stderr as a single JSON object.
#[derive(Debug, Serialize)]
pub struct Failure {
    #[serde(skip)]
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    /// JSON pointer to the offending value of an input document.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pointer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub byte_offset: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

impl Failure {
    pub fn new(code: i32, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            kind,
            message: message.into(),
            file: None,
            pointer: None,
            byte_offset: None,
            line: None,
            column: None,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_INPUT, "usage", message)
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        let mut f = Self::new(EXIT_INTERNAL, "io", format!("{}: {err}", path.display()));
        f.file = Some(path.display().to_string());
        f
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl From<OuqError> for Failure {
    fn from(err: OuqError) -> Self {
        let (code, kind) = match &err {
            OuqError::Infeasible { .. } => (EXIT_UNDECIDED, "infeasible"),
            OuqError::Evaluation { .. } => (EXIT_INTERNAL, "evaluation"),
            OuqError::Irreducible { .. } => (EXIT_INPUT, "irreducible"),
            _ => (EXIT_INPUT, "invalid_input"),
        };
        Self::new(code, kind, err.to_string())
    }
}

/// Byte offset of a 1-based (line, column) position in `text`.
pub fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (start + column.saturating_sub(1)).min(text.len())
}

pub fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        let token = match seg {
            Segment::Seq { index } => index.to_string(),
            Segment::Map { key } => key.replace('~', "~0").replace('/', "~1"),
            Segment::Enum { variant } => variant.clone(),
            Segment::Unknown => continue,
        };
        out.push('/');
        out.push_str(&token);
    }
    out
}
