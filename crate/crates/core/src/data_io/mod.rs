//! Input parsers (configuration, connectivity, stimuli, MNIST) and run
//! artifact writers.

use std::path::{Path, PathBuf};

pub mod artifacts;
pub mod config;
pub mod connectivity;
pub mod mnist;
pub mod stimuli;
pub mod svg;

pub use artifacts::{parse_snapshot, write_snapshot};
pub use config::{parse_config, RunConfig};
pub use connectivity::{parse_connectivity, ConnectivityMatrix, Synapse};
pub use mnist::{load_mnist, load_mnist_dir, preprocess, LabeledImage};
pub use stimuli::{parse_stimuli, StimuliSet, StimulusStep};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("schema violation at {path}: {reason}")]
    Schema { path: String, reason: String },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: synapse {pre}->{post} is mapped twice")]
    DuplicateSynapse { line: usize, pre: usize, post: usize },
    #[error("line {line}: device ({row}, {col}) hosts two synapses")]
    DuplicateDevice { line: usize, row: usize, col: usize },
    #[error("line {line}: {field} = {value} is out of range (limit {limit})")]
    IndexOverflow { line: usize, field: &'static str, value: usize, limit: usize },
    #[error("line {line}: expected {expected} spike entries, found {found}")]
    WidthMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: spike entry '{value}' is not 0 or 1")]
    NonBinary { line: usize, value: String },
    #[error("{}: bad magic 0x{found:08x}, expected 0x{expected:08x}", path.display())]
    BadMagic { path: PathBuf, expected: u32, found: u32 },
    #[error("{}: truncated, expected {expected} bytes but found {actual}", path.display())]
    Truncated { path: PathBuf, expected: usize, actual: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("image has {found} pixels, expected {expected}")]
    Shape { expected: usize, found: usize },
    #[error("missing file {}", .0.display())]
    Missing(PathBuf),
    #[error("missing files: {}", list(.0))]
    MissingFiles(Vec<PathBuf>),
    #[error("{}: {reason}", path.display())]
    Artifact { path: PathBuf, reason: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

fn list(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            DataError::Missing(path.to_path_buf())
        } else {
            DataError::Io { path: path.to_path_buf(), source }
        }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))
}

/// Splits a CSV document into non-empty records with 1-based line numbers.
pub(crate) fn csv_records(text: &str, has_header: bool) -> Result<Vec<(usize, csv::StringRecord)>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = vec![];
    for rec in reader.records() {
        let rec = rec.map_err(|e| DataError::Malformed {
            line: e.position().map_or(0, |p| line_of(text, p.byte() as usize)),
            reason: e.to_string(),
        })?;
        // The reader's own line counter skips blank lines; count from the
        // byte offset instead.
        let line = rec.position().map_or(0, |p| line_of(text, p.byte() as usize));
        if rec.iter().all(str::is_empty) {
            continue;
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn line_of(text: &str, byte: usize) -> usize {
    let bytes = text.as_bytes();
    let mut at = byte.min(bytes.len());
    while at < bytes.len() && (bytes[at] == b'\n' || bytes[at] == b'\r') {
        at += 1;
    }
    bytes[..at].iter().filter(|&&b| b == b'\n').count() + 1
}

pub(crate) fn header_fields(text: &str) -> Vec<String> {
    text.lines()
        .find(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|f| f.trim().to_string()).collect())
        .unwrap_or_default()
}

pub(crate) fn parse_field<T: std::str::FromStr>(line: usize, name: &str, raw: &str) -> Result<T, DataError> {
    raw.parse().map_err(|_| DataError::Malformed { line, reason: format!("{name} '{raw}' is not a valid number") })
}
