//! Artifact serialization: datasets as line-delimited records, models and
//! metrics as structured text. All floating-point values are written with 17
//! significant digits so files round-trip bit-exactly and reruns diff clean.

use super::{Dataset, Video};
use crate::error::{Error, Result};
use crate::linalg::{parse_matrix_text, write_matrix_text, Matrix};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::Path;

/// JSON formatter that writes every f64 as `{:.16e}`: 17 significant
/// digits, enough to reproduce any double exactly on read-back.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes to a single-line JSON string with full-precision floats.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision);
    value.serialize(&mut ser)?;
    String::from_utf8(out).map_err(|e| Error::Parse(format!("non-utf8 serialization: {e}")))
}

/// Self-describing io::Error: the raw one names neither the file nor the
/// operation, and CLI users need both.
fn annotate(op: &str, path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{op} {}: {e}", path.display()),
    ))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| annotate("reading", path, e))
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = to_json_string(value)?;
    body.push('\n');
    fs::write(path, body).map_err(|e| annotate("writing", path, e))
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let body = read_file(path)?;
    serde_json::from_str(&body).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Writes one video record per line: `{"label": ..., "frames": [[...]]}`.
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    dataset.validate()?;
    let mut file = fs::File::create(path).map_err(|e| annotate("writing", path, e))?;
    for video in &dataset.videos {
        let line = to_json_string(video)?;
        writeln!(file, "{line}").map_err(|e| annotate("writing", path, e))?;
    }
    Ok(())
}

/// Reads a line-delimited dataset; frame counts may vary between records.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let body = read_file(path)?;
    let mut videos = Vec::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let video: Video = serde_json::from_str(line)
            .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?;
        videos.push(video);
    }
    let dataset = Dataset { videos };
    dataset.validate()?;
    Ok(dataset)
}

pub fn write_matrix_file(path: &Path, m: &Matrix) -> Result<()> {
    fs::write(path, write_matrix_text(m)).map_err(|e| annotate("writing", path, e))
}

pub fn read_matrix_file(path: &Path) -> Result<Matrix> {
    let body = read_file(path)?;
    parse_matrix_text(&body)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}
