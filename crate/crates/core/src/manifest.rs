//! Newline-delimited JSON persistence for [`UtteranceManifest`] records.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::UtteranceManifest;

pub fn to_line(manifest: &UtteranceManifest) -> Result<String> {
    Ok(serde_json::to_string(manifest)?)
}

pub fn write_jsonl<W: Write>(mut out: W, manifests: &[UtteranceManifest]) -> Result<()> {
    for m in manifests {
        m.validate()?;
        out.write_all(to_line(m)?.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads and validates every record. Blank lines are skipped.
pub fn read_jsonl<R: Read>(input: R) -> Result<Vec<UtteranceManifest>> {
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let m: UtteranceManifest = serde_json::from_str(&line).map_err(|e| {
            Error::validation(format!("line {}", lineno + 1), e.to_string())
        })?;
        m.validate().map_err(|e| match e {
            Error::Validation { field, message } => Error::Validation {
                field,
                message: format!("{message} (line {})", lineno + 1),
            },
            other => other,
        })?;
        out.push(m);
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Vec<UtteranceManifest>> {
    read_jsonl(File::open(path)?)
}

/// Rewrites the whole file through a temporary sibling and an atomic rename.
pub fn save(path: &Path, manifests: &[UtteranceManifest]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    write_jsonl(BufWriter::new(File::create(&tmp)?), manifests)?;
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn append(path: &Path, manifest: &UtteranceManifest) -> Result<()> {
    manifest.validate()?;
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", to_line(manifest)?)?;
    Ok(())
}
