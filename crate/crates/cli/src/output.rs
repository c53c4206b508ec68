//! Atomic file output and record serialization.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::ValueEnum;
use serde::Serialize;

use crate::config::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
    Jsonl,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        Self::from_str(s, true).ok()
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Jsonl => "jsonl",
        }
    }
}

/// Writes `path` through a temporary file in the same directory, so readers
/// never observe a partially written output.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<(), Failure>
where
    F: FnOnce(&mut dyn Write) -> anyhow::Result<()>,
{
    atomic(path, fill).map_err(Failure::runtime)
}

fn atomic<F>(path: &Path, fill: F) -> anyhow::Result<()>
where
    F: FnOnce(&mut dyn Write) -> anyhow::Result<()>,
{
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create temporary file in {}", dir.display()))?;
    let mut out = BufWriter::new(tmp);
    fill(&mut out)?;
    let tmp = out.into_inner().map_err(|e| e.into_error())?;
    #[cfg(unix)]
    {
        // temporary files are created 0600; outputs get ordinary permissions
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Writes `records` to `<dir>/<stem>.<ext>` in the requested format and
/// returns the path.
pub fn write_records<T: Serialize>(dir: &Path, stem: &str, format: Format, records: &[T]) -> Result<PathBuf, Failure> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    write_atomic(&path, |out| {
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                for r in records {
                    w.serialize(r)?;
                }
                w.flush()?;
            }
            Format::Json => {
                serde_json::to_writer_pretty(&mut *out, records)?;
                out.write_all(b"\n")?;
            }
            Format::Jsonl => {
                for r in records {
                    serde_json::to_writer(&mut *out, r)?;
                    out.write_all(b"\n")?;
                }
            }
        }
        Ok(())
    })?;
    Ok(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    write_atomic(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        out.write_all(b"\n")?;
        Ok(())
    })
}
