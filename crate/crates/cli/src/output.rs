use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use tempfile::NamedTempFile;

pub type CsvWriter<'a> = csv::Writer<&'a mut NamedTempFile>;

/// Writes a CSV with `header` into `dir/name` through a temporary file that is
/// renamed into place only once complete.
pub fn write_csv<F>(dir: &Path, name: &str, header: &[&str], fill: F) -> Result<PathBuf>
where
    F: FnOnce(&mut CsvWriter<'_>) -> Result<()>,
{
    let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("cannot write into {}", dir.display()))?;
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut tmp);
        w.write_record(header)?;
        fill(&mut w)?;
        w.flush()?;
    }
    let path = dir.join(name);
    tmp.persist(&path).with_context(|| format!("cannot move {} into place", path.display()))?;
    Ok(path)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("cannot write into {}", dir.display()))?;
    serde_json::to_writer_pretty(&mut tmp, value)?;
    tmp.write_all(b"\n")?;
    let path = dir.join(name);
    tmp.persist(&path).with_context(|| format!("cannot move {} into place", path.display()))?;
    Ok(path)
}

/// Creates `dir` if needed and checks that files can be created in it.
pub fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    NamedTempFile::new_in(dir).with_context(|| format!("output directory {} is not writable", dir.display()))?;
    Ok(())
}
