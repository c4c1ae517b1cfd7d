use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::Serialize;

/// `report.json` becomes `report_k3.json`.
pub fn with_k_suffix(path: &Path, k: u32) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_k{k}.{}", ext.to_string_lossy()),
        None => format!("{stem}_k{k}"),
    };
    path.with_file_name(name)
}

pub fn json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes one document per k. With a file, ranges get per-k files; on stdout a
/// range is printed as one JSON array.
pub fn emit_per_k<T: Serialize>(out: Option<&Path>, ranged: bool, docs: &[(u32, T)]) -> Result<()> {
    match out {
        Some(path) if ranged => {
            for (k, doc) in docs {
                write_text(&with_k_suffix(path, *k), &json(doc)?)?;
            }
            Ok(())
        }
        Some(path) => write_text(path, &json(&docs[0].1)?),
        None if ranged => print(&json(&docs.iter().map(|(_, d)| d).collect::<Vec<_>>())?),
        None => print(&json(&docs[0].1)?),
    }
}

pub fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_text(path, text),
        None => print(text),
    }
}

fn print(text: &str) -> Result<()> {
    let mut stdout = io::stdout().lock();
    stdout.write_all(text.as_bytes())?;
    stdout.flush()?;
    Ok(())
}

/// CSV sink for trace rows, gzip-compressed when the path ends in `.gz`.
pub fn trace_writer(path: &Path) -> Result<csv::Writer<Box<dyn Write>>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let file = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    let sink: Box<dyn Write> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzEncoder::new(file, Compression::default()))
    } else {
        Box::new(file)
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["iter", "gap", "min_gap", "stage_k", "pattern_boundary"])?;
    Ok(w)
}
