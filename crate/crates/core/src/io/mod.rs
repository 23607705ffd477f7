//! File formats: longitudinal and outcome tables, flat configuration files,
//! persisted chains, and the delimited report tables.

mod chain;
mod config;
mod data;
mod tables;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

pub use chain::{load_chain, persist_chain, x_companion_path, meta_path};
pub use config::{parse_config, parse_config_str, render_config};
pub use data::{load_dataset, load_dataset_with, write_dataset, LoadOptions, LoadedData, SkippedRow};
pub use tables::{
    write_classification, write_comparison, write_geweke_table, write_replication_report, write_roc, write_summary_table,
};

/// Writes a file whole: the content goes to a sibling temporary file that is
/// renamed over `path` only after a successful flush.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        fill(&mut w)?;
        w.flush()?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}
