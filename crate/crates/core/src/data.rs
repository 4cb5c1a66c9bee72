//! The bundled reference panel and directory loading.

use std::path::Path;

use crate::error::{CapeError, Result};
use crate::store::{ingest_frontier, ingest_losses, ingest_table, Panel, TableFormat};

pub const BASE_FILE: &str = "base.csv";
pub const FRONTIER_FILE: &str = "frontier.csv";
pub const LOSSES_FILE: &str = "losses.csv";
pub const DATA_DIR_ENV: &str = "CAPE_DATA_DIR";

const BUNDLED_BASE: &str = include_str!("../data/base.csv");
const BUNDLED_FRONTIER: &str = include_str!("../data/frontier.csv");
const BUNDLED_LOSSES: &str = include_str!("../data/losses.csv");

fn assemble(base: &str, frontier: Option<&str>, losses: Option<&str>, source: &str) -> Result<Panel> {
    let mut panel = ingest_table(base, TableFormat::Csv)?;
    if let Some(text) = frontier {
        let (records, notes) = ingest_frontier(text, TableFormat::Csv)?;
        panel.frontier = records;
        panel.metadata.notes.extend(notes);
    }
    if let Some(text) = losses {
        panel.losses = ingest_losses(text, TableFormat::Csv)?;
    }
    panel.metadata.provenance.push(source.to_string());
    Panel::new(panel.records, panel.frontier, panel.losses, panel.metadata)
}

/// The panel compiled into the library.
pub fn bundled_panel() -> Result<Panel> {
    assemble(BUNDLED_BASE, Some(BUNDLED_FRONTIER), Some(BUNDLED_LOSSES), "bundled")
}

/// Reads `base.csv` plus the optional `frontier.csv` and `losses.csv` from `dir`.
pub fn load_panel_dir(dir: &Path) -> Result<Panel> {
    let read = |name: &str| -> Result<Option<String>> {
        let p = dir.join(name);
        if !p.exists() {
            return Ok(None);
        }
        std::fs::read_to_string(&p).map(Some).map_err(|e| CapeError::Io(format!("{}: {e}", p.display())))
    };
    let base = read(BASE_FILE)?.ok_or_else(|| CapeError::Io(format!("{}: missing {BASE_FILE}", dir.display())))?;
    assemble(&base, read(FRONTIER_FILE)?.as_deref(), read(LOSSES_FILE)?.as_deref(), &dir.display().to_string())
}

/// `CAPE_DATA_DIR` when set, the bundled panel otherwise.
pub fn default_panel() -> Result<Panel> {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if !dir.is_empty() => load_panel_dir(Path::new(&dir)),
        _ => bundled_panel(),
    }
}

/// Bundled file contents by name, for export.
pub fn bundled_file(name: &str) -> Option<&'static str> {
    match name {
        BASE_FILE => Some(BUNDLED_BASE),
        FRONTIER_FILE => Some(BUNDLED_FRONTIER),
        LOSSES_FILE => Some(BUNDLED_LOSSES),
        _ => None,
    }
}
