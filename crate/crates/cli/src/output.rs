use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::args::Format;
use crate::Result;

/// Writes result tables (always CSV, plus JSON on request) and gnuplot scripts.
pub struct Output {
    dir: PathBuf,
    format: Format,
}

impl Output {
    pub fn new(dir: &Path, format: Format) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), format })
    }

    pub fn table<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.dir.join(format!("{name}.csv")))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        if self.format == Format::Json {
            let text = serde_json::to_string_pretty(rows)?;
            fs::write(self.dir.join(format!("{name}.json")), text + "\n")?;
        }
        Ok(())
    }

    pub fn plot(&self, name: &str, script: &str) -> Result<()> {
        fs::write(self.dir.join(format!("{name}.gp")), script)?;
        Ok(())
    }
}
