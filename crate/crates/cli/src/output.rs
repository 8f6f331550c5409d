//! Output directory handling. Every file is written to a temporary file in
//! the target directory and renamed into place.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::CliError;

pub struct OutDir {
    root: PathBuf,
    header: Vec<String>,
}

impl OutDir {
    pub fn create(root: PathBuf, header: Vec<String>) -> Result<Self, CliError> {
        std::fs::create_dir_all(&root).map_err(|e| {
            CliError::usage(format!("cannot create output directory {}: {e}", root.display()))
        })?;
        Ok(Self { root, header })
    }

    /// Comment lines written at the top of every CSV.
    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Write `name` atomically through `f`.
    pub fn write<F>(&self, name: &str, f: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut BufWriter<&mut NamedTempFile>) -> Result<(), CliError>,
    {
        let target = self.path(name);
        let mut tmp = NamedTempFile::new_in(&self.root).map_err(io_err(&target))?;
        {
            let mut w = BufWriter::new(&mut tmp);
            f(&mut w)?;
            w.flush().map_err(io_err(&target))?;
        }
        tmp.persist(&target)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {}", target.display(), e.error)))?;
        log::info!("wrote {}", target.display());
        Ok(target)
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(|e| CliError::runtime(e.to_string()))?;
            writeln!(w).map_err(|e| CliError::runtime(e.to_string()))
        })
    }
}

fn io_err(p: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::runtime(format!("cannot write {}: {e}", p.display()))
}
