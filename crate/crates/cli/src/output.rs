//! Output files and their `.meta.json` sidecars.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

/// Settings that produced an artifact, written next to it as `<name>.meta.json`.
#[derive(Debug, Serialize)]
struct Echo<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    artifact: &'a str,
    seed: u64,
    inputs: &'a BTreeMap<String, String>,
    config: &'a RunConfig,
}

/// Where a subcommand writes, plus what to echo into every artifact.
pub struct Output {
    dir: PathBuf,
    command: &'static str,
    inputs: BTreeMap<String, String>,
    config: RunConfig,
}

impl Output {
    pub fn new(dir: &Path, command: &'static str, config: RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_owned(),
            command,
            inputs: BTreeMap::new(),
            config,
        })
    }

    /// Records an input path in the echo.
    pub fn input(&mut self, name: &str, path: &Path) {
        self.note(name, path.display().to_string());
    }

    /// Records any other per-run input in the echo.
    pub fn note(&mut self, name: &str, value: String) {
        self.inputs.insert(name.to_owned(), value);
    }

    /// Writes `name` through `body`, then its sidecar.
    pub fn write<F>(&self, name: &str, body: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), knotpair::Error>,
    {
        let path = self.dir.join(name);
        write_file(&path, body)?;
        let echo = Echo {
            tool: "knotpair",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            artifact: name,
            seed: self.config.seed,
            inputs: &self.inputs,
            config: &self.config,
        };
        let meta = self.dir.join(format!("{name}.meta.json"));
        write_file(&meta, |w| {
            serde_json::to_writer_pretty(&mut *w, &echo)?;
            writeln!(w)?;
            Ok(())
        })?;
        Ok(path)
    }
}

fn write_file<F>(path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), knotpair::Error>,
{
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(|e| CliError::at(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}
