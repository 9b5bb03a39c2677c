use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] knotpair::Error),
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_owned(),
            source,
        }
    }

    /// Attaches the file being processed to a pipeline error.
    pub fn at(path: &Path, source: impl Into<knotpair::Error>) -> Self {
        match source.into() {
            knotpair::Error::Io(e) => CliError::io(path, e),
            e if is_io(&e) => CliError::io(path, std::io::Error::other(e.to_string())),
            e => CliError::Invalid(format!("{}: {e}", path.display())),
        }
    }

    /// 2 for failures to read or write files, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 2,
            CliError::Core(e) if is_io(e) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        if self.exit_code() == 2 {
            "io"
        } else {
            "invalid"
        }
    }

    pub fn path(&self) -> Option<&Path> {
        match self {
            CliError::Io { path, .. } => Some(path),
            _ => None,
        }
    }
}

fn is_io(e: &knotpair::Error) -> bool {
    use knotpair::nn::NnError;
    use knotpair::synth::SynthError;
    match e {
        knotpair::Error::Io(_) => true,
        knotpair::Error::Input(e) => e.is_io(),
        knotpair::Error::Csv(e) => e.is_io_error(),
        knotpair::Error::Json(e) => e.is_io(),
        knotpair::Error::Nn(NnError::Io(_)) => true,
        knotpair::Error::Nn(NnError::Json(e)) => e.is_io(),
        knotpair::Error::Synth(SynthError::Io(_)) => true,
        knotpair::Error::Synth(SynthError::Csv(e)) => e.is_io_error(),
        knotpair::Error::Synth(SynthError::Json(e)) => e.is_io(),
        _ => false,
    }
}

/// The single JSON line written to stderr on failure.
#[derive(Serialize)]
pub struct ErrorLine<'a> {
    pub error: &'static str,
    pub exit_code: u8,
    pub command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub message: String,
}

impl<'a> ErrorLine<'a> {
    pub fn new(command: &'a str, e: &CliError) -> Self {
        Self {
            error: e.kind(),
            exit_code: e.exit_code(),
            command,
            path: e.path().map(|p| p.display().to_string()),
            message: e.to_string(),
        }
    }
}
