//! Reading the on-disk inputs: boards, measurements and a directory of label files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::detection::{parse_detection_file, parse_label_file_name, DetectionError, DetectionRecord, FrameMeta};
use super::records::MeasurementRow;
use crate::features::BoardGeometry;

#[derive(Debug, Error)]
pub enum InputError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: {source}", path.display())]
    Label { path: PathBuf, source: DetectionError },
    #[error("board `{0}` listed twice")]
    DuplicateBoard(String),
    #[error("invalid board `{0}`: dimensions must be finite and positive")]
    InvalidBoard(String),
}

impl InputError {
    /// True when the failure is about reading bytes rather than their content.
    pub fn is_io(&self) -> bool {
        match self {
            InputError::Io { .. } => true,
            InputError::Csv { source, .. } => source.is_io_error(),
            _ => false,
        }
    }
}

fn csv_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, InputError> {
    let file = fs::File::open(path).map_err(|source| InputError::Io {
        path: path.to_owned(),
        source,
    })?;
    csv::Reader::from_reader(std::io::BufReader::new(file))
        .deserialize()
        .collect::<csv::Result<Vec<T>>>()
        .map_err(|source| InputError::Csv {
            path: path.to_owned(),
            source,
        })
}

pub fn read_boards(path: &Path) -> Result<BTreeMap<String, BoardGeometry>, InputError> {
    let mut out = BTreeMap::new();
    for b in csv_rows::<BoardGeometry>(path)? {
        if b.validate().is_err() {
            return Err(InputError::InvalidBoard(b.specimen_id));
        }
        let id = b.specimen_id.clone();
        if out.insert(id.clone(), b).is_some() {
            return Err(InputError::DuplicateBoard(id));
        }
    }
    Ok(out)
}

pub fn read_measurements(path: &Path) -> Result<Vec<MeasurementRow>, InputError> {
    csv_rows(path)
}

/// Parses every `*.txt` label file in `dir`, in file-name order.
pub fn read_label_dir(dir: &Path, frame_advance_mm: f64, frame_length_mm: f64) -> Result<Vec<DetectionRecord>, InputError> {
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| InputError::Io { path, source }
    };
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io(dir))? {
        let path = entry.map_err(io(dir))?.path();
        if path.extension().is_some_and(|e| e == "txt") {
            paths.push(path);
        }
    }
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        let label = |source| InputError::Label {
            path: path.clone(),
            source,
        };
        let (specimen_id, surface, frame_index) = parse_label_file_name(&path).map_err(label)?;
        let frame = FrameMeta {
            specimen_id,
            surface,
            frame_index,
            frame_advance_mm,
            frame_length_mm,
        };
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        out.extend(parse_detection_file(&text, &frame).map_err(label)?);
    }
    Ok(out)
}
