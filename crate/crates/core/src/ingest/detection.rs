//! Per-frame detection labels in YOLO text format and the frame metadata needed
//! to place each detection along the board axis.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DetectionError {
    #[error("line {line}: expected 5 tokens `class xc yc w h`, found {found}")]
    TokenCount { line: usize, found: usize },
    #[error("line {line}: `{token}` is not a number")]
    NotNumeric { line: usize, token: String },
    #[error("line {line}: {field} = {value} is out of range")]
    OutOfRange {
        line: usize,
        field: &'static str,
        value: f64,
    },
    #[error("line {line}: box does not fit inside the frame")]
    NeedsClipping { line: usize },
    #[error("invalid frame metadata: {0}")]
    Frame(String),
    #[error("label file name `{0}` is not `<specimen>_<surface>_<frame>.txt`")]
    FileName(String),
}

/// Where a frame sits on the conveyor.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMeta {
    pub specimen_id: String,
    pub surface: u8,
    /// 1-based position of the frame within the board's capture sequence.
    pub frame_index: u32,
    /// Conveyor advance between consecutive frames (velocity times frame interval).
    pub frame_advance_mm: f64,
    /// Physical length imaged by one frame along the board axis.
    pub frame_length_mm: f64,
}

impl FrameMeta {
    pub fn validate(&self) -> Result<(), DetectionError> {
        if !(1..=4).contains(&self.surface) {
            return Err(DetectionError::Frame(format!("surface {} not in 1..=4", self.surface)));
        }
        if self.frame_index < 1 {
            return Err(DetectionError::Frame("frame_index must be >= 1".into()));
        }
        if !(self.frame_advance_mm > 0.0 && self.frame_advance_mm.is_finite()) {
            return Err(DetectionError::Frame(format!(
                "frame_advance_mm must be positive, got {}",
                self.frame_advance_mm
            )));
        }
        if !(self.frame_length_mm > 0.0 && self.frame_length_mm.is_finite()) {
            return Err(DetectionError::Frame(format!(
                "frame_length_mm must be positive, got {}",
                self.frame_length_mm
            )));
        }
        Ok(())
    }
}

/// Label file stem parts: `(specimen, surface, frame)`.
///
/// The specimen id may itself contain underscores; the last two fields are split off the right.
pub fn parse_label_file_name(path: &Path) -> Result<(String, u8, u32), DetectionError> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default()
        .to_owned();
    let bad = || DetectionError::FileName(name.clone());
    let stem = name.strip_suffix(".txt").ok_or_else(bad)?;
    let mut parts = stem.rsplitn(3, '_');
    let frame = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let surface = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let specimen = parts.next().filter(|s| !s.is_empty()).ok_or_else(bad)?;
    Ok((specimen.to_owned(), surface, frame))
}

pub fn label_file_name(specimen_id: &str, surface: u8, frame_index: u32) -> String {
    format!("{specimen_id}_{surface}_{frame_index}.txt")
}

/// One detected knot bounding box, normalized to the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub frame: FrameMeta,
    /// 0-based line position within the label file.
    pub ordinal: usize,
    pub x_center: f64,
    pub y_center: f64,
    pub box_width: f64,
    pub box_height: f64,
}

impl DetectionRecord {
    /// Checks ranges; `line` is used for error reporting.
    pub fn validate(&self, line: usize) -> Result<(), DetectionError> {
        let check = |field, value: f64, lo_open: bool| {
            let ok = if lo_open {
                value > 0.0 && value <= 1.0
            } else {
                (0.0..=1.0).contains(&value)
            };
            if ok {
                Ok(())
            } else {
                Err(DetectionError::OutOfRange { line, field, value })
            }
        };
        check("x_center", self.x_center, false)?;
        check("y_center", self.y_center, false)?;
        check("width", self.box_width, true)?;
        check("height", self.box_height, true)?;
        let fits = |c: f64, s: f64| c - s / 2.0 >= 0.0 && c + s / 2.0 <= 1.0;
        if !fits(self.x_center, self.box_width) || !fits(self.y_center, self.box_height) {
            return Err(DetectionError::NeedsClipping { line });
        }
        Ok(())
    }

    /// YOLO label line with class 0.
    pub fn to_label_line(&self) -> String {
        format!(
            "0 {} {} {} {}",
            self.x_center, self.y_center, self.box_width, self.box_height
        )
    }
}

/// Parses one label file. Blank lines are skipped; ordinals count records only.
pub fn parse_detection_file(text: &str, frame: &FrameMeta) -> Result<Vec<DetectionRecord>, DetectionError> {
    frame.validate()?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != 5 {
            return Err(DetectionError::TokenCount {
                line,
                found: tokens.len(),
            });
        }
        let mut values = [0.0f64; 5];
        for (v, tok) in values.iter_mut().zip(&tokens) {
            *v = tok
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DetectionError::NotNumeric {
                    line,
                    token: (*tok).to_owned(),
                })?;
        }
        // values[0] is the class id; the detector has a single class.
        let det = DetectionRecord {
            frame: frame.clone(),
            ordinal: out.len(),
            x_center: values[1],
            y_center: values[2],
            box_width: values[3],
            box_height: values[4],
        };
        det.validate(line)?;
        out.push(det);
    }
    Ok(out)
}

/// Distance in mm from the board start to the detection center.
///
/// Frame `n` starts at `(n - 1) * advance`; the center sits `x_center * frame_length` into it.
pub fn longitudinal_coordinate(det: &DetectionRecord) -> f64 {
    let f = &det.frame;
    f64::from(f.frame_index - 1) * f.frame_advance_mm + det.x_center * f.frame_length_mm
}
