//! Knot records: detection geometry joined with per-knot physical measurements.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::detection::{longitudinal_coordinate, DetectionRecord};
use crate::features::BoardGeometry;

/// One knot occurrence on one board surface.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotRecord {
    pub specimen_id: String,
    /// Ground-truth knot number within the specimen; absent at inference time.
    pub knot_id: Option<u32>,
    pub surface: u8,
    pub longitudinal_mm: f64,
    pub k1_mm: f64,
    pub k2_mm: f64,
    pub d_min_mm: f64,
    pub d_max_mm: f64,
    /// Only recorded on surfaces where the pith appears.
    pub dist_center_mm: Option<f64>,
    pub knot_type: u8,
    pub pith_location: u8,
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid knot record: {0}")]
pub struct RecordError(pub String);

impl KnotRecord {
    pub fn validate(&self) -> Result<(), RecordError> {
        let fail = |msg: String| Err(RecordError(msg));
        if !(1..=4).contains(&self.surface) {
            return fail(format!("surface {} not in 1..=4", self.surface));
        }
        if !(1..=5).contains(&self.knot_type) {
            return fail(format!("knot_type {} not in 1..=5", self.knot_type));
        }
        if self.pith_location > 6 {
            return fail(format!("pith_location {} not in 0..=6", self.pith_location));
        }
        let non_negative = [
            ("longitudinal_mm", self.longitudinal_mm),
            ("k1_mm", self.k1_mm),
            ("k2_mm", self.k2_mm),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        for (name, v) in [("d_min_mm", self.d_min_mm), ("d_max_mm", self.d_max_mm)] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} = {v} must be finite and > 0"));
            }
        }
        if let Some(v) = self.dist_center_mm {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("dist_center_mm = {v} must be finite and >= 0"));
            }
        }
        if self.k2_mm < self.k1_mm {
            return fail(format!("k2_mm {} < k1_mm {}", self.k2_mm, self.k1_mm));
        }
        if self.d_max_mm < self.d_min_mm {
            return fail(format!("d_max_mm {} < d_min_mm {}", self.d_max_mm, self.d_min_mm));
        }
        Ok(())
    }
}

/// Row of the measurements CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRow {
    pub specimen_id: String,
    pub surface: u8,
    pub frame: u32,
    pub ordinal: usize,
    pub knot_id: Option<u32>,
    pub k1_mm: f64,
    pub k2_mm: f64,
    pub d_min_mm: f64,
    pub d_max_mm: f64,
    pub dist_center_mm: Option<f64>,
    pub knot_type: u8,
    pub pith_location: u8,
}

/// Identity of a detection: `(specimen, surface, frame, ordinal)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct DetectionKey {
    pub specimen_id: String,
    pub surface: u8,
    pub frame: u32,
    pub ordinal: usize,
}

impl std::fmt::Display for DetectionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({}, surface {}, frame {}, #{})",
            self.specimen_id, self.surface, self.frame, self.ordinal
        )
    }
}

impl DetectionKey {
    pub fn of_detection(d: &DetectionRecord) -> Self {
        Self {
            specimen_id: d.frame.specimen_id.clone(),
            surface: d.frame.surface,
            frame: d.frame.frame_index,
            ordinal: d.ordinal,
        }
    }

    pub fn of_measurement(m: &MeasurementRow) -> Self {
        Self {
            specimen_id: m.specimen_id.clone(),
            surface: m.surface,
            frame: m.frame,
            ordinal: m.ordinal,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AssemblyError {
    #[error("no measurement row for detection {0}")]
    MissingMeasurement(DetectionKey),
    #[error("duplicate detection {0}")]
    DuplicateDetection(DetectionKey),
    #[error("duplicate measurement row {0}")]
    DuplicateMeasurement(DetectionKey),
    #[error("no board geometry for specimen `{0}`")]
    MissingBoard(String),
    #[error("detection {key}: {source}")]
    Invalid { key: DetectionKey, source: RecordError },
}

/// Joins detections with their measurement rows.
///
/// Output is ordered by detection key. Measurement rows without a detection are ignored.
pub fn assemble_knot_records(
    detections: &[DetectionRecord],
    measurements: &[MeasurementRow],
    boards: &BTreeMap<String, BoardGeometry>,
) -> Result<Vec<KnotRecord>, AssemblyError> {
    let mut by_key = BTreeMap::new();
    for m in measurements {
        let key = DetectionKey::of_measurement(m);
        if by_key.insert(key.clone(), m).is_some() {
            return Err(AssemblyError::DuplicateMeasurement(key));
        }
    }
    let mut seen = BTreeSet::new();
    let mut keyed = Vec::with_capacity(detections.len());
    for d in detections {
        let key = DetectionKey::of_detection(d);
        if !seen.insert(key.clone()) {
            return Err(AssemblyError::DuplicateDetection(key));
        }
        let board = boards
            .get(&key.specimen_id)
            .ok_or_else(|| AssemblyError::MissingBoard(key.specimen_id.clone()))?;
        let m = by_key
            .get(&key)
            .ok_or_else(|| AssemblyError::MissingMeasurement(key.clone()))?;
        let rec = KnotRecord {
            specimen_id: key.specimen_id.clone(),
            knot_id: m.knot_id,
            surface: d.frame.surface,
            longitudinal_mm: longitudinal_coordinate(d),
            k1_mm: m.k1_mm,
            k2_mm: m.k2_mm,
            d_min_mm: m.d_min_mm,
            d_max_mm: m.d_max_mm,
            dist_center_mm: m.dist_center_mm,
            knot_type: m.knot_type,
            pith_location: m.pith_location,
        };
        let checked = rec.validate().and_then(|_| {
            if rec.longitudinal_mm > board.length_mm {
                Err(RecordError(format!(
                    "longitudinal {} mm beyond board length {} mm",
                    rec.longitudinal_mm, board.length_mm
                )))
            } else {
                Ok(())
            }
        });
        if let Err(source) = checked {
            return Err(AssemblyError::Invalid { key, source });
        }
        keyed.push((key, rec));
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(keyed.into_iter().map(|(_, r)| r).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::FrameMeta;

    fn board() -> BTreeMap<String, BoardGeometry> {
        let b = BoardGeometry::new("S1", 5000.0, 100.0, 40.0).unwrap();
        BTreeMap::from([("S1".to_owned(), b)])
    }

    fn detection(surface: u8, frame: u32, ordinal: usize) -> DetectionRecord {
        DetectionRecord {
            frame: FrameMeta {
                specimen_id: "S1".into(),
                surface,
                frame_index: frame,
                frame_advance_mm: 500.0,
                frame_length_mm: 500.0,
            },
            ordinal,
            x_center: 0.5,
            y_center: 0.5,
            box_width: 0.1,
            box_height: 0.1,
        }
    }

    fn measurement(surface: u8, frame: u32, ordinal: usize) -> MeasurementRow {
        MeasurementRow {
            specimen_id: "S1".into(),
            surface,
            frame,
            ordinal,
            knot_id: Some(1),
            k1_mm: 20.0,
            k2_mm: 30.0,
            d_min_mm: 8.0,
            d_max_mm: 12.0,
            dist_center_mm: None,
            knot_type: 2,
            pith_location: 3,
        }
    }

    #[test]
    fn unit_join() {
        let recs = assemble_knot_records(&[detection(1, 3, 0)], &[measurement(1, 3, 0)], &board()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].longitudinal_mm, 1250.0);
        assert_eq!(recs[0].k1_mm, 20.0);
        assert_eq!(recs[0].knot_id, Some(1));
    }

    #[test]
    fn k2_below_k1_is_rejected() {
        let mut m = measurement(1, 1, 0);
        m.k1_mm = 30.0;
        m.k2_mm = 20.0;
        let err = assemble_knot_records(&[detection(1, 1, 0)], &[m], &board()).unwrap_err();
        assert!(matches!(err, AssemblyError::Invalid { .. }));
        assert!(err.to_string().contains("surface 1, frame 1"));
    }

    #[test]
    fn same_frame_on_two_surfaces() {
        let recs = assemble_knot_records(
            &[detection(2, 4, 0), detection(1, 4, 0)],
            &[measurement(1, 4, 0), measurement(2, 4, 0)],
            &board(),
        )
        .unwrap();
        assert_eq!(recs.iter().map(|r| r.surface).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn missing_and_duplicate_keys() {
        assert!(matches!(
            assemble_knot_records(&[detection(1, 1, 0)], &[measurement(1, 1, 1)], &board()),
            Err(AssemblyError::MissingMeasurement(_))
        ));
        assert!(matches!(
            assemble_knot_records(
                &[detection(1, 1, 0), detection(1, 1, 0)],
                &[measurement(1, 1, 0)],
                &board()
            ),
            Err(AssemblyError::DuplicateDetection(_))
        ));
        assert!(matches!(
            assemble_knot_records(
                &[detection(1, 1, 0)],
                &[measurement(1, 1, 0), measurement(1, 1, 0)],
                &board()
            ),
            Err(AssemblyError::DuplicateMeasurement(_))
        ));
        assert!(matches!(
            assemble_knot_records(&[detection(1, 1, 0)], &[measurement(1, 1, 0)], &BTreeMap::new()),
            Err(AssemblyError::MissingBoard(_))
        ));
    }
}
