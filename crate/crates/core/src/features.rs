//! Normalized 9-dimensional knot feature vectors.
//!
//! Positional measurements are divided by the board dimension they are measured
//! against: the width for surfaces 1 and 3, the thickness for surfaces 2 and 4, and
//! the board length for the longitudinal coordinate. Categorical codes pass through
//! unchanged.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::KnotRecord;

pub const FEATURE_DIM: usize = 9;

pub const SURFACE: usize = 0;
pub const D_MIN: usize = 1;
pub const D_MAX: usize = 2;
pub const K1: usize = 3;
pub const K2: usize = 4;
pub const LONGITUDINAL: usize = 5;
pub const DIST_CENTER: usize = 6;
pub const KNOT_TYPE: usize = 7;
pub const PITH_TYPE: usize = 8;

/// Column names in canonical order, as written to the features CSV.
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "surface",
    "d_min",
    "d_max",
    "k1",
    "k2",
    "longitudinal",
    "dist_center",
    "knot_type",
    "pith_type",
];

/// Human-readable labels in canonical order.
pub const FEATURE_LABELS: [&str; FEATURE_DIM] = [
    "Surface",
    "d_min",
    "d_max",
    "k1",
    "k2",
    "Longitudinal Coordinate",
    "Distance of Knot Center to Bottom",
    "Knot Type",
    "Pith Type",
];

/// Slack allowed above 1.0 for bounded normalized features.
const BOUND_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("surface {0} not in 1..=4")]
    Surface(u8),
    #[error("record belongs to specimen `{record}` but board is `{board}`")]
    SpecimenMismatch { record: String, board: String },
    #[error("{field} normalizes to {value}, outside [0, 1]: measurement exceeds board dimension")]
    OutOfBounds { field: &'static str, value: f64 },
    #[error("invalid board `{0}`: dimensions must be finite and positive")]
    Board(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardGeometry {
    pub specimen_id: String,
    pub length_mm: f64,
    pub width_mm: f64,
    pub thickness_mm: f64,
}

impl BoardGeometry {
    pub fn new(
        specimen_id: impl Into<String>,
        length_mm: f64,
        width_mm: f64,
        thickness_mm: f64,
    ) -> Result<Self, FeatureError> {
        let b = Self {
            specimen_id: specimen_id.into(),
            length_mm,
            width_mm,
            thickness_mm,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let ok = [self.length_mm, self.width_mm, self.thickness_mm]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(FeatureError::Board(self.specimen_id.clone()))
        }
    }
}

/// Board dimension that positional measurements on `surface` are relative to.
pub fn surface_divisor(surface: u8, board: &BoardGeometry) -> Result<f64, FeatureError> {
    match surface {
        1 | 3 => Ok(board.width_mm),
        2 | 4 => Ok(board.thickness_mm),
        s => Err(FeatureError::Surface(s)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub fn build_feature_vector(rec: &KnotRecord, board: &BoardGeometry) -> Result<FeatureVector, FeatureError> {
    if rec.specimen_id != board.specimen_id {
        return Err(FeatureError::SpecimenMismatch {
            record: rec.specimen_id.clone(),
            board: board.specimen_id.clone(),
        });
    }
    let div = surface_divisor(rec.surface, board)?;
    let bounded = |field, value: f64| {
        if (0.0..=1.0 + BOUND_EPS).contains(&value) {
            Ok(value)
        } else {
            Err(FeatureError::OutOfBounds { field, value })
        }
    };
    let mut v = [0.0; FEATURE_DIM];
    v[SURFACE] = f64::from(rec.surface);
    v[D_MIN] = rec.d_min_mm / div;
    v[D_MAX] = rec.d_max_mm / div;
    v[K1] = bounded("k1", rec.k1_mm / div)?;
    v[K2] = bounded("k2", rec.k2_mm / div)?;
    v[LONGITUDINAL] = bounded("longitudinal", rec.longitudinal_mm / board.length_mm)?;
    // pith not visible on this surface
    v[DIST_CENTER] = match rec.dist_center_mm {
        Some(d) => bounded("dist_center", d / div)?,
        None => 0.0,
    };
    v[KNOT_TYPE] = f64::from(rec.knot_type);
    v[PITH_TYPE] = f64::from(rec.pith_location);
    Ok(FeatureVector(v))
}

/// A feature vector with its identity, as stored in the features CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub specimen_id: String,
    pub knot_id: Option<u32>,
    pub features: FeatureVector,
}

#[derive(Serialize, Deserialize)]
struct FeatureCsvRow {
    specimen_id: String,
    knot_id: Option<u32>,
    surface: f64,
    d_min: f64,
    d_max: f64,
    k1: f64,
    k2: f64,
    longitudinal: f64,
    dist_center: f64,
    knot_type: f64,
    pith_type: f64,
}

impl From<&FeatureRow> for FeatureCsvRow {
    fn from(r: &FeatureRow) -> Self {
        let v = r.features.0;
        Self {
            specimen_id: r.specimen_id.clone(),
            knot_id: r.knot_id,
            surface: v[SURFACE],
            d_min: v[D_MIN],
            d_max: v[D_MAX],
            k1: v[K1],
            k2: v[K2],
            longitudinal: v[LONGITUDINAL],
            dist_center: v[DIST_CENTER],
            knot_type: v[KNOT_TYPE],
            pith_type: v[PITH_TYPE],
        }
    }
}

impl From<FeatureCsvRow> for FeatureRow {
    fn from(r: FeatureCsvRow) -> Self {
        let mut v = [0.0; FEATURE_DIM];
        v[SURFACE] = r.surface;
        v[D_MIN] = r.d_min;
        v[D_MAX] = r.d_max;
        v[K1] = r.k1;
        v[K2] = r.k2;
        v[LONGITUDINAL] = r.longitudinal;
        v[DIST_CENTER] = r.dist_center;
        v[KNOT_TYPE] = r.knot_type;
        v[PITH_TYPE] = r.pith_type;
        Self {
            specimen_id: r.specimen_id,
            knot_id: r.knot_id,
            features: FeatureVector(v),
        }
    }
}

pub fn write_features<W: std::io::Write>(w: W, rows: &[FeatureRow]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(FeatureCsvRow::from(r))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_features<R: std::io::Read>(r: R) -> csv::Result<Vec<FeatureRow>> {
    csv::Reader::from_reader(r)
        .deserialize::<FeatureCsvRow>()
        .map(|row| row.map(FeatureRow::from))
        .collect()
}

/// Builds feature rows for records, looking boards up by specimen id.
pub fn build_feature_rows(
    records: &[KnotRecord],
    boards: &std::collections::BTreeMap<String, BoardGeometry>,
) -> Result<Vec<FeatureRow>, FeatureError> {
    records
        .iter()
        .map(|rec| {
            let board = boards
                .get(&rec.specimen_id)
                .ok_or_else(|| FeatureError::Board(rec.specimen_id.clone()))?;
            Ok(FeatureRow {
                specimen_id: rec.specimen_id.clone(),
                knot_id: rec.knot_id,
                features: build_feature_vector(rec, board)?,
            })
        })
        .collect()
}
