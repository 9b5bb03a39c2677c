//! Synthetic boards with known knot pairs.
//!
//! Each knot is an idealized branch crossing the board at one longitudinal
//! position. Its surface occurrences share that position, the knot type and the
//! board's pith location; transverse extents follow from where the branch exits.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::Partition;
use crate::features::{surface_divisor, BoardGeometry};
use crate::ingest::{
    label_file_name, longitudinal_coordinate, DetectionKey, DetectionRecord, FrameMeta, KnotRecord, MeasurementRow,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error("specimen {specimen}: {knots} knots do not fit on a {length_mm} mm board")]
    Infeasible {
        specimen: String,
        knots: usize,
        length_mm: f64,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_specimens: usize,
    /// Inclusive range.
    pub knots_per_specimen: [usize; 2],
    pub length_mm: [f64; 2],
    pub width_mm: [f64; 2],
    pub thickness_mm: [f64; 2],
    /// Inclusive range within 1..=4.
    pub surfaces_per_knot: [u8; 2],
    /// Absolute jitter in mm; when absent, `jitter_width_fraction * width` per board.
    pub jitter_sigma: Option<f64>,
    pub jitter_width_fraction: f64,
    /// Transverse knot size relative to the surface dimension.
    pub knot_size: [f64; 2],
    /// Smallest distance between neighboring knot positions.
    pub min_gap_mm: f64,
    /// Knot-free zone at both board ends.
    pub end_margin_mm: f64,
    /// Chance that a two-surface knot exits through adjacent rather than opposite faces.
    pub adjacent_prob: f64,
    /// Chance that a knot takes its board's dominant type.
    pub dominant_type_prob: f64,
    /// Frame length and advance used for the emitted label files.
    pub frame_length_mm: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_specimens: 40,
            knots_per_specimen: [8, 16],
            length_mm: [3000.0, 5000.0],
            width_mm: [100.0, 200.0],
            thickness_mm: [40.0, 60.0],
            surfaces_per_knot: [2, 2],
            jitter_sigma: None,
            jitter_width_fraction: 0.01,
            knot_size: [0.15, 0.45],
            min_gap_mm: 150.0,
            end_margin_mm: 50.0,
            adjacent_prob: 0.0,
            dominant_type_prob: 0.7,
            frame_length_mm: 500.0,
            seed: 0,
        }
    }
}

fn range_ok(r: [f64; 2]) -> bool {
    r[0].is_finite() && r[1].is_finite() && r[0] > 0.0 && r[0] <= r[1]
}

fn draw<R: Rng + ?Sized>(r: [f64; 2], rng: &mut R) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::Config(m));
        if self.knots_per_specimen[0] > self.knots_per_specimen[1] {
            return fail(format!("knots_per_specimen {:?} is empty", self.knots_per_specimen));
        }
        for (name, r) in [
            ("length_mm", self.length_mm),
            ("width_mm", self.width_mm),
            ("thickness_mm", self.thickness_mm),
            ("knot_size", self.knot_size),
        ] {
            if !range_ok(r) {
                return fail(format!("{name} {r:?} must be a non-empty positive range"));
            }
        }
        if self.knot_size[1] > 1.0 {
            return fail(format!("knot_size {:?}: knot larger than the board face", self.knot_size));
        }
        let [lo, hi] = self.surfaces_per_knot;
        if !(1 <= lo && lo <= hi && hi <= 4) {
            return fail(format!("surfaces_per_knot {:?} must lie in 1..=4", self.surfaces_per_knot));
        }
        if let Some(s) = self.jitter_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return fail(format!("jitter_sigma {s} must be >= 0"));
            }
        }
        if !(self.jitter_width_fraction >= 0.0 && self.jitter_width_fraction.is_finite()) {
            return fail(format!("jitter_width_fraction {} must be >= 0", self.jitter_width_fraction));
        }
        for (name, p) in [
            ("adjacent_prob", self.adjacent_prob),
            ("dominant_type_prob", self.dominant_type_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} {p} not in [0, 1]"));
            }
        }
        if !(self.min_gap_mm >= 0.0 && self.end_margin_mm >= 0.0) {
            return fail("min_gap_mm and end_margin_mm must be >= 0".into());
        }
        if !(self.frame_length_mm > 0.0 && self.frame_length_mm.is_finite()) {
            return fail(format!("frame_length_mm {} must be positive", self.frame_length_mm));
        }
        Ok(())
    }

    /// Jitter standard deviation for a board of the given width.
    pub fn sigma_for(&self, width_mm: f64) -> f64 {
        self.jitter_sigma.unwrap_or(self.jitter_width_fraction * width_mm)
    }
}

/// A generated board with its records in canonical detection order.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpecimen {
    pub board: BoardGeometry,
    pub records: Vec<KnotRecord>,
    pub detections: Vec<DetectionRecord>,
    pub measurements: Vec<MeasurementRow>,
    pub truth: Partition,
}

pub fn specimen_id(index: usize) -> String {
    format!("SYN{:04}", index + 1)
}

fn opposite(s: u8) -> u8 {
    (s + 1) % 4 + 1
}

fn next(s: u8) -> u8 {
    s % 4 + 1
}

/// Surfaces a knot shows on, in increasing code order.
fn choose_surfaces<R: Rng + ?Sized>(count: u8, adjacent_prob: f64, rng: &mut R) -> Vec<u8> {
    let start = rng.random_range(1..=4u8);
    let mut out = match count {
        1 => vec![start],
        2 if rng.random_bool(adjacent_prob) => vec![start, next(start)],
        2 => vec![start, opposite(start)],
        3 => vec![start, next(start), next(next(start))],
        _ => vec![1, 2, 3, 4],
    };
    out.sort_unstable();
    out
}

fn is_adjacent_pair(s: &[u8]) -> bool {
    s.len() == 2 && opposite(s[0]) != s[1]
}

struct Occurrence {
    knot_id: u32,
    surface: u8,
    x_mm: f64,
    k1: f64,
    k2: f64,
    d_min: f64,
    d_max: f64,
    dist_center: Option<f64>,
    knot_type: u8,
}

/// Sorted positions in `[margin, length - margin]` at least `gap` apart.
fn knot_positions<R: Rng + ?Sized>(n: usize, length: f64, margin: f64, gap: f64, rng: &mut R) -> Option<Vec<f64>> {
    if n == 0 {
        return Some(Vec::new());
    }
    let slack = length - 2.0 * margin - (n - 1) as f64 * gap;
    if slack < 0.0 {
        return None;
    }
    let mut u: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * slack).collect();
    u.sort_by(f64::total_cmp);
    Some(u.iter().enumerate().map(|(i, v)| margin + v + i as f64 * gap).collect())
}

/// Detection whose longitudinal coordinate reproduces `x` up to float rounding.
fn detection_for(specimen: &str, surface: u8, x: f64, len_mm: f64, k: (f64, f64), div: f64, frame_mm: f64) -> DetectionRecord {
    let frame_index = (x / frame_mm).floor() as u32 + 1;
    let xc = ((x - f64::from(frame_index - 1) * frame_mm) / frame_mm).clamp(0.0, 1.0);
    let box_width = (len_mm / frame_mm).min(2.0 * xc.min(1.0 - xc)).min(1.0);
    let yc = ((k.0 + k.1) / 2.0 / div).clamp(0.0005, 0.9995);
    let box_height = ((k.1 - k.0) / div).max(0.001).min(2.0 * yc.min(1.0 - yc));
    DetectionRecord {
        frame: FrameMeta {
            specimen_id: specimen.to_owned(),
            surface,
            frame_index,
            frame_advance_mm: frame_mm,
            frame_length_mm: frame_mm,
        },
        ordinal: 0,
        x_center: xc,
        y_center: yc,
        box_width,
        box_height,
    }
}

pub fn generate_specimen<R: Rng + ?Sized>(cfg: &SynthConfig, specimen: &str, rng: &mut R) -> Result<SynthSpecimen, SynthError> {
    cfg.validate()?;
    let board = BoardGeometry {
        specimen_id: specimen.to_owned(),
        length_mm: draw(cfg.length_mm, rng),
        width_mm: draw(cfg.width_mm, rng),
        thickness_mm: draw(cfg.thickness_mm, rng),
    };
    let n_knots = rng.random_range(cfg.knots_per_specimen[0]..=cfg.knots_per_specimen[1]);
    let pith_location = rng.random_range(0..=6u8);
    let dominant = rng.random_range(1..=5u8);
    let sigma = cfg.sigma_for(board.width_mm);
    let noise = Normal::new(0.0, sigma).map_err(|e| SynthError::Config(e.to_string()))?;
    let jitter = |v: f64, rng: &mut R| if sigma > 0.0 { v + noise.sample(rng) } else { v };

    let positions = knot_positions(n_knots, board.length_mm, cfg.end_margin_mm, cfg.min_gap_mm, rng).ok_or(
        SynthError::Infeasible {
            specimen: specimen.to_owned(),
            knots: n_knots,
            length_mm: board.length_mm,
        },
    )?;

    let div = |s: u8| surface_divisor(s, &board).expect("surface in 1..=4");
    let mut occurrences = Vec::new();
    for (k, &x) in positions.iter().enumerate() {
        let knot_id = k as u32 + 1;
        let knot_type = if rng.random_bool(cfg.dominant_type_prob) {
            dominant
        } else {
            let others: Vec<u8> = (1..=5).filter(|&t| t != dominant).collect();
            *others.choose(rng).expect("four other types")
        };
        let r = draw(cfg.knot_size, rng);
        let c13 = rng.random_range(r / 2.0..=1.0 - r / 2.0);
        let c24 = rng.random_range(r / 2.0..=1.0 - r / 2.0);
        let elongation = rng.random_range(0.6..=1.4);
        let length_along = r * board.width_mm * elongation;
        let count = rng.random_range(cfg.surfaces_per_knot[0]..=cfg.surfaces_per_knot[1]);
        let surfaces = choose_surfaces(count, cfg.adjacent_prob, rng);
        let corner = is_adjacent_pair(&surfaces);
        for (j, &s) in surfaces.iter().enumerate() {
            let d = div(s);
            // relative extent on this face
            let (lo, hi) = if corner {
                // the branch exits at the shared edge: upper end of one face, lower end of the other
                let first_in_cycle = next(surfaces[0]) == surfaces[1];
                if (j == 0) == first_in_cycle {
                    (1.0 - r, 1.0)
                } else {
                    (0.0, r)
                }
            } else {
                let c = if s % 2 == 1 { c13 } else { c24 };
                (c - r / 2.0, c + r / 2.0)
            };
            let transverse = (hi - lo) * d;
            let k1 = jitter(lo * d, rng).clamp(0.0, d);
            let k2 = jitter(hi * d, rng).clamp(k1, d);
            let d_min = jitter(transverse.min(length_along), rng).max(0.1);
            let d_max = jitter(transverse.max(length_along), rng).max(d_min);
            let dist_center = (pith_location == 0).then(|| jitter((lo + hi) / 2.0 * d, rng).clamp(0.0, d));
            let x_mm = jitter(x, rng).clamp(1e-3, board.length_mm);
            occurrences.push(Occurrence {
                knot_id,
                surface: s,
                x_mm,
                k1,
                k2,
                d_min,
                d_max,
                dist_center,
                knot_type,
            });
        }
    }

    let mut keyed: Vec<(DetectionRecord, Occurrence)> = occurrences
        .into_iter()
        .map(|o| {
            let det = detection_for(
                specimen,
                o.surface,
                o.x_mm,
                o.d_max,
                (o.k1, o.k2),
                div(o.surface),
                cfg.frame_length_mm,
            );
            (det, o)
        })
        .collect();
    keyed.sort_by(|(a, oa), (b, ob)| {
        (a.frame.surface, a.frame.frame_index)
            .cmp(&(b.frame.surface, b.frame.frame_index))
            .then(a.x_center.total_cmp(&b.x_center))
            .then(oa.knot_id.cmp(&ob.knot_id))
    });
    let mut ordinals: BTreeMap<(u8, u32), usize> = BTreeMap::new();
    let mut records = Vec::with_capacity(keyed.len());
    let mut detections = Vec::with_capacity(keyed.len());
    let mut measurements = Vec::with_capacity(keyed.len());
    for (mut det, o) in keyed {
        let slot = ordinals.entry((det.frame.surface, det.frame.frame_index)).or_default();
        det.ordinal = *slot;
        *slot += 1;
        let key = DetectionKey::of_detection(&det);
        let longitudinal_mm = longitudinal_coordinate(&det).min(board.length_mm);
        records.push(KnotRecord {
            specimen_id: specimen.to_owned(),
            knot_id: Some(o.knot_id),
            surface: o.surface,
            longitudinal_mm,
            k1_mm: o.k1,
            k2_mm: o.k2,
            d_min_mm: o.d_min,
            d_max_mm: o.d_max,
            dist_center_mm: o.dist_center,
            knot_type: o.knot_type,
            pith_location,
        });
        measurements.push(MeasurementRow {
            specimen_id: key.specimen_id,
            surface: key.surface,
            frame: key.frame,
            ordinal: key.ordinal,
            knot_id: Some(o.knot_id),
            k1_mm: o.k1,
            k2_mm: o.k2,
            d_min_mm: o.d_min,
            d_max_mm: o.d_max,
            dist_center_mm: o.dist_center,
            knot_type: o.knot_type,
            pith_location,
        });
        detections.push(det);
    }
    let labels: Vec<u32> = records.iter().map(|r| r.knot_id.expect("synthetic knots are labeled")).collect();
    Ok(SynthSpecimen {
        truth: Partition::from_labels(specimen, &labels),
        board,
        records,
        detections,
        measurements,
    })
}

/// All specimens; specimen `i` draws from its own stream of the seeded generator.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<Vec<SynthSpecimen>, SynthError> {
    cfg.validate()?;
    (0..cfg.n_specimens)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            generate_specimen(cfg, &specimen_id(i), &mut rng)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRow {
    pub specimen_id: String,
    pub knot_index: usize,
    pub knot_id: u32,
}

pub fn truth_rows(specimens: &[SynthSpecimen]) -> Vec<TruthRow> {
    specimens
        .iter()
        .flat_map(|s| {
            s.records.iter().enumerate().map(|(knot_index, r)| TruthRow {
                specimen_id: r.specimen_id.clone(),
                knot_index,
                knot_id: r.knot_id.expect("synthetic knots are labeled"),
            })
        })
        .collect()
}

pub const BOARDS_FILE: &str = "boards.csv";
pub const MEASUREMENTS_FILE: &str = "measurements.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const LABELS_DIR: &str = "labels";
pub const CONFIG_FILE: &str = "synth.json";

fn csv_file<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), SynthError> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(fs::File::create(path)?));
    wtr.write_record(header)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes boards, measurements, label files, truth and the config echo under `dir`.
pub fn write_dataset(dir: &Path, cfg: &SynthConfig, specimens: &[SynthSpecimen]) -> Result<(), SynthError> {
    fs::create_dir_all(dir.join(LABELS_DIR))?;
    let boards: Vec<&BoardGeometry> = specimens.iter().map(|s| &s.board).collect();
    csv_file(
        &dir.join(BOARDS_FILE),
        &["specimen_id", "length_mm", "width_mm", "thickness_mm"],
        &boards,
    )?;
    let measurements: Vec<&MeasurementRow> = specimens.iter().flat_map(|s| &s.measurements).collect();
    csv_file(
        &dir.join(MEASUREMENTS_FILE),
        &[
            "specimen_id",
            "surface",
            "frame",
            "ordinal",
            "knot_id",
            "k1_mm",
            "k2_mm",
            "d_min_mm",
            "d_max_mm",
            "dist_center_mm",
            "knot_type",
            "pith_location",
        ],
        &measurements,
    )?;
    csv_file(
        &dir.join(TRUTH_FILE),
        &["specimen_id", "knot_index", "knot_id"],
        &truth_rows(specimens),
    )?;
    let mut files: BTreeMap<String, Vec<&DetectionRecord>> = BTreeMap::new();
    for d in specimens.iter().flat_map(|s| &s.detections) {
        let f = &d.frame;
        files
            .entry(label_file_name(&f.specimen_id, f.surface, f.frame_index))
            .or_default()
            .push(d);
    }
    for (name, mut dets) in files {
        dets.sort_by_key(|d| d.ordinal);
        let mut w = BufWriter::new(fs::File::create(dir.join(LABELS_DIR).join(name))?);
        for d in dets {
            writeln!(w, "{}", d.to_label_line())?;
        }
        w.flush()?;
    }
    let mut w = BufWriter::new(fs::File::create(dir.join(CONFIG_FILE))?);
    serde_json::to_writer_pretty(&mut w, cfg)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
