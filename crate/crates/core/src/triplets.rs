//! Triplet construction from ground-truth knot classes, and specimen-level
//! train/validation/test splits.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureRow;
use crate::ingest::KnotRecord;

#[derive(Debug, Error, PartialEq)]
pub enum TripletError {
    #[error("record {index} of specimen `{specimen}` has no knot_id")]
    MissingKnotId { index: usize, specimen: String },
    #[error("need at least 3 specimens to split, got {0}")]
    TooFewSpecimens(usize),
    #[error("unknown split `{0}`")]
    UnknownSplit(String),
    #[error("specimen `{0}` listed more than once")]
    DuplicateSpecimen(String),
}

/// Anything that carries a specimen and an optional ground-truth class.
pub trait Labeled {
    fn specimen_id(&self) -> &str;
    fn knot_id(&self) -> Option<u32>;
}

impl Labeled for KnotRecord {
    fn specimen_id(&self) -> &str {
        &self.specimen_id
    }
    fn knot_id(&self) -> Option<u32> {
        self.knot_id
    }
}

impl Labeled for FeatureRow {
    fn specimen_id(&self) -> &str {
        &self.specimen_id
    }
    fn knot_id(&self) -> Option<u32> {
        self.knot_id
    }
}

/// specimen → knot class → indices into the input slice, in input order.
pub type ClassGroups = BTreeMap<String, BTreeMap<u32, Vec<usize>>>;

pub fn group_by_knot_class<L: Labeled>(records: &[L]) -> Result<ClassGroups, TripletError> {
    let mut groups = ClassGroups::new();
    for (i, r) in records.iter().enumerate() {
        let id = r.knot_id().ok_or_else(|| TripletError::MissingKnotId {
            index: i,
            specimen: r.specimen_id().to_owned(),
        })?;
        groups
            .entry(r.specimen_id().to_owned())
            .or_default()
            .entry(id)
            .or_default()
            .push(i);
    }
    Ok(groups)
}

/// All unordered pairs of a group, lexicographic by position.
pub fn generate_positive_pairs(group: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(group.len() * group.len().saturating_sub(1) / 2);
    for (i, &a) in group.iter().enumerate() {
        for &b in &group[i + 1..] {
            out.push((a, b));
        }
    }
    out
}

/// Uniform draw from the pool; `None` when no negative exists.
pub fn sample_negative<R: Rng + ?Sized>(pool: &[usize], rng: &mut R) -> Option<usize> {
    pool.choose(rng).copied()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub specimen_id: String,
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// One triplet per positive pair, with the negative drawn from the other classes
/// of the same specimen. Pairs in single-class specimens are skipped.
pub fn build_triplets<L: Labeled, R: Rng + ?Sized>(records: &[L], rng: &mut R) -> Result<Vec<Triplet>, TripletError> {
    let groups = group_by_knot_class(records)?;
    let mut out = Vec::new();
    for (specimen, classes) in &groups {
        for (class, members) in classes {
            let pool: Vec<usize> = classes
                .iter()
                .filter(|(c, _)| *c != class)
                .flat_map(|(_, m)| m.iter().copied())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            for (anchor, positive) in generate_positive_pairs(members) {
                if let Some(negative) = sample_negative(&pool, rng) {
                    out.push(Triplet {
                        specimen_id: specimen.clone(),
                        anchor,
                        positive,
                        negative,
                    });
                }
            }
        }
    }
    out.sort_by(|a, b| {
        (&a.specimen_id, a.anchor, a.positive).cmp(&(&b.specimen_id, b.anchor, b.positive))
    });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = TripletError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(TripletError::UnknownSplit(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

impl SplitAssignment {
    pub fn of(&self, specimen: &str) -> Option<Split> {
        if self.train.contains(specimen) {
            Some(Split::Train)
        } else if self.validation.contains(specimen) {
            Some(Split::Validation)
        } else if self.test.contains(specimen) {
            Some(Split::Test)
        } else {
            None
        }
    }

    pub fn set(&self, split: Split) -> &BTreeSet<String> {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    /// `(specimen, split)` rows sorted by specimen.
    pub fn rows(&self) -> Vec<(String, Split)> {
        let mut rows: Vec<_> = [Split::Train, Split::Validation, Split::Test]
            .into_iter()
            .flat_map(|s| self.set(s).iter().map(move |id| (id.clone(), s)))
            .collect();
        rows.sort();
        rows
    }

    pub fn from_rows(rows: impl IntoIterator<Item = (String, Split)>) -> Result<Self, TripletError> {
        let mut out = Self::default();
        for (id, split) in rows {
            if out.of(&id).is_some() {
                return Err(TripletError::DuplicateSpecimen(id));
            }
            match split {
                Split::Train => out.train.insert(id),
                Split::Validation => out.validation.insert(id),
                Split::Test => out.test.insert(id),
            };
        }
        Ok(out)
    }
}

/// Seeded shuffle followed by an 8:1:1 cut: validation and test each get
/// `max(1, floor(n / 10))` specimens, the rest go to training.
pub fn split_specimens<R: Rng + ?Sized>(specimen_ids: &[String], rng: &mut R) -> Result<SplitAssignment, TripletError> {
    let unique: BTreeSet<&String> = specimen_ids.iter().collect();
    if unique.len() != specimen_ids.len() {
        let mut seen = BTreeSet::new();
        let dup = specimen_ids.iter().find(|s| !seen.insert(*s)).cloned().unwrap_or_default();
        return Err(TripletError::DuplicateSpecimen(dup));
    }
    let n = specimen_ids.len();
    if n < 3 {
        return Err(TripletError::TooFewSpecimens(n));
    }
    let mut order = specimen_ids.to_vec();
    order.shuffle(rng);
    let holdout = (n / 10).max(1);
    let validation = order[..holdout].iter().cloned().collect();
    let test = order[holdout..2 * holdout].iter().cloned().collect();
    let train = order[2 * holdout..].iter().cloned().collect();
    Ok(SplitAssignment {
        train,
        validation,
        test,
    })
}

/// Board split and triplets from one seed. The split draws from stream 0 of the
/// seeded generator and negative sampling from stream 1.
pub fn split_and_triplets(rows: &[FeatureRow], seed: u64) -> Result<(SplitAssignment, Vec<Triplet>), TripletError> {
    let ids: Vec<String> = rows
        .iter()
        .map(|r| r.specimen_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let split = split_specimens(&ids, &mut rng)?;
    rng.set_stream(1);
    let triplets = build_triplets(rows, &mut rng)?;
    Ok((split, triplets))
}

#[derive(Serialize, Deserialize)]
struct SplitCsvRow {
    specimen_id: String,
    split: Split,
}

pub fn write_split<W: std::io::Write>(w: W, split: &SplitAssignment) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for (specimen_id, split) in split.rows() {
        wtr.serialize(SplitCsvRow { specimen_id, split })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_split<R: std::io::Read>(r: R) -> Result<SplitAssignment, crate::Error> {
    let rows = csv::Reader::from_reader(r)
        .deserialize::<SplitCsvRow>()
        .map(|r| r.map(|r| (r.specimen_id, r.split)))
        .collect::<csv::Result<Vec<_>>>()?;
    Ok(SplitAssignment::from_rows(rows)?)
}

pub fn write_triplets<W: std::io::Write>(w: W, triplets: &[Triplet]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for t in triplets {
        wtr.serialize(t)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_triplets<R: std::io::Read>(r: R) -> csv::Result<Vec<Triplet>> {
    csv::Reader::from_reader(r).deserialize().collect()
}
