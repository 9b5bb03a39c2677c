//! Distance-threshold clustering of embeddings and exact-match accuracy.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureRow, FeatureVector};
use crate::nn::{embed_all, ModelParams, NnError, Real};
use crate::triplets::{Split, SplitAssignment};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("partitions cover different knot sets")]
    KnotSetMismatch,
    #[error("partition is not a set of disjoint non-empty clusters over 0..{0}")]
    InvalidPartition(usize),
    #[error("invalid threshold grid: {0}")]
    Grid(String),
    #[error("threshold {0} must be finite and >= 0")]
    Threshold(f64),
    #[error("no specimens to evaluate")]
    Empty,
    #[error("no rows for {0} split")]
    EmptySplit(Split),
    #[error("knot {index} of `{specimen}` has no knot id")]
    MissingKnotId { specimen: String, index: usize },
    #[error("{rows} feature rows but {embeddings} embeddings")]
    RowCount { rows: usize, embeddings: usize },
}

/// Symmetric matrix of Euclidean distances with an exact zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Builds a matrix from explicit upper-triangle distances `(i, j, d)`; unset pairs are infinite.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize, f64)]) -> Self {
        let mut entries = vec![f64::INFINITY; n * n];
        for i in 0..n {
            entries[i * n + i] = 0.0;
        }
        for &(i, j, d) in pairs {
            entries[i * n + j] = d;
            entries[j * n + i] = d;
        }
        Self { n, entries }
    }

    /// Upper-triangle edges sorted by distance, then by index.
    fn sorted_edges(&self) -> Vec<(f64, usize, usize)> {
        let mut edges = Vec::with_capacity(self.n * self.n.saturating_sub(1) / 2);
        for i in 0..self.n {
            for j in i + 1..self.n {
                edges.push((self.get(i, j), i, j));
            }
        }
        edges.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        edges
    }
}

pub fn pairwise_distances(embeddings: ArrayView2<f64>) -> DistanceMatrix {
    let n = embeddings.nrows();
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = embeddings
                .row(i)
                .iter()
                .zip(embeddings.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            entries[i * n + j] = d;
            entries[j * n + i] = d;
        }
    }
    DistanceMatrix { n, entries }
}

/// Clusters of one specimen's knots, as sorted index lists ordered by smallest member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub specimen_id: String,
    pub clusters: Vec<Vec<usize>>,
}

impl Partition {
    /// Normalizes member and cluster order.
    pub fn new(specimen_id: impl Into<String>, clusters: Vec<Vec<usize>>) -> Self {
        let mut clusters: Vec<Vec<usize>> = clusters
            .into_iter()
            .map(|mut c| {
                c.sort_unstable();
                c
            })
            .collect();
        clusters.sort();
        Self {
            specimen_id: specimen_id.into(),
            clusters,
        }
    }

    /// Groups knot indices by equal label.
    pub fn from_labels<L: Ord>(specimen_id: impl Into<String>, labels: &[L]) -> Self {
        let mut groups: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
        for (i, l) in labels.iter().enumerate() {
            groups.entry(l).or_default().push(i);
        }
        Self::new(specimen_id, groups.into_values().collect())
    }

    pub fn knot_count(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    /// Checks the clusters are disjoint, non-empty and cover `0..knot_count()`.
    pub fn validate(&self) -> Result<(), ClusterError> {
        let n = self.knot_count();
        let mut seen = vec![false; n];
        for c in &self.clusters {
            if c.is_empty() {
                return Err(ClusterError::InvalidPartition(n));
            }
            for &i in c {
                if i >= n || std::mem::replace(&mut seen[i], true) {
                    return Err(ClusterError::InvalidPartition(n));
                }
            }
        }
        Ok(())
    }

    /// Cluster id of each knot.
    pub fn labels(&self) -> Vec<usize> {
        let mut out = vec![0; self.knot_count()];
        for (c, members) in self.clusters.iter().enumerate() {
            for &i in members {
                out[i] = c;
            }
        }
        out
    }
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }

    fn partition(&mut self, specimen_id: &str) -> Partition {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..self.parent.len() {
            let r = self.find(i);
            groups.entry(r).or_default().push(i);
        }
        Partition::new(specimen_id, groups.into_values().collect())
    }

    /// Truth clusters that are exactly one component.
    fn matched(&mut self, truth: &Partition) -> usize {
        truth
            .clusters
            .iter()
            .filter(|c| {
                let r = self.find(c[0]);
                self.size[r] == c.len() && c.iter().all(|&i| self.find(i) == r)
            })
            .count()
    }
}

/// Connected components of the graph with an edge wherever `d(i, j) <= threshold`.
pub fn cluster_at_threshold(dm: &DistanceMatrix, threshold: f64) -> Partition {
    let mut uf = UnionFind::new(dm.n);
    for i in 0..dm.n {
        for j in i + 1..dm.n {
            if dm.get(i, j) <= threshold {
                uf.union(i, j);
            }
        }
    }
    uf.partition("")
}

/// `(truth clusters reproduced exactly, truth clusters)`.
pub fn matched_clusters(predicted: &Partition, truth: &Partition) -> Result<(usize, usize), ClusterError> {
    let n = truth.knot_count();
    if predicted.knot_count() != n {
        return Err(ClusterError::KnotSetMismatch);
    }
    predicted.validate().map_err(|_| ClusterError::KnotSetMismatch)?;
    truth.validate()?;
    let predicted: BTreeSet<Vec<usize>> = predicted
        .clusters
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.sort_unstable();
            c
        })
        .collect();
    let matched = truth
        .clusters
        .iter()
        .filter(|c| {
            let mut c = (*c).clone();
            c.sort_unstable();
            predicted.contains(&c)
        })
        .count();
    Ok((matched, truth.clusters.len()))
}

/// Fraction of truth clusters that appear exactly as a predicted cluster.
pub fn clustering_accuracy(predicted: &Partition, truth: &Partition) -> Result<f64, ClusterError> {
    let (m, t) = matched_clusters(predicted, truth)?;
    Ok(if t == 0 { 1.0 } else { m as f64 / t as f64 })
}

/// Evenly spaced thresholds `start, start + step, ..., stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        Self {
            start: 0.1,
            stop: 100.0,
            step: 0.01,
        }
    }
}

impl ThresholdGrid {
    pub fn validate(&self) -> Result<(), ClusterError> {
        let Self { start, stop, step } = *self;
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
            return Err(ClusterError::Grid("bounds must be finite".into()));
        }
        if start < 0.0 || stop < start || step <= 0.0 {
            return Err(ClusterError::Grid(format!(
                "need 0 <= start <= stop and step > 0, got {start}..{stop} by {step}"
            )));
        }
        Ok(())
    }

    /// Grid values, rounded to 12 decimals so that decimal steps land on decimal values.
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|i| ((self.start + i as f64 * self.step) * 1e12).round() / 1e12)
            .collect()
    }
}

/// One specimen's distances and ground truth.
#[derive(Debug, Clone)]
pub struct SpecimenEval {
    pub specimen_id: String,
    pub distances: DistanceMatrix,
    pub truth: Partition,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSearchResult {
    pub threshold: f64,
    pub accuracy: f64,
    /// `(threshold, micro-averaged accuracy)` for every grid point.
    pub curve: Vec<(f64, f64)>,
}

/// Micro-averaged accuracy at every grid threshold; picks the smallest threshold
/// with the highest accuracy.
pub fn threshold_search(specimens: &[SpecimenEval], grid: &ThresholdGrid) -> Result<ThresholdSearchResult, ClusterError> {
    grid.validate()?;
    if specimens.is_empty() {
        return Err(ClusterError::Empty);
    }
    let points = grid.points();
    let mut matched = vec![0usize; points.len()];
    let mut total = 0;
    for s in specimens {
        if s.truth.knot_count() != s.distances.len() {
            return Err(ClusterError::KnotSetMismatch);
        }
        s.truth.validate()?;
        total += s.truth.clusters.len();
        // sweep the grid once, adding edges as the threshold grows
        let edges = s.distances.sorted_edges();
        let mut uf = UnionFind::new(s.distances.len());
        let mut next = 0;
        let mut current = uf.matched(&s.truth);
        for (t, slot) in points.iter().zip(matched.iter_mut()) {
            let mut changed = false;
            while next < edges.len() && edges[next].0 <= *t {
                changed |= uf.union(edges[next].1, edges[next].2);
                next += 1;
            }
            if changed {
                current = uf.matched(&s.truth);
            }
            *slot += current;
        }
    }
    let curve: Vec<(f64, f64)> = points
        .iter()
        .zip(&matched)
        .map(|(&t, &m)| (t, if total == 0 { 1.0 } else { m as f64 / total as f64 }))
        .collect();
    let (threshold, accuracy) = curve
        .iter()
        .copied()
        .fold(None, |best: Option<(f64, f64)>, (t, a)| match best {
            Some((_, ba)) if a <= ba => best,
            _ => Some((t, a)),
        })
        .expect("grid has at least one point");
    Ok(ThresholdSearchResult {
        threshold,
        accuracy,
        curve,
    })
}

/// Rows of one specimen: global row indices in file order, which define knot indices.
pub fn specimen_rows(rows: &[FeatureRow]) -> BTreeMap<String, Vec<usize>> {
    let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        out.entry(r.specimen_id.clone()).or_default().push(i);
    }
    out
}

/// Distances and truth for each listed specimen, from row-aligned embeddings.
pub fn specimen_evals(
    rows: &[FeatureRow],
    embeddings: ArrayView2<f64>,
    specimens: &BTreeSet<String>,
) -> Result<Vec<SpecimenEval>, ClusterError> {
    if rows.len() != embeddings.nrows() {
        return Err(ClusterError::RowCount {
            rows: rows.len(),
            embeddings: embeddings.nrows(),
        });
    }
    let mut out = Vec::new();
    for (specimen, idx) in specimen_rows(rows) {
        if !specimens.contains(&specimen) {
            continue;
        }
        let labels = idx
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                rows[i].knot_id.ok_or_else(|| ClusterError::MissingKnotId {
                    specimen: specimen.clone(),
                    index: k,
                })
            })
            .collect::<Result<Vec<u32>, _>>()?;
        let emb = embeddings.select(Axis(0), &idx);
        out.push(SpecimenEval {
            distances: pairwise_distances(emb.view()),
            truth: Partition::from_labels(specimen.clone(), &labels),
            specimen_id: specimen,
        });
    }
    Ok(out)
}

/// Threshold chosen on validation, accuracy reported on test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitReport {
    pub threshold: f64,
    pub validation_accuracy: f64,
    pub test_accuracy: f64,
    pub test_matched: usize,
    pub test_clusters: usize,
    #[serde(skip)]
    pub validation_curve: Vec<(f64, f64)>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub fn evaluate_embeddings(
    rows: &[FeatureRow],
    embeddings: ArrayView2<f64>,
    split: &SplitAssignment,
    grid: &ThresholdGrid,
) -> Result<SplitReport, ClusterError> {
    let val = specimen_evals(rows, embeddings, &split.validation)?;
    if val.is_empty() {
        return Err(ClusterError::EmptySplit(Split::Validation));
    }
    let test = specimen_evals(rows, embeddings, &split.test)?;
    if test.is_empty() {
        return Err(ClusterError::EmptySplit(Split::Test));
    }
    let search = threshold_search(&val, grid)?;
    let (mut matched, mut total) = (0, 0);
    for s in &test {
        let predicted = cluster_at_threshold(&s.distances, search.threshold);
        let (m, t) = matched_clusters(&predicted, &s.truth)?;
        matched += m;
        total += t;
    }
    Ok(SplitReport {
        threshold: search.threshold,
        validation_accuracy: search.accuracy,
        test_accuracy: if total == 0 { 1.0 } else { matched as f64 / total as f64 },
        test_matched: matched,
        test_clusters: total,
        validation_curve: search.curve,
    })
}

/// Embeds every row with `params`, then runs [`evaluate_embeddings`].
pub fn evaluate_split<F: Real>(
    params: &ModelParams<F>,
    rows: &[FeatureRow],
    split: &SplitAssignment,
    grid: &ThresholdGrid,
) -> Result<SplitReport, EvalError> {
    let features: Vec<FeatureVector> = rows.iter().map(|r| r.features).collect();
    let emb: Array2<f64> = embed_all(params, &features)?;
    Ok(evaluate_embeddings(rows, emb.view(), split, grid)?)
}

/// Clusters each specimen's rows at `threshold`. Knot indices count rows within
/// a specimen in input order; specimens come out sorted by id.
pub fn cluster_embeddings(
    specimen_ids: &[String],
    embeddings: ArrayView2<f64>,
    threshold: f64,
) -> Result<Vec<Partition>, ClusterError> {
    if !threshold.is_finite() || threshold < 0.0 {
        return Err(ClusterError::Threshold(threshold));
    }
    if specimen_ids.len() != embeddings.nrows() {
        return Err(ClusterError::RowCount {
            rows: specimen_ids.len(),
            embeddings: embeddings.nrows(),
        });
    }
    let mut by_specimen: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in specimen_ids.iter().enumerate() {
        by_specimen.entry(s).or_default().push(i);
    }
    Ok(by_specimen
        .into_iter()
        .map(|(s, idx)| {
            let dm = pairwise_distances(embeddings.select(Axis(0), &idx).view());
            let mut p = cluster_at_threshold(&dm, threshold);
            p.specimen_id = s.to_owned();
            p
        })
        .collect())
}

/// One line of the pairing output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingRow {
    pub specimen_id: String,
    pub cluster_id: usize,
    pub knot_index: usize,
}

/// Pairing rows ordered by specimen then knot index.
pub fn pairing_rows(partitions: &[Partition]) -> Vec<PairingRow> {
    let mut out = Vec::new();
    for p in partitions {
        for (knot_index, cluster_id) in p.labels().into_iter().enumerate() {
            out.push(PairingRow {
                specimen_id: p.specimen_id.clone(),
                cluster_id,
                knot_index,
            });
        }
    }
    out
}

pub fn write_pairings<W: std::io::Write>(w: W, rows: &[PairingRow]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["specimen_id", "cluster_id", "knot_index"])?;
    for r in rows {
        wtr.write_record([r.specimen_id.clone(), r.cluster_id.to_string(), r.knot_index.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_pairings<R: std::io::Read>(r: R) -> csv::Result<Vec<PairingRow>> {
    csv::Reader::from_reader(r).deserialize().collect()
}

pub fn write_curve<W: std::io::Write>(w: W, curve: &[(f64, f64)]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["threshold", "accuracy"])?;
    for (t, a) in curve {
        wtr.write_record([t.to_string(), a.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn p(clusters: &[&[usize]]) -> Partition {
        Partition::new("S", clusters.iter().map(|c| c.to_vec()).collect())
    }

    #[test]
    fn three_four_five() {
        let dm = pairwise_distances(array![[0.0, 0.0], [3.0, 4.0]].view());
        assert_eq!(dm.get(0, 1), 5.0);
        assert_eq!(dm.get(1, 0), 5.0);
        assert_eq!(dm.get(0, 0), 0.0);
    }

    #[test]
    fn identical_rows_give_zero_matrix() {
        let e = Array2::from_elem((4, 3), 1.5);
        let dm = pairwise_distances(e.view());
        assert!(dm.entries.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn one_clear_pair() {
        let dm = DistanceMatrix::from_pairs(3, &[(0, 1, 0.5), (0, 2, 5.0), (1, 2, 5.0)]);
        assert_eq!(cluster_at_threshold(&dm, 1.0).clusters, vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn chain_is_transitive() {
        let dm = DistanceMatrix::from_pairs(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)]);
        assert_eq!(cluster_at_threshold(&dm, 1.5).clusters, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn zero_threshold_distinct_points() {
        let dm = pairwise_distances(array![[0.0], [1.0], [2.5]].view());
        assert_eq!(cluster_at_threshold(&dm, 0.0).clusters.len(), 3);
    }

    #[test]
    fn edge_rule_is_inclusive() {
        let dm = DistanceMatrix::from_pairs(2, &[(0, 1, 0.25)]);
        assert_eq!(cluster_at_threshold(&dm, 0.25).clusters.len(), 1);
        assert_eq!(cluster_at_threshold(&dm, 0.2499).clusters.len(), 2);
    }

    #[test]
    fn worked_accuracy_example() {
        let truth = p(&[&[1, 2], &[3, 4], &[5, 0]]);
        let pred = p(&[&[1, 2], &[3], &[4, 5, 0]]);
        assert_eq!(clustering_accuracy(&pred, &truth).unwrap(), 1.0 / 3.0);
        assert_eq!(clustering_accuracy(&truth, &truth).unwrap(), 1.0);
        let singles = p(&[&[0], &[1], &[2], &[3], &[4], &[5]]);
        assert_eq!(clustering_accuracy(&singles, &truth).unwrap(), 0.0);
    }

    #[test]
    fn knot_set_mismatch() {
        let truth = p(&[&[0, 1]]);
        let pred = p(&[&[0], &[1], &[2]]);
        assert_eq!(clustering_accuracy(&pred, &truth), Err(ClusterError::KnotSetMismatch));
    }

    #[test]
    fn grid_arithmetic() {
        let pts = ThresholdGrid::default().points();
        assert_eq!(pts.len(), 9991);
        assert_eq!(pts[0], 0.1);
        assert_eq!(pts[169], 1.79);
        assert_eq!(*pts.last().unwrap(), 100.0);
        assert!(ThresholdGrid { step: 0.0, ..ThresholdGrid::default() }.validate().is_err());
    }

    #[test]
    fn well_separated_pairs_pick_first_grid_point() {
        // pairs at 0.1, everything else >= 2
        let e = array![[0.0, 0.0], [0.1, 0.0], [5.0, 0.0], [5.0, 0.1], [0.0, 7.0], [0.0, 7.1]];
        let labels = [1, 1, 2, 2, 3, 3];
        let s = SpecimenEval {
            specimen_id: "S".into(),
            distances: pairwise_distances(e.view()),
            truth: Partition::from_labels("S", &labels),
        };
        let r = threshold_search(&[s], &ThresholdGrid::default()).unwrap();
        assert_eq!(r.threshold, 0.1);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.curve.len(), 9991);
    }

    #[test]
    fn singletons_far_apart() {
        let e = array![[0.0], [200.0], [400.0]];
        let s = SpecimenEval {
            specimen_id: "S".into(),
            distances: pairwise_distances(e.view()),
            truth: Partition::from_labels("S", &[1, 2, 3]),
        };
        let r = threshold_search(&[s], &ThresholdGrid::default()).unwrap();
        assert_eq!((r.threshold, r.accuracy), (0.1, 1.0));
    }

    #[test]
    fn smallest_argmax_on_ties() {
        // accuracy 1 from 0.5 to just below 2.0; 0.5 must win
        let dm = DistanceMatrix::from_pairs(3, &[(0, 1, 0.5), (0, 2, 2.0), (1, 2, 2.0)]);
        let s = SpecimenEval {
            specimen_id: "S".into(),
            distances: dm,
            truth: Partition::new("S", vec![vec![0, 1], vec![2]]),
        };
        let grid = ThresholdGrid { start: 0.1, stop: 3.0, step: 0.1 };
        let r = threshold_search(&[s], &grid).unwrap();
        assert_eq!((r.threshold, r.accuracy), (0.5, 1.0));
        let max = r.curve.iter().map(|c| c.1).fold(0.0, f64::max);
        assert_eq!(max, r.accuracy);
    }

    #[test]
    fn pairing_csv_layout() {
        let parts = vec![Partition::new("S1", vec![vec![0, 2], vec![1]])];
        let rows = pairing_rows(&parts);
        let mut buf = Vec::new();
        write_pairings(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "specimen_id,cluster_id,knot_index\nS1,0,0\nS1,1,1\nS1,0,2\n");
        assert_eq!(read_pairings(&buf[..]).unwrap(), rows);
    }

    fn embeddings() -> impl Strategy<Value = Array2<f64>> {
        (2usize..12).prop_flat_map(|n| {
            proptest::collection::vec(-5.0f64..5.0, n * 3)
                .prop_map(move |v| Array2::from_shape_vec((n, 3), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn symmetric_and_matches_brute_force(e in embeddings()) {
            let dm = pairwise_distances(e.view());
            for i in 0..e.nrows() {
                prop_assert_eq!(dm.get(i, i), 0.0);
                for j in 0..e.nrows() {
                    let d: f64 = (0..3).map(|k| (e[[i, k]] - e[[j, k]]).powi(2)).sum::<f64>().sqrt();
                    prop_assert!((dm.get(i, j) - d).abs() < 1e-12);
                    prop_assert!((dm.get(i, j) - dm.get(j, i)).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn coarsening_is_monotone(e in embeddings(), a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let dm = pairwise_distances(e.view());
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(cluster_at_threshold(&dm, hi).clusters.len() <= cluster_at_threshold(&dm, lo).clusters.len());
        }

        #[test]
        fn permutation_relabels(e in embeddings(), t in 0.0f64..6.0, seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let n = e.nrows();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let permuted = e.select(Axis(0), &perm);
            let base = cluster_at_threshold(&pairwise_distances(e.view()), t);
            let moved = cluster_at_threshold(&pairwise_distances(permuted.view()), t);
            // row k of `permuted` is row perm[k] of `e`
            let mapped = Partition::new("", moved.clusters.iter().map(|c| c.iter().map(|&k| perm[k]).collect()).collect());
            prop_assert_eq!(mapped.clusters, base.clusters);
        }

        #[test]
        fn accuracy_in_unit_interval(e in embeddings(), t in 0.0f64..6.0, labels in proptest::collection::vec(0u8..4, 12)) {
            let n = e.nrows();
            let truth = Partition::from_labels("S", &labels[..n]);
            let pred = cluster_at_threshold(&pairwise_distances(e.view()), t);
            let acc = clustering_accuracy(&pred, &truth).unwrap();
            prop_assert!((0.0..=1.0).contains(&acc));
            prop_assert_eq!(acc == 1.0, pred.clusters == truth.clusters);
        }

        #[test]
        fn search_matches_brute_force(e in embeddings(), labels in proptest::collection::vec(0u8..4, 12)) {
            let n = e.nrows();
            let s = SpecimenEval {
                specimen_id: "S".into(),
                distances: pairwise_distances(e.view()),
                truth: Partition::from_labels("S", &labels[..n]),
            };
            let grid = ThresholdGrid { start: 0.1, stop: 12.0, step: 0.05 };
            let r = threshold_search(std::slice::from_ref(&s), &grid).unwrap();
            for &(t, a) in &r.curve {
                let brute = clustering_accuracy(&cluster_at_threshold(&s.distances, t), &s.truth).unwrap();
                prop_assert_eq!(a, brute);
            }
        }
    }

    #[test]
    fn cluster_embeddings_groups_within_specimens_only() {
        let ids: Vec<String> = ["B", "A", "B", "A", "B"].iter().map(|s| s.to_string()).collect();
        let emb = array![[0.0], [0.0], [0.5], [5.0], [9.0]];
        let parts = cluster_embeddings(&ids, emb.view(), 1.0).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0], Partition::new("A", vec![vec![0], vec![1]]));
        assert_eq!(parts[1], Partition::new("B", vec![vec![0, 1], vec![2]]));
        assert!(cluster_embeddings(&ids, emb.view(), -1.0).is_err());
        assert!(cluster_embeddings(&ids[..2], emb.view(), 1.0).is_err());
    }
}
