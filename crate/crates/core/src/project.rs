//! Two-dimensional PCA of embeddings and scatter output.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PcaError {
    #[error("PCA needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("all points are identical")]
    Degenerate,
    #[error("model expects {expected} columns, got {found}")]
    Width { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `2 x d`, orthonormal rows.
    pub components: Array2<f64>,
    pub explained_variance: [f64; 2],
}

const SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and eigenvectors (as columns), unsorted.
pub fn symmetric_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = Array2::<f64>::eye(n);
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _ in 0..SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[[p, q]] * a[[p, q]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    (a.diag().to_owned(), v)
}

pub fn pca_fit(x: ArrayView2<f64>) -> Result<PcaModel, PcaError> {
    let n = x.nrows();
    if n < 2 {
        return Err(PcaError::TooFewRows(n));
    }
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &x - &mean;
    if centered.iter().all(|v| *v == 0.0) {
        return Err(PcaError::Degenerate);
    }
    let cov = centered.t().dot(&centered) / (n - 1) as f64;
    let (values, vectors) = symmetric_eigen(&cov);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let d = x.ncols();
    let mut components = Array2::zeros((2, d));
    let mut explained = [0.0; 2];
    for (row, &k) in order.iter().take(2).enumerate() {
        let mut col = vectors.column(k).to_owned();
        let pivot = col
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, v)| if v.abs() > best.1.abs() { (i, v) } else { best });
        if pivot.1 < 0.0 {
            col.mapv_inplace(|v| -v);
        }
        components.row_mut(row).assign(&col);
        explained[row] = values[k].max(0.0);
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance: explained,
    })
}

pub fn pca_project(model: &PcaModel, x: ArrayView2<f64>) -> Result<Array2<f64>, PcaError> {
    if x.ncols() != model.mean.len() {
        return Err(PcaError::Width {
            expected: model.mean.len(),
            found: x.ncols(),
        });
    }
    Ok((&x - &model.mean).dot(&model.components.t()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub specimen_id: String,
    pub knot_index: usize,
    pub cluster_id: usize,
    pub x: f64,
    pub y: f64,
}

pub fn write_scatter<W: std::io::Write>(w: W, rows: &[ScatterRow]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["specimen_id", "knot_index", "cluster_id", "x", "y"])?;
    for r in rows {
        wtr.write_record([
            r.specimen_id.clone(),
            r.knot_index.to_string(),
            r.cluster_id.to_string(),
            r.x.to_string(),
            r.y.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

fn color(specimen: &str, cluster: usize) -> String {
    // FNV-1a over the cluster identity
    let mut h: u32 = 0x811c_9dc5;
    for b in specimen.bytes().chain(cluster.to_le_bytes()) {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    format!("hsl({},70%,45%)", h % 360)
}

/// Scatter plot with one circle per knot, colored by cluster.
pub fn scatter_svg(rows: &[ScatterRow]) -> String {
    const SIZE: f64 = 600.0;
    const PAD: f64 = 30.0;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for r in rows {
        x0 = x0.min(r.x);
        x1 = x1.max(r.x);
        y0 = y0.min(r.y);
        y1 = y1.max(r.y);
    }
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let (sx, sy) = (span(x0, x1), span(y0, y1));
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    for r in rows {
        let cx = PAD + (r.x - x0) / sx * (SIZE - 2.0 * PAD);
        let cy = SIZE - PAD - (r.y - y0) / sy * (SIZE - 2.0 * PAD);
        writeln!(
            out,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="4" fill="{}"><title>{} #{} c{}</title></circle>"#,
            color(&r.specimen_id, r.cluster_id),
            xml_escape(&r.specimen_id),
            r.knot_index,
            r.cluster_id
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
