//! Triplet margin loss and NT-Xent, with analytic gradients for batches.

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};

use super::{NnError, Real};

fn euclidean<F: Real>(a: ArrayView1<F>, b: ArrayView1<F>) -> F {
    a.iter()
        .zip(b.iter())
        .fold(F::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}

/// `max(|a - p| - |a - n| + margin, 0)` with Euclidean distances.
pub fn triplet_loss(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> f64 {
    let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
    (d(a, p) + margin - d(a, n)).max(0.0)
}

/// Mean triplet loss over a batch laid out as `[anchors; positives; negatives]`
/// (`3B` rows), and its gradient with respect to those rows.
///
/// Triplets sitting exactly on the hinge contribute no gradient; a zero distance
/// contributes no gradient through its norm.
pub fn triplet_batch<F: Real>(emb: ArrayView2<F>, margin: F) -> Result<(F, Array2<F>), NnError> {
    let rows = emb.nrows();
    if rows == 0 || !rows.is_multiple_of(3) {
        return Err(NnError::Shape(format!("triplet batch needs 3B rows, got {rows}")));
    }
    let b = rows / 3;
    let scale = F::one() / F::from_usize(b).unwrap();
    let mut grad = Array2::zeros(emb.raw_dim());
    let mut total = F::zero();
    for i in 0..b {
        let (a, p, n) = (emb.row(i), emb.row(b + i), emb.row(2 * b + i));
        let dap = euclidean(a, p);
        let dan = euclidean(a, n);
        let l = dap + margin - dan;
        if l <= F::zero() {
            continue;
        }
        total += l;
        if dap > F::zero() {
            let u = (&a - &p).mapv(|v| v * scale / dap);
            grad.row_mut(i).scaled_add(F::one(), &u);
            grad.row_mut(b + i).scaled_add(-F::one(), &u);
        }
        if dan > F::zero() {
            let u = (&a - &n).mapv(|v| v * scale / dan);
            grad.row_mut(i).scaled_add(-F::one(), &u);
            grad.row_mut(2 * b + i).scaled_add(F::one(), &u);
        }
    }
    Ok((total * scale, grad))
}

/// Mean triplet loss without gradients.
pub fn triplet_batch_loss<F: Real>(emb: ArrayView2<F>, margin: F) -> Result<F, NnError> {
    triplet_batch(emb, margin).map(|(l, _)| l)
}

/// NT-Xent over `2N` rows where row `i` and row `i + N` are two views of the same sample.
///
/// Each row's loss is the cross-entropy of its partner against all other rows
/// (itself excluded), using cosine similarity divided by `temperature`; the result
/// is the mean over all `2N` rows. Returns the loss and its gradient.
pub fn ntxent<F: Real>(z: ArrayView2<F>, temperature: F) -> Result<(F, Array2<F>), NnError> {
    let rows = z.nrows();
    if rows < 4 || !rows.is_multiple_of(2) {
        return Err(NnError::Shape(format!("NT-Xent needs 2N rows with N >= 2, got {rows}")));
    }
    if temperature <= F::zero() {
        return Err(NnError::Config("temperature must be positive".into()));
    }
    let n = rows / 2;
    let norms: Vec<F> = z.axis_iter(Axis(0)).map(|r| r.dot(&r).sqrt()).collect();
    if let Some(i) = norms.iter().position(|v| !(*v > F::zero())) {
        return Err(NnError::ZeroNorm(i));
    }
    let mut h = z.to_owned();
    for (mut row, &nrm) in h.axis_iter_mut(Axis(0)).zip(&norms) {
        row.mapv_inplace(|v| v / nrm);
    }
    let inv_t = F::one() / temperature;
    let sim = h.dot(&h.t()).mapv(|v| v * inv_t);

    let partner = |i: usize| if i < n { i + n } else { i - n };
    let inv_rows = F::one() / F::from_usize(rows).unwrap();
    let mut loss = F::zero();
    // d loss / d sim
    let mut dsim = Array2::<F>::zeros((rows, rows));
    for i in 0..rows {
        let row = sim.row(i);
        let max = row
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i)
            .fold(F::neg_infinity(), |m, (_, &v)| m.max(v));
        let denom = row
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i)
            .fold(F::zero(), |acc, (_, &v)| acc + (v - max).exp());
        let lse = max + denom.ln();
        loss += lse - row[partner(i)];
        for k in (0..rows).filter(|&k| k != i) {
            let softmax = (row[k] - max).exp() / denom;
            dsim[[i, k]] = softmax * inv_rows;
        }
        dsim[[i, partner(i)]] = dsim[[i, partner(i)]] - inv_rows;
    }
    // sim = h h^T / t  =>  dh = (dsim + dsim^T) h / t
    let sym = &dsim + &dsim.t();
    let dh = sym.dot(&h).mapv(|v| v * inv_t);
    // h = z / |z|  =>  dz = (dh - h (h . dh)) / |z|
    let mut dz = Array2::zeros(z.raw_dim());
    for i in 0..rows {
        let hi = h.row(i);
        let dhi = dh.row(i);
        let proj = hi.dot(&dhi);
        let mut out = dz.row_mut(i);
        out.assign(&(&dhi - &hi.mapv(|v| v * proj)));
        out.mapv_inplace(|v| v / norms[i]);
    }
    Ok((loss * inv_rows, dz))
}

/// Stacks two views `[first; second]` into the layout expected by [`ntxent`].
pub fn stack_views<F: Real>(first: ArrayView2<F>, second: ArrayView2<F>) -> Array2<F> {
    let mut out = Array2::zeros((first.nrows() + second.nrows(), first.ncols()));
    out.slice_mut(s![..first.nrows(), ..]).assign(&first);
    out.slice_mut(s![first.nrows().., ..]).assign(&second);
    out
}
