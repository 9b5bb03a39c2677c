//! Central finite-difference checks of the analytic gradients.

use ndarray::ArrayView2;

use super::loss::{ntxent, triplet_batch};
use super::model::{Gradients, ModelParams};
use super::network::{backward, forward_trace, DropoutMasks, Head};
use super::{NnError, Variant};

/// Loss whose gradient is checked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Rows are `[anchors; positives; negatives]`.
    Triplet { margin: f64 },
    /// Rows are `[view1; view2]`.
    NtXent { temperature: f64 },
}

impl Objective {
    fn head(self) -> Head {
        match self {
            Objective::Triplet { .. } => Head::Encoder,
            Objective::NtXent { .. } => Head::Projection,
        }
    }

    /// The objective a variant trains with.
    pub fn for_variant(variant: Variant, margin: f64, temperature: f64) -> Self {
        match variant {
            Variant::SimClr => Objective::NtXent { temperature },
            _ => Objective::Triplet { margin },
        }
    }
}

/// Loss and analytic gradients for fixed dropout masks.
pub fn loss_and_gradients(
    params: &ModelParams<f64>,
    x: ArrayView2<f64>,
    masks: Option<&DropoutMasks<f64>>,
    objective: Objective,
) -> Result<(f64, Gradients<f64>), NnError> {
    let trace = forward_trace(params, x, objective.head(), masks.cloned())?;
    let (loss, d) = match objective {
        Objective::Triplet { margin } => triplet_batch(trace.output().view(), margin)?,
        Objective::NtXent { temperature } => ntxent(trace.output().view(), temperature)?,
    };
    Ok((loss, backward(params, &trace, d)))
}

fn loss_only(
    params: &ModelParams<f64>,
    x: ArrayView2<f64>,
    masks: Option<&DropoutMasks<f64>>,
    objective: Objective,
) -> Result<f64, NnError> {
    loss_and_gradients(params, x, masks, objective).map(|(l, _)| l)
}

/// `(L(theta + h) - L(theta - h)) / 2h` for every trainable parameter, in
/// [`ModelParams::trainable_slices_mut`] order.
pub fn numeric_gradients(
    params: &ModelParams<f64>,
    x: ArrayView2<f64>,
    masks: Option<&DropoutMasks<f64>>,
    objective: Objective,
    h: f64,
) -> Result<Vec<Vec<f64>>, NnError> {
    let mut work = params.clone();
    let sizes: Vec<usize> = work.trainable_slices_mut().iter().map(|s| s.len()).collect();
    let mut out = Vec::with_capacity(sizes.len());
    for (t, &n) in sizes.iter().enumerate() {
        let mut g = Vec::with_capacity(n);
        for i in 0..n {
            let orig = work.trainable_slices_mut()[t][i];
            work.trainable_slices_mut()[t][i] = orig + h;
            let up = loss_only(&work, x, masks, objective)?;
            work.trainable_slices_mut()[t][i] = orig - h;
            let down = loss_only(&work, x, masks, objective)?;
            work.trainable_slices_mut()[t][i] = orig;
            g.push((up - down) / (2.0 * h));
        }
        out.push(g);
    }
    Ok(out)
}

/// `|a - n| / max(|a|, |n|, floor)`, maximized over all parameters.
pub fn max_relative_error(analytic: &Gradients<f64>, numeric: &[Vec<f64>], floor: f64) -> f64 {
    let a = analytic.slices();
    assert_eq!(a.len(), numeric.len(), "gradient layouts differ");
    a.iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.iter().zip(n))
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
