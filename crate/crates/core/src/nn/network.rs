//! Batched forward pass with an activation trace, and reverse-mode gradients.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use super::model::{Dense, Gradients, ModelParams};
use super::{Activation, NnError, Real};

/// How far a forward pass runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Stop at the embedding layer.
    Encoder,
    /// Continue through the projection head (contrastive training).
    Projection,
}

/// Inverted-dropout masks for one batch: entries are `0` or `1 / keep`.
/// One slot per layer of the traversed chain; `None` for layers without dropout.
#[derive(Debug, Clone)]
pub struct DropoutMasks<F>(pub Vec<Option<Array2<F>>>);

impl<F: Real> DropoutMasks<F> {
    pub fn sample<R: Rng + ?Sized>(params: &ModelParams<F>, head: Head, batch: usize, rng: &mut R) -> Self {
        let mut bits: Vec<u32> = Vec::new();
        let masks = layers(params, head)
            .map(|l| {
                (l.dropout_rate > 0.0).then(|| {
                    let keep = 1.0 - l.dropout_rate;
                    let scale = F::from_f64(1.0 / keep).unwrap();
                    // keep when a uniform u32 falls below keep * 2^32
                    let cut = (keep * 4_294_967_296.0) as u64;
                    bits.resize(batch * l.out_dim(), 0);
                    rng.fill(&mut bits[..]);
                    let values = bits
                        .iter()
                        .map(|&b| if u64::from(b) < cut { scale } else { F::zero() })
                        .collect();
                    Array2::from_shape_vec((batch, l.out_dim()), values).expect("sized above")
                })
            })
            .collect();
        Self(masks)
    }

    /// Stacks `copies` copies of every mask vertically, so that row `i` of each
    /// block shares one mask.
    pub fn repeat(&self, copies: usize) -> Self {
        Self(
            self.0
                .iter()
                .map(|m| {
                    m.as_ref().map(|m| {
                        let views = vec![m.view(); copies];
                        ndarray::concatenate(Axis(0), &views).expect("equal widths")
                    })
                })
                .collect(),
        )
    }
}

fn layers<F>(params: &ModelParams<F>, head: Head) -> impl Iterator<Item = &Dense<F>> {
    let proj: &[Dense<F>] = match head {
        Head::Encoder => &[],
        Head::Projection => &params.projection,
    };
    params.encoder.iter().chain(proj)
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Trace<F> {
    pub head: Head,
    /// Raw input rows.
    pub input: Array2<F>,
    /// Input after the per-feature weights; feeds the first layer.
    pub scaled: Array2<F>,
    /// Pre-activation of each layer.
    pub pre: Vec<Array2<F>>,
    /// Output of each layer after activation and dropout.
    pub post: Vec<Array2<F>>,
    pub masks: DropoutMasks<F>,
}

impl<F: Real> Trace<F> {
    pub fn output(&self) -> &Array2<F> {
        self.post.last().expect("at least one layer")
    }
}

fn check_input<F: Real>(params: &ModelParams<F>, x: &ArrayView2<F>) -> Result<(), NnError> {
    if x.ncols() != params.input_dim() {
        return Err(NnError::Shape(format!(
            "input has {} features, network expects {}",
            x.ncols(),
            params.input_dim()
        )));
    }
    Ok(())
}

/// Forward pass recording the trace. `masks: None` means inference mode.
pub fn forward_trace<F: Real>(
    params: &ModelParams<F>,
    x: ArrayView2<F>,
    head: Head,
    masks: Option<DropoutMasks<F>>,
) -> Result<Trace<F>, NnError> {
    check_input(params, &x)?;
    let n_layers = layers(params, head).count();
    let masks = masks.unwrap_or_else(|| DropoutMasks(vec![None; n_layers]));
    if masks.0.len() != n_layers {
        return Err(NnError::Shape("dropout masks do not match the layer chain".into()));
    }
    let scaled = match &params.input_weights {
        Some(w) => &x * w,
        None => x.to_owned(),
    };
    let mut pre = Vec::with_capacity(n_layers);
    let mut post: Vec<Array2<F>> = Vec::with_capacity(n_layers);
    for (l, mask) in layers(params, head).zip(&masks.0) {
        let input = post.last().unwrap_or(&scaled);
        let z = input.dot(&l.weight.t()) + &l.bias;
        let a = match (l.activation, mask) {
            (Activation::Relu, Some(m)) => Zip::from(&z).and(m).map_collect(|&v, &m| v.max(F::zero()) * m),
            (Activation::Relu, None) => z.mapv(|v| v.max(F::zero())),
            (Activation::None, Some(m)) => &z * m,
            (Activation::None, None) => z.clone(),
        };
        pre.push(z);
        post.push(a);
    }
    Ok(Trace {
        head,
        input: x.to_owned(),
        scaled,
        pre,
        post,
        masks,
    })
}

/// Inference-mode forward pass (no dropout).
pub fn forward<F: Real>(params: &ModelParams<F>, x: ArrayView2<F>, head: Head) -> Result<Array2<F>, NnError> {
    check_input(params, &x)?;
    let mut h = match &params.input_weights {
        Some(w) => &x * w,
        None => x.to_owned(),
    };
    for l in layers(params, head) {
        let mut z = h.dot(&l.weight.t()) + &l.bias;
        if l.activation == Activation::Relu {
            z.mapv_inplace(|v| v.max(F::zero()));
        }
        h = z;
    }
    Ok(h)
}

/// Gradients of a loss with respect to every trainable parameter, given the
/// loss gradient `d_out` with respect to the traced output.
pub fn backward<F: Real>(params: &ModelParams<F>, trace: &Trace<F>, d_out: Array2<F>) -> Gradients<F> {
    let chain: Vec<&Dense<F>> = layers(params, trace.head).collect();
    let n_enc = params.encoder.len();
    let wants_input = params.trains_input_weights();
    let mut per_layer = Vec::with_capacity(chain.len());
    let mut grad = d_out;
    for i in (0..chain.len()).rev() {
        let layer = chain[i];
        match (&trace.masks.0[i], layer.activation) {
            (Some(m), Activation::Relu) => Zip::from(&mut grad).and(m).and(&trace.pre[i]).for_each(|g, &m, &z| {
                *g = if z > F::zero() { *g * m } else { F::zero() };
            }),
            (Some(m), Activation::None) => grad *= m,
            (None, Activation::Relu) => Zip::from(&mut grad).and(&trace.pre[i]).for_each(|g, &z| {
                if z <= F::zero() {
                    *g = F::zero();
                }
            }),
            (None, Activation::None) => {}
        }
        let input = if i == 0 { &trace.scaled } else { &trace.post[i - 1] };
        per_layer.push((grad.t().dot(input), grad.sum_axis(Axis(0))));
        if i > 0 || wants_input {
            grad = grad.dot(&layer.weight);
        }
    }
    per_layer.reverse();
    let projection = per_layer.split_off(n_enc.min(per_layer.len()));
    Gradients {
        // d(x * w)/dw = x, summed over the batch
        input_weights: wants_input.then(|| (&grad * &trace.input).sum_axis(Axis(0))),
        encoder: per_layer,
        projection,
    }
}

/// Converts feature rows to a network input matrix.
pub fn to_matrix<F: Real>(rows: &[[f64; crate::features::FEATURE_DIM]]) -> Array2<F> {
    let mut m = Array2::zeros((rows.len(), crate::features::FEATURE_DIM));
    for (mut out, row) in m.axis_iter_mut(Axis(0)).zip(rows) {
        for (o, v) in out.iter_mut().zip(row) {
            *o = F::from_f64(*v).unwrap();
        }
    }
    m
}

pub fn row_to_f64<F: Real>(row: ndarray::ArrayView1<F>) -> Array1<f64> {
    row.mapv(|v| v.to_f64().unwrap())
}
