//! Adam with coupled L2 weight decay.

use super::model::{Gradients, ModelParams};
use super::Real;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moments for every trainable tensor, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<F> {
    pub first: Vec<Vec<F>>,
    pub second: Vec<Vec<F>>,
    pub step: u64,
}

impl<F: Real> OptimizerState<F> {
    pub fn new(params: &mut ModelParams<F>) -> Self {
        let shapes: Vec<usize> = params.trainable_slices_mut().iter().map(|s| s.len()).collect();
        Self {
            first: shapes.iter().map(|&n| vec![F::zero(); n]).collect(),
            second: shapes.iter().map(|&n| vec![F::zero(); n]).collect(),
            step: 0,
        }
    }
}

/// Zero for values below the smallest normal float, which the CPU handles slowly.
#[inline]
fn flush<F: Real>(x: F) -> F {
    if x.abs() < F::min_positive_value() {
        F::zero()
    } else {
        x
    }
}

/// One bias-corrected Adam update. `weight_decay * theta` is added to the gradient
/// before the moment updates. Fixed input weights are never touched.
///
/// Parameters without a loss gradient decay geometrically under the weight decay;
/// they and their moments are flushed to zero before reaching subnormal range.
pub fn adam_step<F: Real>(
    params: &mut ModelParams<F>,
    grads: &Gradients<F>,
    state: &mut OptimizerState<F>,
    lr: f64,
    weight_decay: f64,
) {
    state.step += 1;
    let t = state.step as i32;
    let b1 = F::from_f64(BETA1).unwrap();
    let b2 = F::from_f64(BETA2).unwrap();
    let one = F::one();
    let eps = F::from_f64(EPSILON).unwrap();
    let wd = F::from_f64(weight_decay).unwrap();
    let c1 = one - b1.powi(t);
    let c2 = one - b2.powi(t);
    let lr = F::from_f64(lr).unwrap();

    let tensors = params.trainable_slices_mut();
    let grads = grads.slices();
    assert_eq!(tensors.len(), grads.len(), "gradient layout does not match parameters");
    for (((theta, g), m), v) in tensors
        .into_iter()
        .zip(grads)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        for (((p, &g), m), v) in theta.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            let g = g + wd * *p;
            *m = flush(b1 * *m + (one - b1) * g);
            *v = flush(b2 * *v + (one - b2) * g * g);
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p = flush(*p - lr * m_hat / (v_hat.sqrt() + eps));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{Dense, ModelParams};
    use crate::nn::{Activation, Variant};
    use ndarray::{array, Array1, Array2};

    fn scalar(theta: f64) -> ModelParams<f64> {
        ModelParams {
            variant: Variant::Standard,
            input_weights: None,
            encoder: vec![Dense {
                weight: Array2::from_elem((1, 1), theta),
                bias: array![0.0],
                activation: Activation::None,
                dropout_rate: 0.0,
            }],
            projection: vec![],
        }
    }

    fn grad(g: f64) -> Gradients<f64> {
        Gradients {
            input_weights: None,
            encoder: vec![(Array2::from_elem((1, 1), g), Array1::zeros(1))],
            projection: vec![],
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(1.0);
        let mut st = OptimizerState::new(&mut p);
        adam_step(&mut p, &grad(1.0), &mut st, 0.001, 0.0);
        // m_hat = 1, v_hat = 1  =>  theta = 1 - 0.001 / (1 + 1e-8)
        let expected = 1.0 - 0.001 / (1.0 + 1e-8);
        assert!((p.encoder[0].weight[[0, 0]] - expected).abs() < 1e-15);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = scalar(0.75);
        let before = p.clone();
        let mut st = OptimizerState::new(&mut p);
        for _ in 0..5 {
            adam_step(&mut p, &grad(0.0), &mut st, 0.01, 0.0);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn decay_pulls_toward_zero() {
        let mut p = scalar(2.0);
        let mut st = OptimizerState::new(&mut p);
        adam_step(&mut p, &grad(0.0), &mut st, 0.01, 0.1);
        assert!(p.encoder[0].weight[[0, 0]] < 2.0);
    }
}
