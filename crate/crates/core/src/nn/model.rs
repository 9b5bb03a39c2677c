//! Network parameters, initialization and the JSON model file.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, NnError, Real, Variant};
use crate::features::FEATURE_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub dropout_rate: f64,
}

/// Layer widths of the encoder and (for the contrastive variant) the projection head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub input_dim: usize,
    /// Hidden layer widths, each followed by ReLU.
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub dropout_rate: f64,
    /// Number of leading hidden layers followed by dropout.
    pub dropout_layers: usize,
    /// Projection head widths after the embedding; ReLU between, none after the last.
    pub projection: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            input_dim: FEATURE_DIM,
            hidden: vec![1024, 512, 256, 128, 64],
            embedding_dim: 128,
            dropout_rate: 0.3,
            dropout_layers: 4,
            projection: vec![64, 32],
        }
    }
}

impl Architecture {
    pub fn encoder_specs(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::with_capacity(self.hidden.len() + 1);
        let mut in_dim = self.input_dim;
        for (i, &w) in self.hidden.iter().enumerate() {
            specs.push(LayerSpec {
                in_dim,
                out_dim: w,
                activation: Activation::Relu,
                dropout_rate: if i < self.dropout_layers { self.dropout_rate } else { 0.0 },
            });
            in_dim = w;
        }
        specs.push(LayerSpec {
            in_dim,
            out_dim: self.embedding_dim,
            activation: Activation::None,
            dropout_rate: 0.0,
        });
        specs
    }

    pub fn projection_specs(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::with_capacity(self.projection.len());
        let mut in_dim = self.embedding_dim;
        for (i, &w) in self.projection.iter().enumerate() {
            let last = i + 1 == self.projection.len();
            specs.push(LayerSpec {
                in_dim,
                out_dim: w,
                activation: if last { Activation::None } else { Activation::Relu },
                dropout_rate: 0.0,
            });
            in_dim = w;
        }
        specs
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_dim == 0 || self.embedding_dim == 0 || self.hidden.contains(&0) || self.projection.contains(&0) {
            return Err(NnError::Config("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NnError::Config(format!("dropout rate {} not in [0, 1)", self.dropout_rate)));
        }
        if self.dropout_layers > self.hidden.len() {
            return Err(NnError::Config("more dropout layers than hidden layers".into()));
        }
        Ok(())
    }
}

/// Fully connected layer; `weight` is `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
    pub activation: Activation,
    pub dropout_rate: f64,
}

impl<F: Real> Dense<F> {
    pub fn zeros(spec: &LayerSpec) -> Self {
        Self {
            weight: Array2::zeros((spec.out_dim, spec.in_dim)),
            bias: Array1::zeros(spec.out_dim),
            activation: spec.activation,
            dropout_rate: spec.dropout_rate,
        }
    }

    /// Weights uniform in `±sqrt(6 / fan_in)`, zero bias.
    pub fn init<R: Rng + ?Sized>(spec: &LayerSpec, rng: &mut R) -> Self {
        let limit = (6.0 / spec.in_dim as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((spec.out_dim, spec.in_dim), || {
            F::from_f64(rng.random_range(-limit..limit)).unwrap()
        });
        Self {
            weight,
            bias: Array1::zeros(spec.out_dim),
            activation: spec.activation,
            dropout_rate: spec.dropout_rate,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            in_dim: self.in_dim(),
            out_dim: self.out_dim(),
            activation: self.activation,
            dropout_rate: self.dropout_rate,
        }
    }
}

/// Trainable state of any variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub variant: Variant,
    /// Per-feature scaling applied before the first layer.
    pub input_weights: Option<Array1<F>>,
    pub encoder: Vec<Dense<F>>,
    pub projection: Vec<Dense<F>>,
}

impl<F: Real> ModelParams<F> {
    /// Randomly initialized parameters. `fixed_weights` is required for the custom-weights variant.
    pub fn init<R: Rng + ?Sized>(
        variant: Variant,
        arch: &Architecture,
        fixed_weights: Option<&[f64]>,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        arch.validate()?;
        let input_weights = match variant {
            Variant::LearnableWeights => Some(Array1::from_elem(arch.input_dim, F::one())),
            Variant::CustomWeights => {
                let w = fixed_weights.ok_or(NnError::MissingCustomWeights)?;
                if w.len() != arch.input_dim {
                    return Err(NnError::Shape(format!(
                        "custom weight vector has {} entries, expected {}",
                        w.len(),
                        arch.input_dim
                    )));
                }
                Some(w.iter().map(|&v| F::from_f64(v).unwrap()).collect())
            }
            Variant::Standard | Variant::SimClr => None,
        };
        let encoder = arch.encoder_specs().iter().map(|s| Dense::init(s, rng)).collect();
        let projection = if variant == Variant::SimClr {
            arch.projection_specs().iter().map(|s| Dense::init(s, rng)).collect()
        } else {
            Vec::new()
        };
        let params = Self {
            variant,
            input_weights,
            encoder,
            projection,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.first().map_or(0, Dense::in_dim)
    }

    pub fn embedding_dim(&self) -> usize {
        self.encoder.last().map_or(0, Dense::out_dim)
    }

    pub fn trains_input_weights(&self) -> bool {
        self.variant == Variant::LearnableWeights
    }

    pub fn parameter_count(&self) -> usize {
        let layers: usize = self
            .encoder
            .iter()
            .chain(&self.projection)
            .map(|l| l.weight.len() + l.bias.len())
            .sum();
        layers + self.input_weights.as_ref().map_or(0, |w| w.len())
    }

    /// Checks the dimension chain and the variant's structural requirements.
    pub fn validate(&self) -> Result<(), NnError> {
        if self.encoder.is_empty() {
            return Err(NnError::Shape("encoder has no layers".into()));
        }
        for (name, chain, start) in [
            ("encoder", &self.encoder, self.input_dim()),
            ("projection", &self.projection, self.embedding_dim()),
        ] {
            let mut expected = start;
            for (i, l) in chain.iter().enumerate() {
                if l.in_dim() != expected || l.bias.len() != l.out_dim() {
                    return Err(NnError::Shape(format!(
                        "{name} layer {i}: expected input {expected}, got {}x{} with bias {}",
                        l.out_dim(),
                        l.in_dim(),
                        l.bias.len()
                    )));
                }
                if !(0.0..1.0).contains(&l.dropout_rate) {
                    return Err(NnError::Shape(format!("{name} layer {i}: dropout {}", l.dropout_rate)));
                }
                expected = l.out_dim();
            }
            if let Some(last) = chain.last() {
                if last.activation != Activation::None || last.dropout_rate != 0.0 {
                    return Err(NnError::Shape(format!(
                        "{name}: final layer must be linear without dropout"
                    )));
                }
            }
        }
        match (&self.input_weights, self.variant.has_input_weights()) {
            (Some(w), true) if w.len() == self.input_dim() => {}
            (None, false) => {}
            _ => {
                return Err(NnError::Shape(format!(
                    "variant {} input weights do not match input dim {}",
                    self.variant.as_str(),
                    self.input_dim()
                )))
            }
        }
        if (self.variant == Variant::SimClr) == self.projection.is_empty() {
            return Err(NnError::Shape(
                "a projection head is required for, and only for, the contrastive variant".into(),
            ));
        }
        Ok(())
    }

    /// Mutable views of every trainable tensor, in a fixed order.
    pub fn trainable_slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = Vec::new();
        if self.variant == Variant::LearnableWeights {
            if let Some(w) = self.input_weights.as_mut() {
                out.push(w.as_slice_mut().expect("contiguous"));
            }
        }
        for l in self.encoder.iter_mut().chain(self.projection.iter_mut()) {
            out.push(l.weight.as_slice_mut().expect("contiguous"));
            out.push(l.bias.as_slice_mut().expect("contiguous"));
        }
        out
    }
}

/// Gradients shaped like [`ModelParams`]'s trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub input_weights: Option<Array1<F>>,
    pub encoder: Vec<(Array2<F>, Array1<F>)>,
    pub projection: Vec<(Array2<F>, Array1<F>)>,
}

impl<F: Real> Gradients<F> {
    pub fn zeros_like(params: &ModelParams<F>) -> Self {
        let z = |l: &Dense<F>| (Array2::zeros(l.weight.raw_dim()), Array1::zeros(l.bias.len()));
        Self {
            input_weights: params
                .trains_input_weights()
                .then(|| Array1::zeros(params.input_dim())),
            encoder: params.encoder.iter().map(z).collect(),
            projection: params.projection.iter().map(z).collect(),
        }
    }

    /// Views in the order of [`ModelParams::trainable_slices_mut`].
    pub fn slices(&self) -> Vec<&[F]> {
        let mut out: Vec<&[F]> = Vec::new();
        if let Some(w) = &self.input_weights {
            out.push(w.as_slice().expect("contiguous"));
        }
        for (w, b) in self.encoder.iter().chain(&self.projection) {
            out.push(w.as_slice().expect("contiguous"));
            out.push(b.as_slice().expect("contiguous"));
        }
        out
    }

    pub fn is_all_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_zero()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_architecture_chain() {
        let specs = Architecture::default().encoder_specs();
        let dims: Vec<_> = specs.iter().map(|s| (s.in_dim, s.out_dim)).collect();
        assert_eq!(dims, vec![(9, 1024), (1024, 512), (512, 256), (256, 128), (128, 64), (64, 128)]);
        let drop: Vec<_> = specs.iter().map(|s| s.dropout_rate).collect();
        assert_eq!(drop, vec![0.3, 0.3, 0.3, 0.3, 0.0, 0.0]);
        assert_eq!(specs.last().unwrap().activation, Activation::None);
        assert!(specs[..5].iter().all(|s| s.activation == Activation::Relu));
        let proj: Vec<_> = Architecture::default()
            .projection_specs()
            .iter()
            .map(|s| (s.in_dim, s.out_dim, s.activation))
            .collect();
        assert_eq!(proj, vec![(128, 64, Activation::Relu), (64, 32, Activation::None)]);
    }

    #[test]
    fn init_bounds_and_variants() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let arch = Architecture::default();
        let p = ModelParams::<f32>::init(Variant::LearnableWeights, &arch, None, &mut rng).unwrap();
        let limit = (6.0f32 / 9.0).sqrt();
        assert!(p.encoder[0].weight.iter().all(|w| w.abs() <= limit));
        assert!(p.encoder.iter().all(|l| l.bias.iter().all(|b| *b == 0.0)));
        assert_eq!(p.input_weights.as_ref().unwrap().to_vec(), vec![1.0; 9]);
        assert!(p.projection.is_empty());
        assert!(matches!(
            ModelParams::<f32>::init(Variant::CustomWeights, &arch, None, &mut rng),
            Err(NnError::MissingCustomWeights)
        ));
        let s = ModelParams::<f32>::init(Variant::SimClr, &arch, None, &mut rng).unwrap();
        assert_eq!(s.projection.len(), 2);
        assert!(s.input_weights.is_none());
    }

    #[test]
    fn validate_rejects_broken_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let arch = Architecture {
            hidden: vec![8, 4],
            embedding_dim: 4,
            dropout_layers: 1,
            ..Architecture::default()
        };
        let mut p = ModelParams::<f64>::init(Variant::Standard, &arch, None, &mut rng).unwrap();
        p.encoder[1].weight = Array2::zeros((4, 7));
        assert!(matches!(p.validate(), Err(NnError::Shape(_))));
    }
}
