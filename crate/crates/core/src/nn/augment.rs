//! Feature-space augmentations for contrastive training.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::NnError;
use crate::features::{FeatureVector, FEATURE_DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Standard deviation of additive Gaussian noise per feature.
    pub noise_sigma: f64,
    /// Inclusive range of the uniform multiplicative scale applied to the whole vector.
    pub scale_range: [f64; 2],
    /// Probability of zeroing each feature.
    pub drop_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.05,
            scale_range: [0.9, 1.1],
            drop_prob: 0.1,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let [lo, hi] = self.scale_range;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(NnError::Config(format!("noise_sigma {} must be >= 0", self.noise_sigma)));
        }
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(NnError::Config(format!("scale_range [{lo}, {hi}] is empty")));
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(NnError::Config(format!("drop_prob {} not in [0, 1]", self.drop_prob)));
        }
        Ok(())
    }
}

/// Adds noise, rescales, then drops features.
pub fn augment<R: Rng + ?Sized>(x: &FeatureVector, cfg: &AugmentConfig, rng: &mut R) -> FeatureVector {
    let mut out = [0.0; FEATURE_DIM];
    let [lo, hi] = cfg.scale_range;
    let scale = if lo == hi { lo } else { rng.random_range(lo..=hi) };
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
    for (o, &v) in out.iter_mut().zip(&x.0) {
        let n = if cfg.noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };
        let dropped = cfg.drop_prob > 0.0 && rng.random_bool(cfg.drop_prob);
        *o = if dropped { 0.0 } else { (v + n) * scale };
    }
    FeatureVector(out)
}
