//! Training loops for the triplet variants and the contrastive variant.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::{augment, AugmentConfig};
use super::fpmode::FlushDenormals;
use super::loss::{ntxent, stack_views, triplet_batch};
use super::model::{Architecture, Gradients, ModelParams};
use super::network::{backward, forward, forward_trace, to_matrix, DropoutMasks, Head};
use super::optim::{adam_step, OptimizerState};
use super::{NnError, Real, Variant};
use crate::features::{FeatureRow, FeatureVector, FEATURE_DIM, FEATURE_LABELS, FEATURE_NAMES};
use crate::triplets::{Split, SplitAssignment, Triplet};

/// Input scaling of the custom-weights variant, in canonical feature order.
pub const DEFAULT_CUSTOM_WEIGHTS: [f64; FEATURE_DIM] = [0.06, 0.06, 0.06, 0.06, 0.06, 0.06, 0.06, 0.18, 0.4];

/// Offset mixed into the seed of the fixed validation augmentation stream.
const VALIDATION_STREAM: u64 = 0x76a1_1d47_10e5_eed5;

const EMBED_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub variant: Variant,
    pub margin: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// NT-Xent temperature (contrastive variant only).
    pub temperature: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
    /// Fixed input scaling; required by the custom-weights variant.
    pub custom_weights: Option<Vec<f64>>,
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_variant(Variant::Standard)
    }
}

impl TrainConfig {
    pub fn for_variant(variant: Variant) -> Self {
        let base = Self {
            variant,
            margin: 1.0,
            learning_rate: 1e-4,
            weight_decay: 1e-5,
            epochs: 2000,
            batch_size: 32,
            temperature: 0.5,
            seed: 0,
            augment: AugmentConfig::default(),
            custom_weights: None,
            architecture: Architecture::default(),
        };
        match variant {
            Variant::SimClr => Self {
                learning_rate: 1e-3,
                weight_decay: 0.0,
                epochs: 2500,
                batch_size: 18,
                ..base
            },
            _ => base,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(NnError::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("margin", self.margin)?;
        positive("learning_rate", self.learning_rate)?;
        positive("temperature", self.temperature)?;
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(NnError::Config(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        if self.epochs == 0 {
            return Err(NnError::Config("epochs must be >= 1".into()));
        }
        let min_batch = if self.variant == Variant::SimClr { 2 } else { 1 };
        if self.batch_size < min_batch {
            return Err(NnError::Config(format!("batch_size must be >= {min_batch}")));
        }
        if self.variant == Variant::CustomWeights && self.custom_weights.is_none() {
            return Err(NnError::MissingCustomWeights);
        }
        self.augment.validate()?;
        self.architecture.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    /// Parameters from the epoch with the lowest validation loss.
    pub params: ModelParams<F>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Feature rows plus the triplets and split that index into them.
#[derive(Debug, Clone, Copy)]
pub struct TrainingSet<'a> {
    pub rows: &'a [FeatureRow],
    pub triplets: &'a [Triplet],
    pub split: &'a SplitAssignment,
}

impl TrainingSet<'_> {
    fn triplets_in(&self, split: Split) -> Vec<&Triplet> {
        self.triplets
            .iter()
            .filter(|t| self.split.of(&t.specimen_id) == Some(split))
            .collect()
    }

    fn rows_in(&self, split: Split) -> Vec<usize> {
        (0..self.rows.len())
            .filter(|&i| self.split.of(&self.rows[i].specimen_id) == Some(split))
            .collect()
    }

    fn check_indices(&self) -> Result<(), NnError> {
        for t in self.triplets {
            for i in [t.anchor, t.positive, t.negative] {
                match self.rows.get(i) {
                    Some(r) if r.specimen_id == t.specimen_id => {}
                    _ => {
                        return Err(NnError::Data(format!(
                            "triplet ({}, {}, {}) of `{}` references row {i} outside its specimen",
                            t.anchor, t.positive, t.negative, t.specimen_id
                        )))
                    }
                }
            }
        }
        Ok(())
    }
}

/// `[anchors; positives; negatives]` input matrix for a set of triplets.
fn triplet_input<F: Real>(rows: &[FeatureRow], batch: &[&Triplet]) -> Array2<F> {
    let feats: Vec<[f64; FEATURE_DIM]> = [
        batch.iter().map(|t| t.anchor).collect::<Vec<_>>(),
        batch.iter().map(|t| t.positive).collect(),
        batch.iter().map(|t| t.negative).collect(),
    ]
    .concat()
    .into_iter()
    .map(|i| rows[i].features.0)
    .collect();
    to_matrix(&feats)
}

pub fn train<F: Real>(data: TrainingSet<'_>, cfg: &TrainConfig) -> Result<TrainOutcome<F>, NnError> {
    train_with(data, cfg, |_| {})
}

/// Trains and calls `on_epoch` after every epoch.
pub fn train_with<F: Real>(
    data: TrainingSet<'_>,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<F>, NnError> {
    cfg.validate()?;
    let _mode = FlushDenormals::enable();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = ModelParams::init(cfg.variant, &cfg.architecture, cfg.custom_weights.as_deref(), &mut rng)?;
    match cfg.variant {
        Variant::SimClr => train_contrastive(data, cfg, params, rng, on_epoch),
        _ => train_triplet(data, cfg, params, rng, on_epoch),
    }
}

struct Checkpoint<F> {
    best: Option<(f64, usize, ModelParams<F>)>,
}

impl<F: Real> Checkpoint<F> {
    /// Keeps the latest epoch among those tied for the lowest validation loss.
    fn offer(&mut self, val: Option<f64>, epoch: usize, params: &ModelParams<F>) {
        let Some(val) = val else { return };
        if self.best.as_ref().is_none_or(|(b, _, _)| val <= *b) {
            self.best = Some((val, epoch, params.clone()));
        }
    }

    fn finish(self, last: ModelParams<F>, epochs: usize, log: Vec<EpochLog>) -> TrainOutcome<F> {
        match self.best {
            Some((_, best_epoch, params)) => TrainOutcome { params, log, best_epoch },
            None => TrainOutcome {
                params: last,
                log,
                best_epoch: epochs,
            },
        }
    }
}

fn train_triplet<F: Real>(
    data: TrainingSet<'_>,
    cfg: &TrainConfig,
    mut params: ModelParams<F>,
    mut rng: ChaCha8Rng,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<F>, NnError> {
    data.check_indices()?;
    let train = data.triplets_in(Split::Train);
    if train.is_empty() {
        return Err(NnError::EmptyTraining);
    }
    let val = data.triplets_in(Split::Validation);
    let val_x: Option<Array2<F>> = (!val.is_empty()).then(|| triplet_input(data.rows, &val));
    let margin = F::from_f64(cfg.margin).unwrap();

    let mut state = OptimizerState::new(&mut params);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut checkpoint = Checkpoint { best: None };
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Triplet> = chunk.iter().map(|&i| train[i]).collect();
            let x = triplet_input::<F>(data.rows, &batch);
            // anchor, positive and negative pass through the same thinned network
            let masks = DropoutMasks::sample(&params, Head::Encoder, batch.len(), &mut rng).repeat(3);
            let trace = forward_trace(&params, x.view(), Head::Encoder, Some(masks))?;
            let (loss, d_out) = triplet_batch(trace.output().view(), margin)?;
            let grads = if loss > F::zero() {
                backward(&params, &trace, d_out)
            } else {
                Gradients::zeros_like(&params)
            };
            adam_step(&mut params, &grads, &mut state, cfg.learning_rate, cfg.weight_decay);
            total += loss.to_f64().unwrap() * batch.len() as f64;
        }
        let val_loss = match &val_x {
            Some(x) => {
                let emb = forward(&params, x.view(), Head::Encoder)?;
                Some(triplet_batch(emb.view(), margin)?.0.to_f64().unwrap())
            }
            None => None,
        };
        let entry = EpochLog {
            epoch,
            train_loss: total / train.len() as f64,
            val_loss,
        };
        checkpoint.offer(val_loss, epoch, &params);
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(checkpoint.finish(params, cfg.epochs, log))
}

/// Splits `order` into batches of `size`, folding a trailing single row into the
/// previous batch (NT-Xent needs at least two samples).
fn contrastive_batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = (start + size).min(order.len());
        if order.len() - end == 1 {
            end = order.len();
        }
        out.push(&order[start..end]);
        start = end;
    }
    out
}

fn augmented_views<F: Real>(
    rows: &[FeatureRow],
    idx: &[usize],
    cfg: &AugmentConfig,
    rng: &mut ChaCha8Rng,
) -> Array2<F> {
    let first: Vec<[f64; FEATURE_DIM]> = idx.iter().map(|&i| augment(&rows[i].features, cfg, rng).0).collect();
    let second: Vec<[f64; FEATURE_DIM]> = idx.iter().map(|&i| augment(&rows[i].features, cfg, rng).0).collect();
    stack_views(to_matrix::<F>(&first).view(), to_matrix::<F>(&second).view())
}

fn train_contrastive<F: Real>(
    data: TrainingSet<'_>,
    cfg: &TrainConfig,
    mut params: ModelParams<F>,
    mut rng: ChaCha8Rng,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<F>, NnError> {
    let train = data.rows_in(Split::Train);
    if train.len() < 2 {
        return Err(NnError::EmptyTraining);
    }
    let val = data.rows_in(Split::Validation);
    let temperature = F::from_f64(cfg.temperature).unwrap();

    let mut state = OptimizerState::new(&mut params);
    let mut order = train.clone();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut checkpoint = Checkpoint { best: None };
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in contrastive_batches(&order, cfg.batch_size) {
            let x = augmented_views::<F>(data.rows, batch, &cfg.augment, &mut rng);
            let masks = DropoutMasks::sample(&params, Head::Projection, x.nrows(), &mut rng);
            let trace = forward_trace(&params, x.view(), Head::Projection, Some(masks))?;
            let (loss, d_out) = ntxent(trace.output().view(), temperature)?;
            let grads = backward(&params, &trace, d_out);
            adam_step(&mut params, &grads, &mut state, cfg.learning_rate, cfg.weight_decay);
            total += loss.to_f64().unwrap() * batch.len() as f64;
        }
        // same augmentations every epoch so validation losses are comparable
        let val_loss = if val.len() >= 2 {
            let mut vrng = ChaCha8Rng::seed_from_u64(cfg.seed ^ VALIDATION_STREAM);
            let x = augmented_views::<F>(data.rows, &val, &cfg.augment, &mut vrng);
            let z = forward(&params, x.view(), Head::Projection)?;
            Some(ntxent(z.view(), temperature)?.0.to_f64().unwrap())
        } else {
            None
        };
        let entry = EpochLog {
            epoch,
            train_loss: total / train.len() as f64,
            val_loss,
        };
        checkpoint.offer(val_loss, epoch, &params);
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(checkpoint.finish(params, cfg.epochs, log))
}

/// Inference-mode encoder outputs, one row per input, as `f64`.
pub fn embed_all<F: Real>(params: &ModelParams<F>, features: &[FeatureVector]) -> Result<Array2<f64>, NnError> {
    let dim = params.embedding_dim();
    let mut out = Array2::zeros((features.len(), dim));
    for (c, chunk) in features.chunks(EMBED_CHUNK).enumerate() {
        let rows: Vec<[f64; FEATURE_DIM]> = chunk.iter().map(|f| f.0).collect();
        let x = to_matrix::<F>(&rows);
        let emb = forward(params, x.view(), Head::Encoder)?;
        for (i, row) in emb.axis_iter(Axis(0)).enumerate() {
            out.row_mut(c * EMBED_CHUNK + i).assign(&row.mapv(|v| v.to_f64().unwrap()));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureWeight {
    pub feature: &'static str,
    pub label: &'static str,
    pub weight: f64,
}

/// Input weights as `|w_i| / sum |w_j|`, in canonical feature order.
pub fn report_learned_weights<F: Real>(params: &ModelParams<F>) -> Result<Vec<FeatureWeight>, NnError> {
    let w = params.input_weights.as_ref().ok_or(NnError::NoInputWeights)?;
    if w.len() != FEATURE_DIM {
        return Err(NnError::Shape(format!("{} input weights, expected {FEATURE_DIM}", w.len())));
    }
    let abs: Vec<f64> = w.iter().map(|v| v.to_f64().unwrap().abs()).collect();
    let total: f64 = abs.iter().sum();
    if !(total > 0.0) {
        return Err(NnError::Data("input weights are all zero".into()));
    }
    Ok(abs
        .iter()
        .enumerate()
        .map(|(i, a)| FeatureWeight {
            feature: FEATURE_NAMES[i],
            label: FEATURE_LABELS[i],
            weight: a / total,
        })
        .collect())
}

pub fn write_training_log<W: std::io::Write>(w: W, log: &[EpochLog]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["epoch", "train_loss", "val_loss"])?;
    for e in log {
        wtr.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.val_loss.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
