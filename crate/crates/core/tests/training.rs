use std::collections::BTreeMap;

use knotpair::features::{build_feature_rows, FeatureRow, FeatureVector};
use knotpair::nn::{
    embed_all, train, write_model, Architecture, ModelFile, TrainConfig, TrainingSet, Variant, DEFAULT_CUSTOM_WEIGHTS,
};
use knotpair::synth::{generate_dataset, SynthConfig};
use knotpair::triplets::{split_and_triplets, SplitAssignment, Triplet};

fn dataset(n_specimens: usize, seed: u64) -> (Vec<FeatureRow>, SplitAssignment, Vec<Triplet>) {
    let cfg = SynthConfig {
        n_specimens,
        seed,
        ..SynthConfig::default()
    };
    let specimens = generate_dataset(&cfg).unwrap();
    let boards: BTreeMap<_, _> = specimens
        .iter()
        .map(|s| (s.board.specimen_id.clone(), s.board.clone()))
        .collect();
    let records: Vec<_> = specimens.iter().flat_map(|s| s.records.clone()).collect();
    let rows = build_feature_rows(&records, &boards).unwrap();
    let (split, triplets) = split_and_triplets(&rows, seed).unwrap();
    (rows, split, triplets)
}

fn small_arch() -> Architecture {
    Architecture {
        hidden: vec![32, 16],
        embedding_dim: 8,
        dropout_layers: 1,
        projection: vec![8, 4],
        ..Architecture::default()
    }
}

fn model_bytes(variant: Variant, seed: u64) -> Vec<u8> {
    let (rows, split, triplets) = dataset(6, 3);
    let cfg = TrainConfig {
        epochs: 5,
        seed,
        architecture: small_arch(),
        custom_weights: (variant == Variant::CustomWeights).then(|| DEFAULT_CUSTOM_WEIGHTS.to_vec()),
        ..TrainConfig::for_variant(variant)
    };
    let data = TrainingSet {
        rows: &rows,
        triplets: &triplets,
        split: &split,
    };
    let out = train::<f32>(data, &cfg).unwrap();
    let mut buf = Vec::new();
    let file = ModelFile {
        params: out.params,
        config: Some(cfg),
        best_epoch: Some(out.best_epoch),
    };
    write_model(&mut buf, &file).unwrap();
    buf
}

#[test]
fn standard_variant_reduces_train_loss() {
    let (rows, split, triplets) = dataset(20, 11);
    let cfg = TrainConfig {
        epochs: 200,
        seed: 11,
        ..TrainConfig::for_variant(Variant::Standard)
    };
    let data = TrainingSet {
        rows: &rows,
        triplets: &triplets,
        split: &split,
    };
    let out = train::<f32>(data, &cfg).unwrap();
    assert_eq!(out.log.len(), 200);
    let first = out.log.first().unwrap().train_loss;
    let last = out.log.last().unwrap().train_loss;
    assert!(last < first, "train loss {first} -> {last}");
    assert!(out.log.iter().all(|e| e.val_loss.is_some()));
}

#[test]
fn same_seed_gives_identical_model_bytes() {
    for variant in Variant::ALL {
        assert_eq!(model_bytes(variant, 4), model_bytes(variant, 4), "{variant}");
    }
    assert_ne!(model_bytes(Variant::Standard, 4), model_bytes(Variant::Standard, 5));
}

#[test]
fn custom_weights_stay_bit_identical() {
    let (rows, split, triplets) = dataset(6, 8);
    let weights = vec![0.3, 0.011, 0.07, 0.5, 0.123456789, 0.9, 0.2, 0.18, 0.4];
    let cfg = TrainConfig {
        epochs: 10,
        architecture: small_arch(),
        custom_weights: Some(weights.clone()),
        ..TrainConfig::for_variant(Variant::CustomWeights)
    };
    let data = TrainingSet {
        rows: &rows,
        triplets: &triplets,
        split: &split,
    };
    let out = train::<f64>(data, &cfg).unwrap();
    assert!(!out.params.trains_input_weights());
    let stored = out.params.input_weights.unwrap();
    assert_eq!(stored.to_vec(), weights);
}

#[test]
fn learnable_weights_move_during_training() {
    let (rows, split, triplets) = dataset(6, 9);
    let cfg = TrainConfig {
        epochs: 10,
        learning_rate: 1e-2,
        architecture: small_arch(),
        ..TrainConfig::for_variant(Variant::LearnableWeights)
    };
    let data = TrainingSet {
        rows: &rows,
        triplets: &triplets,
        split: &split,
    };
    let out = train::<f64>(data, &cfg).unwrap();
    let w = out.params.input_weights.unwrap();
    assert!(w.iter().any(|&v| v != 1.0));
}

#[test]
fn embed_all_shapes_and_determinism() {
    let (rows, split, triplets) = dataset(4, 2);
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::for_variant(Variant::Standard)
    };
    let data = TrainingSet {
        rows: &rows,
        triplets: &triplets,
        split: &split,
    };
    let params = train::<f32>(data, &cfg).unwrap().params;

    let empty = embed_all(&params, &[]).unwrap();
    assert_eq!(empty.dim(), (0, 128));

    let x = rows[0].features;
    let many: Vec<FeatureVector> = std::iter::repeat_n(x, 1500).collect();
    let emb = embed_all(&params, &many).unwrap();
    assert_eq!(emb.dim(), (1500, 128));
    for r in 1..emb.nrows() {
        assert_eq!(emb.row(r), emb.row(0));
    }
    let again = embed_all(&params, &many[..3]).unwrap();
    assert_eq!(again.row(0), emb.row(0));
}

#[test]
fn empty_training_split_is_rejected() {
    let (rows, split, _) = dataset(4, 2);
    let data = TrainingSet {
        rows: &rows,
        triplets: &[],
        split: &split,
    };
    let cfg = TrainConfig {
        epochs: 1,
        architecture: small_arch(),
        ..TrainConfig::default()
    };
    assert!(train::<f32>(data, &cfg).is_err());
}
