//! Trains the learnable- and custom-weight variants on a synthetic dataset and
//! prints test accuracy and learned feature weights.
//!
//! Usage: `cargo run --release --example synthetic_benchmark [epochs] [seed]`

use std::time::Instant;

use knotpair::cluster::{evaluate_split, ThresholdGrid};
use knotpair::features::build_feature_rows;
use knotpair::nn::{report_learned_weights, train_with, TrainConfig, TrainingSet, Variant, DEFAULT_CUSTOM_WEIGHTS};
use knotpair::synth::{generate_dataset, SynthConfig};
use knotpair::triplets::split_and_triplets;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2000);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    let synth = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    let specimens = generate_dataset(&synth)?;
    let boards = specimens.iter().map(|s| (s.board.specimen_id.clone(), s.board.clone())).collect();
    let records: Vec<_> = specimens.iter().flat_map(|s| s.records.clone()).collect();
    let rows = build_feature_rows(&records, &boards)?;
    let (split, triplets) = split_and_triplets(&rows, seed)?;
    println!("{} knots, {} triplets", rows.len(), triplets.len());

    for variant in [Variant::LearnableWeights, Variant::CustomWeights] {
        let cfg = TrainConfig {
            epochs,
            seed,
            custom_weights: (variant == Variant::CustomWeights).then(|| DEFAULT_CUSTOM_WEIGHTS.to_vec()),
            ..TrainConfig::for_variant(variant)
        };
        let start = Instant::now();
        let data = TrainingSet {
            rows: &rows,
            triplets: &triplets,
            split: &split,
        };
        let out = train_with::<f32>(data, &cfg, |e| {
            if e.epoch % 100 == 0 {
                println!(
                    "  epoch {:5}  train {:.5}  val {:?}  {:.1}s",
                    e.epoch,
                    e.train_loss,
                    e.val_loss,
                    start.elapsed().as_secs_f64()
                );
            }
        })?;
        let report = evaluate_split(&out.params, &rows, &split, &ThresholdGrid::default())?;
        println!(
            "{:<30} threshold {:.2}  val {:.3}  test {:.3}  best epoch {:?}  {:.1}s",
            variant.title(),
            report.threshold,
            report.validation_accuracy,
            report.test_accuracy,
            out.best_epoch,
            start.elapsed().as_secs_f64()
        );
        if variant == Variant::LearnableWeights {
            for w in report_learned_weights(&out.params)? {
                println!("    {:<28} {:.3}", w.label, w.weight);
            }
        }
    }
    Ok(())
}
