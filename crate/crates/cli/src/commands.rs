use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use knotpair::cluster::{
    cluster_embeddings, evaluate_embeddings, pairing_rows, read_pairings, specimen_evals, threshold_search,
    write_curve, write_pairings, SplitReport,
};
use knotpair::features::{build_feature_rows, read_features, write_features, FeatureRow, FeatureVector};
use knotpair::ingest::{assemble_knot_records, parse_ppm, read_boards, read_label_dir, read_measurements, OutlierFilter};
use knotpair::nn::{
    embed_all, load_model, read_embeddings, report_learned_weights, train_with, write_embeddings, write_model,
    write_training_log, EmbeddingTable, ModelFile, TrainingSet,
};
use knotpair::project::{pca_fit, pca_project, scatter_svg, write_scatter, ScatterRow};
use knotpair::synth::{generate_dataset, write_dataset, BOARDS_FILE, LABELS_DIR, MEASUREMENTS_FILE};
use knotpair::triplets::{read_split, read_triplets, split_and_triplets, write_split, write_triplets, Split, SplitAssignment, Triplet};
use ndarray::Axis;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::Output;
use crate::Scope;

pub const FILTER_FILE: &str = "filter.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const SPLIT_FILE: &str = "split.csv";
pub const TRIPLETS_FILE: &str = "triplets.csv";
pub const MODEL_FILE: &str = "model.json";
pub const LOG_FILE: &str = "training_log.csv";
pub const WEIGHTS_FILE: &str = "learned_weights.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";
pub const PAIRINGS_FILE: &str = "pairings.csv";
pub const CURVE_FILE: &str = "threshold_curve.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const SCATTER_FILE: &str = "scatter.csv";
pub const SVG_FILE: &str = "scatter.svg";

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::Invalid(format!("missing --{flag} (or paths.{flag} in the config)")))
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.paths.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn load_features(path: &Path) -> Result<Vec<FeatureRow>, CliError> {
    read_features(open(path)?).map_err(|e| CliError::at(path, e))
}

fn load_split(path: &Path) -> Result<SplitAssignment, CliError> {
    read_split(open(path)?).map_err(|e| CliError::at(path, e))
}

fn load_triplets(path: &Path) -> Result<Vec<Triplet>, CliError> {
    read_triplets(open(path)?).map_err(|e| CliError::at(path, e))
}

fn load_embeddings(path: &Path) -> Result<EmbeddingTable, CliError> {
    read_embeddings(open(path)?).map_err(|e| CliError::at(path, e))
}

fn load(path: &Path) -> Result<ModelFile<f32>, CliError> {
    load_model(path).map_err(|e| CliError::at(path, e))
}

pub fn filter(mut cfg: RunConfig, images: Option<PathBuf>) -> Result<(), CliError> {
    cfg.paths.images = images.or(cfg.paths.images.take());
    let dir = required(&cfg.paths.images, "images")?.to_owned();
    let settings = OutlierFilter {
        tolerance: cfg.filter.tolerance,
        min_fraction: cfg.filter.min_fraction,
        ..OutlierFilter::default()
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(&dir).map_err(|e| CliError::io(&dir, e))? {
        let path = entry.map_err(|e| CliError::io(&dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm")) {
            files.push(path);
        }
    }
    files.sort();
    let mut rows = Vec::with_capacity(files.len());
    for path in &files {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let img = parse_ppm(&bytes).map_err(|e| CliError::at(path, e))?;
        let (fraction, decision) = settings.evaluate(&img).map_err(|e| CliError::at(path, e))?;
        let name = path.file_name().expect("read_dir entries have names").to_string_lossy().into_owned();
        rows.push((name, fraction, decision));
    }
    let mut out = Output::new(&out_dir(&cfg), "filter", cfg.clone())?;
    out.input("images", &dir);
    out.write(FILTER_FILE, |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["file", "fraction", "decision"])?;
        for (name, fraction, decision) in &rows {
            wtr.write_record([name.as_str(), &fraction.to_string(), decision.as_str()])?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    let removed = rows.iter().filter(|r| r.2.as_str() == "remove").count();
    println!("{} frames, {removed} removed", rows.len());
    Ok(())
}

pub fn synth(mut cfg: RunConfig) -> Result<(), CliError> {
    cfg.synth.seed = cfg.seed;
    let dir = out_dir(&cfg);
    let specimens = generate_dataset(&cfg.synth).map_err(|e| CliError::Invalid(e.to_string()))?;
    write_dataset(&dir, &cfg.synth, &specimens).map_err(|e| CliError::at(&dir, e))?;
    let knots: usize = specimens.iter().map(|s| s.truth.clusters.len()).sum();
    println!("{} boards, {knots} knots", specimens.len());
    Ok(())
}

pub fn extract(mut cfg: RunConfig) -> Result<(), CliError> {
    let from_data = |name: &str| cfg.paths.data.as_ref().map(|d| d.join(name));
    let boards_path = cfg.paths.boards.clone().or_else(|| from_data(BOARDS_FILE));
    let measurements_path = cfg.paths.measurements.clone().or_else(|| from_data(MEASUREMENTS_FILE));
    let labels_path = cfg.paths.labels.clone().or_else(|| from_data(LABELS_DIR));
    let boards_path = required(&boards_path, "boards")?.to_owned();
    let measurements_path = required(&measurements_path, "measurements")?.to_owned();
    let labels_path = required(&labels_path, "labels")?.to_owned();

    let boards = read_boards(&boards_path).map_err(knotpair::Error::from)?;
    let measurements = read_measurements(&measurements_path).map_err(knotpair::Error::from)?;
    let detections =
        read_label_dir(&labels_path, cfg.frame_advance_mm, cfg.frame_length_mm).map_err(knotpair::Error::from)?;
    let records = assemble_knot_records(&detections, &measurements, &boards).map_err(knotpair::Error::from)?;
    let rows = build_feature_rows(&records, &boards).map_err(knotpair::Error::from)?;

    cfg.paths.boards = Some(boards_path.clone());
    cfg.paths.measurements = Some(measurements_path.clone());
    cfg.paths.labels = Some(labels_path.clone());
    let mut out = Output::new(&out_dir(&cfg), "extract", cfg.clone())?;
    out.input("boards", &boards_path);
    out.input("measurements", &measurements_path);
    out.input("labels", &labels_path);
    out.write(FEATURES_FILE, |w| Ok(write_features(w, &rows)?))?;
    println!("{} knot occurrences on {} boards", rows.len(), boards.len());
    Ok(())
}

pub fn triplets(cfg: RunConfig) -> Result<(), CliError> {
    let features_path = required(&cfg.paths.features, "features")?.to_owned();
    let rows = load_features(&features_path)?;
    let (split, triplets) = split_and_triplets(&rows, cfg.seed).map_err(knotpair::Error::from)?;
    let mut out = Output::new(&out_dir(&cfg), "triplets", cfg)?;
    out.input("features", &features_path);
    out.write(SPLIT_FILE, |w| Ok(write_split(w, &split)?))?;
    out.write(TRIPLETS_FILE, |w| Ok(write_triplets(w, &triplets)?))?;
    println!(
        "{} triplets; boards: {} train, {} validation, {} test",
        triplets.len(),
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    Ok(())
}

pub fn train(cfg: RunConfig) -> Result<(), CliError> {
    let train_cfg = cfg.train.clone().expect("train settings resolved by the caller");
    train_cfg.validate().map_err(knotpair::Error::from)?;
    let features_path = required(&cfg.paths.features, "features")?.to_owned();
    let split_path = required(&cfg.paths.split, "split")?.to_owned();
    let triplets_path = required(&cfg.paths.triplets, "triplets")?.to_owned();
    let rows = load_features(&features_path)?;
    let split = load_split(&split_path)?;
    let triplets = load_triplets(&triplets_path)?;
    let data = TrainingSet {
        rows: &rows,
        triplets: &triplets,
        split: &split,
    };
    let outcome = train_with::<f32>(data, &train_cfg, |_| {}).map_err(knotpair::Error::from)?;

    let mut out = Output::new(&out_dir(&cfg), "train", cfg)?;
    out.input("features", &features_path);
    out.input("split", &split_path);
    out.input("triplets", &triplets_path);
    let model = ModelFile {
        params: outcome.params,
        config: Some(train_cfg.clone()),
        best_epoch: Some(outcome.best_epoch),
    };
    out.write(MODEL_FILE, |w| Ok(write_model(w, &model)?))?;
    out.write(LOG_FILE, |w| Ok(write_training_log(w, &outcome.log)?))?;
    println!(
        "{}: {} epochs, best validation loss at epoch {}",
        train_cfg.variant.title(),
        train_cfg.epochs,
        outcome.best_epoch
    );
    if model.params.trains_input_weights() {
        let weights = report_learned_weights(&model.params).map_err(knotpair::Error::from)?;
        out.write(WEIGHTS_FILE, |w| {
            let mut wtr = csv::Writer::from_writer(w);
            for fw in &weights {
                wtr.serialize(fw)?;
            }
            wtr.flush()?;
            Ok(())
        })?;
        println!("{:<28} Weight", "Feature");
        for fw in &weights {
            println!("{:<28} {:.3}", fw.label, fw.weight);
        }
    }
    Ok(())
}

pub fn embed(cfg: RunConfig) -> Result<(), CliError> {
    let model_path = cfg
        .paths
        .models
        .first()
        .cloned()
        .ok_or_else(|| CliError::Invalid("missing --model (or paths.models in the config)".into()))?;
    let features_path = required(&cfg.paths.features, "features")?.to_owned();
    let model = load(&model_path)?;
    let rows = load_features(&features_path)?;
    let vectors: Vec<FeatureVector> = rows.iter().map(|r| r.features).collect();
    let values = embed_all(&model.params, &vectors).map_err(knotpair::Error::from)?;
    let table = EmbeddingTable {
        specimen_ids: rows.iter().map(|r| r.specimen_id.clone()).collect(),
        values,
    };
    let mut out = Output::new(&out_dir(&cfg), "embed", cfg)?;
    out.input("model", &model_path);
    out.input("features", &features_path);
    out.write(EMBEDDINGS_FILE, |w| write_embeddings(w, &table))?;
    println!("{} rows embedded in {} dimensions", table.values.nrows(), table.values.ncols());
    Ok(())
}

/// Checks that embeddings rows line up with feature rows.
fn check_aligned(table: &EmbeddingTable, rows: &[FeatureRow]) -> Result<(), CliError> {
    let aligned = table.specimen_ids.len() == rows.len()
        && table.specimen_ids.iter().zip(rows).all(|(s, r)| *s == r.specimen_id);
    if aligned {
        Ok(())
    } else {
        Err(CliError::Invalid("embeddings rows do not match the features file".into()))
    }
}

pub fn cluster(cfg: RunConfig, threshold: Option<f64>) -> Result<(), CliError> {
    let embeddings_path = required(&cfg.paths.embeddings, "embeddings")?.to_owned();
    let table = load_embeddings(&embeddings_path)?;
    let mut inputs = vec![("embeddings", embeddings_path)];
    let mut curve = None;
    let threshold = match threshold {
        Some(t) => t,
        None => {
            let features_path = required(&cfg.paths.features, "features")?.to_owned();
            let split_path = required(&cfg.paths.split, "split")?.to_owned();
            let rows = load_features(&features_path)?;
            check_aligned(&table, &rows)?;
            let split = load_split(&split_path)?;
            let val = specimen_evals(&rows, table.values.view(), &split.validation).map_err(knotpair::Error::from)?;
            let search = threshold_search(&val, &cfg.grid).map_err(knotpair::Error::from)?;
            inputs.push(("features", features_path));
            inputs.push(("split", split_path));
            curve = Some(search.curve);
            search.threshold
        }
    };
    let partitions =
        cluster_embeddings(&table.specimen_ids, table.values.view(), threshold).map_err(knotpair::Error::from)?;
    let mut out = Output::new(&out_dir(&cfg), "cluster", cfg)?;
    for (name, path) in &inputs {
        out.input(name, path);
    }
    out.note("threshold", threshold.to_string());
    out.write(PAIRINGS_FILE, |w| Ok(write_pairings(w, &pairing_rows(&partitions))?))?;
    if let Some(curve) = &curve {
        out.write(CURVE_FILE, |w| Ok(write_curve(w, curve)?))?;
    }
    let clusters: usize = partitions.iter().map(|p| p.clusters.len()).sum();
    println!("threshold {threshold}: {clusters} clusters on {} boards", partitions.len());
    Ok(())
}

pub fn eval(cfg: RunConfig) -> Result<(), CliError> {
    if cfg.paths.models.is_empty() {
        return Err(CliError::Invalid("missing --model (or paths.models in the config)".into()));
    }
    let features_path = required(&cfg.paths.features, "features")?.to_owned();
    let split_path = required(&cfg.paths.split, "split")?.to_owned();
    let rows = load_features(&features_path)?;
    let split = load_split(&split_path)?;
    let vectors: Vec<FeatureVector> = rows.iter().map(|r| r.features).collect();

    let mut results: Vec<(PathBuf, &'static str, SplitReport)> = Vec::new();
    for path in &cfg.paths.models {
        let model = load(path)?;
        let emb = embed_all(&model.params, &vectors).map_err(knotpair::Error::from)?;
        let report = evaluate_embeddings(&rows, emb.view(), &split, &cfg.grid).map_err(knotpair::Error::from)?;
        results.push((path.clone(), model.params.variant.title(), report));
    }

    let mut out = Output::new(&out_dir(&cfg), "eval", cfg.clone())?;
    out.input("features", &features_path);
    out.input("split", &split_path);
    for (i, path) in cfg.paths.models.iter().enumerate() {
        out.input(&format!("model_{}", i + 1), path);
    }
    out.write(EVAL_FILE, |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "model",
            "variant",
            "threshold",
            "validation_accuracy",
            "test_accuracy",
            "test_matched",
            "test_clusters",
        ])?;
        for (path, title, r) in &results {
            wtr.write_record([
                path.display().to_string(),
                title.to_string(),
                r.threshold.to_string(),
                r.validation_accuracy.to_string(),
                r.test_accuracy.to_string(),
                r.test_matched.to_string(),
                r.test_clusters.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    for (i, (_, _, r)) in results.iter().enumerate() {
        out.write(&format!("curve_{}.csv", i + 1), |w| Ok(write_curve(w, &r.validation_curve)?))?;
    }

    let mut stdout = std::io::stdout().lock();
    let table = eval_table(&results);
    stdout
        .write_all(table.as_bytes())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
    Ok(())
}

fn eval_table(results: &[(PathBuf, &'static str, SplitReport)]) -> String {
    let width = results.iter().map(|r| r.1.len()).chain([5]).max().unwrap_or(5);
    let mut s = format!("{:<width$}  {:>17}  {:>8}\n", "Model", "Optimal Threshold", "Accuracy");
    for (_, title, r) in results {
        s.push_str(&format!("{title:<width$}  {:>17.2}  {:>8.3}\n", r.threshold, r.test_accuracy));
    }
    s
}

pub fn viz(cfg: RunConfig, specimen: Option<String>, scope: Scope) -> Result<(), CliError> {
    let embeddings_path = required(&cfg.paths.embeddings, "embeddings")?.to_owned();
    let pairings_path = required(&cfg.paths.pairings, "pairings")?.to_owned();
    let table = load_embeddings(&embeddings_path)?;
    let pairings = read_pairings(open(&pairings_path)?).map_err(|e| CliError::at(&pairings_path, e))?;
    let cluster_of: BTreeMap<(&str, usize), usize> = pairings
        .iter()
        .map(|p| ((p.specimen_id.as_str(), p.knot_index), p.cluster_id))
        .collect();

    let split = match scope {
        Scope::All => None,
        _ => Some(load_split(required(&cfg.paths.split, "split")?)?),
    };
    let wanted = |id: &str| {
        specimen.as_deref().is_none_or(|s| s == id)
            && match (&split, scope) {
                (Some(split), Scope::Train) => split.of(id) == Some(Split::Train),
                (Some(split), Scope::Validation) => split.of(id) == Some(Split::Validation),
                (Some(split), Scope::Test) => split.of(id) == Some(Split::Test),
                _ => true,
            }
    };
    let knot_index = table.knot_indices();
    let keep: Vec<usize> = (0..table.specimen_ids.len())
        .filter(|&i| wanted(&table.specimen_ids[i]))
        .collect();
    let selected = table.values.select(Axis(0), &keep);
    let pca = pca_fit(selected.view()).map_err(knotpair::Error::from)?;
    let xy = pca_project(&pca, selected.view()).map_err(knotpair::Error::from)?;
    let mut rows = Vec::with_capacity(keep.len());
    for (r, &i) in keep.iter().enumerate() {
        let id = table.specimen_ids[i].as_str();
        let cluster_id = *cluster_of.get(&(id, knot_index[i])).ok_or_else(|| {
            CliError::Invalid(format!("no pairing for board {id} knot {}", knot_index[i]))
        })?;
        rows.push(ScatterRow {
            specimen_id: id.to_owned(),
            knot_index: knot_index[i],
            cluster_id,
            x: xy[[r, 0]],
            y: xy[[r, 1]],
        });
    }
    let mut out = Output::new(&out_dir(&cfg), "viz", cfg)?;
    out.input("embeddings", &embeddings_path);
    out.input("pairings", &pairings_path);
    out.write(SCATTER_FILE, |w| Ok(write_scatter(w, &rows)?))?;
    out.write(SVG_FILE, |w| Ok(w.write_all(scatter_svg(&rows).as_bytes())?))?;
    println!(
        "{} points; explained variance {:.4} {:.4}",
        rows.len(),
        pca.explained_variance[0],
        pca.explained_variance[1]
    );
    Ok(())
}
