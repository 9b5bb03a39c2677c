//! JSON model files.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::model::{Dense, ModelParams};
use super::train::TrainConfig;
use super::{Activation, NnError, Real, Variant};

pub const FORMAT: &str = "knotpair-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerJson {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    dropout: f64,
    /// Row-major `out_dim x in_dim`.
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelJson {
    format: String,
    version: u32,
    dtype: String,
    variant: Variant,
    embedding_source: String,
    input_weights: Option<Vec<f64>>,
    input_weights_trainable: bool,
    encoder: Vec<LayerJson>,
    projection: Vec<LayerJson>,
    best_epoch: Option<usize>,
    config: Option<TrainConfig>,
}

/// A trained model plus the settings that produced it.
#[derive(Debug, Clone)]
pub struct ModelFile<F> {
    pub params: ModelParams<F>,
    pub config: Option<TrainConfig>,
    pub best_epoch: Option<usize>,
}

fn to_f64<F: Real>(v: impl IntoIterator<Item = F>) -> Vec<f64> {
    v.into_iter().map(|x| x.to_f64().unwrap()).collect()
}

fn layer_json<F: Real>(l: &Dense<F>) -> LayerJson {
    LayerJson {
        in_dim: l.in_dim(),
        out_dim: l.out_dim(),
        activation: l.activation,
        dropout: l.dropout_rate,
        weight: to_f64(l.weight.iter().copied()),
        bias: to_f64(l.bias.iter().copied()),
    }
}

fn cast<F: Real>(v: &[f64]) -> Vec<F> {
    v.iter().map(|&x| F::from_f64(x).unwrap()).collect()
}

fn layer_from_json<F: Real>(l: &LayerJson, what: &str) -> Result<Dense<F>, NnError> {
    if l.weight.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
        return Err(NnError::Format(format!(
            "{what}: {} weights and {} biases for a {}x{} layer",
            l.weight.len(),
            l.bias.len(),
            l.out_dim,
            l.in_dim
        )));
    }
    if !(0.0..1.0).contains(&l.dropout) {
        return Err(NnError::Format(format!("{what}: dropout {} not in [0, 1)", l.dropout)));
    }
    if l.weight.iter().chain(&l.bias).any(|v| !v.is_finite()) {
        return Err(NnError::Format(format!("{what}: non-finite parameter")));
    }
    Ok(Dense {
        weight: Array2::from_shape_vec((l.out_dim, l.in_dim), cast(&l.weight)).expect("length checked"),
        bias: Array1::from_vec(cast(&l.bias)),
        activation: l.activation,
        dropout_rate: l.dropout,
    })
}

pub fn write_model<F: Real, W: Write>(w: W, model: &ModelFile<F>) -> Result<(), NnError> {
    let p = &model.params;
    let json = ModelJson {
        format: FORMAT.into(),
        version: VERSION,
        dtype: F::NAME.into(),
        variant: p.variant,
        embedding_source: "encoder".into(),
        input_weights: p.input_weights.as_ref().map(|w| to_f64(w.iter().copied())),
        input_weights_trainable: p.trains_input_weights(),
        encoder: p.encoder.iter().map(layer_json).collect(),
        projection: p.projection.iter().map(layer_json).collect(),
        best_epoch: model.best_epoch,
        config: model.config.clone(),
    };
    serde_json::to_writer_pretty(w, &json)?;
    Ok(())
}

pub fn read_model<F: Real, R: Read>(r: R) -> Result<ModelFile<F>, NnError> {
    let json: ModelJson = serde_json::from_reader(r)?;
    if json.format != FORMAT {
        return Err(NnError::Format(format!("format `{}`, expected `{FORMAT}`", json.format)));
    }
    if json.version != VERSION {
        return Err(NnError::Format(format!("unsupported version {}", json.version)));
    }
    if json.embedding_source != "encoder" {
        return Err(NnError::Format(format!("embedding_source `{}`", json.embedding_source)));
    }
    if json.input_weights_trainable != (json.variant == Variant::LearnableWeights) {
        return Err(NnError::Format("input_weights_trainable disagrees with variant".into()));
    }
    if json.input_weights.is_some() != json.variant.has_input_weights() {
        return Err(NnError::Format(format!("input weights presence disagrees with variant {}", json.variant)));
    }
    let encoder = json
        .encoder
        .iter()
        .enumerate()
        .map(|(i, l)| layer_from_json(l, &format!("encoder layer {i}")))
        .collect::<Result<Vec<_>, _>>()?;
    let projection = json
        .projection
        .iter()
        .enumerate()
        .map(|(i, l)| layer_from_json(l, &format!("projection layer {i}")))
        .collect::<Result<Vec<_>, _>>()?;
    let params = ModelParams {
        variant: json.variant,
        input_weights: json.input_weights.as_deref().map(|w| Array1::from_vec(cast(w))),
        encoder,
        projection,
    };
    params.validate().map_err(|e| NnError::Format(e.to_string()))?;
    Ok(ModelFile {
        params,
        config: json.config,
        best_epoch: json.best_epoch,
    })
}

pub fn save_model<F: Real>(path: &Path, model: &ModelFile<F>) -> Result<(), NnError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_model<F: Real>(path: &Path) -> Result<ModelFile<F>, NnError> {
    read_model(BufReader::new(File::open(path)?))
}

/// Row-aligned embeddings and the specimen of each row.
///
/// Stored as CSV `specimen_id,knot_index,e0,e1,...`, where `knot_index` counts
/// rows within a specimen in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub specimen_ids: Vec<String>,
    pub values: Array2<f64>,
}

impl EmbeddingTable {
    pub fn knot_indices(&self) -> Vec<usize> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        self.specimen_ids
            .iter()
            .map(|s| {
                let n = seen.entry(s).or_default();
                *n += 1;
                *n - 1
            })
            .collect()
    }
}

pub fn write_embeddings<W: Write>(w: W, table: &EmbeddingTable) -> crate::Result<()> {
    if table.specimen_ids.len() != table.values.nrows() {
        return Err(NnError::Shape(format!(
            "{} specimen ids for {} embedding rows",
            table.specimen_ids.len(),
            table.values.nrows()
        ))
        .into());
    }
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["specimen_id".to_owned(), "knot_index".to_owned()];
    header.extend((0..table.values.ncols()).map(|j| format!("e{j}")));
    wtr.write_record(&header)?;
    for ((id, k), row) in table.specimen_ids.iter().zip(table.knot_indices()).zip(table.values.rows()) {
        let mut rec = vec![id.clone(), k.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_embeddings<R: Read>(r: R) -> crate::Result<EmbeddingTable> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let dim = header.len().saturating_sub(2);
    let expected = ["specimen_id", "knot_index"]
        .into_iter()
        .map(String::from)
        .chain((0..dim).map(|j| format!("e{j}")));
    if header.len() < 3 || !header.iter().zip(expected).all(|(h, e)| h == e) {
        return Err(NnError::Format("embeddings header must be specimen_id,knot_index,e0,...".into()).into());
    }
    let mut ids = Vec::new();
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| NnError::Format(format!("embeddings line {line}: {what}"));
        ids.push(rec[0].to_owned());
        indices.push(rec[1].parse::<usize>().map_err(|_| bad("knot_index is not an integer"))?);
        for v in rec.iter().skip(2) {
            let v: f64 = v.parse().map_err(|_| bad("value is not a number"))?;
            if !v.is_finite() {
                return Err(bad("non-finite value").into());
            }
            values.push(v);
        }
    }
    let values = Array2::from_shape_vec((ids.len(), dim), values).expect("csv rows have equal length");
    let table = EmbeddingTable {
        specimen_ids: ids,
        values,
    };
    if table.knot_indices() != indices {
        return Err(NnError::Format("knot_index must count rows within each specimen".into()).into());
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::Architecture;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(variant: Variant) -> ModelParams<f32> {
        let arch = Architecture {
            hidden: vec![8, 4],
            embedding_dim: 4,
            dropout_layers: 1,
            projection: vec![3],
            ..Architecture::default()
        };
        let fixed = [0.5; 9];
        let fixed = (variant == Variant::CustomWeights).then_some(&fixed[..]);
        ModelParams::init(variant, &arch, fixed, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        for v in Variant::ALL {
            let model = ModelFile {
                params: small(v),
                config: Some(TrainConfig::for_variant(v)),
                best_epoch: Some(7),
            };
            let mut buf = Vec::new();
            write_model(&mut buf, &model).unwrap();
            let back: ModelFile<f32> = read_model(&buf[..]).unwrap();
            assert_eq!(back.params, model.params);
            assert_eq!(back.config, model.config);
            assert_eq!(back.best_epoch, Some(7));
        }
    }

    #[test]
    fn rejects_broken_files() {
        let model = ModelFile {
            params: small(Variant::Standard),
            config: None,
            best_epoch: None,
        };
        let mut buf = Vec::new();
        write_model(&mut buf, &model).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let bad_format = text.replace(FORMAT, "other");
        assert!(matches!(read_model::<f32, _>(bad_format.as_bytes()), Err(NnError::Format(_))));
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["encoder"][1]["in_dim"] = 5.into();
        let s = v.to_string();
        assert!(matches!(read_model::<f32, _>(s.as_bytes()), Err(NnError::Format(_))));
        assert!(matches!(read_model::<f32, _>(&b"{"[..]), Err(NnError::Json(_))));
    }

    #[test]
    fn embeddings_round_trip() {
        let table = EmbeddingTable {
            specimen_ids: vec!["A".into(), "B".into(), "A".into()],
            values: Array2::from_shape_vec((3, 2), vec![0.1, -2.5, 1e-300, 3.0, 0.3333333333333333, 7.0]).unwrap(),
        };
        assert_eq!(table.knot_indices(), vec![0, 0, 1]);
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &table).unwrap();
        assert!(buf.starts_with(b"specimen_id,knot_index,e0,e1\n"));
        assert_eq!(read_embeddings(&buf[..]).unwrap(), table);
    }

    #[test]
    fn embeddings_with_wrong_index_are_rejected() {
        let text = "specimen_id,knot_index,e0\nA,1,0.5\n";
        assert!(read_embeddings(text.as_bytes()).is_err());
        assert!(read_embeddings("id,e0\nA,1\n".as_bytes()).is_err());
    }
}
