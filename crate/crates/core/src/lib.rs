//! Pairing of wood knots seen on different faces of the same board.
//!
//! The pipeline runs frame filtering and detection parsing ([`ingest`]),
//! normalized feature vectors ([`features`]), triplet construction and
//! board-level splits ([`triplets`]), embedding networks ([`nn`]),
//! distance-threshold clustering and scoring ([`cluster`]) and a 2-D
//! projection for inspection ([`project`]). [`synth`] generates boards with
//! known pairs.

pub mod cluster;
pub mod features;
pub mod ingest;
pub mod nn;
pub mod project;
pub mod synth;
pub mod triplets;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ppm(#[from] ingest::PpmError),
    #[error(transparent)]
    Filter(#[from] ingest::FilterError),
    #[error(transparent)]
    Detection(#[from] ingest::DetectionError),
    #[error(transparent)]
    Assembly(#[from] ingest::AssemblyError),
    #[error(transparent)]
    Input(#[from] ingest::InputError),
    #[error(transparent)]
    Feature(#[from] features::FeatureError),
    #[error(transparent)]
    Triplet(#[from] triplets::TripletError),
    #[error(transparent)]
    Nn(#[from] nn::NnError),
    #[error(transparent)]
    Cluster(#[from] cluster::ClusterError),
    #[error(transparent)]
    Eval(#[from] cluster::EvalError),
    #[error(transparent)]
    Pca(#[from] project::PcaError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
