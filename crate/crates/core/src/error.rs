use std::path::PathBuf;

use thiserror::Error;

use crate::chem::ParseDiagnostic;
use crate::descriptors::DescriptorError;
use crate::encoding::EncodingError;
use crate::fingerprints::FingerprintError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Nn(#[from] molrange_nn::NnError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Parse(#[from] ParseDiagnostic),
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training data contains a single class")]
    SingleClassDataset,
    #[error("input is empty")]
    EmptyInput,
    #[error("need at least two molecules")]
    FewerThanTwo,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint does not match the model: {0}")]
    CheckpointMismatch(String),
    #[error("negative satisfaction probability {0} under the unsigned formula")]
    NegativeProbability(f64),
    #[error("invalid value for config key `{key}`: {message}")]
    ConfigInvalid { key: String, message: String },
    #[error("missing checkpoint {0} (run the earlier stage first)")]
    MissingCheckpoint(PathBuf),
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("no valid lines in {0}")]
    AllLinesInvalid(PathBuf),
    #[error("{0} already exists (pass --force to overwrite)")]
    OutputExists(PathBuf),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
