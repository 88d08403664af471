// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared by every stage of the graph-building pipeline.

use std::path::PathBuf;

use crate::model::NeuronId;

/// Errors raised by oracles, the pipeline, graph construction, evaluation and
/// corpus persistence.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("neuron {0} is not known to this oracle")]
    NeuronNotFound(NeuronId),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The oracle holds no data that determines the requested activations.
    /// Distinct from a genuine activation of zero.
    #[error("query cannot be answered from stored records")]
    Unanswerable,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("example has no positive activation")]
    DegenerateExample,

    #[error("oracle could not answer a pruning or saliency query")]
    OracleGap,

    #[error("substitute provider failed: {0}")]
    AugmentationUnavailable(String),

    #[error("no example survived the pipeline")]
    EmptyPipelineOutput,

    #[error("cannot build a graph from zero examples")]
    EmptyGraph,

    #[error("need at least {needed} records, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("empty report group")]
    EmptyGroup,

    #[error("unsupported corpus format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("corrupt corpus: {0}")]
    CorruptCorpus(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    /// The remote model service could not be reached or broke protocol.
    #[error("sidecar transport: {0}")]
    Transport(String),

    /// The remote model service answered with an error code.
    #[error("sidecar error: {0}")]
    Remote(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
