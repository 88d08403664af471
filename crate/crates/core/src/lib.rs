// SPDX-License-Identifier: MIT OR Apache-2.0

//! Neuron graphs: compact, searchable summaries of what makes a language
//! model neuron fire.
//!
//! Activation records (the top-activating dataset examples of a neuron) are
//! pruned to their essential context, scored token by token for importance,
//! optionally augmented with substitutes from a helper model, and compiled
//! into a trie. The trie simulates the neuron on new text, which lets it be
//! scored against the real activations and against lookup-table baselines.
//! Graphs for a whole model are kept in a [`corpus::GraphCorpus`] that
//! supports search by activating and context tokens and pairwise similarity.

pub mod builder;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod records;
pub mod sidecar;
pub mod substitute;
pub mod synth;
pub mod trajectory;
pub mod viz;

pub use builder::{build_corpus, build_neuron, BuildOptions};
pub use corpus::GraphCorpus;
pub use error::{Error, Result};
pub use graph::{build_graph, NeuronGraph};
pub use model::{ActivationRecord, NeuronId, Token};
pub use oracle::{ActivationOracle, ReplayOracle, SyntheticNeuron, SyntheticOracle};
pub use pipeline::{PipelineConfig, ProcessedExample};
