// SPDX-License-Identifier: MIT OR Apache-2.0

//! Building graphs for many neurons at once.

use rayon::prelude::*;

use crate::corpus::{BuildFailure, GraphCorpus, Manifest, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::eval::split_examples;
use crate::graph::{build_graph, NeuronGraph};
use crate::model::{ActivationRecord, NeuronId};
use crate::oracle::ActivationOracle;
use crate::pipeline::{process_neuron, PipelineConfig};
use crate::records::RecordSet;
use crate::substitute::SubstituteProvider;

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub config: PipelineConfig,
    /// Seed of the train/test split.
    pub seed: u64,
    /// Build from the training half of each neuron's records. Neurons with
    /// a single record always use it.
    pub holdout: bool,
    /// Worker threads; `None` uses all cores. Further bounded by the
    /// oracle's in-flight limit.
    pub parallelism: Option<usize>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            config: PipelineConfig::default(),
            seed: 0,
            holdout: true,
            parallelism: None,
        }
    }
}

/// Records a graph is built from under the given split settings.
pub fn training_records(
    records: &[ActivationRecord],
    seed: u64,
    holdout: bool,
) -> Result<Vec<ActivationRecord>> {
    if holdout && records.len() >= 2 {
        Ok(split_examples(records, seed)?.0)
    } else {
        Ok(records.to_vec())
    }
}

/// Runs the pipeline over `records` and compiles the result.
///
/// The normaliser is the largest `max_activation` among the records; it is
/// marked as a proxy if any record's is. A neuron whose records never
/// activate fails with [`Error::DegenerateExample`].
pub fn build_neuron(
    neuron: NeuronId,
    records: &[ActivationRecord],
    oracle: &dyn ActivationOracle,
    provider: Option<&dyn SubstituteProvider>,
    cfg: &PipelineConfig,
) -> Result<NeuronGraph> {
    if !records.is_empty()
        && records
            .iter()
            .all(|r| r.activations.iter().all(|a| *a <= 0.0))
    {
        return Err(Error::DegenerateExample);
    }
    let a_max = records.iter().map(|r| r.max_activation).fold(0.0, f64::max);
    let proxy = records.iter().any(|r| r.max_activation_proxy);
    let out = process_neuron(neuron, records, oracle, provider, cfg)?;
    let mut graph = build_graph(&out.examples, neuron, a_max, proxy, cfg)?;
    graph.build_stats = out.stats;
    Ok(graph)
}

fn failure_reason(e: &Error) -> String {
    match e {
        Error::DegenerateExample => "degenerate".into(),
        Error::OracleGap => "oracle_gap".into(),
        other => other.to_string(),
    }
}

/// Builds one graph per neuron. Neurons that fail are listed in the
/// manifest and skipped; errors that would affect every neuron (an invalid
/// configuration, a lost connection) abort the build.
pub fn build_corpus(
    records: &RecordSet,
    oracle: &dyn ActivationOracle,
    provider: Option<&dyn SubstituteProvider>,
    options: &BuildOptions,
) -> Result<GraphCorpus> {
    options.config.validate()?;
    let mut threads = options
        .parallelism
        .unwrap_or_else(rayon::current_num_threads)
        .max(1);
    if let Some(limit) = oracle.max_in_flight() {
        threads = threads.min(limit.max(1));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;

    let jobs: Vec<(&NeuronId, &Vec<ActivationRecord>)> = records.iter().collect();
    let results: Vec<(NeuronId, Result<NeuronGraph>)> = pool.install(|| {
        jobs.par_iter()
            .map(|(id, recs)| {
                let built =
                    training_records(recs, options.seed, options.holdout).and_then(|train| {
                        build_neuron(**id, &train, oracle, provider, &options.config)
                    });
                (**id, built)
            })
            .collect()
    });

    let mut corpus = GraphCorpus::new();
    let mut failures = Vec::new();
    for (neuron, result) in results {
        match result {
            Ok(graph) => corpus.insert(graph),
            Err(e @ (Error::Transport(_) | Error::InvalidInput(_))) => return Err(e),
            Err(e) => {
                tracing::warn!(%neuron, error = %e, "no graph built");
                failures.push(BuildFailure {
                    neuron,
                    reason: failure_reason(&e),
                });
            }
        }
    }
    corpus.manifest = Manifest {
        format_version: FORMAT_VERSION,
        seed: Some(options.seed),
        config: Some(options.config.clone()),
        holdout: options.holdout,
        failures,
        ..Manifest::default()
    };
    Ok(corpus)
}
