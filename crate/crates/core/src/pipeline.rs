// SPDX-License-Identifier: MIT OR Apache-2.0

//! Turns raw activation records into processed examples.
//!
//! Each record goes through three stages:
//!
//! 1. **Pruning.** Find the pivot (the most activating token) and keep the
//!    shortest window ending at it whose pivot activation is still at least
//!    `prune_ratio` of the full-record activation.
//! 2. **Saliency.** Occlude each context token with the oracle's pad token
//!    and score it by the fraction of pivot activation lost.
//! 3. **Augmentation.** Swap each important context token for helper-model
//!    substitutes, one position at a time, and keep the variants that retain
//!    at least `augment_ratio` of the pivot activation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActivationRecord, NeuronId, Token};
use crate::oracle::ActivationOracle;
use crate::substitute::SubstituteProvider;

/// Tuning knobs for pruning, saliency and augmentation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub prune_ratio: f64,
    pub augment_ratio: f64,
    /// Minimum importance for a context token to count as important, both
    /// for augmentation and for keeping it as a context node in the graph.
    pub importance_threshold: f64,
    /// Pruning never grows a window beyond this many tokens.
    pub max_context: usize,
    pub substitutes_per_position: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            prune_ratio: 0.5,
            augment_ratio: 0.5,
            importance_threshold: 0.75,
            max_context: 64,
            substitutes_per_position: 5,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!(
                    "{name} must be in (0, 1], got {v}"
                )))
            }
        };
        unit("prune_ratio", self.prune_ratio)?;
        unit("augment_ratio", self.augment_ratio)?;
        unit("importance_threshold", self.importance_threshold)?;
        if self.max_context == 0 {
            return Err(Error::InvalidInput("max_context must be positive".into()));
        }
        if self.substitutes_per_position == 0 {
            return Err(Error::InvalidInput(
                "substitutes_per_position must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Where a processed example came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Origin {
    /// Pruned from the record at this index of the neuron's record list.
    Pruned { record: usize },
    /// Derived from the processed example at index `parent` by substituting
    /// the token at `position`.
    Augmented { parent: usize, position: usize },
}

/// A pruned (possibly augmented) window ending at its pivot token.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessedExample {
    pub tokens: Vec<Token>,
    /// Always `tokens.len() - 1`.
    pub pivot: usize,
    /// Raw activation on the pivot within this window.
    pub pivot_activation: f64,
    /// Importance of each token for the pivot activation; 1.0 at the pivot.
    pub importance: Vec<f64>,
    pub origin: Origin,
    /// Set when pruning stopped at `max_context` (or ran out of tokens)
    /// without reaching `prune_ratio`.
    pub context_capped: bool,
}

impl ProcessedExample {
    pub fn pivot_token(&self) -> &Token {
        &self.tokens[self.pivot]
    }
}

/// Output of [`prune`]: the retained window before saliency scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct PrunedWindow {
    /// Index of the window's first token within the record.
    pub start: usize,
    pub tokens: Vec<Token>,
    pub pivot_activation: f64,
    /// Pivot activation on the unpruned record.
    pub record_activation: f64,
    pub context_capped: bool,
}

/// Per-neuron bookkeeping of what the pipeline kept and skipped.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub records: usize,
    pub degenerate: usize,
    pub oracle_gaps: usize,
    pub context_capped: usize,
    pub augmentation_failures: usize,
    pub augmented: usize,
    pub examples: usize,
}

/// Processed examples for one neuron plus the counters describing the run.
#[derive(Clone, Debug)]
pub struct NeuronExamples {
    pub examples: Vec<ProcessedExample>,
    pub stats: BuildStats,
}

/// Index of the most activating token, earliest on ties.
pub fn find_pivot(activations: &[f64]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &a) in activations.iter().enumerate() {
        if a > 0.0 && best.is_none_or(|(_, b)| a > b) {
            best = Some((i, a));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::DegenerateExample)
}

fn gap(e: Error) -> Error {
    match e {
        Error::Unanswerable => Error::OracleGap,
        other => other,
    }
}

/// Shortest window ending at the pivot that keeps `prune_ratio` of the
/// record's pivot activation. Grows one token leftward per step.
pub fn prune(
    record: &ActivationRecord,
    oracle: &dyn ActivationOracle,
    cfg: &PipelineConfig,
) -> Result<PrunedWindow> {
    let pivot = find_pivot(&record.activations)?;
    let full = record.activations[pivot];
    let limit = cfg.max_context.min(pivot + 1);
    for len in 1..=limit {
        let start = pivot + 1 - len;
        let window = &record.tokens[start..=pivot];
        let act = oracle.last_activation(record.neuron, window).map_err(gap)?;
        let satisfied = act / full >= cfg.prune_ratio;
        if satisfied || len == limit {
            return Ok(PrunedWindow {
                start,
                tokens: window.to_vec(),
                pivot_activation: act,
                record_activation: full,
                context_capped: !satisfied,
            });
        }
    }
    unreachable!("limit is at least one")
}

/// Occlusion importance of every token at or before `pivot`.
///
/// Position `k` scores `1 - occluded / original`, clamped to [0, 1], where
/// `occluded` is the pivot activation with token `k` replaced by the
/// oracle's pad token. The pivot itself scores 1.0.
pub fn saliency(
    tokens: &[Token],
    pivot: usize,
    oracle: &dyn ActivationOracle,
    neuron: NeuronId,
) -> Result<Vec<f64>> {
    if pivot >= tokens.len() {
        return Err(Error::InvalidInput(format!(
            "pivot {pivot} out of range for {} tokens",
            tokens.len()
        )));
    }
    let tokens = &tokens[..=pivot];
    let original = oracle.last_activation(neuron, tokens).map_err(gap)?;
    if original <= 0.0 {
        return Err(Error::DegenerateExample);
    }
    let mut scratch = tokens.to_vec();
    let mut importance = Vec::with_capacity(tokens.len());
    for k in 0..pivot {
        let saved = std::mem::replace(&mut scratch[k], oracle.pad_token().clone());
        let occluded = oracle.last_activation(neuron, &scratch).map_err(gap)?;
        scratch[k] = saved;
        importance.push((1.0 - occluded / original).clamp(0.0, 1.0));
    }
    importance.push(1.0);
    Ok(importance)
}

/// Single-substitution variants of `example` that keep at least
/// `augment_ratio` of its pivot activation, each with fresh importances.
/// The original example is never part of the output.
pub fn augment(
    example: &ProcessedExample,
    parent: usize,
    provider: &dyn SubstituteProvider,
    oracle: &dyn ActivationOracle,
    neuron: NeuronId,
    cfg: &PipelineConfig,
) -> Result<Vec<ProcessedExample>> {
    let mut out = Vec::new();
    for k in 0..example.pivot {
        if example.importance[k] < cfg.importance_threshold {
            continue;
        }
        let subs = provider
            .substitutes(&example.tokens, k, cfg.substitutes_per_position)
            .map_err(|e| Error::AugmentationUnavailable(e.to_string()))?;
        for sub in subs.into_iter().take(cfg.substitutes_per_position) {
            let mut candidate = example.tokens.clone();
            candidate[k] = sub.token;
            let act = oracle.last_activation(neuron, &candidate).map_err(gap)?;
            if act / example.pivot_activation < cfg.augment_ratio {
                continue;
            }
            let importance = saliency(&candidate, example.pivot, oracle, neuron)?;
            out.push(ProcessedExample {
                tokens: candidate,
                pivot: example.pivot,
                pivot_activation: act,
                importance,
                origin: Origin::Augmented {
                    parent,
                    position: k,
                },
                context_capped: false,
            });
        }
    }
    Ok(out)
}

/// Runs pruning, saliency and (when a provider is given) augmentation over
/// all of a neuron's records.
///
/// Degenerate records and oracle gaps are skipped and counted. Augmentation
/// failures leave the un-augmented example in place.
pub fn process_neuron(
    neuron: NeuronId,
    records: &[ActivationRecord],
    oracle: &dyn ActivationOracle,
    provider: Option<&dyn SubstituteProvider>,
    cfg: &PipelineConfig,
) -> Result<NeuronExamples> {
    cfg.validate()?;
    let mut stats = BuildStats {
        records: records.len(),
        ..BuildStats::default()
    };
    let mut examples = Vec::new();

    for (index, record) in records.iter().enumerate() {
        if record.neuron != neuron {
            return Err(Error::InvalidInput(format!(
                "record for {} passed to pipeline for {neuron}",
                record.neuron
            )));
        }
        let window = match prune(record, oracle, cfg) {
            Ok(w) => w,
            Err(Error::DegenerateExample) => {
                stats.degenerate += 1;
                continue;
            }
            Err(Error::OracleGap) => {
                stats.oracle_gaps += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let pivot = window.tokens.len() - 1;
        let importance = match saliency(&window.tokens, pivot, oracle, neuron) {
            Ok(v) => v,
            Err(Error::DegenerateExample) => {
                stats.degenerate += 1;
                continue;
            }
            Err(Error::OracleGap) => {
                stats.oracle_gaps += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if window.context_capped {
            stats.context_capped += 1;
        }
        examples.push(ProcessedExample {
            tokens: window.tokens,
            pivot,
            pivot_activation: window.pivot_activation,
            importance,
            origin: Origin::Pruned { record: index },
            context_capped: window.context_capped,
        });
    }

    if let Some(provider) = provider {
        let pruned = examples.len();
        for parent in 0..pruned {
            match augment(&examples[parent], parent, provider, oracle, neuron, cfg) {
                Ok(more) => {
                    stats.augmented += more.len();
                    examples.extend(more);
                }
                Err(
                    e @ (Error::AugmentationUnavailable(_)
                    | Error::OracleGap
                    | Error::DegenerateExample),
                ) => {
                    tracing::warn!(%neuron, parent, error = %e, "augmentation skipped");
                    stats.augmentation_failures += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    if examples.is_empty() {
        return Err(Error::EmptyPipelineOutput);
    }
    stats.examples = examples.len();
    Ok(NeuronExamples { examples, stats })
}
