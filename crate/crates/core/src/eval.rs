// SPDX-License-Identifier: MIT OR Apache-2.0

//! Scoring graphs against ground-truth activations.
//!
//! A token "fires" when its normalised activation reaches the firing
//! threshold. Per neuron, ground-truth and predicted firings are pooled over
//! every token of the held-out records and compared with standard
//! positive-class precision, recall and F1. Two lookup tables serve as
//! baselines: a context-free token table and an exact n-gram table.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NeuronGraph;
use crate::model::{ActivationRecord, NeuronId, Token};

pub const DEFAULT_FIRE_THRESHOLD: f64 = 0.5;
pub const DEFAULT_NGRAM: usize = 5;

/// Splits records into a training half (the larger when `m` is odd) and a
/// test half. Deterministic in `seed`; each half keeps the input order.
pub fn split_examples(
    records: &[ActivationRecord],
    seed: u64,
) -> Result<(Vec<ActivationRecord>, Vec<ActivationRecord>)> {
    let (train, test) = split_indices(records.len(), seed)?;
    Ok((
        train.into_iter().map(|i| records[i].clone()).collect(),
        test.into_iter().map(|i| records[i].clone()).collect(),
    ))
}

/// Index form of [`split_examples`].
pub fn split_indices(m: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if m < 2 {
        return Err(Error::InsufficientData { needed: 2, got: m });
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = order.split_off(m.div_ceil(2));
    order.sort_unstable();
    test.sort_unstable();
    Ok((order, test))
}

/// Which positions fired.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiringVector(pub Vec<bool>);

impl FiringVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `activations[i] / a_max >= threshold` per position. Pass `a_max = 1` for
/// already-normalised values. A non-positive `a_max` means the neuron never
/// activates, so nothing fires.
pub fn firings(activations: &[f64], a_max: f64, threshold: f64) -> FiringVector {
    if a_max <= 0.0 {
        return FiringVector(vec![false; activations.len()]);
    }
    FiringVector(activations.iter().map(|a| a / a_max >= threshold).collect())
}

/// Confusion counts with derived metrics. A metric whose denominator is zero
/// is `None` rather than a silent 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        Self {
            true_positive: tp,
            false_positive: fp,
            false_negative: fn_,
            precision,
            recall,
            f1,
        }
    }

    /// Adds another comparison's counts and recomputes the metrics.
    pub fn merge(&self, other: &Metrics) -> Metrics {
        Metrics::from_counts(
            self.true_positive + other.true_positive,
            self.false_positive + other.false_positive,
            self.false_negative + other.false_negative,
        )
    }
}

/// Compares predicted firings with ground truth.
pub fn metrics(ground_truth: &FiringVector, predicted: &FiringVector) -> Result<Metrics> {
    if ground_truth.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "firing vectors differ in length: {} vs {}",
            ground_truth.len(),
            predicted.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&g, &p) in ground_truth.0.iter().zip(&predicted.0) {
        match (g, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(Metrics::from_counts(tp, fp, fn_))
}

/// Evaluated method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    N2g,
    TokenLookup,
    NgramLookup,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::N2g, Method::TokenLookup, Method::NgramLookup];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::N2g => "n2g",
            Method::TokenLookup => "token_lookup",
            Method::NgramLookup => "ngram_lookup",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub neuron: NeuronId,
    pub method: Method,
    #[serde(flatten)]
    pub metrics: Metrics,
}

/// Maximum raw activation seen for each token in the training records.
#[derive(Clone, Debug)]
pub struct TokenLookup {
    table: HashMap<Token, f64>,
    pub a_max: f64,
}

impl TokenLookup {
    pub fn build(train: &[ActivationRecord]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InvalidInput(
                "token lookup needs training records".into(),
            ));
        }
        let mut table: HashMap<Token, f64> = HashMap::new();
        for r in train {
            for (t, &a) in r.tokens.iter().zip(&r.activations) {
                let slot = table.entry(t.clone()).or_insert(0.0);
                *slot = slot.max(a);
            }
        }
        let a_max = train.iter().map(|r| r.max_activation).fold(0.0, f64::max);
        Ok(Self { table, a_max })
    }

    pub fn get(&self, token: &Token) -> Option<f64> {
        self.table.get(token).copied()
    }

    /// Raw activation per token; unseen tokens predict 0.
    pub fn predict(&self, tokens: &[Token]) -> Vec<f64> {
        tokens.iter().map(|t| self.get(t).unwrap_or(0.0)).collect()
    }
}

/// Maximum raw activation per (up to `n` preceding tokens, token) key.
/// Sequence starts store the shorter context actually available.
#[derive(Clone, Debug)]
pub struct NGramLookup {
    pub n: usize,
    table: HashMap<Vec<Token>, f64>,
    pub a_max: f64,
}

impl NGramLookup {
    pub fn build(train: &[ActivationRecord], n: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InvalidInput(
                "n-gram lookup needs training records".into(),
            ));
        }
        if n == 0 {
            return Err(Error::InvalidInput(
                "n-gram context length must be positive".into(),
            ));
        }
        let mut table: HashMap<Vec<Token>, f64> = HashMap::new();
        for r in train {
            for (i, &a) in r.activations.iter().enumerate() {
                let key = r.tokens[i.saturating_sub(n)..=i].to_vec();
                let slot = table.entry(key).or_insert(0.0);
                *slot = slot.max(a);
            }
        }
        let a_max = train.iter().map(|r| r.max_activation).fold(0.0, f64::max);
        Ok(Self { n, table, a_max })
    }

    /// Stored activation for the key ending at `tokens.last()`, where
    /// `tokens` holds the context followed by the token.
    pub fn get(&self, key: &[Token]) -> Option<f64> {
        self.table.get(key).copied()
    }

    /// Raw activation per token on exact key match, else 0.
    pub fn predict(&self, tokens: &[Token]) -> Vec<f64> {
        (0..tokens.len())
            .map(|i| {
                self.get(&tokens[i.saturating_sub(self.n)..=i])
                    .unwrap_or(0.0)
            })
            .collect()
    }
}

/// The two lookup baselines for one neuron.
#[derive(Clone, Debug)]
pub struct Baselines {
    pub token: TokenLookup,
    pub ngram: NGramLookup,
}

impl Baselines {
    pub fn build(train: &[ActivationRecord], n: usize) -> Result<Self> {
        Ok(Self {
            token: TokenLookup::build(train)?,
            ngram: NGramLookup::build(train, n)?,
        })
    }
}

/// One report per method over the pooled tokens of `test`.
///
/// Ground truth and baseline predictions are normalised by each record's
/// `max_activation`; graph predictions are already normalised.
pub fn evaluate_neuron(
    graph: &NeuronGraph,
    baselines: &Baselines,
    test: &[ActivationRecord],
    threshold: f64,
) -> Result<Vec<EvalReport>> {
    if test.is_empty() {
        return Err(Error::InvalidInput("no test records".into()));
    }
    let mut totals = [Metrics::default(); 3];
    for record in test {
        let truth = firings(&record.activations, record.max_activation, threshold);
        let predictions = [
            firings(&graph.predict(&record.tokens), 1.0, threshold),
            firings(
                &baselines.token.predict(&record.tokens),
                record.max_activation,
                threshold,
            ),
            firings(
                &baselines.ngram.predict(&record.tokens),
                record.max_activation,
                threshold,
            ),
        ];
        for (total, predicted) in totals.iter_mut().zip(&predictions) {
            *total = total.merge(&metrics(&truth, predicted)?);
        }
    }
    Ok(Method::ALL
        .iter()
        .zip(totals)
        .map(|(&method, metrics)| EvalReport {
            neuron: graph.neuron(),
            method,
            metrics,
        })
        .collect())
}

/// Mean metrics of one (layer, method) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layer: u32,
    pub method: Method,
    pub neurons: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Neurons excluded from each mean because the metric was undefined.
    pub undefined_precision: usize,
    pub undefined_recall: usize,
    pub undefined_f1: usize,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (mut sum, mut count, mut undefined) = (0.0, 0usize, 0usize);
    for v in values {
        match v {
            Some(v) => {
                sum += v;
                count += 1;
            }
            None => undefined += 1,
        }
    }
    ((count > 0).then(|| sum / count as f64), undefined)
}

/// Averages per-neuron metrics over a single (layer, method) group,
/// skipping undefined values.
pub fn aggregate_layer(reports: &[EvalReport]) -> Result<LayerSummary> {
    let first = reports.first().ok_or(Error::EmptyGroup)?;
    let (layer, method) = (first.neuron.layer, first.method);
    if reports
        .iter()
        .any(|r| r.neuron.layer != layer || r.method != method)
    {
        return Err(Error::InvalidInput(
            "reports span several (layer, method) groups".into(),
        ));
    }
    let (precision, undefined_precision) =
        mean_defined(reports.iter().map(|r| r.metrics.precision));
    let (recall, undefined_recall) = mean_defined(reports.iter().map(|r| r.metrics.recall));
    let (f1, undefined_f1) = mean_defined(reports.iter().map(|r| r.metrics.f1));
    Ok(LayerSummary {
        layer,
        method,
        neurons: reports.len(),
        precision,
        recall,
        f1,
        undefined_precision,
        undefined_recall,
        undefined_f1,
    })
}

/// Groups reports by (layer, method) and aggregates each group.
pub fn summarize(reports: &[EvalReport]) -> Vec<LayerSummary> {
    let mut groups: BTreeMap<(u32, Method), Vec<EvalReport>> = BTreeMap::new();
    for r in reports {
        groups
            .entry((r.neuron.layer, r.method))
            .or_default()
            .push(r.clone());
    }
    groups
        .values()
        .map(|g| aggregate_layer(g).expect("groups are non-empty and uniform"))
        .collect()
}
