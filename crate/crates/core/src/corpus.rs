// SPDX-License-Identifier: MIT OR Apache-2.0

//! A model's worth of neuron graphs, with token search and similarity.
//!
//! On disk a corpus is a directory:
//!
//! ```text
//! manifest.json
//! activating_index.json
//! context_index.json
//! layer_<l>/neuron_<j>.json
//! ```
//!
//! Graph files are written first and the manifest last, so a directory with
//! a manifest holds a complete corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NeuronGraph;
use crate::model::{NeuronId, Token};
use crate::pipeline::{BuildStats, PipelineConfig};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const ACTIVATING_INDEX_FILE: &str = "activating_index.json";
const CONTEXT_INDEX_FILE: &str = "context_index.json";

/// A neuron that produced no graph, and why.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildFailure {
    pub neuron: NeuronId,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub neuron: NeuronId,
    pub file: String,
    pub stats: BuildStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub config: Option<PipelineConfig>,
    /// Whether graphs were built from the training half of each neuron's
    /// records (see [`crate::eval::split_examples`]).
    #[serde(default)]
    pub holdout: bool,
    pub totals: BuildStats,
    pub neurons: Vec<ManifestEntry>,
    #[serde(default)]
    pub failures: Vec<BuildFailure>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            seed: None,
            config: None,
            holdout: false,
            totals: BuildStats::default(),
            neurons: Vec::new(),
            failures: Vec::new(),
        }
    }
}

/// How two token sets are compared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMeasure {
    /// `|S ∩ T| / |S ∪ T|`.
    #[default]
    Jaccard,
    /// `|S ∩ T| / min(|S|, |T|)`: 1.0 whenever one set contains the other.
    Containment,
}

impl OverlapMeasure {
    /// Overlap of two sets. Two empty sets overlap fully; an empty and a
    /// non-empty set not at all.
    pub fn overlap(self, s: &BTreeSet<Token>, t: &BTreeSet<Token>) -> f64 {
        if s.is_empty() && t.is_empty() {
            return 1.0;
        }
        let inter = s.intersection(t).count() as f64;
        let den = match self {
            OverlapMeasure::Jaccard => (s.len() + t.len()) as f64 - inter,
            OverlapMeasure::Containment => s.len().min(t.len()) as f64,
        };
        if den == 0.0 {
            0.0
        } else {
            inter / den
        }
    }
}

/// Overlap of two graphs' token sets. `pair` is stored in ascending order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub pair: (NeuronId, NeuronId),
    pub activating_overlap: f64,
    pub context_overlap: f64,
}

/// Jaccard similarity of two graphs.
pub fn similarity(g1: &NeuronGraph, g2: &NeuronGraph) -> SimilarityScore {
    similarity_with(g1, g2, OverlapMeasure::Jaccard)
}

pub fn similarity_with(
    g1: &NeuronGraph,
    g2: &NeuronGraph,
    measure: OverlapMeasure,
) -> SimilarityScore {
    let (a, b) = (g1.neuron(), g2.neuron());
    SimilarityScore {
        pair: (a.min(b), a.max(b)),
        activating_overlap: measure.overlap(g1.activating_tokens(), g2.activating_tokens()),
        context_overlap: measure.overlap(g1.context_tokens(), g2.context_tokens()),
    }
}

type Index = BTreeMap<Token, BTreeSet<NeuronId>>;

#[derive(Clone, Debug, Default)]
pub struct GraphCorpus {
    graphs: BTreeMap<NeuronId, NeuronGraph>,
    activating_index: Index,
    context_index: Index,
    pub manifest: Manifest,
}

impl GraphCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_graphs(graphs: impl IntoIterator<Item = NeuronGraph>) -> Self {
        let mut corpus = Self::new();
        for g in graphs {
            corpus.insert(g);
        }
        corpus
    }

    /// Adds or replaces a graph and updates the indexes.
    pub fn insert(&mut self, graph: NeuronGraph) {
        let id = graph.neuron();
        if let Some(old) = self.graphs.remove(&id) {
            unindex(&mut self.activating_index, old.activating_tokens(), id);
            unindex(&mut self.context_index, old.context_tokens(), id);
        }
        for t in graph.activating_tokens() {
            self.activating_index
                .entry(t.clone())
                .or_default()
                .insert(id);
        }
        for t in graph.context_tokens() {
            self.context_index.entry(t.clone()).or_default().insert(id);
        }
        self.graphs.insert(id, graph);
    }

    pub fn get(&self, id: NeuronId) -> Option<&NeuronGraph> {
        self.graphs.get(&id)
    }

    pub fn graphs(&self) -> impl Iterator<Item = &NeuronGraph> {
        self.graphs.values()
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// Neurons whose activating tokens include all of `activating` and whose
    /// context tokens include all of `context`. An empty set is no
    /// constraint, but at least one set must be non-empty.
    pub fn search(
        &self,
        activating: &BTreeSet<Token>,
        context: &BTreeSet<Token>,
    ) -> Result<BTreeSet<NeuronId>> {
        if activating.is_empty() && context.is_empty() {
            return Err(Error::InvalidQuery(
                "need at least one activating or context token".into(),
            ));
        }
        let mut postings: Vec<&BTreeSet<NeuronId>> = Vec::new();
        let empty = BTreeSet::new();
        for (index, tokens) in [
            (&self.activating_index, activating),
            (&self.context_index, context),
        ] {
            for t in tokens {
                postings.push(index.get(t).unwrap_or(&empty));
            }
        }
        postings.sort_by_key(|p| p.len());
        let (smallest, rest) = postings.split_first().expect("at least one query token");
        Ok(smallest
            .iter()
            .filter(|id| rest.iter().all(|p| p.contains(id)))
            .copied()
            .collect())
    }

    /// Neurons with a token that is both activating and context.
    pub fn search_repeated(&self) -> BTreeSet<NeuronId> {
        self.graphs
            .values()
            .filter(|g| !g.activating_tokens().is_disjoint(g.context_tokens()))
            .map(NeuronGraph::neuron)
            .collect()
    }

    /// All unordered pairs whose activating and context overlaps both
    /// exceed `threshold` (strictly). Candidates come from the activating
    /// index: a positive overlap needs a shared activating token.
    pub fn find_similar_pairs(
        &self,
        threshold: f64,
        measure: OverlapMeasure,
    ) -> Result<Vec<SimilarityScore>> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::InvalidInput(format!(
                "threshold must be in [0, 1], got {threshold}"
            )));
        }
        let mut candidates: BTreeSet<(NeuronId, NeuronId)> = BTreeSet::new();
        for ids in self.activating_index.values() {
            let ids: Vec<_> = ids.iter().copied().collect();
            for (i, &a) in ids.iter().enumerate() {
                for &b in &ids[i + 1..] {
                    candidates.insert((a, b));
                }
            }
        }
        let unanchored: Vec<_> = self
            .graphs
            .values()
            .filter(|g| g.activating_tokens().is_empty())
            .map(NeuronGraph::neuron)
            .collect();
        for (i, &a) in unanchored.iter().enumerate() {
            for &b in &unanchored[i + 1..] {
                candidates.insert((a, b));
            }
        }
        Ok(candidates
            .into_iter()
            .map(|(a, b)| similarity_with(&self.graphs[&a], &self.graphs[&b], measure))
            .filter(|s| s.activating_overlap > threshold && s.context_overlap > threshold)
            .collect())
    }

    fn index_entries(index: &Index) -> Vec<IndexEntry> {
        index
            .iter()
            .map(|(t, ids)| IndexEntry {
                token: t.clone(),
                neurons: ids.iter().map(|n| [n.layer, n.index]).collect(),
            })
            .collect()
    }
}

fn unindex(index: &mut Index, tokens: &BTreeSet<Token>, id: NeuronId) {
    for t in tokens {
        if let Some(set) = index.get_mut(t) {
            set.remove(&id);
            if set.is_empty() {
                index.remove(t);
            }
        }
    }
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct IndexEntry {
    token: Token,
    neurons: Vec<[u32; 2]>,
}

/// Relative location of a neuron's graph file.
pub fn graph_file(id: NeuronId) -> String {
    format!("layer_{}/neuron_{}.json", id.layer, id.index)
}

fn write(path: PathBuf, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the corpus. The manifest's neuron list is regenerated from the
/// graphs; failures, seed and config are kept as set on `corpus.manifest`.
pub fn save_corpus(corpus: &GraphCorpus, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = corpus.manifest.clone();
    manifest.format_version = FORMAT_VERSION;
    manifest.neurons.clear();
    manifest.totals = BuildStats::default();
    for (id, graph) in &corpus.graphs {
        let file = graph_file(*id);
        write(dir.join(&file), &graph.to_json()?)?;
        let s = &graph.build_stats;
        let t = &mut manifest.totals;
        t.records += s.records;
        t.degenerate += s.degenerate;
        t.oracle_gaps += s.oracle_gaps;
        t.context_capped += s.context_capped;
        t.augmentation_failures += s.augmentation_failures;
        t.augmented += s.augmented;
        t.examples += s.examples;
        manifest.neurons.push(ManifestEntry {
            neuron: *id,
            file,
            stats: s.clone(),
        });
    }
    write(
        dir.join(ACTIVATING_INDEX_FILE),
        &serde_json::to_string(&GraphCorpus::index_entries(&corpus.activating_index))?,
    )?;
    write(
        dir.join(CONTEXT_INDEX_FILE),
        &serde_json::to_string(&GraphCorpus::index_entries(&corpus.context_index))?,
    )?;
    write(
        dir.join(MANIFEST_FILE),
        &serde_json::to_string_pretty(&manifest)?,
    )
}

/// Reads a corpus written by [`save_corpus`], rebuilding the indexes from
/// the graphs and checking them against the stored index files.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<GraphCorpus> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let probe: serde_json::Value = serde_json::from_str(&text)?;
    let found = probe
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::CorruptCorpus("manifest lacks format_version".into()))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(Error::FormatVersion {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    let manifest: Manifest = serde_json::from_value(probe)?;

    let mut corpus = GraphCorpus::new();
    for entry in &manifest.neurons {
        let path = dir.join(&entry.file);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::CorruptCorpus(format!("{}: {e}", path.display())))?;
        let graph = NeuronGraph::from_json(&text)?;
        if graph.neuron() != entry.neuron {
            return Err(Error::CorruptCorpus(format!(
                "{} holds {} but the manifest lists {}",
                entry.file,
                graph.neuron(),
                entry.neuron
            )));
        }
        corpus.insert(graph);
    }
    for (file, index) in [
        (ACTIVATING_INDEX_FILE, &corpus.activating_index),
        (CONTEXT_INDEX_FILE, &corpus.context_index),
    ] {
        let path = dir.join(file);
        if !path.exists() {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let stored: Vec<IndexEntry> = serde_json::from_str(&text)?;
        if stored != GraphCorpus::index_entries(index) {
            return Err(Error::CorruptCorpus(format!(
                "{file} does not match the graphs"
            )));
        }
    }
    corpus.manifest = manifest;
    Ok(corpus)
}
