// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use n2g::builder::BuildOptions;
use n2g::corpus::{load_corpus, save_corpus, GraphCorpus, OverlapMeasure, MANIFEST_FILE};
use n2g::eval::{
    evaluate_neuron, summarize, Baselines, EvalReport, DEFAULT_FIRE_THRESHOLD, DEFAULT_NGRAM,
};
use n2g::pipeline::{find_pivot, PipelineConfig};
use n2g::records::RecordSet;
use n2g::synth::{
    gap_complete_neuron, trend_neuron, GapCompleteParams, SyntheticSpec, TrendParams,
};
use n2g::trajectory::{activation_trajectory, importance_trajectory};
use n2g::viz::{to_dot, VizOptions};
use n2g::{build_corpus, NeuronId, Token};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::inputs::{connect, partition, ProviderArgs, SourceArgs};
use crate::Failure;

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a graph for every neuron in the input and write a corpus.
    Build(BuildArgs),
    /// Compare graphs against the token and n-gram lookups on held-out records.
    Eval(EvalArgs),
    /// List neurons whose graphs contain the given tokens.
    Search(SearchArgs),
    /// List pairs of neurons with overlapping token sets.
    Similar(SimilarArgs),
    /// Print activation and importance by context distance as CSV.
    Trajectory(TrajectoryArgs),
    /// Predict normalised activations for pre-tokenized JSON lines.
    Simulate(SimulateArgs),
    /// Write a graph as DOT.
    Export(ExportArgs),
    /// Write a synthetic neuron spec.
    Generate(GenerateArgs),
    /// Ask the sidecar to dump a neuron's top-activating records.
    Dump(DumpArgs),
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Build(a) => build(a),
        Command::Eval(a) => eval(a),
        Command::Search(a) => search(a),
        Command::Similar(a) => similar(a),
        Command::Trajectory(a) => trajectory(a),
        Command::Simulate(a) => simulate(a),
        Command::Export(a) => export(a),
        Command::Generate(a) => generate(a),
        Command::Dump(a) => dump(a),
    }
}

fn open_corpus(dir: &Path) -> Result<GraphCorpus> {
    load_corpus(dir).with_context(|| format!("loading corpus {}", dir.display()))
}

fn graph_of(corpus: &GraphCorpus, neuron: NeuronId) -> Result<&n2g::NeuronGraph> {
    corpus
        .get(neuron)
        .ok_or_else(|| Failure::usage(format!("no graph for neuron {neuron} in the corpus")))
}

// ---------------------------------------------------------------- build

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    /// Corpus directory.
    #[arg(long)]
    out: PathBuf,
    /// Seed of the train/test split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    prune_ratio: f64,
    #[arg(long, default_value_t = 0.5)]
    augment_ratio: f64,
    #[arg(long, default_value_t = 0.75)]
    importance_threshold: f64,
    #[arg(long, default_value_t = 64)]
    max_context: usize,
    #[arg(long, default_value_t = 5)]
    substitutes_per_position: usize,
    /// Worker threads (default: all cores).
    #[arg(long)]
    parallelism: Option<usize>,
    /// Build from every record instead of the training half.
    #[arg(long)]
    no_holdout: bool,
    /// Replace an existing corpus in `--out`.
    #[arg(long)]
    overwrite: bool,
}

/// Checks that `dir` may be written and clears an old corpus when allowed.
fn prepare_out_dir(dir: &Path, overwrite: bool) -> Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    if !dir.is_dir() {
        return Err(Failure::usage(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    let is_corpus = dir.join(MANIFEST_FILE).is_file();
    let is_empty = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .next()
        .is_none();
    match (is_corpus, overwrite) {
        (false, _) if is_empty => Ok(()),
        (false, _) => Err(Failure::usage(format!(
            "{} exists and is not a corpus; refusing to write into it",
            dir.display()
        ))),
        (true, false) => Err(Failure::usage(format!(
            "{} already holds a corpus; pass --overwrite to replace it",
            dir.display()
        ))),
        (true, true) => {
            fs::remove_dir_all(dir).with_context(|| format!("removing {}", dir.display()))
        }
    }
}

fn build(a: BuildArgs) -> Result<()> {
    let config = PipelineConfig {
        prune_ratio: a.prune_ratio,
        augment_ratio: a.augment_ratio,
        importance_threshold: a.importance_threshold,
        max_context: a.max_context,
        substitutes_per_position: a.substitutes_per_position,
    };
    config
        .validate()
        .map_err(|e| Failure::usage(e.to_string()))?;
    if a.parallelism == Some(0) {
        return Err(Failure::usage("--parallelism must be positive"));
    }
    // Fail on an occupied output directory before doing any work.
    prepare_out_dir(&a.out, a.overwrite)?;

    let source = a.source.load()?;
    let provider = a.provider.load(&source)?;
    let holdout = !a.no_holdout;
    let mut train = RecordSet::new();
    for id in source.records.keys() {
        train.insert(*id, partition(&source, *id, a.seed, holdout)?.0);
    }
    let options = BuildOptions {
        config,
        seed: a.seed,
        holdout: false,
        parallelism: a.parallelism,
    };
    let mut corpus = build_corpus(
        &train,
        source.oracle.as_ref(),
        provider.as_deref(),
        &options,
    )?;
    corpus.manifest.holdout = holdout;

    let failures = &corpus.manifest.failures;
    for f in failures {
        eprintln!("skipped {}: {}", f.neuron, f.reason);
    }
    eprintln!(
        "built {} graphs, {} neurons skipped",
        corpus.len(),
        failures.len()
    );
    if corpus.is_empty() {
        return Err(Failure::total("no graph could be built"));
    }
    save_corpus(&corpus, &a.out)?;
    Ok(())
}

// ---------------------------------------------------------------- eval

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    source: SourceArgs,
    /// Split seed (default: the seed the corpus was built with).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_FIRE_THRESHOLD)]
    fire_threshold: f64,
    /// Context length of the n-gram baseline, including the token itself.
    #[arg(long, default_value_t = DEFAULT_NGRAM)]
    ngram: usize,
    /// Directory for `eval.csv` and `layer_summary.json`.
    #[arg(long)]
    out: PathBuf,
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_eval_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "layer",
        "neuron",
        "method",
        "precision",
        "recall",
        "f1",
        "tp",
        "fp",
        "fn",
        "undefined_flags",
    ])?;
    for r in reports {
        let m = &r.metrics;
        let flags: Vec<&str> = [
            ("precision", m.precision),
            ("recall", m.recall),
            ("f1", m.f1),
        ]
        .iter()
        .filter(|(_, v)| v.is_none())
        .map(|(name, _)| *name)
        .collect();
        w.write_record([
            r.neuron.layer.to_string(),
            r.neuron.index.to_string(),
            r.method.as_str().to_string(),
            cell(m.precision),
            cell(m.recall),
            cell(m.f1),
            m.true_positive.to_string(),
            m.false_positive.to_string(),
            m.false_negative.to_string(),
            flags.join("|"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    if !(a.fire_threshold > 0.0 && a.fire_threshold <= 1.0) {
        return Err(Failure::usage("--fire-threshold must be in (0, 1]"));
    }
    if a.ngram == 0 {
        return Err(Failure::usage("--ngram must be positive"));
    }
    let corpus = open_corpus(&a.corpus)?;
    let source = a.source.load()?;
    let seed = a.seed.or(corpus.manifest.seed).unwrap_or(0);
    if !corpus.manifest.holdout {
        tracing::warn!("corpus was built without a holdout; graphs have seen the test records");
    }

    let mut reports = Vec::new();
    for id in source.records.keys() {
        let Some(graph) = corpus.get(*id) else {
            tracing::warn!(neuron = %id, "no graph in corpus; skipped");
            continue;
        };
        let (train, test) = partition(&source, *id, seed, true)?;
        if test.is_empty() {
            tracing::warn!(neuron = %id, "fewer than two records; skipped");
            continue;
        }
        let baselines = Baselines::build(&train, a.ngram)?;
        reports.extend(evaluate_neuron(graph, &baselines, &test, a.fire_threshold)?);
    }
    if reports.is_empty() {
        return Err(Failure::total("no neuron could be evaluated"));
    }

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_eval_csv(&a.out.join("eval.csv"), &reports)?;
    let summary = summarize(&reports);
    let path = a.out.join("layer_summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)?)
        .with_context(|| format!("writing {}", path.display()))?;

    let mut out = io::stdout().lock();
    for s in &summary {
        writeln!(
            out,
            "layer {} {:<13} P {:>6} R {:>6} F1 {:>6}  ({} neurons)",
            s.layer,
            s.method.as_str(),
            fmt_mean(s.precision),
            fmt_mean(s.recall),
            fmt_mean(s.f1),
            s.neurons
        )?;
    }
    Ok(())
}

fn fmt_mean(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

// ---------------------------------------------------------------- queries

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Tokens that must all be activating.
    #[arg(long, num_args = 1..)]
    activating: Vec<String>,
    /// Tokens that must all be context.
    #[arg(long, num_args = 1..)]
    context: Vec<String>,
    /// Only neurons with a token that is both activating and context.
    #[arg(long)]
    repeated: bool,
}

fn token_set(texts: &[String]) -> Result<BTreeSet<Token>> {
    texts
        .iter()
        .map(|t| Token::new(t.clone()).map_err(|e| Failure::usage(e.to_string())))
        .collect()
}

fn search(a: SearchArgs) -> Result<()> {
    let activating = token_set(&a.activating)?;
    let context = token_set(&a.context)?;
    let corpus = open_corpus(&a.corpus)?;
    let hits = if activating.is_empty() && context.is_empty() && a.repeated {
        corpus.search_repeated()
    } else {
        let mut hits = corpus.search(&activating, &context)?;
        if a.repeated {
            let repeated = corpus.search_repeated();
            hits.retain(|id| repeated.contains(id));
        }
        hits
    };
    let mut out = io::stdout().lock();
    for id in hits {
        writeln!(out, "{id}")?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Measure {
    Jaccard,
    Containment,
}

#[derive(Args, Debug)]
pub struct SimilarArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Both overlaps must exceed this value.
    #[arg(long, default_value_t = 0.9)]
    threshold: f64,
    #[arg(long, value_enum, default_value_t = Measure::Jaccard)]
    measure: Measure,
}

fn similar(a: SimilarArgs) -> Result<()> {
    let corpus = open_corpus(&a.corpus)?;
    let measure = match a.measure {
        Measure::Jaccard => OverlapMeasure::Jaccard,
        Measure::Containment => OverlapMeasure::Containment,
    };
    let mut out = io::stdout().lock();
    for s in corpus.find_similar_pairs(a.threshold, measure)? {
        writeln!(
            out,
            "{} {} activating={} context={}",
            s.pair.0, s.pair.1, s.activating_overlap, s.context_overlap
        )?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrajectoryArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    neuron: NeuronId,
    /// Only the first N records.
    #[arg(long)]
    limit: Option<usize>,
}

fn trajectory(a: TrajectoryArgs) -> Result<()> {
    let source = a.source.load()?;
    let records = source
        .records
        .get(&a.neuron)
        .ok_or_else(|| Failure::usage(format!("no records for neuron {}", a.neuron)))?;
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    w.write_record(["record", "distance", "activation_ratio", "importance"])?;
    for (i, record) in records
        .iter()
        .enumerate()
        .take(a.limit.unwrap_or(usize::MAX))
    {
        let Ok(pivot) = find_pivot(&record.activations) else {
            tracing::warn!(record = i, "no positive activation; skipped");
            continue;
        };
        let ratios = activation_trajectory(record, source.oracle.as_ref())?;
        let importance = importance_trajectory(record, source.oracle.as_ref())?;
        for (d, ratio) in ratios.iter().enumerate() {
            let imp = if d == 0 { 1.0 } else { importance[pivot - d] };
            w.write_record([
                i.to_string(),
                d.to_string(),
                ratio.to_string(),
                imp.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    neuron: NeuronId,
    /// JSON lines of the form `{"tokens": [...]}`; `-` reads stdin.
    #[arg(long, default_value = "-")]
    input: String,
}

#[derive(Deserialize)]
struct SimulateLine {
    tokens: Vec<Token>,
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let corpus = open_corpus(&a.corpus)?;
    let graph = graph_of(&corpus, a.neuron)?;
    let input: Box<dyn BufRead> = if a.input == "-" {
        Box::new(io::stdin().lock())
    } else {
        let file =
            fs::File::open(&a.input).map_err(|e| Failure::input(format!("{}: {e}", a.input)))?;
        Box::new(io::BufReader::new(file))
    };
    let mut out = BufWriter::new(io::stdout().lock());
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: SimulateLine = serde_json::from_str(&line)
            .map_err(|e| Failure::input(format!("line {}: {e}", n + 1)))?;
        writeln!(
            out,
            "{}",
            serde_json::to_string(&graph.predict(&parsed.tokens))?
        )?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    neuron: NeuronId,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Do not outline nodes that end a path.
    #[arg(long)]
    no_end_markers: bool,
}

fn export(a: ExportArgs) -> Result<()> {
    let corpus = open_corpus(&a.corpus)?;
    let graph = graph_of(&corpus, a.neuron)?;
    let options = VizOptions {
        show_end_markers: !a.no_end_markers,
        ..VizOptions::default()
    };
    let dot = to_dot(graph, &options);
    match a.out {
        Some(path) => {
            fs::write(&path, dot).with_context(|| format!("writing {}", path.display()))?
        }
        None => io::stdout().lock().write_all(dot.as_bytes())?,
    }
    Ok(())
}

// ---------------------------------------------------------------- fixtures

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    /// Context-gated neurons whose examples cover every gap, with held-out texts.
    Exact,
    /// Neurons with distractors and suppressors; graphs are imperfect.
    Trend,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long, default_value_t = 10)]
    count: u32,
    #[arg(long, default_value_t = 1)]
    layers: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Spec file to write.
    #[arg(long)]
    out: PathBuf,
}

fn generate(a: GenerateArgs) -> Result<()> {
    if a.layers == 0 {
        return Err(Failure::usage("--layers must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let neurons = (0..a.count)
        .map(|i| {
            let id = NeuronId::new(i % a.layers, i / a.layers);
            match a.kind {
                Kind::Exact => {
                    gap_complete_neuron(&mut rng, id, "t", &GapCompleteParams::default())
                }
                Kind::Trend => trend_neuron(&mut rng, id, &TrendParams::default()),
            }
        })
        .collect();
    SyntheticSpec { neurons }.save(&a.out)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct DumpArgs {
    #[arg(long)]
    sidecar: String,
    #[arg(long)]
    neuron: NeuronId,
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Output path, resolved on the sidecar's side.
    #[arg(long)]
    out: String,
}

fn dump(a: DumpArgs) -> Result<()> {
    let client = connect(&a.sidecar, 1)?;
    client.dump_top(a.neuron, a.k, &a.out)?;
    Ok(())
}
