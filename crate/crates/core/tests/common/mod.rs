// SPDX-License-Identifier: MIT OR Apache-2.0

//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use n2g::corpus::{OverlapMeasure, SimilarityScore};
use n2g::graph::PathStep;
use n2g::{NeuronGraph, NeuronId, Token};
use rand::Rng;

/// Prediction at `i` by trying every stored path on its own.
pub fn brute_predict_at(graph: &NeuronGraph, tokens: &[Token], i: usize) -> f64 {
    let mut best = 0.0f64;
    'paths: for path in graph.paths() {
        let PathStep::Activating(pivot) = &path[0] else {
            panic!("path does not start with an activating step");
        };
        if *pivot != tokens[i] {
            continue;
        }
        let PathStep::End(value) = path[path.len() - 1] else {
            panic!("path does not end with an end step");
        };
        let middle = &path[1..path.len() - 1];
        if middle.len() > i {
            continue;
        }
        for (k, step) in middle.iter().enumerate() {
            let tok = &tokens[i - 1 - k];
            match step {
                PathStep::Context(t, _) if t == tok => {}
                PathStep::Ignore => {}
                _ => continue 'paths,
            }
        }
        best = best.max(value);
    }
    best
}

pub fn brute_predict(graph: &NeuronGraph, tokens: &[Token]) -> Vec<f64> {
    (0..tokens.len())
        .map(|i| brute_predict_at(graph, tokens, i))
        .collect()
}

pub fn alphabet(n: usize) -> Vec<Token> {
    (0..n)
        .map(|i| Token::from(format!("s{i}").as_str()))
        .collect()
}

/// A random well-formed path over `alpha`.
pub fn random_path<R: Rng>(rng: &mut R, alpha: &[Token], max_middle: usize) -> Vec<PathStep> {
    let mut path = vec![PathStep::Activating(
        alpha[rng.random_range(0..alpha.len())].clone(),
    )];
    for _ in 0..rng.random_range(0..=max_middle) {
        if rng.random_bool(0.3) {
            path.push(PathStep::Ignore);
        } else {
            let t = alpha[rng.random_range(0..alpha.len())].clone();
            path.push(PathStep::Context(
                t,
                f64::from(rng.random_range(0..=100u32)) / 100.0,
            ));
        }
    }
    path.push(PathStep::End(
        f64::from(rng.random_range(1..=100u32)) / 100.0,
    ));
    path
}

pub fn random_graph<R: Rng>(rng: &mut R, id: NeuronId, alpha: &[Token]) -> NeuronGraph {
    let mut g = NeuronGraph::empty(id, 1.0, false).unwrap();
    for _ in 0..rng.random_range(1..=6) {
        g.insert_path(&random_path(rng, alpha, 4)).unwrap();
    }
    g
}

pub fn random_text<R: Rng>(rng: &mut R, alpha: &[Token], max_len: usize) -> Vec<Token> {
    (0..rng.random_range(1..=max_len))
        .map(|_| alpha[rng.random_range(0..alpha.len())].clone())
        .collect()
}

/// Search by scanning every graph.
pub fn linear_search<'a>(
    graphs: impl IntoIterator<Item = &'a NeuronGraph>,
    activating: &BTreeSet<Token>,
    context: &BTreeSet<Token>,
) -> BTreeSet<NeuronId> {
    graphs
        .into_iter()
        .filter(|g| {
            activating.is_subset(g.activating_tokens()) && context.is_subset(g.context_tokens())
        })
        .map(|g| g.neuron())
        .collect()
}

fn overlap(measure: OverlapMeasure, s: &BTreeSet<Token>, t: &BTreeSet<Token>) -> f64 {
    let union: BTreeSet<_> = s.union(t).collect();
    if union.is_empty() {
        return 1.0;
    }
    let inter = s.intersection(t).count() as f64;
    match measure {
        OverlapMeasure::Jaccard => inter / union.len() as f64,
        OverlapMeasure::Containment => {
            let m = s.len().min(t.len());
            if m == 0 {
                0.0
            } else {
                inter / m as f64
            }
        }
    }
}

/// Similar pairs by comparing every pair of graphs.
pub fn brute_pairs(
    graphs: &[&NeuronGraph],
    threshold: f64,
    measure: OverlapMeasure,
) -> Vec<SimilarityScore> {
    let mut out = Vec::new();
    for (i, a) in graphs.iter().enumerate() {
        for b in &graphs[i + 1..] {
            let act = overlap(measure, a.activating_tokens(), b.activating_tokens());
            let ctx = overlap(measure, a.context_tokens(), b.context_tokens());
            if act > threshold && ctx > threshold {
                let (x, y) = (a.neuron(), b.neuron());
                out.push(SimilarityScore {
                    pair: (x.min(y), x.max(y)),
                    activating_overlap: act,
                    context_overlap: ctx,
                });
            }
        }
    }
    out.sort_by_key(|s| s.pair);
    out
}

/// A parsed DOT digraph: node ids with their attributes, and edges.
#[derive(Debug, Default)]
pub struct Dot {
    pub name: String,
    pub graph_attrs: BTreeMap<String, String>,
    pub nodes: BTreeMap<String, BTreeMap<String, String>>,
    pub edges: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Id(String),
    Punct(char),
    Arrow,
}

fn lex(src: &str) -> Result<Vec<Tok>, String> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err("unterminated string".into()),
                    Some('"') => break,
                    Some('\\') => {
                        let next = *chars.get(i + 1).ok_or("dangling escape")?;
                        s.push(if next == 'n' { '\n' } else { next });
                        i += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            i += 1;
            out.push(Tok::Id(s));
        } else if c == '-' && chars.get(i + 1) == Some(&'>') {
            out.push(Tok::Arrow);
            i += 2;
        } else if "{}[];,=".contains(c) {
            out.push(Tok::Punct(c));
            i += 1;
        } else if c.is_alphanumeric() || c == '_' || c == '.' || c == '#' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || "_.#".contains(chars[i])) {
                i += 1;
            }
            out.push(Tok::Id(chars[start..i].iter().collect()));
        } else {
            return Err(format!("unexpected character {c:?}"));
        }
    }
    Ok(out)
}

/// Parses the subset of DOT the exporter emits: one digraph of node, edge
/// and `graph`/`node` attribute statements. Edges must join declared nodes.
pub fn parse_dot(src: &str) -> Result<Dot, String> {
    let toks = lex(src)?;
    let mut p = 0;
    let mut next = || -> Result<Tok, String> {
        let t = toks.get(p).cloned().ok_or("unexpected end of input")?;
        p += 1;
        Ok(t)
    };
    if next()? != Tok::Id("digraph".into()) {
        return Err("expected digraph".into());
    }
    let mut dot = Dot::default();
    let Tok::Id(name) = next()? else {
        return Err("expected graph name".into());
    };
    dot.name = name;
    if next()? != Tok::Punct('{') {
        return Err("expected {".into());
    }
    loop {
        let head = match next()? {
            Tok::Punct('}') => break,
            Tok::Id(id) => id,
            other => return Err(format!("unexpected {other:?}")),
        };
        let mut t = next()?;
        let mut attrs = BTreeMap::new();
        let mut target = None;
        if t == Tok::Arrow {
            let Tok::Id(to) = next()? else {
                return Err("expected edge target".into());
            };
            target = Some(to);
            t = next()?;
        }
        if t == Tok::Punct('[') {
            loop {
                let key = match next()? {
                    Tok::Punct(']') => break,
                    Tok::Punct(',') => continue,
                    Tok::Id(k) => k,
                    other => return Err(format!("unexpected {other:?} in attributes")),
                };
                if next()? != Tok::Punct('=') {
                    return Err("expected =".into());
                }
                let Tok::Id(value) = next()? else {
                    return Err("expected attribute value".into());
                };
                attrs.insert(key, value);
            }
            t = next()?;
        }
        if t != Tok::Punct(';') {
            return Err(format!("expected ; after statement, got {t:?}"));
        }
        match (head.as_str(), target) {
            (_, Some(to)) => dot.edges.push((head, to)),
            ("graph", None) => dot.graph_attrs.extend(attrs),
            ("node", None) => {}
            (_, None) => {
                if dot.nodes.insert(head.clone(), attrs).is_some() {
                    return Err(format!("node {head} declared twice"));
                }
            }
        }
    }
    if p != toks.len() {
        return Err("trailing input after graph".into());
    }
    for (a, b) in &dot.edges {
        if !dot.nodes.contains_key(a) || !dot.nodes.contains_key(b) {
            return Err(format!("edge {a} -> {b} joins undeclared nodes"));
        }
    }
    Ok(dot)
}
