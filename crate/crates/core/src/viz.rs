// SPDX-License-Identifier: MIT OR Apache-2.0

//! DOT rendering of neuron graphs.
//!
//! Ignore nodes are dropped (their neighbours are joined directly) and token
//! nodes with the same text at the same trie depth are collapsed into one.
//! Edges run from context towards the activating token, so with `rankdir=LR`
//! a path reads in text order. Activating nodes are filled red by their
//! strongest end activation, context nodes blue by importance, and nodes at
//! which a path may end get a bold outline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use crate::graph::{NeuronGraph, NodeKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ColorScale {
    /// Saturation proportional to the score, fixed hue and full value.
    #[default]
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VizOptions {
    pub color_scale: ColorScale,
    pub show_end_markers: bool,
}

impl Default for VizOptions {
    fn default() -> Self {
        Self {
            color_scale: ColorScale::Linear,
            show_end_markers: true,
        }
    }
}

const RED_HUE: f64 = 0.0;
const BLUE_HUE: f64 = 240.0;

/// `#rrggbb` for the given hue (degrees), saturation and value in [0, 1].
fn hsv_hex(hue: f64, saturation: f64, value: f64) -> String {
    let s = saturation.clamp(0.0, 1.0);
    let c = value * s;
    let h = (hue.rem_euclid(360.0)) / 60.0;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = value - c;
    let byte = |v: f64| ((v + m) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", byte(r), byte(g), byte(b))
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

#[derive(Default)]
struct DisplayNode {
    activating: bool,
    score: f64,
    bold: bool,
}

/// (depth, label) of a collapsed node.
type NodeKey<'a> = (usize, &'a str);

/// Renders `graph` as a DOT digraph. Output is deterministic.
pub fn to_dot(graph: &NeuronGraph, options: &VizOptions) -> String {
    let ordered = graph.nodes_preorder();

    // Strongest end activation below each node, filled bottom-up (children
    // always follow their parent in preorder).
    let mut best_end = vec![0.0f64; ordered.len()];
    for (id, node) in ordered.iter().enumerate().rev() {
        if let NodeKind::End { activation } = node.kind {
            best_end[id] = *activation;
        }
        if let Some(p) = node.parent {
            best_end[p] = best_end[p].max(best_end[id]);
        }
    }

    // Nearest token-bearing ancestor of every node, skipping ignore nodes.
    let mut token_anchor: Vec<Option<usize>> = vec![None; ordered.len()];
    for (id, node) in ordered.iter().enumerate() {
        if let Some(p) = node.parent {
            token_anchor[id] = if ordered[p].kind.token().is_some() {
                Some(p)
            } else {
                token_anchor[p]
            };
        }
    }

    let mut display: BTreeMap<(usize, &str), DisplayNode> = BTreeMap::new();
    let mut edges: BTreeSet<(NodeKey, NodeKey)> = BTreeSet::new();
    for (id, node) in ordered.iter().enumerate() {
        let Some(token) = node.kind.token() else {
            continue;
        };
        let key = (node.depth, token.text());
        let entry = display.entry(key).or_default();
        match node.kind {
            NodeKind::Activating(_) => {
                entry.activating = true;
                entry.score = entry.score.max(best_end[id]);
            }
            NodeKind::Context { importance, .. } => {
                entry.score = entry.score.max(*importance);
            }
            _ => {}
        }
        entry.bold |= node.has_end;
        if let Some(anchor) = token_anchor[id] {
            let a = &ordered[anchor];
            let target = (a.depth, a.kind.token().expect("anchor has a token").text());
            edges.insert((key, target));
        }
    }

    let mut ids: BTreeMap<(usize, &str), String> = BTreeMap::new();
    let mut rank_at_depth: BTreeMap<usize, usize> = BTreeMap::new();
    for key in display.keys() {
        let rank = rank_at_depth.entry(key.0).or_default();
        ids.insert(*key, format!("d{}_{}", key.0, rank));
        *rank += 1;
    }

    let neuron = graph.neuron();
    let mut out = String::new();
    writeln!(
        out,
        "digraph \"neuron_{}_{}\" {{",
        neuron.layer, neuron.index
    )
    .unwrap();
    writeln!(out, "    graph [rankdir=LR];").unwrap();
    writeln!(
        out,
        "    node [shape=box, style=filled, fontname=\"Helvetica\"];"
    )
    .unwrap();
    for (key, node) in &display {
        let saturation = match options.color_scale {
            ColorScale::Linear => node.score,
        };
        let hue = if node.activating { RED_HUE } else { BLUE_HUE };
        let kind = if node.activating {
            "activating"
        } else {
            "context"
        };
        let mut attrs = format!(
            "label=\"{}\", depth={}, kind=\"{}\", fillcolor=\"{}\"",
            escape(key.1),
            key.0,
            kind,
            hsv_hex(hue, saturation, 1.0)
        );
        if options.show_end_markers && node.bold {
            attrs.push_str(", style=\"filled,bold\", penwidth=3");
        }
        writeln!(out, "    \"{}\" [{}];", ids[key], attrs).unwrap();
    }
    for (from, to) in &edges {
        writeln!(out, "    \"{}\" -> \"{}\";", ids[from], ids[to]).unwrap();
    }
    out.push_str("}\n");
    out
}
