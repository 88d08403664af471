// SPDX-License-Identifier: MIT OR Apache-2.0

//! The neuron graph: a trie of reversed example paths.
//!
//! Every processed example becomes one path read backwards from its pivot:
//! the pivot token as an activating node, then one node per earlier token
//! (a context node for important tokens, an ignore node otherwise), and
//! finally an end node holding the example's normalised pivot activation.
//!
//! Simulating the neuron walks the same trie backwards through the input.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NeuronId, Token};
use crate::pipeline::{BuildStats, PipelineConfig, ProcessedExample};

/// One step of a path, ordered from the pivot backwards.
#[derive(Clone, Debug, PartialEq)]
pub enum PathStep {
    Activating(Token),
    Context(Token, f64),
    Ignore,
    End(f64),
}

/// Kind of a trie node.
#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    Root,
    Activating(Token),
    Context { token: Token, importance: f64 },
    Ignore,
    End { activation: f64 },
}

impl NodeKind {
    pub fn token(&self) -> Option<&Token> {
        match self {
            NodeKind::Activating(t) | NodeKind::Context { token: t, .. } => Some(t),
            _ => None,
        }
    }
}

/// Child slot within a node. Variant order fixes the serialisation order of
/// children: token nodes by text, then the ignore node, then the end node.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Slot {
    Token(Token),
    Ignore,
    End,
}

#[derive(Clone, Debug)]
struct Node {
    kind: NodeKind,
    children: BTreeMap<Slot, usize>,
}

const ROOT: usize = 0;

/// Trie-form summary of one neuron's behaviour.
#[derive(Clone, Debug)]
pub struct NeuronGraph {
    neuron: NeuronId,
    a_max: f64,
    a_max_proxy: bool,
    nodes: Vec<Node>,
    activating_tokens: BTreeSet<Token>,
    context_tokens: BTreeSet<Token>,
    pub build_stats: BuildStats,
}

/// Converts an example into its path. Context tokens whose importance falls
/// below `cfg.importance_threshold` become ignore steps. The end step holds
/// the pivot activation over `a_max`, capped at 1.
pub fn build_path(example: &ProcessedExample, a_max: f64, cfg: &PipelineConfig) -> Vec<PathStep> {
    let mut path = Vec::with_capacity(example.pivot + 2);
    path.push(PathStep::Activating(example.pivot_token().clone()));
    for k in (0..example.pivot).rev() {
        let importance = example.importance[k];
        if importance >= cfg.importance_threshold {
            path.push(PathStep::Context(example.tokens[k].clone(), importance));
        } else {
            path.push(PathStep::Ignore);
        }
    }
    path.push(PathStep::End((example.pivot_activation / a_max).min(1.0)));
    path
}

/// Builds a graph from processed examples. Identical paths share nodes; on
/// shared nodes the larger importance and the larger end activation win.
pub fn build_graph(
    examples: &[ProcessedExample],
    neuron: NeuronId,
    a_max: f64,
    a_max_proxy: bool,
    cfg: &PipelineConfig,
) -> Result<NeuronGraph> {
    if examples.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let mut graph = NeuronGraph::empty(neuron, a_max, a_max_proxy)?;
    for ex in examples {
        graph.insert_path(&build_path(ex, a_max, cfg))?;
    }
    Ok(graph)
}

impl NeuronGraph {
    /// A graph with only a root. Predicts 0 everywhere.
    pub fn empty(neuron: NeuronId, a_max: f64, a_max_proxy: bool) -> Result<Self> {
        if !(a_max.is_finite() && a_max > 0.0) {
            return Err(Error::InvalidInput(format!(
                "a_max must be positive, got {a_max}"
            )));
        }
        Ok(Self {
            neuron,
            a_max,
            a_max_proxy,
            nodes: vec![Node {
                kind: NodeKind::Root,
                children: BTreeMap::new(),
            }],
            activating_tokens: BTreeSet::new(),
            context_tokens: BTreeSet::new(),
            build_stats: BuildStats::default(),
        })
    }

    pub fn neuron(&self) -> NeuronId {
        self.neuron
    }

    pub fn a_max(&self) -> f64 {
        self.a_max
    }

    pub fn a_max_proxy(&self) -> bool {
        self.a_max_proxy
    }

    pub fn activating_tokens(&self) -> &BTreeSet<Token> {
        &self.activating_tokens
    }

    pub fn context_tokens(&self) -> &BTreeSet<Token> {
        &self.context_tokens
    }

    /// The (activating, context) token sets searched and compared across a
    /// corpus.
    pub fn token_sets(&self) -> (&BTreeSet<Token>, &BTreeSet<Token>) {
        (&self.activating_tokens, &self.context_tokens)
    }

    /// Number of trie nodes, root included.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Adds one path. It must be an activating step, then context or ignore
    /// steps, then exactly one end step.
    pub fn insert_path(&mut self, path: &[PathStep]) -> Result<()> {
        let malformed = || Error::InvalidInput("malformed graph path".into());
        let (first, rest) = path.split_first().ok_or_else(malformed)?;
        let (last, middle) = rest.split_last().ok_or_else(malformed)?;
        let PathStep::Activating(pivot) = first else {
            return Err(malformed());
        };
        let PathStep::End(activation) = *last else {
            return Err(malformed());
        };
        if !(activation > 0.0 && activation <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "end activation must be in (0, 1], got {activation}"
            )));
        }
        if middle
            .iter()
            .any(|s| matches!(s, PathStep::Activating(_) | PathStep::End(_)))
        {
            return Err(malformed());
        }

        let mut cur = self.child_or_insert(ROOT, Slot::Token(pivot.clone()), || {
            NodeKind::Activating(pivot.clone())
        });
        self.activating_tokens.insert(pivot.clone());
        for step in middle {
            cur = match step {
                PathStep::Context(token, importance) => {
                    let node = self.child_or_insert(cur, Slot::Token(token.clone()), || {
                        NodeKind::Context {
                            token: token.clone(),
                            importance: *importance,
                        }
                    });
                    if let NodeKind::Context {
                        importance: stored, ..
                    } = &mut self.nodes[node].kind
                    {
                        *stored = stored.max(*importance);
                    }
                    self.context_tokens.insert(token.clone());
                    node
                }
                PathStep::Ignore => self.child_or_insert(cur, Slot::Ignore, || NodeKind::Ignore),
                _ => unreachable!("checked above"),
            };
        }
        let end = self.child_or_insert(cur, Slot::End, || NodeKind::End { activation });
        if let NodeKind::End { activation: stored } = &mut self.nodes[end].kind {
            *stored = stored.max(activation);
        }
        Ok(())
    }

    fn child_or_insert(
        &mut self,
        parent: usize,
        slot: Slot,
        kind: impl FnOnce() -> NodeKind,
    ) -> usize {
        if let Some(&id) = self.nodes[parent].children.get(&slot) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            kind: kind(),
            children: BTreeMap::new(),
        });
        self.nodes[parent].children.insert(slot, id);
        id
    }

    fn end_activation(&self, node: usize) -> Option<f64> {
        self.nodes[node]
            .children
            .get(&Slot::End)
            .map(|&e| match self.nodes[e].kind {
                NodeKind::End { activation } => activation,
                _ => unreachable!("end slot holds an end node"),
            })
    }

    /// Predicted normalised activation for every token.
    ///
    /// At position `i`, matching starts from the root child for `tokens[i]`
    /// and walks backwards. Each step follows both the child with the same
    /// token and the ignore child, if present. Every end node reached along
    /// the way is recorded and the maximum is returned (0 when none).
    pub fn predict(&self, tokens: &[Token]) -> Vec<f64> {
        (0..tokens.len())
            .map(|i| self.predict_at(tokens, i))
            .collect()
    }

    /// Prediction for position `i`, which only looks at `tokens[..=i]`.
    pub fn predict_at(&self, tokens: &[Token], i: usize) -> f64 {
        let Some(&start) = self.nodes[ROOT]
            .children
            .get(&Slot::Token(tokens[i].clone()))
        else {
            return 0.0;
        };
        let mut best = 0.0f64;
        let mut frontier = vec![start];
        let mut next = Vec::new();
        let mut j = i;
        loop {
            for &node in &frontier {
                if let Some(a) = self.end_activation(node) {
                    best = best.max(a);
                }
            }
            if j == 0 {
                break;
            }
            j -= 1;
            let slot = Slot::Token(tokens[j].clone());
            next.clear();
            for &node in &frontier {
                let children = &self.nodes[node].children;
                next.extend(children.get(&slot));
                next.extend(children.get(&Slot::Ignore));
            }
            if next.is_empty() {
                break;
            }
            std::mem::swap(&mut frontier, &mut next);
        }
        best
    }

    /// Every root-to-end path, in deterministic order.
    pub fn paths(&self) -> Vec<Vec<PathStep>> {
        let mut out = Vec::new();
        let mut stack = Vec::new();
        self.collect_paths(ROOT, &mut stack, &mut out);
        out
    }

    fn collect_paths(&self, node: usize, stack: &mut Vec<PathStep>, out: &mut Vec<Vec<PathStep>>) {
        for &child in self.nodes[node].children.values() {
            let step = match &self.nodes[child].kind {
                NodeKind::Activating(t) => PathStep::Activating(t.clone()),
                NodeKind::Context { token, importance } => {
                    PathStep::Context(token.clone(), *importance)
                }
                NodeKind::Ignore => PathStep::Ignore,
                NodeKind::End { activation } => {
                    let mut path = stack.clone();
                    path.push(PathStep::End(*activation));
                    out.push(path);
                    continue;
                }
                NodeKind::Root => unreachable!("root is never a child"),
            };
            stack.push(step);
            self.collect_paths(child, stack, out);
            stack.pop();
        }
    }

    /// Nodes in depth-first preorder with children in slot order, paired
    /// with their depth and parent (in the same numbering). This numbering is
    /// the one used for serialisation.
    pub fn nodes_preorder(&self) -> Vec<OrderedNode<'_>> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(ROOT, None, 0usize)];
        while let Some((node, parent, depth)) = stack.pop() {
            let id = out.len();
            out.push(OrderedNode {
                kind: &self.nodes[node].kind,
                parent,
                depth,
                has_end: self.nodes[node].children.contains_key(&Slot::End),
            });
            for &child in self.nodes[node].children.values().rev() {
                stack.push((child, Some(id), depth + 1));
            }
        }
        out
    }

    /// Serialises to the graph JSON interchange form.
    pub fn to_json(&self) -> Result<String> {
        let ordered = self.nodes_preorder();
        let nodes = ordered
            .iter()
            .enumerate()
            .map(|(id, n)| NodeRecord::from_kind(id, n.kind))
            .collect();
        let edges = ordered
            .iter()
            .enumerate()
            .filter_map(|(id, n)| n.parent.map(|p| [p, id]))
            .collect();
        let file = GraphFile {
            neuron: self.neuron,
            a_max: self.a_max,
            a_max_proxy: self.a_max_proxy,
            nodes,
            edges,
            build_stats: Some(self.build_stats.clone()),
        };
        Ok(serde_json::to_string(&file)?)
    }

    /// Parses and validates the graph JSON form.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        let bad = |msg: String| Error::Schema(format!("graph {}: {msg}", file.neuron));

        let n = file.nodes.len();
        let mut kinds = Vec::with_capacity(n);
        for (i, rec) in file.nodes.iter().enumerate() {
            if rec.id != i {
                return Err(bad(format!(
                    "node ids must be dense, found {} at {i}",
                    rec.id
                )));
            }
            kinds.push(rec.to_kind().map_err(bad)?);
        }
        if !matches!(kinds.first(), Some(NodeKind::Root)) {
            return Err(bad("node 0 must be the root".into()));
        }
        let mut parent = vec![None; n];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &[p, c] in &file.edges {
            if p >= n || c >= n || c == ROOT {
                return Err(bad(format!("bad edge [{p}, {c}]")));
            }
            if parent[c].replace(p).is_some() {
                return Err(bad(format!("node {c} has two parents")));
            }
            children[p].push(c);
        }
        if let Some(orphan) = (1..n).find(|&i| parent[i].is_none()) {
            return Err(bad(format!("node {orphan} has no parent")));
        }

        let mut graph = NeuronGraph::empty(file.neuron, file.a_max, file.a_max_proxy)?;
        graph.build_stats = file.build_stats.unwrap_or_default();
        // Rebuild by walking from the root; this also rejects cycles.
        let mut remap = vec![usize::MAX; n];
        remap[ROOT] = ROOT;
        let mut stack = vec![ROOT];
        let mut visited = 1;
        while let Some(old) = stack.pop() {
            for &c in &children[old] {
                let parent_kind = &kinds[old];
                let slot = match (&kinds[c], parent_kind) {
                    (NodeKind::Activating(t), NodeKind::Root) => Slot::Token(t.clone()),
                    (
                        NodeKind::Context { token, .. },
                        NodeKind::Activating(_) | NodeKind::Context { .. } | NodeKind::Ignore,
                    ) => Slot::Token(token.clone()),
                    (
                        NodeKind::Ignore,
                        NodeKind::Activating(_) | NodeKind::Context { .. } | NodeKind::Ignore,
                    ) => Slot::Ignore,
                    (
                        NodeKind::End { .. },
                        NodeKind::Activating(_) | NodeKind::Context { .. } | NodeKind::Ignore,
                    ) => Slot::End,
                    (child, parent) => {
                        return Err(bad(format!("{child:?} cannot be a child of {parent:?}")));
                    }
                };
                let new_parent = remap[old];
                if graph.nodes[new_parent].children.contains_key(&slot) {
                    return Err(bad(format!("duplicate child {slot:?} under node {old}")));
                }
                let id = graph.nodes.len();
                graph.nodes.push(Node {
                    kind: kinds[c].clone(),
                    children: BTreeMap::new(),
                });
                graph.nodes[new_parent].children.insert(slot, id);
                match &kinds[c] {
                    NodeKind::Activating(t) => {
                        graph.activating_tokens.insert(t.clone());
                    }
                    NodeKind::Context { token, .. } => {
                        graph.context_tokens.insert(token.clone());
                    }
                    _ => {}
                }
                remap[c] = id;
                visited += 1;
                stack.push(c);
            }
        }
        if visited != n {
            return Err(bad("graph is not a tree rooted at node 0".into()));
        }
        graph.check_paths_terminate().map_err(bad)?;
        Ok(graph)
    }

    /// Every leaf must be an end node and end nodes must be leaves.
    fn check_paths_terminate(&self) -> std::result::Result<(), String> {
        for (i, node) in self.nodes.iter().enumerate().skip(1) {
            let is_end = matches!(node.kind, NodeKind::End { .. });
            if is_end && !node.children.is_empty() {
                return Err(format!("end node {i} has children"));
            }
            if !is_end && node.children.is_empty() {
                return Err(format!("path through node {i} has no end node"));
            }
        }
        Ok(())
    }
}

/// A node as seen in serialisation order.
#[derive(Clone, Debug)]
pub struct OrderedNode<'a> {
    pub kind: &'a NodeKind,
    pub parent: Option<usize>,
    pub depth: usize,
    /// Whether a path ends at this node.
    pub has_end: bool,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    neuron: NeuronId,
    a_max: f64,
    a_max_proxy: bool,
    nodes: Vec<NodeRecord>,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    build_stats: Option<BuildStats>,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: usize,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    token: Option<Token>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    importance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    activation: Option<f64>,
}

impl NodeRecord {
    fn from_kind(id: usize, kind: &NodeKind) -> Self {
        let mut rec = NodeRecord {
            id,
            kind: String::new(),
            token: None,
            importance: None,
            activation: None,
        };
        rec.kind = match kind {
            NodeKind::Root => "root",
            NodeKind::Activating(t) => {
                rec.token = Some(t.clone());
                "activating"
            }
            NodeKind::Context { token, importance } => {
                rec.token = Some(token.clone());
                rec.importance = Some(*importance);
                "context"
            }
            NodeKind::Ignore => "ignore",
            NodeKind::End { activation } => {
                rec.activation = Some(*activation);
                "end"
            }
        }
        .to_owned();
        rec
    }

    fn to_kind(&self) -> std::result::Result<NodeKind, String> {
        let token = || {
            self.token
                .clone()
                .ok_or_else(|| format!("node {} needs a token", self.id))
        };
        Ok(match self.kind.as_str() {
            "root" => NodeKind::Root,
            "activating" => NodeKind::Activating(token()?),
            "context" => {
                let importance = self
                    .importance
                    .filter(|v| (0.0..=1.0).contains(v))
                    .ok_or_else(|| {
                        format!("context node {} needs importance in [0, 1]", self.id)
                    })?;
                NodeKind::Context {
                    token: token()?,
                    importance,
                }
            }
            "ignore" => NodeKind::Ignore,
            "end" => {
                let activation = self
                    .activation
                    .filter(|v| *v > 0.0 && *v <= 1.0)
                    .ok_or_else(|| format!("end node {} needs activation in (0, 1]", self.id))?;
                NodeKind::End { activation }
            }
            other => return Err(format!("unknown node kind {other:?}")),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Origin;

    const N: NeuronId = NeuronId::new(0, 7);

    fn example(tokens: &[&str], importance: &[f64], act: f64) -> ProcessedExample {
        ProcessedExample {
            tokens: Token::seq(tokens),
            pivot: tokens.len() - 1,
            pivot_activation: act,
            importance: importance.to_vec(),
            origin: Origin::Pruned { record: 0 },
            context_capped: false,
        }
    }

    fn s1_example() -> ProcessedExample {
        example(&["A", "B"], &[1.0, 1.0], 2.0)
    }

    fn s4_example() -> ProcessedExample {
        example(&["A", "x", "B"], &[1.0, 0.0, 1.0], 3.0)
    }

    fn cfg() -> PipelineConfig {
        PipelineConfig::default()
    }

    #[test]
    fn paths_from_examples() {
        assert_eq!(
            build_path(&s1_example(), 2.0, &cfg()),
            vec![
                PathStep::Activating(Token::from("B")),
                PathStep::Context(Token::from("A"), 1.0),
                PathStep::End(1.0)
            ]
        );
        assert_eq!(
            build_path(&s4_example(), 3.0, &cfg()),
            vec![
                PathStep::Activating(Token::from("B")),
                PathStep::Ignore,
                PathStep::Context(Token::from("A"), 1.0),
                PathStep::End(1.0)
            ]
        );
        assert_eq!(
            build_path(&example(&["Z"], &[1.0], 1.0), 1.0, &cfg()),
            vec![PathStep::Activating(Token::from("Z")), PathStep::End(1.0)]
        );
    }

    #[test]
    fn duplicate_paths_are_shared() {
        let g = build_graph(&[s1_example(), s1_example()], N, 2.0, false, &cfg()).unwrap();
        // root, B, A, end
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.paths().len(), 1);
    }

    #[test]
    fn duplicate_paths_keep_max_end() {
        let lo = example(&["A", "B"], &[1.0, 1.0], 1.0);
        let hi = example(&["A", "B"], &[0.8, 1.0], 2.0);
        let g = build_graph(&[lo, hi], N, 2.0, false, &cfg()).unwrap();
        assert_eq!(
            g.paths(),
            vec![vec![
                PathStep::Activating(Token::from("B")),
                PathStep::Context(Token::from("A"), 1.0),
                PathStep::End(1.0)
            ]]
        );
    }

    #[test]
    fn shared_activating_node() {
        let aug = example(&["a", "B"], &[1.0, 1.0], 2.0);
        let g = build_graph(&[s1_example(), aug], N, 2.0, false, &cfg()).unwrap();
        assert_eq!(g.activating_tokens().len(), 1);
        let ctx: Vec<_> = g.context_tokens().iter().map(Token::text).collect();
        assert_eq!(ctx, ["A", "a"]);
        assert_eq!(g.paths().len(), 2);
    }

    #[test]
    fn disjoint_pivots() {
        let z = example(&["Z"], &[1.0], 1.0);
        let g = build_graph(&[s1_example(), z], N, 2.0, false, &cfg()).unwrap();
        let act: Vec<_> = g.activating_tokens().iter().map(Token::text).collect();
        assert_eq!(act, ["B", "Z"]);
    }

    #[test]
    fn empty_examples_rejected() {
        assert!(matches!(
            build_graph(&[], N, 1.0, false, &cfg()),
            Err(Error::EmptyGraph)
        ));
    }

    #[test]
    fn predict_through_ignore() {
        let g = build_graph(&[s4_example()], N, 3.0, false, &cfg()).unwrap();
        assert_eq!(
            g.predict(&Token::seq(&["A", "y", "B"])),
            vec![0.0, 0.0, 1.0]
        );
        // The ignore node consumes "A" and nothing remains for the context node.
        assert_eq!(g.predict(&Token::seq(&["A", "B"])), vec![0.0, 0.0]);
    }

    #[test]
    fn predict_requires_context() {
        let g = build_graph(&[s1_example()], N, 2.0, false, &cfg()).unwrap();
        assert_eq!(g.predict(&Token::seq(&["C", "B"])), vec![0.0, 0.0]);
        assert_eq!(g.predict(&Token::seq(&["A", "B"])), vec![0.0, 1.0]);
    }

    #[test]
    fn predict_explores_ignore_and_token_branches() {
        // B <- A <- end and B <- ignore <- C <- end; input "A C? B": at the
        // first step "A" matches both the context child and the ignore child.
        let p1 = example(&["A", "B"], &[1.0, 1.0], 1.0);
        let p2 = example(&["C", "x", "B"], &[1.0, 0.0, 1.0], 2.0);
        let g = build_graph(&[p1, p2], N, 2.0, false, &cfg()).unwrap();
        let out = g.predict(&Token::seq(&["C", "A", "B"]));
        assert_eq!(out[2], 1.0);
        let out = g.predict(&Token::seq(&["D", "A", "B"]));
        assert_eq!(out[2], 0.5);
    }

    #[test]
    fn token_sets() {
        let g = build_graph(&[s1_example()], N, 2.0, false, &cfg()).unwrap();
        let (a, c) = g.token_sets();
        assert_eq!(a.iter().map(Token::text).collect::<Vec<_>>(), ["B"]);
        assert_eq!(c.iter().map(Token::text).collect::<Vec<_>>(), ["A"]);
        let z = build_graph(&[example(&["Z"], &[1.0], 1.0)], N, 1.0, false, &cfg()).unwrap();
        assert!(z.context_tokens().is_empty());
    }

    #[test]
    fn json_layout_matches_interchange_form() {
        let g = build_graph(&[s1_example()], N, 2.0, true, &cfg()).unwrap();
        let json = g.to_json().unwrap();
        assert!(json.starts_with(
            r#"{"neuron":{"layer":0,"index":7},"a_max":2.0,"a_max_proxy":true,"nodes":[{"id":0,"kind":"root"},{"id":1,"kind":"activating","token":"B"},{"id":2,"kind":"context","token":"A","importance":1.0},{"id":3,"kind":"end","activation":1.0}],"edges":[[0,1],[1,2],[2,3]]"#
        ), "{json}");
        let back = NeuronGraph::from_json(&json).unwrap();
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn json_without_stats_parses() {
        let json = r#"{"neuron":{"layer":0,"index":7},"a_max":2.0,"a_max_proxy":true,"nodes":[{"id":0,"kind":"root"},{"id":1,"kind":"activating","token":"B"},{"id":2,"kind":"context","token":"A","importance":1.0},{"id":3,"kind":"end","activation":1.0}],"edges":[[0,1],[1,2],[2,3]]}"#;
        let g = NeuronGraph::from_json(json).unwrap();
        assert_eq!(g.predict(&Token::seq(&["A", "B"])), vec![0.0, 1.0]);
    }

    #[test]
    fn json_rejects_malformed_trees() {
        let dangling = r#"{"neuron":{"layer":0,"index":7},"a_max":2.0,"a_max_proxy":true,"nodes":[{"id":0,"kind":"root"},{"id":1,"kind":"activating","token":"B"}],"edges":[[0,1]]}"#;
        assert!(NeuronGraph::from_json(dangling).is_err());
        let orphan = r#"{"neuron":{"layer":0,"index":7},"a_max":2.0,"a_max_proxy":true,"nodes":[{"id":0,"kind":"root"},{"id":1,"kind":"activating","token":"B"},{"id":2,"kind":"end","activation":1.0}],"edges":[[0,1]]}"#;
        assert!(NeuronGraph::from_json(orphan).is_err());
        let end_under_root = r#"{"neuron":{"layer":0,"index":7},"a_max":2.0,"a_max_proxy":true,"nodes":[{"id":0,"kind":"root"},{"id":1,"kind":"end","activation":1.0}],"edges":[[0,1]]}"#;
        assert!(NeuronGraph::from_json(end_under_root).is_err());
    }

    #[test]
    fn end_activation_capped_at_one() {
        let ex = example(&["Z"], &[1.0], 5.0);
        assert_eq!(
            build_path(&ex, 2.0, &cfg()).last(),
            Some(&PathStep::End(1.0))
        );
    }
}
