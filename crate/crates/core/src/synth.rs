// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic neuron corpora: the spec file format and seeded generators.
//!
//! A spec file lists rule-based neurons together with the token sequences
//! used as their dataset examples:
//!
//! ```text
//! {"neurons":[{"layer":0,"index":7,"activating":{"B":2.0},"required_context":["A"],
//!              "window":3,"examples":[["x","A","B","y"]],"held_out":[["A","B"]]}]}
//! ```
//!
//! `held_out` is optional. When present it is the evaluation set and every
//! example is used for building; otherwise examples are split in half.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActivationRecord, NeuronId, Token};
use crate::oracle::{SyntheticNeuron, SyntheticOracle};
use crate::records::RecordSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEntry {
    #[serde(flatten)]
    pub neuron: SyntheticNeuron,
    pub examples: Vec<Vec<Token>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub held_out: Vec<Vec<Token>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub neurons: Vec<SyntheticEntry>,
}

/// A neuron's records split into a build set and an evaluation set.
#[derive(Clone, Debug)]
pub struct SplitRecords {
    pub train: Vec<ActivationRecord>,
    pub held_out: Vec<ActivationRecord>,
}

impl SyntheticSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        // Either `{"neurons": [...]}` or a bare list of entries.
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Form {
            Wrapped(SyntheticSpec),
            Bare(Vec<SyntheticEntry>),
        }
        let spec = match serde_json::from_str(&text)? {
            Form::Wrapped(spec) => spec,
            Form::Bare(neurons) => Self { neurons },
        };
        for e in &spec.neurons {
            e.neuron.validate()?;
            if e.examples.iter().chain(&e.held_out).any(Vec::is_empty) {
                return Err(Error::InvalidInput(format!(
                    "neuron {} has an empty example",
                    e.neuron.id()
                )));
            }
        }
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn oracle(&self) -> Result<SyntheticOracle> {
        SyntheticOracle::new(self.neurons.iter().map(|e| e.neuron.clone()))
    }

    /// Records for every neuron: examples followed by held-out sequences,
    /// with the maximum taken over both as a proxy `max_activation`.
    pub fn records(&self) -> RecordSet {
        self.neurons
            .iter()
            .map(|e| {
                let split = e.split_records();
                let mut all = split.train;
                all.extend(split.held_out);
                (e.neuron.id(), all)
            })
            .collect()
    }

    /// Per-neuron (examples, held-out) records, or `None` for entries
    /// without explicit held-out sequences.
    pub fn explicit_splits(&self) -> std::collections::BTreeMap<NeuronId, SplitRecords> {
        self.neurons
            .iter()
            .filter(|e| !e.held_out.is_empty())
            .map(|e| (e.neuron.id(), e.split_records()))
            .collect()
    }
}

impl SyntheticEntry {
    pub fn split_records(&self) -> SplitRecords {
        let id = self.neuron.id();
        let run = |seqs: &[Vec<Token>]| -> Vec<(Vec<Token>, Vec<f64>)> {
            seqs.iter()
                .map(|s| (s.clone(), self.neuron.activate(s)))
                .collect()
        };
        let train = run(&self.examples);
        let held_out = run(&self.held_out);
        let a_max = train
            .iter()
            .chain(&held_out)
            .flat_map(|(_, a)| a.iter().copied())
            .fold(0.0, f64::max);
        let make = |rows: Vec<(Vec<Token>, Vec<f64>)>| {
            rows.into_iter()
                .map(|(tokens, acts)| ActivationRecord {
                    neuron: id,
                    tokens,
                    activations: acts,
                    max_activation: a_max,
                    max_activation_proxy: true,
                })
                .collect()
        };
        SplitRecords {
            train: make(train),
            held_out: make(held_out),
        }
    }
}

fn vocab(prefix: &str, n: usize) -> Vec<Token> {
    (0..n)
        .map(|i| Token::from(format!("{prefix}{i}").as_str()))
        .collect()
}

/// Parameters of [`gap_complete_neuron`].
#[derive(Clone, Debug)]
pub struct GapCompleteParams {
    /// Total distinct tokens per neuron (activating, context and filler).
    pub alphabet: usize,
    pub max_window: usize,
    pub max_activating: usize,
    pub max_context: usize,
    pub held_out_texts: usize,
    pub held_out_len: usize,
}

impl Default for GapCompleteParams {
    fn default() -> Self {
        Self {
            alphabet: 20,
            max_window: 3,
            max_activating: 3,
            max_context: 3,
            held_out_texts: 6,
            held_out_len: 40,
        }
    }
}

/// A random context-gated neuron with a training set that shows every
/// (activating token, context token, gap) combination the rule allows, and
/// random held-out texts containing at least one firing.
///
/// Token texts are prefixed with `prefix` so neurons can be given disjoint
/// vocabularies.
pub fn gap_complete_neuron<R: Rng>(
    rng: &mut R,
    id: NeuronId,
    prefix: &str,
    p: &GapCompleteParams,
) -> SyntheticEntry {
    let mut alphabet = vocab(prefix, p.alphabet);
    alphabet.shuffle(rng);
    let n_act = rng.random_range(1..=p.max_activating);
    let n_ctx = rng.random_range(0..=p.max_context);
    let window = rng.random_range(1..=p.max_window);
    let activating: Vec<Token> = alphabet[..n_act].to_vec();
    let context: Vec<Token> = alphabet[n_act..n_act + n_ctx].to_vec();
    let fillers: Vec<Token> = alphabet[n_act + n_ctx..].to_vec();

    // The first activating token is the strongest so that something fires
    // at the 0.5 threshold; the rest take random strengths.
    let values: Vec<f64> = (0..n_act)
        .map(|i| {
            if i == 0 {
                2.0
            } else {
                f64::from(rng.random_range(1..=20u32)) / 10.0
            }
        })
        .collect();
    let neuron = SyntheticNeuron::new(
        id,
        activating.iter().cloned().zip(values),
        context.iter().cloned(),
        window,
    )
    .expect("generated neuron is valid");

    let filler = |rng: &mut R, n: usize| -> Vec<Token> {
        (0..n)
            .map(|_| fillers[rng.random_range(0..fillers.len())].clone())
            .collect()
    };
    let mut examples = Vec::new();
    for t in &activating {
        if context.is_empty() {
            let lead = rng.random_range(0..=3);
            let mut ex = filler(rng, lead);
            ex.push(t.clone());
            let tail = rng.random_range(0..=2);
            ex.extend(filler(rng, tail));
            examples.push(ex);
            continue;
        }
        for c in &context {
            for gap in 0..window {
                let lead = rng.random_range(0..=3);
                let mut ex = filler(rng, lead);
                ex.push(c.clone());
                ex.extend(filler(rng, gap));
                ex.push(t.clone());
                let tail = rng.random_range(0..=2);
                ex.extend(filler(rng, tail));
                examples.push(ex);
            }
        }
    }

    let strongest = &activating[0];
    let mut held_out = Vec::new();
    while held_out.len() < p.held_out_texts {
        let text: Vec<Token> = (0..p.held_out_len)
            .map(|_| {
                let pool = match rng.random_range(0..10) {
                    0..=2 => &activating,
                    3..=5 if !context.is_empty() => &context,
                    _ => &fillers,
                };
                pool[rng.random_range(0..pool.len())].clone()
            })
            .collect();
        held_out.push(text);
        let fires = held_out.iter().any(|t| {
            neuron
                .activate(t)
                .iter()
                .zip(t)
                .any(|(a, tok)| *a > 0.0 && tok == strongest)
        });
        if held_out.len() == p.held_out_texts && !fires {
            held_out.pop();
        }
    }

    SyntheticEntry {
        neuron,
        examples,
        held_out,
    }
}

/// Parameters of [`trend_neuron`].
#[derive(Clone, Debug)]
pub struct TrendParams {
    pub records: usize,
    /// Context gaps are drawn from `0..window`, with the window drawn from
    /// `1..=max_window`.
    pub max_window: usize,
    pub fillers: usize,
    pub padding: (usize, usize),
    /// Extra events per record beyond the guaranteed firing.
    pub extra_events: usize,
    /// Relative weights of extra firing, distractor and suppressed events.
    pub event_weights: [u32; 3],
}

impl Default for TrendParams {
    fn default() -> Self {
        Self {
            records: 20,
            max_window: 7,
            fillers: 4,
            padding: (7, 10),
            extra_events: 3,
            event_weights: [3, 5, 2],
        }
    }
}

/// A context-gated neuron with suppressor tokens, plus records in the style
/// of top-activating dataset examples: each holds at least one firing, and
/// also carries distractor occurrences of activating tokens without their
/// context and suppressed occurrences that have context but do not fire.
pub fn trend_neuron<R: Rng>(rng: &mut R, id: NeuronId, p: &TrendParams) -> SyntheticEntry {
    let n_act = rng.random_range(1..=2);
    let n_ctx = rng.random_range(1..=2);
    let window = rng.random_range(1..=p.max_window);
    let activating = vocab("act", n_act);
    let context = vocab("ctx", n_ctx);
    let suppressor = Token::from("sup");
    let fillers = vocab("f", p.fillers);

    let values: Vec<f64> = (0..n_act)
        .map(|i| {
            if i == 0 {
                1.0
            } else {
                f64::from(rng.random_range(6..=10u32)) / 10.0
            }
        })
        .collect();
    let neuron = SyntheticNeuron::new(
        id,
        activating.iter().cloned().zip(values),
        context.iter().cloned(),
        window,
    )
    .and_then(|n| n.with_suppressors([suppressor.clone()]))
    .expect("generated neuron is valid");

    let pick = |rng: &mut R, v: &[Token]| v[rng.random_range(0..v.len())].clone();
    let fill =
        |rng: &mut R, n: usize| -> Vec<Token> { (0..n).map(|_| pick(rng, &fillers)).collect() };

    let fire = |rng: &mut R| -> Vec<Token> {
        let gap = rng.random_range(0..window);
        let mut ev = vec![pick(rng, &context)];
        ev.extend(fill(rng, gap));
        ev.push(pick(rng, &activating));
        ev
    };
    let suppressed = |rng: &mut R| -> Option<Vec<Token>> {
        if window < 2 {
            return None;
        }
        let gap = rng.random_range(0..window);
        let mut ev = if gap == 0 {
            // Suppressor before the context token, still inside the window.
            let dist = rng.random_range(2..=window);
            let mut ev = vec![suppressor.clone()];
            ev.extend(fill(rng, dist - 2));
            ev.push(pick(rng, &context));
            ev
        } else {
            let mut ev = vec![pick(rng, &context)];
            let mut between = fill(rng, gap);
            let slot = rng.random_range(0..gap);
            between[slot] = suppressor.clone();
            ev.extend(between);
            ev
        };
        ev.push(pick(rng, &activating));
        Some(ev)
    };

    let total: u32 = p.event_weights.iter().sum();
    let mut examples = Vec::with_capacity(p.records);
    for _ in 0..p.records {
        let mut events = vec![fire(rng)];
        for _ in 0..p.extra_events {
            let mut roll = rng.random_range(0..total);
            let kind = p
                .event_weights
                .iter()
                .position(|&w| {
                    if roll < w {
                        true
                    } else {
                        roll -= w;
                        false
                    }
                })
                .expect("roll below total");
            match kind {
                0 => events.push(fire(rng)),
                1 => events.push(vec![pick(rng, &activating)]),
                _ => events.extend(suppressed(rng)),
            }
        }
        events.shuffle(rng);
        let mut record = Vec::new();
        for ev in events {
            let pad = rng.random_range(p.padding.0..=p.padding.1);
            record.extend(fill(rng, pad));
            record.extend(ev);
        }
        let tail = rng.random_range(0..=3);
        record.extend(fill(rng, tail));
        examples.push(record);
    }

    SyntheticEntry {
        neuron,
        examples,
        held_out: Vec::new(),
    }
}

/// A neuron whose single context token sits exactly `gap` tokens before the
/// activating token in every example, for trajectory studies.
pub fn fixed_gap_neuron<R: Rng>(
    rng: &mut R,
    id: NeuronId,
    window: usize,
    gap: usize,
    examples: usize,
) -> SyntheticEntry {
    assert!(gap < window, "gap must fit inside the window");
    let fillers = vocab("f", 6);
    let neuron = SyntheticNeuron::new(
        id,
        [(Token::from("act"), 1.0)],
        [Token::from("ctx")],
        window,
    )
    .expect("valid neuron");
    let examples = (0..examples)
        .map(|_| {
            let mut ex: Vec<Token> = (0..rng.random_range(4..=8))
                .map(|_| fillers[rng.random_range(0..fillers.len())].clone())
                .collect();
            ex.push(Token::from("ctx"));
            ex.extend((0..gap).map(|_| fillers[rng.random_range(0..fillers.len())].clone()));
            ex.push(Token::from("act"));
            ex
        })
        .collect();
    SyntheticEntry {
        neuron,
        examples,
        held_out: Vec::new(),
    }
}

/// Tokens used anywhere in an entry.
pub fn entry_vocabulary(entry: &SyntheticEntry) -> BTreeSet<Token> {
    entry
        .examples
        .iter()
        .chain(&entry.held_out)
        .flatten()
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn spec_file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = SyntheticSpec {
            neurons: vec![gap_complete_neuron(
                &mut rng,
                NeuronId::new(0, 1),
                "t",
                &GapCompleteParams::default(),
            )],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spec.json");
        spec.save(&path).unwrap();
        assert_eq!(SyntheticSpec::load(&path).unwrap(), spec);
    }

    #[test]
    fn spec_file_literal_form() {
        let json = r#"{"neurons":[{"layer":0,"index":7,"activating":{"B":2.0},"required_context":["A"],"window":3,"examples":[["x","A","B","y"]]}]}"#;
        let spec: SyntheticSpec = serde_json::from_str(json).unwrap();
        let recs = spec.records();
        let r = &recs[&NeuronId::new(0, 7)][0];
        assert_eq!(r.activations, vec![0.0, 0.0, 2.0, 0.0]);
        assert_eq!(r.max_activation, 2.0);
    }

    #[test]
    fn gap_complete_covers_every_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..20 {
            let e = gap_complete_neuron(
                &mut rng,
                NeuronId::new(0, i),
                "t",
                &GapCompleteParams::default(),
            );
            let n = &e.neuron;
            let expected = if n.required_context.is_empty() {
                n.activating.len()
            } else {
                n.activating.len() * n.required_context.len() * n.window
            };
            assert_eq!(e.examples.len(), expected);
            for ex in &e.examples {
                assert!(
                    n.activate(ex).iter().any(|a| *a > 0.0),
                    "every example fires"
                );
            }
            assert!(!e.held_out.is_empty());
        }
    }

    #[test]
    fn trend_records_all_fire() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..20 {
            let e = trend_neuron(&mut rng, NeuronId::new(0, i), &TrendParams::default());
            assert_eq!(e.examples.len(), 20);
            for ex in &e.examples {
                assert!(e.neuron.activate(ex).iter().any(|a| *a > 0.0));
            }
        }
    }
}
