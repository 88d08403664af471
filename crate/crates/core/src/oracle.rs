// SPDX-License-Identifier: MIT OR Apache-2.0

//! Activation oracles: anything that can answer "what does this neuron output
//! on each token of this sequence".
//!
//! Three implementations live here:
//!
//! - [`SyntheticOracle`], a rule-based ground truth for desk-scale runs,
//! - [`ReplayOracle`], which answers from dumped activation records,
//! - [`FallbackOracle`], which chains two oracles so that queries the replay
//!   store cannot answer are forwarded to a live model.
//!
//! The live model client is in [`crate::sidecar`].

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActivationRecord, NeuronId, Token};

/// Reserved padding token of the synthetic and replay oracles. It matches no
/// activating, context or suppressor token.
pub const PAD_TOKEN: &str = "<PAD>";

/// Source of per-token activations for a neuron.
///
/// Implementations must be deterministic and safe for concurrent read-only
/// queries.
pub trait ActivationOracle: Send + Sync {
    /// Token substituted for a position when measuring its importance.
    fn pad_token(&self) -> &Token;

    /// Activation of `neuron` on every token of `tokens`.
    fn activations(&self, neuron: NeuronId, tokens: &[Token]) -> Result<Vec<f64>>;

    /// Maximum number of concurrent in-flight queries; `None` is unbounded.
    fn max_in_flight(&self) -> Option<usize> {
        None
    }

    /// Activation on the last token of `tokens`.
    fn last_activation(&self, neuron: NeuronId, tokens: &[Token]) -> Result<f64> {
        let acts = self.activations(neuron, tokens)?;
        acts.last()
            .copied()
            .ok_or_else(|| Error::InvalidInput("oracle returned no activations".into()))
    }
}

impl<T: ActivationOracle + ?Sized> ActivationOracle for &T {
    fn pad_token(&self) -> &Token {
        (**self).pad_token()
    }

    fn activations(&self, neuron: NeuronId, tokens: &[Token]) -> Result<Vec<f64>> {
        (**self).activations(neuron, tokens)
    }

    fn max_in_flight(&self) -> Option<usize> {
        (**self).max_in_flight()
    }
}

impl<T: ActivationOracle + ?Sized> ActivationOracle for Box<T> {
    fn pad_token(&self) -> &Token {
        (**self).pad_token()
    }

    fn activations(&self, neuron: NeuronId, tokens: &[Token]) -> Result<Vec<f64>> {
        (**self).activations(neuron, tokens)
    }

    fn max_in_flight(&self) -> Option<usize> {
        (**self).max_in_flight()
    }
}

/// A rule-based neuron.
///
/// Position `i` outputs `activating[tokens[i]]` when that token is an
/// activating token, at least one required-context token (if any are
/// required) occurs within the `window` tokens before it, and no suppressor
/// occurs in that same window. Every other position outputs 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticNeuron {
    pub layer: u32,
    pub index: u32,
    pub activating: BTreeMap<Token, f64>,
    #[serde(default)]
    pub required_context: BTreeSet<Token>,
    pub window: usize,
    /// Tokens that silence the neuron when present in the window. Empty for
    /// plain context-gated neurons.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub suppressors: BTreeSet<Token>,
}

impl SyntheticNeuron {
    pub fn new(
        neuron: NeuronId,
        activating: impl IntoIterator<Item = (Token, f64)>,
        required_context: impl IntoIterator<Item = Token>,
        window: usize,
    ) -> Result<Self> {
        let neuron = Self {
            layer: neuron.layer,
            index: neuron.index,
            activating: activating.into_iter().collect(),
            required_context: required_context.into_iter().collect(),
            window,
            suppressors: BTreeSet::new(),
        };
        neuron.validate()?;
        Ok(neuron)
    }

    pub fn with_suppressors(
        mut self,
        suppressors: impl IntoIterator<Item = Token>,
    ) -> Result<Self> {
        self.suppressors = suppressors.into_iter().collect();
        self.validate()?;
        Ok(self)
    }

    pub fn id(&self) -> NeuronId {
        NeuronId::new(self.layer, self.index)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidInput(
                "synthetic window must be positive".into(),
            ));
        }
        if self.activating.is_empty() {
            return Err(Error::InvalidInput(
                "synthetic neuron needs an activating token".into(),
            ));
        }
        if let Some((t, v)) = self
            .activating
            .iter()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::InvalidInput(format!(
                "activation for {t:?} must be positive, got {v}"
            )));
        }
        let reserved = self
            .activating
            .keys()
            .chain(&self.required_context)
            .chain(&self.suppressors)
            .any(|t| t.text() == PAD_TOKEN);
        if reserved {
            return Err(Error::InvalidInput(format!(
                "{PAD_TOKEN} is reserved for padding"
            )));
        }
        Ok(())
    }

    /// Applies the rule to every position.
    pub fn activate(&self, tokens: &[Token]) -> Vec<f64> {
        (0..tokens.len())
            .map(|i| self.activate_at(tokens, i))
            .collect()
    }

    fn activate_at(&self, tokens: &[Token], i: usize) -> f64 {
        let Some(&value) = self.activating.get(&tokens[i]) else {
            return 0.0;
        };
        let prior = &tokens[i.saturating_sub(self.window)..i];
        let has_context = self.required_context.is_empty()
            || prior.iter().any(|t| self.required_context.contains(t));
        let suppressed = prior.iter().any(|t| self.suppressors.contains(t));
        if has_context && !suppressed {
            value
        } else {
            0.0
        }
    }
}

/// Oracle answering from a set of [`SyntheticNeuron`]s.
#[derive(Clone, Debug)]
pub struct SyntheticOracle {
    neurons: BTreeMap<NeuronId, SyntheticNeuron>,
    pad: Token,
}

impl SyntheticOracle {
    pub fn new(neurons: impl IntoIterator<Item = SyntheticNeuron>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for n in neurons {
            n.validate()?;
            if map.insert(n.id(), n.clone()).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate synthetic neuron {}",
                    n.id()
                )));
            }
        }
        Ok(Self {
            neurons: map,
            pad: Token::from(PAD_TOKEN),
        })
    }

    pub fn neuron(&self, id: NeuronId) -> Option<&SyntheticNeuron> {
        self.neurons.get(&id)
    }

    pub fn neurons(&self) -> impl Iterator<Item = &SyntheticNeuron> {
        self.neurons.values()
    }
}

impl ActivationOracle for SyntheticOracle {
    fn pad_token(&self) -> &Token {
        &self.pad
    }

    fn activations(&self, neuron: NeuronId, tokens: &[Token]) -> Result<Vec<f64>> {
        let n = self
            .neurons
            .get(&neuron)
            .ok_or(Error::NeuronNotFound(neuron))?;
        if tokens.is_empty() {
            return Err(Error::InvalidInput("empty token sequence".into()));
        }
        Ok(n.activate(tokens))
    }
}

type Store = HashMap<NeuronId, Vec<(Vec<Token>, Vec<f64>)>>;

/// Replays dumped activations.
///
/// A query is answered when it is a prefix of a stored record (an exact
/// match being the longest prefix). Activations are causal, so a prefix keeps
/// every token's full left context. Any other query, including a suffix or
/// interior slice, yields [`Error::Unanswerable`].
#[derive(Clone, Debug)]
pub struct ReplayOracle {
    store: Store,
    pad: Token,
}

impl ReplayOracle {
    pub fn new<'a>(records: impl IntoIterator<Item = &'a ActivationRecord>) -> Result<Self> {
        let mut store: Store = HashMap::new();
        for r in records {
            store
                .entry(r.neuron)
                .or_default()
                .push((r.tokens.clone(), r.activations.clone()));
        }
        if store.is_empty() {
            return Err(Error::InvalidInput(
                "replay oracle needs at least one record".into(),
            ));
        }
        Ok(Self {
            store,
            pad: Token::from(PAD_TOKEN),
        })
    }

    pub fn with_pad(mut self, pad: Token) -> Self {
        self.pad = pad;
        self
    }
}

impl ActivationOracle for ReplayOracle {
    fn pad_token(&self) -> &Token {
        &self.pad
    }

    fn activations(&self, neuron: NeuronId, tokens: &[Token]) -> Result<Vec<f64>> {
        let stored = self
            .store
            .get(&neuron)
            .ok_or(Error::NeuronNotFound(neuron))?;
        if tokens.is_empty() {
            return Err(Error::InvalidInput("empty token sequence".into()));
        }
        stored
            .iter()
            .find(|(t, _)| t.starts_with(tokens))
            .map(|(_, acts)| acts[..tokens.len()].to_vec())
            .ok_or(Error::Unanswerable)
    }
}

/// Asks `primary` first and forwards unanswerable queries to `fallback`.
///
/// The pad token is the fallback's, since occluded sequences never appear in
/// dumps and are always answered by the fallback.
pub struct FallbackOracle<P, F> {
    primary: P,
    fallback: F,
}

impl<P, F> FallbackOracle<P, F> {
    pub fn new(primary: P, fallback: F) -> Self {
        Self { primary, fallback }
    }
}

impl<P: ActivationOracle, F: ActivationOracle> ActivationOracle for FallbackOracle<P, F> {
    fn pad_token(&self) -> &Token {
        self.fallback.pad_token()
    }

    fn activations(&self, neuron: NeuronId, tokens: &[Token]) -> Result<Vec<f64>> {
        match self.primary.activations(neuron, tokens) {
            Err(Error::Unanswerable) | Err(Error::NeuronNotFound(_)) => {
                self.fallback.activations(neuron, tokens)
            }
            other => other,
        }
    }

    fn max_in_flight(&self) -> Option<usize> {
        match (self.primary.max_in_flight(), self.fallback.max_in_flight()) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}
