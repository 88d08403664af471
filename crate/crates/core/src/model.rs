// SPDX-License-Identifier: MIT OR Apache-2.0

//! Core domain types: tokens, neuron identifiers and activation records.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A token by its exact, case-sensitive surface form.
///
/// Equality, ordering and hashing consider only `text`; `id` is advisory
/// tokenizer metadata carried through from activation dumps.
#[derive(Clone, Debug)]
pub struct Token {
    text: String,
    id: Option<u32>,
}

impl Token {
    /// Creates a token, rejecting empty text.
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.is_empty() {
            return Err(Error::InvalidInput("token text must be non-empty".into()));
        }
        Ok(Self { text, id: None })
    }

    pub fn with_id(mut self, id: u32) -> Self {
        self.id = Some(id);
        self
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn id(&self) -> Option<u32> {
        self.id
    }

    /// Builds a token sequence from string literals.
    ///
    /// Panics if any text is empty; meant for fixtures and tests.
    pub fn seq(texts: &[&str]) -> Vec<Token> {
        texts.iter().map(|t| Token::from(*t)).collect()
    }
}

impl From<&str> for Token {
    /// Panics on empty text.
    fn from(text: &str) -> Self {
        Token::new(text).expect("token text must be non-empty")
    }
}

impl PartialEq for Token {
    fn eq(&self, other: &Self) -> bool {
        self.text == other.text
    }
}

impl Eq for Token {}

impl Hash for Token {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.text.hash(state);
    }
}

impl PartialOrd for Token {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Token {
    fn cmp(&self, other: &Self) -> Ordering {
        self.text.cmp(&other.text)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl Serialize for Token {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Token::new(text).map_err(serde::de::Error::custom)
    }
}

/// The `index`-th MLP neuron of layer `layer`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NeuronId {
    pub layer: u32,
    pub index: u32,
}

impl NeuronId {
    pub const fn new(layer: u32, index: u32) -> Self {
        Self { layer, index }
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.layer, self.index)
    }
}

impl FromStr for NeuronId {
    type Err = Error;

    /// Parses the `layer:index` form.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("expected `layer:index`, got {s:?}"));
        let (layer, index) = s.split_once(':').ok_or_else(bad)?;
        Ok(Self {
            layer: layer.trim().parse().map_err(|_| bad())?,
            index: index.trim().parse().map_err(|_| bad())?,
        })
    }
}

/// One dataset example for one neuron: tokens with the neuron's raw
/// activation on each, plus the neuron's maximum observed activation.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationRecord {
    pub neuron: NeuronId,
    pub tokens: Vec<Token>,
    pub activations: Vec<f64>,
    /// The neuron's maximum observed activation. Zero only when the neuron
    /// never activates anywhere in the available data.
    pub max_activation: f64,
    /// True when `max_activation` was derived from the available records
    /// rather than supplied with the dump.
    pub max_activation_proxy: bool,
}

impl ActivationRecord {
    /// Validates and assembles a record. When `max_activation` is `None` the
    /// record's own maximum is used and flagged as a proxy.
    pub fn new(
        neuron: NeuronId,
        tokens: Vec<Token>,
        activations: Vec<f64>,
        max_activation: Option<f64>,
    ) -> Result<Self> {
        if tokens.len() != activations.len() {
            return Err(Error::Schema(format!(
                "{} tokens but {} activations",
                tokens.len(),
                activations.len()
            )));
        }
        if let Some(bad) = activations.iter().find(|a| !a.is_finite() || **a < 0.0) {
            return Err(Error::Schema(format!(
                "activations must be finite and non-negative, found {bad}"
            )));
        }
        let own_max = activations.iter().copied().fold(0.0, f64::max);
        let (max_activation, proxy) = match max_activation {
            Some(m) => {
                if !m.is_finite() || m < own_max {
                    return Err(Error::Schema(format!(
                        "max_activation {m} is below the record's maximum {own_max}"
                    )));
                }
                (m, false)
            }
            None => (own_max, true),
        };
        Ok(Self {
            neuron,
            tokens,
            activations,
            max_activation,
            max_activation_proxy: proxy,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Largest activation within this record.
    pub fn peak(&self) -> f64 {
        self.activations.iter().copied().fold(0.0, f64::max)
    }
}
