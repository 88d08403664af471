// SPDX-License-Identifier: MIT OR Apache-2.0

//! Replacement-token providers used by augmentation.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Token;

/// A candidate replacement and the helper model's probability for it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Substitute {
    pub token: Token,
    pub prob: f64,
}

/// Proposes tokens that could stand at `position` of `tokens`.
///
/// Returns at most `top_k` substitutes with probabilities in (0, 1], in
/// non-increasing probability order.
pub trait SubstituteProvider: Send + Sync {
    fn substitutes(
        &self,
        tokens: &[Token],
        position: usize,
        top_k: usize,
    ) -> Result<Vec<Substitute>>;
}

/// Checks the ordering and range contract of a substitute list.
pub fn validate_substitutes(subs: &[Substitute]) -> Result<()> {
    for s in subs {
        if !(s.prob > 0.0 && s.prob <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "substitute {} has probability {} outside (0, 1]",
                s.token, s.prob
            )));
        }
    }
    if subs.windows(2).any(|w| w[1].prob > w[0].prob) {
        return Err(Error::InvalidInput(
            "substitute probabilities must be non-increasing".into(),
        ));
    }
    Ok(())
}

/// Fixed table from a token to its substitutes, independent of context.
///
/// File form: `{"A": [{"token": "a", "prob": 0.6}, {"token": "C", "prob": 0.3}]}`.
#[derive(Clone, Debug, Default)]
pub struct StaticProvider {
    table: BTreeMap<Token, Vec<Substitute>>,
}

impl StaticProvider {
    pub fn new(table: BTreeMap<Token, Vec<Substitute>>) -> Result<Self> {
        for subs in table.values() {
            validate_substitutes(subs)?;
        }
        Ok(Self { table })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(serde_json::from_str(&text)?)
    }
}

impl SubstituteProvider for StaticProvider {
    fn substitutes(
        &self,
        tokens: &[Token],
        position: usize,
        top_k: usize,
    ) -> Result<Vec<Substitute>> {
        let token = tokens.get(position).ok_or_else(|| {
            Error::InvalidInput(format!(
                "position {position} out of range for {} tokens",
                tokens.len()
            ))
        })?;
        Ok(self
            .table
            .get(token)
            .map(|subs| subs.iter().take(top_k).cloned().collect())
            .unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sub(t: &str, p: f64) -> Substitute {
        Substitute {
            token: Token::from(t),
            prob: p,
        }
    }

    #[test]
    fn static_lookup_truncates_to_top_k() {
        let provider = StaticProvider::new(BTreeMap::from([(
            Token::from("A"),
            vec![sub("a", 0.6), sub("C", 0.3), sub("D", 0.1)],
        )]))
        .unwrap();
        let subs = provider
            .substitutes(&Token::seq(&["A", "B"]), 0, 2)
            .unwrap();
        assert_eq!(subs, vec![sub("a", 0.6), sub("C", 0.3)]);
        assert!(provider
            .substitutes(&Token::seq(&["A", "B"]), 1, 2)
            .unwrap()
            .is_empty());
        assert!(provider.substitutes(&Token::seq(&["A"]), 4, 2).is_err());
    }

    #[test]
    fn rejects_bad_probabilities() {
        assert!(validate_substitutes(&[sub("a", 0.2), sub("b", 0.5)]).is_err());
        assert!(validate_substitutes(&[sub("a", 0.0)]).is_err());
        assert!(validate_substitutes(&[sub("a", 1.5)]).is_err());
        assert!(validate_substitutes(&[sub("a", 1.0), sub("b", 1.0)]).is_ok());
    }

    #[test]
    fn table_file_format() {
        let json = r#"{"A":[{"token":"a","prob":0.6},{"token":"C","prob":0.3}]}"#;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("subs.json");
        fs::write(&path, json).unwrap();
        let provider = StaticProvider::load(&path).unwrap();
        assert_eq!(
            provider
                .substitutes(&Token::seq(&["A"]), 0, 5)
                .unwrap()
                .len(),
            2
        );
    }
}
