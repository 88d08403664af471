// SPDX-License-Identifier: MIT OR Apache-2.0

//! Activation and importance trajectories of a single record.

use crate::error::{Error, Result};
use crate::model::ActivationRecord;
use crate::oracle::ActivationOracle;
use crate::pipeline::{find_pivot, saliency};

/// Pivot activation with `d` prior tokens retained, relative to the full
/// record, for `d = 0..=pivot` (shortest context first).
pub fn activation_trajectory(
    record: &ActivationRecord,
    oracle: &dyn ActivationOracle,
) -> Result<Vec<f64>> {
    let pivot = find_pivot(&record.activations)?;
    let full = record.activations[pivot];
    (0..=pivot)
        .map(|d| {
            oracle
                .last_activation(record.neuron, &record.tokens[pivot - d..=pivot])
                .map(|a| a / full)
                .map_err(|e| match e {
                    Error::Unanswerable => Error::OracleGap,
                    other => other,
                })
        })
        .collect()
}

/// Occlusion importance of each token before the pivot over the full
/// record, in position order.
pub fn importance_trajectory(
    record: &ActivationRecord,
    oracle: &dyn ActivationOracle,
) -> Result<Vec<f64>> {
    let pivot = find_pivot(&record.activations)?;
    let mut importance = saliency(&record.tokens, pivot, oracle, record.neuron)?;
    importance.pop();
    Ok(importance)
}

/// Pointwise mean of trajectories, aligned at their start. Shorter
/// trajectories are extended with their last value.
pub fn mean_trajectory(trajectories: &[Vec<f64>], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    let mut n = 0usize;
    for t in trajectories {
        let Some(&last) = t.last() else { continue };
        n += 1;
        for (d, slot) in out.iter_mut().enumerate() {
            *slot += t.get(d).copied().unwrap_or(last);
        }
    }
    if n > 0 {
        out.iter_mut().for_each(|v| *v /= n as f64);
    }
    out
}
