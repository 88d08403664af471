// SPDX-License-Identifier: MIT OR Apache-2.0

//! Loading records, oracles and providers from command-line sources.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Args;
use n2g::eval::split_examples;
use n2g::oracle::FallbackOracle;
use n2g::records::{load_records, RecordSet};
use n2g::sidecar::{
    SidecarClient, SidecarOracle, SidecarProvider, DEFAULT_MAX_IN_FLIGHT, DEFAULT_PAD_TOKEN,
};
use n2g::substitute::{StaticProvider, SubstituteProvider};
use n2g::synth::{SplitRecords, SyntheticSpec};
use n2g::{ActivationOracle, ActivationRecord, NeuronId, ReplayOracle, Token};

use crate::Failure;

#[derive(Args, Debug, Clone)]
pub struct SourceArgs {
    /// Activation records: a JSONL file or a directory of them.
    #[arg(
        long,
        value_name = "PATH",
        conflicts_with = "synthetic",
        required_unless_present = "synthetic"
    )]
    pub activations: Option<PathBuf>,
    /// Synthetic neuron spec; its neurons answer all queries.
    #[arg(long, value_name = "SPEC")]
    pub synthetic: Option<PathBuf>,
    /// Sidecar endpoint (`http://host:port` or `stdio:<command>`) for queries
    /// the records cannot answer.
    #[arg(long, value_name = "URL", conflicts_with = "synthetic")]
    pub sidecar: Option<String>,
    /// Pad token used for occlusion by the replay and sidecar oracles.
    #[arg(long, default_value = DEFAULT_PAD_TOKEN)]
    pub pad_token: String,
    /// Concurrent sidecar requests.
    #[arg(long, default_value_t = DEFAULT_MAX_IN_FLIGHT)]
    pub max_in_flight: usize,
}

/// Records and the oracle that answers queries about them.
pub struct Source {
    pub records: RecordSet,
    /// Explicit (build, evaluation) sets from a synthetic spec.
    pub explicit: BTreeMap<NeuronId, SplitRecords>,
    pub oracle: Box<dyn ActivationOracle>,
    pub client: Option<Arc<SidecarClient>>,
}

/// Input errors as exit-2 failures, naming the file unless the error does.
fn unreadable(path: &std::path::Path, e: n2g::Error) -> anyhow::Error {
    match e {
        n2g::Error::Io { .. } => Failure::input(e.to_string()),
        other => Failure::input(format!("{}: {other}", path.display())),
    }
}

pub fn connect(endpoint: &str, max_in_flight: usize) -> Result<Arc<SidecarClient>> {
    let client = SidecarClient::connect(endpoint, max_in_flight).map_err(|e| match e {
        n2g::Error::InvalidInput(m) => Failure::usage(m),
        other => Failure::unreachable(other.to_string()),
    })?;
    Ok(Arc::new(client))
}

/// Sends one small query so an unreachable sidecar is reported before any
/// work starts.
pub fn probe(client: &SidecarClient, records: &RecordSet) -> Result<()> {
    let Some((id, recs)) = records.iter().next() else {
        return Ok(());
    };
    let Some(first) = recs.first() else {
        return Ok(());
    };
    match client.activations(*id, &first.tokens[..1]) {
        Err(n2g::Error::Transport(m)) => Err(Failure::unreachable(m)),
        _ => Ok(()),
    }
}

impl SourceArgs {
    pub fn load(&self) -> Result<Source> {
        if let Some(spec_path) = &self.synthetic {
            let spec = SyntheticSpec::load(spec_path).map_err(|e| unreadable(spec_path, e))?;
            return Ok(Source {
                records: spec.records(),
                explicit: spec.explicit_splits(),
                oracle: Box::new(spec.oracle()?),
                client: None,
            });
        }
        let path = self.activations.as_ref().expect("clap requires a source");
        let records = load_records(path).map_err(|e| unreadable(path, e))?;
        let pad = Token::new(self.pad_token.clone()).map_err(|e| Failure::usage(e.to_string()))?;
        let replay = ReplayOracle::new(records.values().flatten())?.with_pad(pad.clone());
        let (oracle, client): (Box<dyn ActivationOracle>, _) = match &self.sidecar {
            Some(endpoint) => {
                let client = connect(endpoint, self.max_in_flight)?;
                probe(&client, &records)?;
                let live = SidecarOracle::new(client.clone(), pad);
                (Box::new(FallbackOracle::new(replay, live)), Some(client))
            }
            None => (Box::new(replay), None),
        };
        Ok(Source {
            records,
            explicit: BTreeMap::new(),
            oracle,
            client,
        })
    }
}

#[derive(Args, Debug, Clone)]
pub struct ProviderArgs {
    /// Substitute table (JSON map from token to ranked substitutes).
    #[arg(long, value_name = "FILE", conflicts_with = "augment_with_sidecar")]
    pub substitutes: Option<PathBuf>,
    /// Ask the sidecar's helper model for substitutes.
    #[arg(long, requires = "sidecar")]
    pub augment_with_sidecar: bool,
}

impl ProviderArgs {
    pub fn load(&self, source: &Source) -> Result<Option<Box<dyn SubstituteProvider>>> {
        if let Some(path) = &self.substitutes {
            let table = StaticProvider::load(path).map_err(|e| unreadable(path, e))?;
            return Ok(Some(Box::new(table)));
        }
        if self.augment_with_sidecar {
            let client = source
                .client
                .clone()
                .context("--augment-with-sidecar needs --sidecar")?;
            return Ok(Some(Box::new(SidecarProvider::new(client))));
        }
        Ok(None)
    }
}

/// Build and evaluation records of one neuron. Explicit synthetic sets take
/// precedence; otherwise records are split by `seed` when `holdout` is set
/// and there are at least two. Without a split every record is used for the
/// build and the evaluation set is empty.
pub fn partition(
    source: &Source,
    neuron: NeuronId,
    seed: u64,
    holdout: bool,
) -> Result<(Vec<ActivationRecord>, Vec<ActivationRecord>)> {
    if let Some(split) = source.explicit.get(&neuron) {
        return Ok((split.train.clone(), split.held_out.clone()));
    }
    let records = source
        .records
        .get(&neuron)
        .map(Vec::as_slice)
        .unwrap_or_default();
    if holdout && records.len() >= 2 {
        Ok(split_examples(records, seed)?)
    } else {
        Ok((records.to_vec(), Vec::new()))
    }
}
