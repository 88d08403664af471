// SPDX-License-Identifier: MIT OR Apache-2.0

//! Activation record dumps in JSON Lines form.
//!
//! One record per line:
//!
//! ```text
//! {"layer":0,"neuron":7,"tokens":["x","A","B"],"token_ids":[12,5,9],"activations":[0.0,0.0,2.0],"max_activation":2.0}
//! ```
//!
//! `token_ids` and `max_activation` are optional. When a neuron's lines omit
//! `max_activation`, the maximum over all of that neuron's records is used
//! and the records are flagged as carrying a proxy maximum.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActivationRecord, NeuronId, Token};

/// Records grouped by neuron, in file order within each neuron.
pub type RecordSet = BTreeMap<NeuronId, Vec<ActivationRecord>>;

#[derive(Debug, Serialize, Deserialize)]
struct RecordLine {
    layer: u32,
    neuron: u32,
    tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    token_ids: Option<Vec<u32>>,
    activations: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_activation: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    max_activation_proxy: bool,
}

/// Loads a JSONL file, or every `*.jsonl` file of a directory in name order.
pub fn load_records(path: impl AsRef<Path>) -> Result<RecordSet> {
    let path = path.as_ref();
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    let files: Vec<PathBuf> = if meta.is_dir() {
        let mut files = Vec::new();
        for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
            let p = entry.map_err(|e| Error::io(path, e))?.path();
            if p.extension().is_some_and(|e| e == "jsonl") {
                files.push(p);
            }
        }
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };

    let mut lines = Vec::new();
    for file in &files {
        let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        lines.extend(parse_lines(&text)?);
    }
    group(lines)
}

/// Parses JSONL text into grouped records.
pub fn parse_records(text: &str) -> Result<RecordSet> {
    group(parse_lines(text)?)
}

fn parse_lines(text: &str) -> Result<Vec<(usize, RecordLine)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push((line_no, parsed));
    }
    Ok(out)
}

fn group(lines: Vec<(usize, RecordLine)>) -> Result<RecordSet> {
    struct Pending {
        record: ActivationRecord,
        supplied: Option<f64>,
        proxy: bool,
    }

    let mut by_neuron: BTreeMap<NeuronId, Vec<Pending>> = BTreeMap::new();
    for (line_no, line) in lines {
        let schema = |msg: String| Error::Schema(format!("line {line_no}: {msg}"));
        let neuron = NeuronId::new(line.layer, line.neuron);
        let mut tokens = line
            .tokens
            .into_iter()
            .map(Token::new)
            .collect::<Result<Vec<_>>>()
            .map_err(|e| schema(e.to_string()))?;
        if let Some(ids) = line.token_ids {
            if ids.len() != tokens.len() {
                return Err(schema(format!(
                    "{} tokens but {} token_ids",
                    tokens.len(),
                    ids.len()
                )));
            }
            tokens = tokens
                .into_iter()
                .zip(ids)
                .map(|(t, id)| t.with_id(id))
                .collect();
        }
        let record = ActivationRecord::new(neuron, tokens, line.activations, line.max_activation)
            .map_err(|e| match e {
            Error::Schema(msg) => schema(msg),
            other => other,
        })?;
        by_neuron.entry(neuron).or_default().push(Pending {
            record,
            supplied: line.max_activation,
            proxy: line.max_activation_proxy || line.max_activation.is_none(),
        });
    }

    let mut out = RecordSet::new();
    for (neuron, pending) in by_neuron {
        let computed = pending
            .iter()
            .map(|p| p.supplied.unwrap_or(0.0).max(p.record.peak()))
            .fold(0.0, f64::max);
        let records = pending
            .into_iter()
            .map(|p| {
                let mut r = p.record;
                r.max_activation = p.supplied.unwrap_or(computed);
                r.max_activation_proxy = p.proxy;
                r
            })
            .collect();
        out.insert(neuron, records);
    }
    Ok(out)
}

/// Writes records as JSONL. Floats use shortest round-trip formatting, so
/// [`load_records`] reproduces every field bit-exactly.
pub fn save_records<'a>(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = &'a ActivationRecord>,
) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = to_line(r);
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn to_line(r: &ActivationRecord) -> RecordLine {
    let ids: Option<Vec<u32>> = r.tokens.iter().map(Token::id).collect();
    RecordLine {
        layer: r.neuron.layer,
        neuron: r.neuron.index,
        tokens: r.tokens.iter().map(|t| t.text().to_owned()).collect(),
        token_ids: ids.filter(|v| !v.is_empty()),
        activations: r.activations.clone(),
        max_activation: Some(r.max_activation),
        max_activation_proxy: r.max_activation_proxy,
    }
}
