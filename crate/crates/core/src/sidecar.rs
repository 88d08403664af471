// SPDX-License-Identifier: MIT OR Apache-2.0

//! Client for the model sidecar, the out-of-process service that runs the
//! real transformer and the masked-LM helper.
//!
//! Requests and responses are single JSON objects:
//!
//! ```text
//! {"op":"activations","neuron":{"layer":0,"index":7},"tokens":["x","A","B"]}
//! {"op":"mask_predict","tokens":["A","B"],"position":0,"top_k":5}
//! {"op":"dump_top","neuron":{"layer":0,"index":7},"k":20,"out":"dump.jsonl"}
//!
//! {"ok":true,"activations":[0.0,0.0,2.0]}
//! {"ok":true,"substitutes":[{"token":"a","prob":0.5}]}
//! {"ok":false,"error":"neuron_not_found"}
//! ```
//!
//! Two transports are supported: `POST <base>/v1/op` over HTTP, and a
//! subprocess speaking newline-delimited JSON on stdin/stdout (endpoint
//! `stdio:<shell command>`).

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NeuronId, Token};
use crate::oracle::ActivationOracle;
use crate::substitute::{validate_substitutes, Substitute, SubstituteProvider};

pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
/// Pad token of GPT-2 style tokenizers, used for occlusion unless
/// configured otherwise.
pub const DEFAULT_PAD_TOKEN: &str = "<|endoftext|>";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Activations {
        neuron: NeuronId,
        tokens: Vec<Token>,
    },
    MaskPredict {
        tokens: Vec<Token>,
        position: usize,
        top_k: usize,
    },
    DumpTop {
        neuron: NeuronId,
        k: usize,
        out: String,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activations: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substitutes: Option<Vec<Substitute>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    fn into_result(self) -> Result<Self> {
        if self.ok {
            return Ok(self);
        }
        let code = self.error.unwrap_or_else(|| "unspecified".into());
        Err(match code.as_str() {
            "unknown_token" | "bad_position" | "empty_dataset" => Error::InvalidInput(code),
            _ => Error::Remote(code),
        })
    }
}

struct StdioChild {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Drop for StdioChild {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

enum Transport {
    Http {
        client: reqwest::blocking::Client,
        url: String,
    },
    Stdio(Mutex<StdioChild>),
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct SidecarClient {
    transport: Transport,
    gate: Gate,
    max_in_flight: usize,
}

impl SidecarClient {
    /// Connects to `http(s)://host[:port][/v1/op]` or starts `stdio:<command>`.
    pub fn connect(endpoint: &str, max_in_flight: usize) -> Result<Self> {
        let max_in_flight = max_in_flight.max(1);
        let transport = if let Some(cmd) = endpoint.strip_prefix("stdio:") {
            let mut child = Command::new("sh")
                .arg("-c")
                .arg(cmd)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .spawn()
                .map_err(|e| Error::Transport(format!("cannot start {cmd:?}: {e}")))?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
            Transport::Stdio(Mutex::new(StdioChild {
                child,
                stdin,
                stdout,
            }))
        } else if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
            let base = endpoint.trim_end_matches('/');
            let url = if base.ends_with("/v1/op") {
                base.to_owned()
            } else {
                format!("{base}/v1/op")
            };
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(600))
                .build()
                .map_err(|e| Error::Transport(e.to_string()))?;
            Transport::Http { client, url }
        } else {
            return Err(Error::InvalidInput(format!(
                "sidecar endpoint must be http(s)://... or stdio:<command>, got {endpoint:?}"
            )));
        };
        Ok(Self {
            transport,
            gate: Gate {
                free: Mutex::new(max_in_flight),
                cv: Condvar::new(),
            },
            max_in_flight,
        })
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    /// Sends one request and returns the successful response.
    pub fn call(&self, request: &Request) -> Result<Response> {
        let _slot = self.gate.acquire();
        let response: Response = match &self.transport {
            Transport::Http { client, url } => {
                let resp = client
                    .post(url)
                    .json(request)
                    .send()
                    .map_err(|e| Error::Transport(e.to_string()))?;
                let body = resp.text().map_err(|e| Error::Transport(e.to_string()))?;
                serde_json::from_str(&body)
                    .map_err(|e| Error::Transport(format!("bad response {body:?}: {e}")))?
            }
            Transport::Stdio(child) => {
                let mut child = child.lock().unwrap_or_else(|e| e.into_inner());
                let mut line = serde_json::to_string(request)?;
                line.push('\n');
                child
                    .stdin
                    .write_all(line.as_bytes())
                    .and_then(|_| child.stdin.flush())
                    .map_err(|e| Error::Transport(e.to_string()))?;
                let mut reply = String::new();
                let n = child
                    .stdout
                    .read_line(&mut reply)
                    .map_err(|e| Error::Transport(e.to_string()))?;
                if n == 0 {
                    return Err(Error::Transport("sidecar closed its output".into()));
                }
                serde_json::from_str(reply.trim_end())
                    .map_err(|e| Error::Transport(format!("bad response {reply:?}: {e}")))?
            }
        };
        response.into_result()
    }

    pub fn activations(&self, neuron: NeuronId, tokens: &[Token]) -> Result<Vec<f64>> {
        let resp = self.call(&Request::Activations {
            neuron,
            tokens: tokens.to_vec(),
        })?;
        let acts = resp
            .activations
            .ok_or_else(|| Error::Transport("response lacks activations".into()))?;
        if acts.len() != tokens.len() {
            return Err(Error::Transport(format!(
                "{} activations for {} tokens",
                acts.len(),
                tokens.len()
            )));
        }
        if acts.iter().any(|a| !a.is_finite()) {
            return Err(Error::Transport("non-finite activation".into()));
        }
        Ok(acts)
    }

    pub fn mask_predict(
        &self,
        tokens: &[Token],
        position: usize,
        top_k: usize,
    ) -> Result<Vec<Substitute>> {
        let resp = self.call(&Request::MaskPredict {
            tokens: tokens.to_vec(),
            position,
            top_k,
        })?;
        let subs = resp
            .substitutes
            .ok_or_else(|| Error::Transport("response lacks substitutes".into()))?;
        validate_substitutes(&subs)?;
        Ok(subs)
    }

    /// Asks the sidecar to write the `k` top-activating records of `neuron`
    /// to `out` (a path on the sidecar's filesystem).
    pub fn dump_top(&self, neuron: NeuronId, k: usize, out: &str) -> Result<()> {
        self.call(&Request::DumpTop {
            neuron,
            k,
            out: out.to_owned(),
        })
        .map(|_| ())
    }
}

/// Live activations from the sidecar's target model.
///
/// Negative activations (possible with GELU-family nonlinearities) are
/// clamped to zero, since the pipeline treats activations as magnitudes.
pub struct SidecarOracle {
    client: Arc<SidecarClient>,
    pad: Token,
}

impl SidecarOracle {
    pub fn new(client: Arc<SidecarClient>, pad: Token) -> Self {
        Self { client, pad }
    }
}

impl ActivationOracle for SidecarOracle {
    fn pad_token(&self) -> &Token {
        &self.pad
    }

    fn activations(&self, neuron: NeuronId, tokens: &[Token]) -> Result<Vec<f64>> {
        if tokens.is_empty() {
            return Err(Error::InvalidInput("empty token sequence".into()));
        }
        let acts = self
            .client
            .activations(neuron, tokens)
            .map_err(|e| match e {
                Error::Remote(code) if code == "neuron_not_found" => Error::NeuronNotFound(neuron),
                other => other,
            })?;
        Ok(acts.into_iter().map(|a| a.max(0.0)).collect())
    }

    fn max_in_flight(&self) -> Option<usize> {
        Some(self.client.max_in_flight())
    }
}

/// Masked-LM substitutes from the sidecar's helper model.
pub struct SidecarProvider {
    client: Arc<SidecarClient>,
}

impl SidecarProvider {
    pub fn new(client: Arc<SidecarClient>) -> Self {
        Self { client }
    }
}

impl SubstituteProvider for SidecarProvider {
    fn substitutes(
        &self,
        tokens: &[Token],
        position: usize,
        top_k: usize,
    ) -> Result<Vec<Substitute>> {
        self.client.mask_predict(tokens, position, top_k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_wire_format() {
        let req = Request::Activations {
            neuron: NeuronId::new(0, 7),
            tokens: Token::seq(&["x", "A"]),
        };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"op":"activations","neuron":{"layer":0,"index":7},"tokens":["x","A"]}"#
        );
        let req = Request::MaskPredict {
            tokens: Token::seq(&["A", "B"]),
            position: 0,
            top_k: 5,
        };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"op":"mask_predict","tokens":["A","B"],"position":0,"top_k":5}"#
        );
        let req = Request::DumpTop {
            neuron: NeuronId::new(1, 2),
            k: 20,
            out: "d.jsonl".into(),
        };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"op":"dump_top","neuron":{"layer":1,"index":2},"k":20,"out":"d.jsonl"}"#
        );
    }

    #[test]
    fn error_codes_map_to_errors() {
        let r: Response = serde_json::from_str(r#"{"ok":false,"error":"unknown_token"}"#).unwrap();
        assert!(matches!(r.into_result(), Err(Error::InvalidInput(_))));
        let r: Response =
            serde_json::from_str(r#"{"ok":false,"error":"neuron_not_found"}"#).unwrap();
        assert!(matches!(r.into_result(), Err(Error::Remote(_))));
    }

    #[test]
    fn rejects_unknown_scheme() {
        assert!(SidecarClient::connect("ftp://x", 1).is_err());
    }

    #[test]
    fn stdio_transport_round_trip() {
        let script =
            r#"stdio:while read -r line; do echo '{"ok":true,"activations":[0.0,1.5]}'; done"#;
        let client = Arc::new(SidecarClient::connect(script, 2).unwrap());
        let oracle = SidecarOracle::new(client, Token::from(DEFAULT_PAD_TOKEN));
        let acts = oracle
            .activations(NeuronId::new(0, 1), &Token::seq(&["a", "b"]))
            .unwrap();
        assert_eq!(acts, vec![0.0, 1.5]);
        // Length mismatch is a protocol violation.
        assert!(matches!(
            oracle.activations(NeuronId::new(0, 1), &Token::seq(&["a"])),
            Err(Error::Transport(_))
        ));
    }
    #[test]
    fn stdio_sends_one_line_per_request() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("requests.jsonl");
        let script = format!(
            r#"stdio:while read -r line; do printf '%s\n' "$line" >> '{}'; echo '{{"ok":true,"substitutes":[]}}'; done"#,
            log.display()
        );
        let client = SidecarClient::connect(&script, 1).unwrap();
        let subs = client.mask_predict(&Token::seq(&["A", "B"]), 1, 3).unwrap();
        assert!(subs.is_empty());
        client
            .dump_top(NeuronId::new(2, 3), 4, "top.jsonl")
            .unwrap();
        assert_eq!(
            std::fs::read_to_string(&log).unwrap(),
            concat!(
                r#"{"op":"mask_predict","tokens":["A","B"],"position":1,"top_k":3}"#,
                "\n",
                r#"{"op":"dump_top","neuron":{"layer":2,"index":3},"k":4,"out":"top.jsonl"}"#,
                "\n"
            )
        );
    }

    #[test]
    fn exited_stdio_sidecar_is_a_transport_error() {
        let client = SidecarClient::connect("stdio:exit 0", 1).unwrap();
        std::thread::sleep(Duration::from_millis(50));
        let err = client
            .activations(NeuronId::new(0, 1), &Token::seq(&["a"]))
            .unwrap_err();
        assert!(matches!(err, Error::Transport(_)), "{err:?}");
    }
}
