//! Client for the external token-probability service.
//!
//! Protocol `v1`: one JSON object per line in each direction over TCP.
//!
//! ```text
//! -> {"version":"v1","request_id":7,"kind":"logprobs","context_ids":[12,99]}
//! <- {"request_id":7,"model_name":"...","logprobs":[...V floats...]}
//! -> {"version":"v1","request_id":8,"kind":"similarity","pair":["a","b"]}
//! <- {"request_id":8,"model_name":"...","score":0.93}
//! ```
//!
//! An `"error"` string in a response marks the request as failed. The context
//! sent excludes the begin-of-sequence sentinel; an empty context asks for the
//! service's own sentence-start distribution.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::TokenPrior;
use crate::tokenizer::TokenId;

/// Environment variable holding the service address (`host:port`).
pub const BRIDGE_ENV: &str = "SEMCOM_BRIDGE";
pub const PROTOCOL_VERSION: &str = "v1";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
/// Allowed deviation of `sum(exp(logprobs))` from one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeRequest {
    pub version: String,
    pub request_id: u64,
    #[serde(flatten)]
    pub body: RequestBody,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RequestBody {
    Logprobs { context_ids: Vec<TokenId> },
    Similarity { pair: [String; 2] },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BridgeResponse {
    pub request_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Connection {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

pub struct BridgeClient {
    address: String,
    vocab_size: usize,
    timeout: Duration,
    next_id: AtomicU64,
    connection: Mutex<Option<Connection>>,
    model_name: Mutex<Option<String>>,
}

fn unavailable(msg: impl std::fmt::Display) -> Error {
    Error::PriorUnavailable(msg.to_string())
}

impl BridgeClient {
    /// Connects eagerly and probes one sentence-start distribution, so a
    /// missing service or a vocabulary-size mismatch fails at startup.
    pub fn connect(address: &str, vocab_size: usize, timeout: Duration) -> Result<Self> {
        let client = Self {
            address: address.to_string(),
            vocab_size,
            timeout,
            next_id: AtomicU64::new(1),
            connection: Mutex::new(None),
            model_name: Mutex::new(None),
        };
        *client.connection.lock().unwrap() = Some(client.open()?);
        client.logprobs(&[])?;
        Ok(client)
    }

    /// Address from [`BRIDGE_ENV`], if set.
    pub fn from_env(vocab_size: usize) -> Result<Self> {
        let address = std::env::var(BRIDGE_ENV).map_err(|_| unavailable(format!("{BRIDGE_ENV} is not set")))?;
        Self::connect(&address, vocab_size, DEFAULT_TIMEOUT)
    }

    fn open(&self) -> Result<Connection> {
        let addr = self
            .address
            .to_socket_addrs()
            .map_err(|e| unavailable(format!("{}: {e}", self.address)))?
            .next()
            .ok_or_else(|| unavailable(format!("{} resolves to nothing", self.address)))?;
        let stream =
            TcpStream::connect_timeout(&addr, self.timeout).map_err(|e| unavailable(format!("{addr}: {e}")))?;
        stream.set_read_timeout(Some(self.timeout)).map_err(unavailable)?;
        stream.set_write_timeout(Some(self.timeout)).map_err(unavailable)?;
        stream.set_nodelay(true).map_err(unavailable)?;
        let writer = stream.try_clone().map_err(unavailable)?;
        Ok(Connection { reader: BufReader::new(stream), writer })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Model name reported by the most recent response.
    pub fn model_name(&self) -> Option<String> {
        self.model_name.lock().unwrap().clone()
    }

    /// Sends one request and waits for its response. Requests on one client
    /// are serialized; a transport failure drops the connection so the next
    /// call reconnects.
    pub fn call(&self, body: RequestBody) -> Result<BridgeResponse> {
        let request_id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let request = BridgeRequest { version: PROTOCOL_VERSION.into(), request_id, body };
        let mut line = serde_json::to_string(&request)?;
        line.push('\n');

        let mut guard = self.connection.lock().unwrap();
        if guard.is_none() {
            *guard = Some(self.open()?);
        }
        let conn = guard.as_mut().expect("connection present");
        let exchange = (|| -> std::io::Result<String> {
            conn.writer.write_all(line.as_bytes())?;
            conn.writer.flush()?;
            let mut reply = String::new();
            if conn.reader.read_line(&mut reply)? == 0 {
                return Err(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "service closed the connection"));
            }
            Ok(reply)
        })();
        let reply = match exchange {
            Ok(reply) => reply,
            Err(e) => {
                *guard = None;
                return Err(unavailable(e));
            }
        };
        drop(guard);

        let response: BridgeResponse =
            serde_json::from_str(reply.trim_end()).map_err(|e| unavailable(format!("malformed response: {e}")))?;
        if response.request_id != request_id {
            return Err(unavailable(format!(
                "response id {} does not match request {request_id}",
                response.request_id
            )));
        }
        if let Some(name) = &response.model_name {
            *self.model_name.lock().unwrap() = Some(name.clone());
        }
        if let Some(err) = &response.error {
            return Err(unavailable(format!("service error: {err}")));
        }
        Ok(response)
    }

    /// Normalized next-token log-probabilities over the service vocabulary.
    pub fn logprobs(&self, context: &[TokenId]) -> Result<Vec<f64>> {
        let response = self.call(RequestBody::Logprobs { context_ids: context.to_vec() })?;
        let logprobs = response.logprobs.ok_or_else(|| unavailable("response carries no logprobs"))?;
        if logprobs.len() != self.vocab_size {
            return Err(unavailable(format!(
                "service returned {} logprobs for a vocabulary of {}",
                logprobs.len(),
                self.vocab_size
            )));
        }
        let mass: f64 = logprobs.iter().map(|lp| lp.exp()).sum();
        if logprobs.iter().any(|lp| lp.is_nan()) || (mass - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(unavailable(format!("logprobs are not normalized (mass {mass})")));
        }
        Ok(logprobs)
    }

    /// Cosine similarity of the service's sentence embeddings.
    pub fn similarity(&self, reference: &str, candidate: &str) -> Result<f64> {
        let response = self.call(RequestBody::Similarity { pair: [reference.into(), candidate.into()] })?;
        match response.score {
            Some(s) if (-1.0 - 1e-9..=1.0 + 1e-9).contains(&s) => Ok(s),
            Some(s) => Err(unavailable(format!("similarity {s} outside [-1, 1]"))),
            None => Err(unavailable("response carries no score")),
        }
    }
}

impl TokenPrior for BridgeClient {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn fill_logprobs(&self, history: &[TokenId], out: &mut [f64]) -> Result<()> {
        let bos = self.vocab_size as TokenId;
        let context = match history.first() {
            Some(&first) if first == bos => &history[1..],
            _ => history,
        };
        out.copy_from_slice(&self.logprobs(context)?);
        Ok(())
    }

    fn name(&self) -> String {
        self.model_name().map_or_else(|| "bridge".into(), |m| format!("bridge:{m}"))
    }
}
