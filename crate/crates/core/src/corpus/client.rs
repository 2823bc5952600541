//! Client for an OpenAI-style embeddings endpoint.
//!
//! Request: `POST {"model": .., "input": [..]}`; response:
//! `{"data": [{"embedding": [..], "index"?: n}]}`. Texts are sent in batches,
//! several batches in flight at once, and the results are stitched back in
//! input order. Every returned vector is L2-normalized locally.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{normalize, EmbeddingVector};

pub const ENV_URL: &str = "PROTOSPACE_EMBED_URL";
pub const ENV_KEY: &str = "PROTOSPACE_EMBED_KEY";
pub const ENV_MODEL: &str = "PROTOSPACE_EMBED_MODEL";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub batch_size: usize,
    /// Delay before each retry; its length is the retry budget.
    pub backoff: Vec<Duration>,
    pub concurrency: usize,
    pub timeout: Duration,
}

impl ServiceConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            batch_size: 64,
            backoff: vec![
                Duration::from_secs(1),
                Duration::from_secs(2),
                Duration::from_secs(4),
            ],
            concurrency: 4,
            timeout: Duration::from_secs(120),
        }
    }

    /// Reads the endpoint, key and model from the environment. The endpoint
    /// is mandatory.
    pub fn from_env() -> Result<Self> {
        let endpoint = std::env::var(ENV_URL)
            .map_err(|_| Error::Config(format!("{ENV_URL} is not set")))?;
        let model = std::env::var(ENV_MODEL).unwrap_or_default();
        let mut cfg = Self::new(endpoint, model);
        cfg.api_key = std::env::var(ENV_KEY).ok().filter(|k| !k.is_empty());
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

enum Attempt {
    Retryable(String),
    Fatal(Error),
}

pub fn fetch_embeddings(texts: &[String], cfg: &ServiceConfig) -> Result<Vec<EmbeddingVector>> {
    if texts.is_empty() {
        return Err(Error::Input("no texts to embed".into()));
    }
    if cfg.endpoint.is_empty() {
        return Err(Error::Config("embedding endpoint is not configured".into()));
    }
    let batch_size = cfg.batch_size.max(1);
    let batches: Vec<&[String]> = texts.chunks(batch_size).collect();
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(cfg.timeout))
        .build()
        .into();

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Vec<EmbeddingVector>>>>> =
        Mutex::new((0..batches.len()).map(|_| None).collect());
    let workers = cfg.concurrency.clamp(1, batches.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= batches.len() {
                    break;
                }
                let r = fetch_batch(&agent, batches[i], cfg);
                let failed = r.is_err();
                results.lock().unwrap()[i] = Some(r);
                if failed {
                    // Stop handing out new batches once one has failed.
                    next.store(batches.len(), Ordering::SeqCst);
                    break;
                }
            });
        }
    });

    let mut out = Vec::with_capacity(texts.len());
    for slot in results.into_inner().unwrap() {
        match slot {
            Some(Ok(vs)) => out.extend(vs),
            Some(Err(e)) => return Err(e),
            None => continue,
        }
    }
    if out.len() != texts.len() {
        // Only reachable when a failing batch stopped the others early, in
        // which case the error above has already been returned.
        return Err(Error::Service("batches were abandoned".into()));
    }
    Ok(out)
}

fn fetch_batch(
    agent: &ureq::Agent,
    batch: &[String],
    cfg: &ServiceConfig,
) -> Result<Vec<EmbeddingVector>> {
    let mut last = String::new();
    for attempt in 0..=cfg.backoff.len() {
        if attempt > 0 {
            let wait = cfg.backoff[attempt - 1];
            log::warn!("embedding request failed ({last}); retrying in {wait:?}");
            std::thread::sleep(wait);
        }
        match try_batch(agent, batch, cfg) {
            Ok(v) => return Ok(v),
            Err(Attempt::Fatal(e)) => return Err(e),
            Err(Attempt::Retryable(msg)) => last = msg,
        }
    }
    Err(Error::Service(format!(
        "giving up after {} attempts: {last}",
        cfg.backoff.len() + 1
    )))
}

fn try_batch(
    agent: &ureq::Agent,
    batch: &[String],
    cfg: &ServiceConfig,
) -> std::result::Result<Vec<EmbeddingVector>, Attempt> {
    let mut req = agent
        .post(&cfg.endpoint)
        .header("Content-Type", "application/json");
    if let Some(key) = &cfg.api_key {
        req = req.header("Authorization", format!("Bearer {key}"));
    }
    let body = EmbedRequest {
        model: &cfg.model,
        input: batch,
    };
    let mut resp = match req.send_json(&body) {
        Ok(r) => r,
        Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
            return Err(Attempt::Retryable(format!("http status {code}")))
        }
        Err(ureq::Error::StatusCode(code)) => {
            return Err(Attempt::Fatal(Error::Service(format!("http status {code}"))))
        }
        Err(e) => return Err(Attempt::Retryable(e.to_string())),
    };
    let parsed: EmbedResponse = resp
        .body_mut()
        .read_json()
        .map_err(|e| Attempt::Fatal(Error::Protocol(format!("bad response body: {e}"))))?;
    decode(parsed, batch.len()).map_err(Attempt::Fatal)
}

fn decode(mut resp: EmbedResponse, expected: usize) -> Result<Vec<EmbeddingVector>> {
    if resp.data.len() != expected {
        return Err(Error::Protocol(format!(
            "sent {expected} texts, received {} embeddings",
            resp.data.len()
        )));
    }
    if resp.data.iter().all(|d| d.index.is_some()) {
        resp.data.sort_by_key(|d| d.index);
        if resp.data.iter().enumerate().any(|(i, d)| d.index != Some(i)) {
            return Err(Error::Protocol("response indices are not 0..n".into()));
        }
    }
    let dim = resp.data[0].embedding.len();
    resp.data
        .into_iter()
        .map(|d| {
            if d.embedding.len() != dim {
                return Err(Error::Protocol(format!(
                    "mixed embedding sizes {dim} and {}",
                    d.embedding.len()
                )));
            }
            let v = EmbeddingVector::new(d.embedding)
                .map_err(|e| Error::Protocol(format!("invalid embedding: {e}")))?;
            normalize(&v)
        })
        .collect()
}
