//! HTTP client for a model server speaking the [`wire`](super::wire) format.
//!
//! Transport:
//! * `POST {base}/generate` `{input, temperature, top_p, seed, num_samples, sample}`
//!   → `{outputs: [string]}`
//! * `POST {base}/score` `{input}` → `{score}`, the probability of the
//!   affirmative answer token.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::wire::{decode_premises, encode_input};
use super::{dedupe_premise_sets, AngleRequest, Backend, BackendError, Conditioning, Result};
use crate::config::Decoding;
use crate::statement::{normalize_key, QaPair, Statement};

/// Upper bound on samples requested in one call, whatever `k` says.
pub const MAX_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub input: String,
    pub temperature: f64,
    pub top_p: f64,
    pub seed: u64,
    pub num_samples: usize,
    /// `false` asks for one greedy decode.
    pub sample: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub input: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub base_url: String,
    pub max_connections: usize,
    pub attempts: usize,
    pub initial_backoff: Duration,
    pub request_timeout: Duration,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            max_connections: 4,
            attempts: 3,
            initial_backoff: Duration::from_millis(200),
            request_timeout: Duration::from_secs(60),
        }
    }
}

struct Permits {
    free: Mutex<usize>,
    released: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n.max(1)), released: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.released.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.released.notify_one();
    }
}

pub struct RemoteBackend {
    cfg: RemoteConfig,
    client: reqwest::blocking::Client,
    permits: Permits,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
    dropped: AtomicUsize,
}

impl RemoteBackend {
    /// Builds the blocking client. Must not be called from inside an async
    /// runtime.
    pub fn new(cfg: RemoteConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.request_timeout)
            .build()
            .map_err(|e| BackendError::Unavailable { attempts: 0, message: e.to_string() })?;
        let permits = Permits::new(cfg.max_connections);
        Ok(Self {
            cfg,
            client,
            permits,
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
            dropped: AtomicUsize::new(0),
        })
    }

    /// Generations discarded because they did not parse.
    pub fn dropped_generations(&self) -> usize {
        self.dropped.load(Ordering::Relaxed)
    }

    /// Highest number of simultaneous requests seen so far.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::Relaxed)
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        let url = format!("{}{path}", self.cfg.base_url);
        let attempts = self.cfg.attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(self.cfg.initial_backoff * 2u32.pow(attempt as u32 - 2));
            }
            let sent = {
                let _permit = self.permits.acquire();
                let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
                let sent = self.client.post(&url).json(body).send();
                self.in_flight.fetch_sub(1, Ordering::SeqCst);
                sent
            };
            match sent {
                Ok(resp) if resp.status().is_success() => {
                    return resp.json::<R>().map_err(|e| BackendError::Protocol(format!("{url}: {e}")));
                }
                Ok(resp) if resp.status().is_server_error() || resp.status().as_u16() == 429 => {
                    last = format!("{url}: status {}", resp.status());
                }
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    let message = resp.text().unwrap_or_default();
                    return Err(BackendError::Rejected { status, message });
                }
                Err(e) => last = format!("{url}: {e}"),
            }
            log::debug!("attempt {attempt}/{attempts} failed: {last}");
        }
        Err(BackendError::Unavailable { attempts, message: last })
    }

    fn generate(&self, input: String, decoding: &Decoding, num_samples: usize, sample: bool) -> Result<Vec<String>> {
        let body = GenerateRequest {
            input,
            temperature: decoding.temperature,
            top_p: decoding.top_p,
            seed: decoding.seed,
            num_samples: num_samples.clamp(1, MAX_SAMPLES),
            sample,
        };
        Ok(self.post::<_, GenerateResponse>("/generate", &body)?.outputs)
    }

    fn score(&self, input: String) -> Result<f64> {
        let reply: ScoreResponse = self.post("/score", &ScoreRequest { input })?;
        if (0.0..=1.0).contains(&reply.score) {
            Ok(reply.score)
        } else {
            Err(BackendError::Protocol(format!("score {} outside [0, 1]", reply.score)))
        }
    }
}

impl Backend for RemoteBackend {
    fn name(&self) -> String {
        format!("remote:{}", self.cfg.base_url)
    }

    /// One greedy generation followed by `k` sampled ones.
    fn generate_premises(
        &self,
        hypothesis: &Statement,
        cond: Conditioning<'_>,
        k: usize,
        decoding: &Decoding,
    ) -> Result<Vec<Vec<Statement>>> {
        let input = encode_input(&AngleRequest::premises(hypothesis, cond, k, *decoding))?;
        let mut outputs = self.generate(input.clone(), decoding, 1, false)?;
        outputs.extend(self.generate(input, decoding, k, true)?);
        let mut sets = Vec::with_capacity(outputs.len());
        for output in outputs {
            if output.trim().is_empty() {
                continue;
            }
            match decode_premises(&output) {
                Some(set) => sets.push(set),
                None => {
                    self.dropped.fetch_add(1, Ordering::Relaxed);
                    log::warn!("dropping unparseable premise generation {output:?}");
                }
            }
        }
        Ok(dedupe_premise_sets(sets, hypothesis, k))
    }

    fn score_direct(&self, statement: &Statement, cond: Conditioning<'_>) -> Result<f64> {
        self.score(encode_input(&AngleRequest::direct(statement, cond))?)
    }

    fn score_entailment(&self, premises: &[Statement], hypothesis: &Statement, cond: Conditioning<'_>) -> Result<f64> {
        self.score(encode_input(&AngleRequest::entailment(premises, hypothesis, cond))?)
    }

    fn hypothesize(&self, qa: &QaPair) -> Result<Statement> {
        let input = encode_input(&AngleRequest::hypothesize(qa))?;
        let outputs = self.generate(input, &Decoding::default(), 1, false)?;
        let first = outputs.first().ok_or_else(|| BackendError::Protocol("empty declarativization".into()))?;
        Statement::new(first).map_err(|e| BackendError::Protocol(format!("declarativization {first:?}: {e}")))
    }

    fn generate_candidates(&self, question: &str, n: usize) -> Result<Vec<String>> {
        let decoding = Decoding::default();
        let input = encode_input(&AngleRequest::candidates(question, n, decoding))?;
        let mut seen = Vec::new();
        let mut out = Vec::new();
        for answer in self.generate(input, &decoding, n, true)? {
            let key = normalize_key(&answer);
            if !key.is_empty() && !seen.contains(&key) {
                seen.push(key);
                out.push(answer.trim().to_string());
            }
        }
        out.truncate(n);
        if out.is_empty() {
            return Err(BackendError::OpenEndedUnsupported(question.to_string()));
        }
        Ok(out)
    }
}
