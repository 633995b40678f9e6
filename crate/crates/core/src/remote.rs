//! Client for a model server speaking the v1 prediction protocol.
//!
//! * `GET /health` → `{"status":"ok","model_id":..,"labels":[..]}`
//! * `POST /predict` with `{"pairs":[{"premise":..,"hypothesis":..},..]}` →
//!   `{"probs":[[..],..]}`, rows aligned to request order and to the
//!   advertised label order.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::prediction::{NliInput, PredictionError, PredictionProvider, ProbDistribution};

pub const PROTOCOL_VERSION: &str = "v1";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Base address, e.g. `http://127.0.0.1:8000`. A missing scheme means http.
    pub endpoint: String,
    pub model_id: String,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model_id: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            model_id: model_id.into(),
            batch_size: 32,
            max_in_flight: 4,
            max_attempts: 3,
            backoff_base: Duration::from_millis(200),
            timeout: Duration::from_secs(120),
        }
    }

    fn base_url(&self) -> String {
        let trimmed = self.endpoint.trim_end_matches('/');
        if trimmed.contains("://") {
            trimmed.to_string()
        } else {
            format!("http://{trimmed}")
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model_id: String,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PairPayload<'a> {
    pub premise: &'a str,
    pub hypothesis: &'a str,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictRequest<'a> {
    #[serde(borrow)]
    pub pairs: Vec<PairPayload<'a>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictResponse {
    pub probs: Vec<Vec<f64>>,
}

pub struct RemoteProvider {
    config: RemoteConfig,
    base: String,
    labels: Vec<String>,
    agent: ureq::Agent,
}

enum Attempt<T> {
    Done(T),
    Retry(String),
    Fatal(PredictionError),
}

impl RemoteProvider {
    /// Queries `/health` and fixes the label space advertised by the server.
    pub fn connect(config: RemoteConfig) -> Result<Self, PredictionError> {
        if config.batch_size == 0 || config.max_in_flight == 0 || config.max_attempts == 0 {
            return Err(PredictionError::Protocol(
                "batch size, max in flight and attempts must be at least 1".into(),
            ));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        let base = config.base_url();
        let mut provider = RemoteProvider {
            config,
            base,
            labels: Vec::new(),
            agent,
        };
        let health: HealthResponse = provider.with_retries("GET /health", || {
            let url = format!("{}/health", provider.base);
            match provider.agent.get(&url).call() {
                Ok(resp) => provider.decode(resp),
                Err(e) => Attempt::Retry(e.to_string()),
            }
        })?;
        if health.status != "ok" {
            return Err(PredictionError::Protocol(format!(
                "server status is {:?}",
                health.status
            )));
        }
        if let Some(v) = &health.version {
            if v != PROTOCOL_VERSION {
                return Err(PredictionError::Protocol(format!(
                    "server speaks protocol {v}, expected {PROTOCOL_VERSION}"
                )));
            }
        }
        if health.model_id != provider.config.model_id {
            return Err(PredictionError::Protocol(format!(
                "server serves model {:?}, expected {:?}",
                health.model_id, provider.config.model_id
            )));
        }
        if health.labels.is_empty() {
            return Err(PredictionError::Protocol("server advertises no labels".into()));
        }
        provider.labels = health.labels;
        Ok(provider)
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// Number of `/predict` requests needed for `n` inputs.
    pub fn request_count(&self, n: usize) -> usize {
        n.div_ceil(self.config.batch_size)
    }

    fn decode<T: serde::de::DeserializeOwned>(&self, mut resp: ureq::http::Response<ureq::Body>) -> Attempt<T> {
        let status = resp.status();
        if status.is_server_error() {
            return Attempt::Retry(format!("server returned {status}"));
        }
        if !status.is_success() {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Attempt::Fatal(PredictionError::Protocol(format!("server returned {status}: {body}")));
        }
        match resp.body_mut().read_json::<T>() {
            Ok(v) => Attempt::Done(v),
            Err(e) => Attempt::Fatal(PredictionError::Protocol(format!("malformed response: {e}"))),
        }
    }

    fn with_retries<T>(&self, what: &str, mut f: impl FnMut() -> Attempt<T>) -> Result<T, PredictionError> {
        let mut last = String::new();
        for attempt in 0..self.config.max_attempts {
            if attempt > 0 {
                let delay = self.config.backoff_base * 2u32.pow(attempt - 1);
                debug!("{what}: retrying in {delay:?} after: {last}");
                thread::sleep(delay);
            }
            match f() {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(msg) => last = msg,
            }
        }
        warn!("{what} failed after {} attempts: {last}", self.config.max_attempts);
        Err(PredictionError::Transport(format!(
            "{what} to {} failed after {} attempts: {last}",
            self.base, self.config.max_attempts
        )))
    }

    fn predict_chunk(&self, chunk: &[NliInput<'_>]) -> Result<Vec<ProbDistribution>, PredictionError> {
        let request = PredictRequest {
            pairs: chunk
                .iter()
                .map(|i| PairPayload {
                    premise: i.premise(),
                    hypothesis: i.hypothesis(),
                })
                .collect(),
        };
        let url = format!("{}/predict", self.base);
        let response: PredictResponse =
            self.with_retries("POST /predict", || match self.agent.post(&url).send_json(&request) {
                Ok(resp) => self.decode(resp),
                Err(e) => Attempt::Retry(e.to_string()),
            })?;
        if response.probs.len() != chunk.len() {
            return Err(PredictionError::Protocol(format!(
                "sent {} pairs, received {} probability rows",
                chunk.len(),
                response.probs.len()
            )));
        }
        response
            .probs
            .into_iter()
            .map(|row| {
                if row.len() != self.labels.len() {
                    return Err(PredictionError::LabelSpaceMismatch {
                        expected: self.labels.clone(),
                        found: (0..row.len()).map(|i| format!("#{i}")).collect(),
                    });
                }
                ProbDistribution::new(self.labels.clone(), row).map_err(|e| PredictionError::Protocol(e.to_string()))
            })
            .collect()
    }
}

impl PredictionProvider for RemoteProvider {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn label_space(&self) -> &[String] {
        &self.labels
    }

    /// Splits `inputs` into batches and keeps at most `max_in_flight`
    /// requests outstanding. Results come back in input order.
    fn predict_batch(&self, inputs: &[NliInput<'_>]) -> Result<Vec<ProbDistribution>, PredictionError> {
        let chunks: Vec<&[NliInput<'_>]> = inputs.chunks(self.config.batch_size).collect();
        if chunks.len() <= 1 {
            return match chunks.first() {
                Some(chunk) => self.predict_chunk(chunk),
                None => Ok(Vec::new()),
            };
        }
        let next = AtomicUsize::new(0);
        let failed = AtomicBool::new(false);
        let results: Mutex<Vec<Option<Vec<ProbDistribution>>>> = Mutex::new(vec![None; chunks.len()]);
        let first_error: Mutex<Option<(usize, PredictionError)>> = Mutex::new(None);
        let workers = self.config.max_in_flight.min(chunks.len());
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if failed.load(Ordering::SeqCst) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(chunk) = chunks.get(i) else { break };
                    match self.predict_chunk(chunk) {
                        Ok(rows) => results.lock().unwrap()[i] = Some(rows),
                        Err(e) => {
                            failed.store(true, Ordering::SeqCst);
                            let mut slot = first_error.lock().unwrap();
                            if slot.as_ref().is_none_or(|(j, _)| i < *j) {
                                *slot = Some((i, e));
                            }
                            break;
                        }
                    }
                });
            }
        });
        if let Some((_, e)) = first_error.into_inner().unwrap() {
            return Err(e);
        }
        Ok(results
            .into_inner()
            .unwrap()
            .into_iter()
            .flat_map(|rows| rows.expect("every chunk completed"))
            .collect())
    }
}
