//! Client for metrics served over HTTP.
//!
//! `POST {endpoint}/v1/score` with
//! `{"metric": str, "pairs": [{"source", "hypothesis", "reference"}]}`;
//! a 200 response carries `{"scores": [num, ...]}` in request order.
//! 5xx statuses and transport failures are retried with exponential backoff,
//! 4xx statuses are fatal.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{MetricError, MetricId, MetricScorer, ScoreRequest};

/// Environment variable that overrides the configured endpoint.
pub const SCORER_URL_ENV: &str = "PREFALIGN_SCORER_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExternalConfig {
    pub endpoint: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    /// Requests per HTTP call.
    pub batch_size: usize,
    /// First backoff delay; doubles after every failed attempt.
    pub backoff_ms: u64,
    /// Declared score range of served metrics.
    pub range: (f64, f64),
}

impl Default for ExternalConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            timeout_secs: 30.0,
            max_retries: 3,
            batch_size: 64,
            backoff_ms: 200,
            range: (0.0, 100.0),
        }
    }
}

impl ExternalConfig {
    /// Applies the endpoint from [`SCORER_URL_ENV`] when it is set.
    pub fn with_env_override(mut self) -> Self {
        if let Ok(url) = std::env::var(SCORER_URL_ENV) {
            if !url.is_empty() {
                self.endpoint = url;
            }
        }
        self
    }
}

#[derive(Serialize)]
struct WirePair<'a> {
    source: &'a str,
    hypothesis: &'a str,
    reference: Option<&'a str>,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    metric: &'a str,
    pairs: Vec<WirePair<'a>>,
}

pub struct ExternalScorer {
    id: MetricId,
    remote_name: String,
    config: ExternalConfig,
    agent: ureq::Agent,
}

enum Attempt {
    Done(Vec<f64>),
    Retry(String),
}

impl ExternalScorer {
    /// `name` is the local metric name (e.g. `ext:kiwi`), `remote_name` the
    /// metric the server is asked for.
    pub fn new(name: &str, remote_name: &str, config: ExternalConfig) -> Result<Self, MetricError> {
        if config.endpoint.is_empty() {
            return Err(MetricError::Config(format!(
                "no endpoint configured for `{name}`"
            )));
        }
        if config.batch_size == 0 {
            return Err(MetricError::Config("batch_size must be at least 1".into()));
        }
        if config.timeout_secs.is_nan() || config.timeout_secs <= 0.0 {
            return Err(MetricError::Config("timeout_secs must be positive".into()));
        }
        if config.range.0.is_nan() || config.range.1.is_nan() || config.range.0 >= config.range.1 {
            return Err(MetricError::Config(format!(
                "empty score range {:?}",
                config.range
            )));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let id = MetricId {
            name: name.into(),
            needs_reference: false,
            higher_is_better: true,
            range: config.range,
        };
        Ok(Self {
            id,
            remote_name: remote_name.into(),
            config,
            agent,
        })
    }

    /// Scores and reports how many retries were needed in total.
    pub fn score_with_retries(
        &self,
        requests: &[ScoreRequest],
    ) -> Result<(Vec<f64>, u32), MetricError> {
        let mut scores = Vec::with_capacity(requests.len());
        let mut retries = 0;
        for chunk in requests.chunks(self.config.batch_size) {
            let (s, r) = self.score_chunk(chunk)?;
            scores.extend(s);
            retries += r;
        }
        Ok((scores, retries))
    }

    fn score_chunk(&self, chunk: &[ScoreRequest]) -> Result<(Vec<f64>, u32), MetricError> {
        let body = WireRequest {
            metric: &self.remote_name,
            pairs: chunk
                .iter()
                .map(|r| WirePair {
                    source: &r.source,
                    hypothesis: &r.hypothesis,
                    reference: r.reference.as_deref(),
                })
                .collect(),
        };
        let url = format!("{}/v1/score", self.config.endpoint.trim_end_matches('/'));
        let mut attempt = 0u32;
        loop {
            match self.attempt(&url, &body, chunk.len())? {
                Attempt::Done(scores) => return Ok((scores, attempt)),
                Attempt::Retry(message) => {
                    if attempt >= self.config.max_retries {
                        return Err(MetricError::Transport {
                            attempts: attempt + 1,
                            message,
                        });
                    }
                    std::thread::sleep(Duration::from_millis(
                        self.config.backoff_ms.saturating_mul(1 << attempt.min(16)),
                    ));
                    attempt += 1;
                }
            }
        }
    }

    fn attempt(
        &self,
        url: &str,
        body: &WireRequest<'_>,
        expected: usize,
    ) -> Result<Attempt, MetricError> {
        let mut resp = match self.agent.post(url).send_json(body) {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Retry(e.to_string())),
        };
        let status = resp.status().as_u16();
        if status >= 500 {
            return Ok(Attempt::Retry(format!("status {status}")));
        }
        if (400..500).contains(&status) {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(MetricError::Rejected { status, body: text });
        }
        if status != 200 {
            return Err(MetricError::Protocol(format!("unexpected status {status}")));
        }
        let value: Value = match resp.body_mut().read_json() {
            Ok(v) => v,
            Err(e) => {
                return Err(MetricError::Protocol(format!(
                    "malformed response body: {e}"
                )))
            }
        };
        let scores = value
            .get("scores")
            .and_then(Value::as_array)
            .ok_or_else(|| MetricError::Protocol("response has no `scores` array".into()))?;
        if scores.len() != expected {
            return Err(MetricError::Protocol(format!(
                "expected {expected} scores, got {}",
                scores.len()
            )));
        }
        let scores = scores
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.as_f64().filter(|x| x.is_finite()).ok_or_else(|| {
                    MetricError::Protocol(format!("score {i} is not a finite number: {s}"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Attempt::Done(scores))
    }
}

impl MetricScorer for ExternalScorer {
    fn metric(&self) -> &MetricId {
        &self.id
    }

    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<f64>, MetricError> {
        if requests.is_empty() {
            return Ok(Vec::new());
        }
        self.score_with_retries(requests).map(|(s, _)| s)
    }
}
