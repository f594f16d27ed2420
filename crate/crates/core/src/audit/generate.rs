use std::collections::HashMap;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::prompt::{PromptJob, TemplateSet};
use super::{AuditError, GeneratedReview, ReviewStatus};

#[derive(Debug, Clone, PartialEq)]
pub enum ClientError {
    RateLimited { retry_after: Option<Duration> },
    Transient(String),
    Fatal(String),
}

impl std::fmt::Display for ClientError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClientError::RateLimited { .. } => f.write_str("rate limited"),
            ClientError::Transient(m) => write!(f, "transient error: {m}"),
            ClientError::Fatal(m) => write!(f, "fatal error: {m}"),
        }
    }
}

/// A chat-completion backend.
pub trait ChatClient: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, ClientError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientConfig {
    pub endpoint: String,
    pub model_id: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
    pub timeout_secs: u64,
    pub workers: usize,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model_id: "gpt-3.5-turbo-0613".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            temperature: 1.0,
            max_tokens: 256,
            top_p: 1.0,
            frequency_penalty: 0.0,
            presence_penalty: 0.0,
            timeout_secs: 60,
            workers: 4,
            max_retries: 5,
            initial_backoff_ms: 500,
            max_backoff_ms: 30_000,
        }
    }
}

impl ClientConfig {
    /// Delay before retry number `attempt` (0-based), doubling up to the cap.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(30))
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

/// OpenAI-style chat-completion endpoint over blocking HTTP.
pub struct HttpClient {
    config: ClientConfig,
    api_key: String,
    http: reqwest::blocking::Client,
}

impl HttpClient {
    pub fn new(config: ClientConfig) -> Result<Self, AuditError> {
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| AuditError::Config(format!("environment variable {} is not set", config.api_key_env)))?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| AuditError::Config(format!("http client: {e}")))?;
        Ok(HttpClient { config, api_key, http })
    }

    fn body(&self, prompt: &str) -> serde_json::Value {
        json!({
            "model": self.config.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
            "top_p": self.config.top_p,
            "frequency_penalty": self.config.frequency_penalty,
            "presence_penalty": self.config.presence_penalty,
        })
    }
}

impl ChatClient for HttpClient {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        let resp = self
            .http
            .post(&self.config.endpoint)
            .bearer_auth(&self.api_key)
            .json(&self.body(prompt))
            .send()
            .map_err(|e| ClientError::Transient(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 {
            let retry_after = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse::<u64>().ok())
                .map(Duration::from_secs);
            return Err(ClientError::RateLimited { retry_after });
        }
        if status.is_server_error() {
            return Err(ClientError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(ClientError::Fatal(format!("HTTP {status}: {text}")));
        }
        let value: serde_json::Value = resp.json().map_err(|e| ClientError::Transient(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ClientError::Fatal(format!("response without message content: {value}")))
    }
}

type Responder = dyn Fn(&str, u32) -> Result<String, ClientError> + Send + Sync;

/// Deterministic offline client. The responder sees the prompt and the
/// 0-based attempt number for that prompt.
pub struct MockClient {
    model_id: String,
    responder: Box<Responder>,
    attempts: Mutex<HashMap<String, u32>>,
}

impl MockClient {
    pub fn new<F>(model_id: &str, responder: F) -> Self
    where
        F: Fn(&str, u32) -> Result<String, ClientError> + Send + Sync + 'static,
    {
        MockClient {
            model_id: model_id.to_string(),
            responder: Box::new(responder),
            attempts: Mutex::new(HashMap::new()),
        }
    }

    /// Echoes the prompt inside a short canned review.
    pub fn echo(model_id: &str) -> Self {
        Self::new(model_id, |prompt, _| Ok(format!("Canned review. Prompt was: {prompt}")))
    }
}

impl ChatClient for MockClient {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        let attempt = {
            let mut map = self.attempts.lock().unwrap();
            let a = map.entry(prompt.to_string()).or_insert(0);
            let current = *a;
            *a += 1;
            current
        };
        (self.responder)(prompt, attempt)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub issued: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub retries: usize,
}

pub fn job_id(model_id: &str, index: usize) -> String {
    let model: String = model_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{model}-{index:06}")
}

fn run_job(
    index: usize,
    job: &PromptJob,
    templates: &TemplateSet,
    client: &dyn ChatClient,
    config: &ClientConfig,
) -> (GeneratedReview, usize) {
    let mut record = GeneratedReview {
        job_index: index,
        job_id: job_id(client.model_id(), index),
        job: job.clone(),
        model_id: client.model_id().to_string(),
        raw_text: String::new(),
        clean_text: None,
        status: ReviewStatus::Failed,
        created_at: chrono::Utc::now(),
        error: None,
    };
    let prompt = match templates.render(job) {
        Ok(p) => p,
        Err(e) => {
            record.error = Some(e.to_string());
            return (record, 0);
        }
    };
    let mut retries = 0;
    let mut attempt = 0;
    loop {
        match client.complete(&prompt) {
            Ok(text) => {
                record.raw_text = text;
                record.status = ReviewStatus::Ok;
                break;
            }
            Err(ClientError::Fatal(m)) => {
                record.error = Some(m);
                break;
            }
            Err(e) if attempt >= config.max_retries => {
                record.error = Some(format!("{e} after {} attempts", attempt + 1));
                break;
            }
            Err(e) => {
                let delay = match e {
                    ClientError::RateLimited { retry_after: Some(d) } => {
                        d.min(Duration::from_millis(config.max_backoff_ms))
                    }
                    _ => config.backoff(attempt),
                };
                log::debug!("job {index}: {e}; retrying in {delay:?}");
                std::thread::sleep(delay);
                attempt += 1;
                retries += 1;
            }
        }
    }
    record.created_at = chrono::Utc::now();
    (record, retries)
}

/// Issues every job with at most `config.workers` requests in flight and
/// appends one raw JSONL record per job to `sink`, failures included.
/// Records arrive in completion order; `job_index` restores job order.
pub fn generate<W: Write>(
    jobs: &[PromptJob],
    templates: &TemplateSet,
    client: &dyn ChatClient,
    config: &ClientConfig,
    sink: &mut W,
) -> Result<GenerateSummary, AuditError> {
    let next = AtomicUsize::new(0);
    let workers = config.workers.max(1).min(jobs.len().max(1));
    let (tx, rx) = mpsc::sync_channel::<(GeneratedReview, usize)>(workers * 2);
    let mut summary = GenerateSummary::default();
    std::thread::scope(|scope| -> Result<(), AuditError> {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                if tx.send(run_job(i, &jobs[i], templates, client, config)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (record, retries) in rx {
            summary.issued += 1;
            summary.retries += retries;
            match record.status {
                ReviewStatus::Ok => summary.succeeded += 1,
                _ => {
                    summary.failed += 1;
                    log::warn!(
                        "job {} failed: {}",
                        record.job_id,
                        record.error.as_deref().unwrap_or("")
                    );
                }
            }
            let line = serde_json::to_string(&record).map_err(|e| AuditError::Io(e.to_string()))?;
            writeln!(sink, "{line}").map_err(|e| AuditError::Io(e.to_string()))?;
        }
        Ok(())
    })?;
    sink.flush().map_err(|e| AuditError::Io(e.to_string()))?;
    log::info!(
        "generated {} of {} jobs ({} failed, {} retries)",
        summary.succeeded,
        summary.issued,
        summary.failed,
        summary.retries
    );
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::prompt::{expand_prompts, GridConfig};
    use crate::audit::read_jsonl;

    fn fast() -> ClientConfig {
        ClientConfig {
            initial_backoff_ms: 0,
            max_backoff_ms: 0,
            workers: 3,
            ..Default::default()
        }
    }

    fn jobs() -> Vec<PromptJob> {
        expand_prompts(&GridConfig {
            templates: vec![3],
            cuisines: vec!["thai".into(), "greek".into()],
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn defaults_follow_published_parameters() {
        let c = ClientConfig::default();
        assert_eq!((c.temperature, c.max_tokens, c.top_p), (1.0, 256, 1.0));
        assert_eq!((c.frequency_penalty, c.presence_penalty), (0.0, 0.0));
        assert_eq!(c.backoff(0), Duration::from_millis(500));
        assert_eq!(c.backoff(3), Duration::from_millis(4000));
        assert_eq!(c.backoff(20), Duration::from_millis(30_000));
    }

    #[test]
    fn every_job_persisted_once() {
        let mut out = Vec::new();
        let client = MockClient::echo("gpt-3.5-turbo-1106");
        let s = generate(&jobs(), &TemplateSet::default(), &client, &fast(), &mut out).unwrap();
        assert_eq!(s.succeeded, 40);
        let mut records = read_jsonl(out.as_slice()).unwrap();
        records.sort_by_key(|r| r.job_index);
        assert_eq!(records.len(), 40);
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.job_index, i);
            assert_eq!(r.model_id, "gpt-3.5-turbo-1106");
            assert_eq!(r.job_id, format!("gpt-3.5-turbo-1106-{i:06}"));
            assert!(r.raw_text.contains(&r.job.cuisine));
            assert!(r.clean_text.is_none());
        }
    }

    #[test]
    fn rate_limits_are_retried_and_failures_recorded() {
        let client = MockClient::new("m", |prompt, attempt| {
            if prompt.contains("greek") && prompt.contains("very negative") {
                Err(ClientError::Fatal("refused".into()))
            } else if attempt < 2 {
                Err(ClientError::RateLimited { retry_after: None })
            } else {
                Ok("Fine.".into())
            }
        });
        let mut out = Vec::new();
        let s = generate(&jobs(), &TemplateSet::default(), &client, &fast(), &mut out).unwrap();
        assert_eq!(s.failed, 4);
        assert_eq!(s.succeeded, 36);
        assert_eq!(s.retries, 72);
        let records = read_jsonl(out.as_slice()).unwrap();
        let failed: Vec<_> = records.iter().filter(|r| r.status == ReviewStatus::Failed).collect();
        assert_eq!(failed.len(), 4);
        assert!(failed
            .iter()
            .all(|r| r.error.as_deref() == Some("refused") && !r.job_id.is_empty()));
    }

    #[test]
    fn persistent_transient_errors_give_up() {
        let client = MockClient::new("m", |_, _| Err(ClientError::Transient("503".into())));
        let mut out = Vec::new();
        let cfg = ClientConfig {
            max_retries: 2,
            ..fast()
        };
        let s = generate(&jobs()[..3], &TemplateSet::default(), &client, &cfg, &mut out).unwrap();
        assert_eq!(s.failed, 3);
        assert_eq!(s.retries, 6);
    }

    #[test]
    fn http_client_requires_credentials() {
        let cfg = ClientConfig {
            api_key_env: "CUISINE_FRAMING_TEST_UNSET_KEY".into(),
            ..Default::default()
        };
        assert!(matches!(HttpClient::new(cfg), Err(AuditError::Config(_))));
    }
}
