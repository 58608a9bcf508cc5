use std::thread;
use std::time::Duration;

use rand::Rng;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::json;

use super::{slot_marker, ChatBackend, GenerationRequest, LlmError, TokenSlot, Usage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_delay: Duration::from_secs(1) }
    }
}

impl RetryPolicy {
    /// Delay before retry number `n` (1-based): base * 2^(n-1), jittered by
    /// a factor in [0.5, 1.5).
    fn delay(&self, n: u32) -> Duration {
        let jitter = rand::rng().random_range(0.5..1.5);
        self.base_delay.mul_f64(2f64.powi(n as i32 - 1) * jitter)
    }
}

/// Client for an OpenAI-style `POST {endpoint}/chat/completions` API.
#[derive(Debug, Clone)]
pub struct OpenAiBackend {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    timeout: Duration,
    retry: RetryPolicy,
    max_in_flight: usize,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<ApiUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ApiUsage {
    #[serde(default)]
    prompt_tokens: usize,
    #[serde(default)]
    completion_tokens: usize,
}

/// Slot text sent in place of embeddings: the marker followed by the
/// leading feature values.
fn slot_summary(slot: &TokenSlot) -> String {
    const SHOWN: usize = 8;
    let values: Vec<String> = slot.feature.values.iter().take(SHOWN).map(|v| format!("{v:.3}")).collect();
    let more = if slot.feature.values.len() > SHOWN { ", ..." } else { "" };
    format!("{}[{}{more}]", slot_marker(slot.kind), values.join(", "))
}

pub(crate) fn render_user_text(request: &GenerationRequest) -> String {
    request
        .token_slots
        .iter()
        .fold(request.user.clone(), |text, slot| text.replacen(&slot_marker(slot.kind), &slot_summary(slot), 1))
}

enum Attempt {
    Done(Result<(String, Usage), LlmError>),
    Retry(LlmError),
}

impl OpenAiBackend {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
        retry: RetryPolicy,
        max_in_flight: usize,
    ) -> Self {
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key,
            timeout,
            retry,
            max_in_flight: max_in_flight.max(1),
        }
    }

    fn attempt(&self, client: &Client, body: &serde_json::Value) -> Attempt {
        let mut req = client.post(format!("{}/chat/completions", self.endpoint)).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() || e.is_connect() => return Attempt::Retry(LlmError::Timeout),
            Err(e) => return Attempt::Retry(LlmError::BackendError(e.to_string())),
        };
        let status = resp.status();
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Attempt::Done(Err(LlmError::Unauthorized));
        }
        if status == StatusCode::TOO_MANY_REQUESTS {
            let retry_after = resp
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            return Attempt::Retry(LlmError::RateLimited { retry_after });
        }
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Attempt::Retry(LlmError::Timeout),
            Err(e) => return Attempt::Retry(LlmError::BackendError(e.to_string())),
        };
        if status.is_server_error() {
            return Attempt::Retry(LlmError::BackendError(text));
        }
        if !status.is_success() {
            return Attempt::Done(Err(LlmError::BackendError(text)));
        }
        let parsed: ChatResponse = match serde_json::from_str(&text) {
            Ok(p) => p,
            Err(e) => return Attempt::Done(Err(LlmError::BackendError(format!("bad response body: {e}")))),
        };
        let content = parsed.choices.into_iter().next().and_then(|c| c.message.content).unwrap_or_default();
        let usage = parsed
            .usage
            .map(|u| Usage { input_tokens: u.prompt_tokens, output_tokens: u.completion_tokens })
            .unwrap_or_default();
        Attempt::Done(Ok((content, usage)))
    }
}

impl ChatBackend for OpenAiBackend {
    fn name(&self) -> &str {
        &self.model
    }

    fn max_in_flight(&self) -> Option<usize> {
        Some(self.max_in_flight)
    }

    fn generate(&self, request: &GenerationRequest) -> Result<(String, Usage), LlmError> {
        let client = Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| LlmError::BackendError(e.to_string()))?;
        let body = json!({
            "model": self.model,
            "temperature": request.temperature,
            "max_tokens": request.max_output,
            "messages": [
                { "role": "system", "content": request.system },
                { "role": "user", "content": render_user_text(request) },
            ],
        });
        let attempts = self.retry.attempts.max(1);
        let mut last = LlmError::Timeout;
        for n in 1..=attempts {
            match self.attempt(&client, &body) {
                Attempt::Done(result) => return result,
                Attempt::Retry(err) => {
                    log::warn!("{} attempt {n}/{attempts} failed: {err}", self.model);
                    if n < attempts {
                        let wait = match &err {
                            LlmError::RateLimited { retry_after: Some(d) } => *d,
                            _ => self.retry.delay(n),
                        };
                        thread::sleep(wait);
                    }
                    last = err;
                }
            }
        }
        Err(last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FeatureVector;
    use crate::llm::{RequestTask, SlotKind};

    fn request() -> GenerationRequest {
        GenerationRequest {
            system: "s".into(),
            user: "a <slot:global> b <slot:part:0>".into(),
            token_slots: vec![
                TokenSlot { kind: SlotKind::Global, feature: FeatureVector { values: vec![0.25; 10] } },
                TokenSlot { kind: SlotKind::Part(0), feature: FeatureVector { values: vec![1.0] } },
            ],
            max_output: 10,
            temperature: 0.0,
            task: RequestTask::SceneIdentification { objects: vec![] },
        }
    }

    #[test]
    fn slots_become_summaries() {
        let text = render_user_text(&request());
        assert!(text.starts_with("a <slot:global>[0.250, 0.250"));
        assert!(text.contains(", ...] b <slot:part:0>[1.000]"));
    }

    #[test]
    fn unreachable_endpoint_times_out_after_retries() {
        let backend = OpenAiBackend::new(
            "http://127.0.0.1:9/v1",
            "m",
            None,
            Duration::from_millis(300),
            RetryPolicy { attempts: 3, base_delay: Duration::from_millis(5) },
            2,
        );
        assert_eq!(backend.generate(&request()), Err(LlmError::Timeout));
        assert_eq!(backend.max_in_flight(), Some(2));
    }
}
