//! Chat-completion client for a hosted negative generator.
//!
//! Request: `POST {model, messages: [system, user]}` with an optional bearer
//! token read from a named environment variable. Response:
//! `{choices: [{message: {content}}]}`. Transport failures, HTTP 429 and 5xx,
//! and empty completions are retried with exponential backoff; other HTTP
//! errors fail at once.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use signdpo_textmetrics::ScoreTriple;

use crate::error::{PrefsError, Result};
use crate::generator::NegativeGenerator;
use crate::sft::{user_message, Message, SYSTEM_PROMPT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorClient {
    pub endpoint: String,
    pub model: String,
    pub timeout: Duration,
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// Delay before the first retry; doubles each time.
    pub backoff: Duration,
    /// Environment variable holding the bearer token, if any.
    pub auth_env: Option<String>,
    /// Requests in flight at once for [`GeneratorClient::generate_batch`].
    pub concurrency: usize,
}

impl GeneratorClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            timeout: Duration::from_secs(30),
            max_retries: 3,
            backoff: Duration::from_millis(500),
            auth_env: None,
            concurrency: 4,
        }
    }

    fn agent(&self) -> ureq::Agent {
        ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into()
    }

    fn token(&self) -> Result<Option<String>> {
        match &self.auth_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| PrefsError::Config(format!("environment variable {var} is not set"))),
        }
    }

    /// One request. `Ok(None)` marks a retryable failure, described in `last`.
    fn attempt(
        &self,
        agent: &ureq::Agent,
        body: &ChatRequest,
        token: Option<&str>,
        last: &mut String,
    ) -> Result<Option<String>> {
        let mut req = agent.post(&self.endpoint);
        if let Some(t) = token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => {
                *last = e.to_string();
                return Ok(None);
            }
        };
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            *last = format!("HTTP {status}");
            return Ok(None);
        }
        if !(200..300).contains(&status) {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(PrefsError::Transport {
                attempts: 1,
                message: format!("HTTP {status}: {text}"),
            });
        }
        let parsed: ChatResponse = match resp.body_mut().read_json() {
            Ok(p) => p,
            Err(e) => {
                *last = format!("malformed response: {e}");
                return Ok(None);
            }
        };
        let content = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .unwrap_or_default();
        if content.trim().is_empty() {
            *last = "empty completion".into();
            return Ok(None);
        }
        Ok(Some(content))
    }

    /// The assistant text for `reference` at `target`, verbatim.
    pub fn complete(&self, reference: &str, target: &ScoreTriple) -> Result<String> {
        let token = self.token()?;
        let agent = self.agent();
        let body = ChatRequest {
            model: self.model.clone(),
            messages: vec![
                Message::new("system", SYSTEM_PROMPT),
                Message::new("user", user_message(reference, target)),
            ],
        };
        let mut last = String::new();
        let mut delay = self.backoff;
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                log::warn!("generator request failed ({last}), retry {attempt} in {delay:?}");
                std::thread::sleep(delay);
                delay *= 2;
            }
            if let Some(text) = self.attempt(&agent, &body, token.as_deref(), &mut last)? {
                return Ok(text);
            }
        }
        let attempts = self.max_retries + 1;
        if last == "empty completion" {
            Err(PrefsError::Generation(format!("empty completion after {attempts} attempt(s)")))
        } else {
            Err(PrefsError::Transport {
                attempts,
                message: last,
            })
        }
    }

    /// Completes every item with at most `concurrency` requests in flight.
    /// Results are returned in input order.
    pub fn generate_batch(&self, items: &[(String, ScoreTriple)]) -> Vec<Result<String>> {
        let limit = self.concurrency.max(1);
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(limit) {
            std::thread::scope(|s| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|(r, t)| s.spawn(move || self.complete(r, t)))
                    .collect();
                out.extend(handles.into_iter().map(|h| h.join().expect("request thread panicked")));
            });
        }
        out
    }
}

impl NegativeGenerator for GeneratorClient {
    fn generate_negative(&self, reference: &str, target: &ScoreTriple, _seed: u64) -> Result<String> {
        let text = self.complete(reference, target)?;
        if text == reference {
            return Err(PrefsError::Generation("completion repeats the reference".into()));
        }
        Ok(text)
    }
}

#[derive(Debug, Serialize)]
struct ChatRequest {
    model: String,
    messages: Vec<Message>,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: String,
}
