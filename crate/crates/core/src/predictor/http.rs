//! OpenAI-compatible chat completions backend.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::Backend;

// Sampling parameters are fixed for every request.
const TEMPERATURE: f64 = 0.0;
const TOP_P: f64 = 0.9;
const MAX_TOKENS: u32 = 8192;

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub max_retries: u32,
}

pub struct HttpBackend {
    config: HttpBackendConfig,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
    messages: Vec<ChatMessage<'a>>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> HttpBackend {
        HttpBackend { config }
    }

    fn request_once(&self, prompt: &str) -> std::result::Result<String, String> {
        let body = ChatRequest {
            model: &self.config.model,
            temperature: TEMPERATURE,
            top_p: TOP_P,
            max_tokens: MAX_TOKENS,
            messages: vec![ChatMessage {
                role: "user",
                content: prompt,
            }],
        };
        let mut request = ureq::post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send_json(&body).map_err(|e| e.to_string())?;
        let parsed: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| format!("malformed chat response: {e}"))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| "chat response carried no choices".to_string())
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}@{}", self.config.model, self.config.endpoint)
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        let attempts = self.config.max_retries.max(1);
        let mut last_err = String::new();
        for attempt in 1..=attempts {
            match self.request_once(prompt) {
                Ok(text) => return Ok(text),
                Err(reason) => {
                    last_err = reason;
                    if attempt < attempts {
                        std::thread::sleep(std::time::Duration::from_millis(
                            100 * u64::from(attempt),
                        ));
                    }
                }
            }
        }
        Err(Error::Backend {
            backend: self.id(),
            reason: last_err,
            attempts,
        })
    }
}
