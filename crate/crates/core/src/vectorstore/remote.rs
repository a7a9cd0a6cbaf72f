//! OpenAI-compatible embeddings client.
//!
//! POSTs `{"model": ..., "input": [text]}` and reads the vector back from
//! `{"data": [{"embedding": [...]}]}`. Expensive to call, so stores built
//! from it should be persisted with [`VectorStore::save`](super::VectorStore::save).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vectorstore::{Embedder, Embedding};

#[derive(Debug, Clone)]
pub struct RemoteEmbedderConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub dimension: usize,
    pub max_retries: u32,
}

pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
}

#[derive(Serialize)]
struct EmbeddingsRequest<'a> {
    model: &'a str,
    input: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingsDatum>,
}

#[derive(Deserialize)]
struct EmbeddingsDatum {
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig) -> RemoteEmbedder {
        RemoteEmbedder { config }
    }

    fn backend_error(&self, reason: String, attempts: u32) -> Error {
        Error::Backend {
            backend: format!("embeddings:{}", self.config.model),
            reason,
            attempts,
        }
    }

    fn request_once(&self, text: &str) -> std::result::Result<Vec<f64>, String> {
        let body = EmbeddingsRequest {
            model: &self.config.model,
            input: vec![text],
        };
        let mut request = ureq::post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send_json(&body).map_err(|e| e.to_string())?;
        let parsed: EmbeddingsResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| format!("malformed embeddings response: {e}"))?;
        parsed
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| "embeddings response carried no data".to_string())
    }
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        if text.is_empty() {
            return Err(Error::Argument("cannot embed empty text".into()));
        }
        let attempts = self.config.max_retries.max(1);
        let mut last_err = String::new();
        for attempt in 1..=attempts {
            match self.request_once(text) {
                Ok(vector) => {
                    if vector.len() != self.config.dimension {
                        return Err(self.backend_error(
                            format!(
                                "endpoint returned dimension {} (configured {})",
                                vector.len(),
                                self.config.dimension
                            ),
                            attempt,
                        ));
                    }
                    if vector.iter().any(|v| !v.is_finite()) {
                        return Err(
                            self.backend_error("endpoint returned non-finite values".into(), attempt)
                        );
                    }
                    return Ok(Embedding(vector));
                }
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
        Err(self.backend_error(last_err, attempts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testhttp::OneShotServer;

    #[test]
    fn embeds_via_local_server() {
        let server = OneShotServer::respond_json(
            200,
            r#"{"data":[{"embedding":[0.25,-1.0,3.5]}]}"#.to_string(),
            1,
        );
        let embedder = RemoteEmbedder::new(RemoteEmbedderConfig {
            endpoint: server.url(),
            model: "test-embed".into(),
            api_key: Some("sk-test".into()),
            dimension: 3,
            max_retries: 1,
        });
        let got = embedder.embed("age is 39").unwrap();
        assert_eq!(got.0, vec![0.25, -1.0, 3.5]);

        let request = server.finish().pop().unwrap();
        assert!(request.contains("Bearer sk-test"), "{request}");
        let body: serde_json::Value =
            serde_json::from_str(request.split("\r\n\r\n").nth(1).unwrap()).unwrap();
        assert_eq!(body["model"], "test-embed");
        assert_eq!(body["input"][0], "age is 39");
    }

    #[test]
    fn dimension_mismatch_is_backend_error() {
        let server =
            OneShotServer::respond_json(200, r#"{"data":[{"embedding":[1.0]}]}"#.to_string(), 1);
        let embedder = RemoteEmbedder::new(RemoteEmbedderConfig {
            endpoint: server.url(),
            model: "test-embed".into(),
            api_key: None,
            dimension: 3,
            max_retries: 1,
        });
        let err = embedder.embed("x is 1").unwrap_err();
        assert!(matches!(err, Error::Backend { .. }), "{err}");
        server.finish();
    }

    #[test]
    fn retries_then_reports_attempt_count() {
        let server = OneShotServer::respond_json(500, "{}".to_string(), 2);
        let embedder = RemoteEmbedder::new(RemoteEmbedderConfig {
            endpoint: server.url(),
            model: "test-embed".into(),
            api_key: None,
            dimension: 3,
            max_retries: 2,
        });
        let err = embedder.embed("x is 1").unwrap_err();
        match err {
            Error::Backend { attempts, .. } => assert_eq!(attempts, 2),
            other => panic!("unexpected error {other}"),
        }
        server.finish();
    }
}
