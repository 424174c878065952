//! HTTP clients for the optional external capabilities: embedding provider,
//! summarizer, and refutation classifier.
//!
//! All three speak structured JSON over a request-response transport. Calls
//! retry transient failures (connect errors, 5xx) up to a configured count
//! and then fail the batch.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::time::Duration;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("endpoint unreachable after {attempts} attempts: {last}")]
    Unreachable { attempts: u32, last: String },
    #[error("endpoint returned status {0}")]
    Status(u16),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

/// Where and how to reach one external service.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub url: String,
    /// Request timeout in milliseconds.
    pub timeout_ms: u64,
    /// Additional attempts after the first failure.
    pub max_retries: u32,
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>) -> Self {
        EndpointConfig {
            url: url.into(),
            timeout_ms: 30_000,
            max_retries: 2,
        }
    }
}

fn post_json<Req: Serialize, Resp: DeserializeOwned>(
    config: &EndpointConfig,
    request: &Req,
) -> Result<Resp, ClientError> {
    // Endpoints are internal services; ambient proxies must not intercept.
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_millis(config.timeout_ms))
        .no_proxy()
        .build()
        .map_err(|e| ClientError::Unreachable {
            attempts: 0,
            last: e.to_string(),
        })?;
    let attempts = config.max_retries + 1;
    let mut last_error = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(50 * u64::from(attempt)));
        }
        match client.post(&config.url).json(request).send() {
            Ok(response) => {
                let status = response.status();
                if status.is_server_error() {
                    last_error = format!("status {status}");
                    continue;
                }
                if !status.is_success() {
                    return Err(ClientError::Status(status.as_u16()));
                }
                return response
                    .json::<Resp>()
                    .map_err(|e| ClientError::MalformedResponse(e.to_string()));
            }
            Err(e) => {
                last_error = e.to_string();
            }
        }
    }
    Err(ClientError::Unreachable {
        attempts,
        last: last_error,
    })
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Remote embedding provider: `{texts: [..]}` → `{vectors: [[..]]}`.
#[derive(Debug, Clone)]
pub struct HttpEmbeddingProvider {
    pub config: EndpointConfig,
}

impl crate::embedding::EmbeddingProvider for HttpEmbeddingProvider {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ClientError> {
        let response: EmbedResponse = post_json(&self.config, &EmbedRequest { texts })?;
        Ok(response.vectors)
    }
}

#[derive(Serialize)]
struct SummarizeRequest<'a> {
    passages: &'a [String],
}

#[derive(Deserialize)]
struct SummarizeResponse {
    summary: String,
}

/// Remote summarizer: `{passages: [..]}` → `{summary: ..}`.
#[derive(Debug, Clone)]
pub struct HttpSummarizer {
    pub config: EndpointConfig,
}

impl crate::curation::SummarizerClient for HttpSummarizer {
    fn summarize(&self, passages: &[String]) -> Result<String, ClientError> {
        let response: SummarizeResponse = post_json(&self.config, &SummarizeRequest { passages })?;
        if response.summary.is_empty() {
            return Err(ClientError::MalformedResponse("empty summary".into()));
        }
        Ok(response.summary)
    }
}

#[derive(Serialize)]
struct ClassifyRequest<'a> {
    claim: &'a str,
    query: &'a str,
}

#[derive(Deserialize)]
struct ClassifyResponse {
    verdict: String,
    score: f64,
}

/// Remote claim classifier: `{claim, query}` → `{verdict, score}`.
#[derive(Debug, Clone)]
pub struct HttpRefutationClassifier {
    pub config: EndpointConfig,
}

impl crate::watch::RefutationClassifier for HttpRefutationClassifier {
    fn classify(
        &self,
        claim: &str,
        query: &str,
    ) -> Result<(crate::watch::Verdict, f64), ClientError> {
        let response: ClassifyResponse =
            post_json(&self.config, &ClassifyRequest { claim, query })?;
        let verdict = match response.verdict.as_str() {
            "supports" => crate::watch::Verdict::Supports,
            "refutes" => crate::watch::Verdict::Refutes,
            "not_enough_info" => crate::watch::Verdict::NotEnoughInfo,
            other => {
                return Err(ClientError::MalformedResponse(format!(
                    "unknown verdict {other:?}"
                )))
            }
        };
        Ok((verdict, response.score))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingProvider;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// One-shot JSON server answering a fixed body, for wire-contract tests.
    fn serve_once(body: &'static str, status: &'static str) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            if let Ok((mut stream, _)) = listener.accept() {
                let mut buf = [0u8; 4096];
                let _ = stream.read(&mut buf);
                let response = format!(
                    "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        format!("http://{addr}/")
    }

    #[test]
    fn provider_round_trip() {
        let url = serve_once(r#"{"vectors": [[1.0, 0.0], [0.0, 1.0]]}"#, "200 OK");
        let provider = HttpEmbeddingProvider {
            config: EndpointConfig {
                url,
                timeout_ms: 2_000,
                max_retries: 0,
            },
        };
        let out = provider
            .embed_batch(&["a".to_string(), "b".to_string()])
            .unwrap();
        assert_eq!(out, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn malformed_body_is_an_error() {
        let url = serve_once(r#"{"unexpected": true}"#, "200 OK");
        let provider = HttpEmbeddingProvider {
            config: EndpointConfig {
                url,
                timeout_ms: 2_000,
                max_retries: 0,
            },
        };
        assert!(matches!(
            provider.embed_batch(&["a".to_string()]),
            Err(ClientError::MalformedResponse(_))
        ));
    }

    #[test]
    fn unreachable_endpoint_reports_attempts() {
        // Bind and drop a listener so the port is locally closed.
        let port = {
            let listener = TcpListener::bind("127.0.0.1:0").unwrap();
            listener.local_addr().unwrap().port()
        };
        let provider = HttpEmbeddingProvider {
            config: EndpointConfig {
                url: format!("http://127.0.0.1:{port}/"),
                timeout_ms: 500,
                max_retries: 1,
            },
        };
        match provider.embed_batch(&["a".to_string()]) {
            Err(ClientError::Unreachable { attempts, .. }) => assert_eq!(attempts, 2),
            other => panic!("expected unreachable, got {other:?}"),
        }
    }
}
