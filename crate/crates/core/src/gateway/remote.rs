use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::json;

use super::{ChatProvider, ChatRequest, ChatRole, GatewayError, ProviderConfig, RetryConfig};

/// OpenAI-style `/chat/completions` client.
pub struct RemoteProvider {
    client: reqwest::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    retry: RetryConfig,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

fn is_retryable_status(status: u16) -> bool {
    matches!(status, 408 | 429 | 500 | 502 | 503 | 504)
}

impl RemoteProvider {
    pub fn new(config: &ProviderConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let base = config.base_url.as_deref().expect("validated");
        let api_key = match &config.auth_env_var {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                GatewayError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms.unwrap_or(120_000)))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: format!("{}/chat/completions", base.trim_end_matches('/')),
            model: config.model_name.clone().expect("validated"),
            api_key,
            retry: config.retry,
        })
    }

    fn body(&self, request: &ChatRequest) -> serde_json::Value {
        let mut messages = Vec::with_capacity(request.messages.len() + 1);
        if let Some(system) = &request.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        for m in &request.messages {
            let role = match m.role {
                ChatRole::User => "user",
                ChatRole::Assistant => "assistant",
            };
            messages.push(json!({"role": role, "content": m.text}));
        }
        json!({
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
        })
    }

    async fn attempt(&self, body: &serde_json::Value) -> Result<String, (bool, GatewayError)> {
        let mut req = self.client.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| (true, GatewayError::Transport(e.to_string())))?;
        let status = resp.status().as_u16();
        if status >= 400 {
            let text = resp.text().await.unwrap_or_default();
            return Err((
                is_retryable_status(status),
                GatewayError::Provider {
                    status,
                    attempts: 1,
                    body: text.chars().take(500).collect(),
                },
            ));
        }
        let parsed: CompletionResponse = resp
            .json()
            .await
            .map_err(|e| (false, GatewayError::Transport(format!("malformed response: {e}"))))?;
        Ok(parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default())
    }
}

#[async_trait]
impl ChatProvider for RemoteProvider {
    async fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let body = self.body(request);
        let mut attempt = 1;
        loop {
            match self.attempt(&body).await {
                Ok(text) => return Ok(text),
                Err((retryable, err)) => {
                    if !retryable || attempt >= self.retry.max_attempts {
                        return Err(match err {
                            GatewayError::Provider { status, body, .. } => GatewayError::Provider {
                                status,
                                attempts: attempt,
                                body,
                            },
                            other => other,
                        });
                    }
                    let delay = self.retry.delay_ms(attempt);
                    tracing::debug!(attempt, delay, error = %err, "retrying completion");
                    tokio::time::sleep(Duration::from_millis(delay)).await;
                    attempt += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Arc;

    use axum::http::StatusCode;
    use axum::routing::post;
    use axum::{Json, Router};

    use super::*;
    use crate::gateway::Gateway;

    async fn spawn(router: Router) -> String {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
        format!("http://{addr}/v1")
    }

    fn config(base: String, attempts: u32) -> ProviderConfig {
        let mut cfg = ProviderConfig::remote(base, "test-model");
        cfg.retry = RetryConfig {
            max_attempts: attempts,
            base_delay_ms: 1,
        };
        cfg
    }

    #[tokio::test]
    async fn exhausts_retries_on_server_errors() {
        let hits = Arc::new(AtomicU32::new(0));
        let counter = hits.clone();
        let router = Router::new().route(
            "/v1/chat/completions",
            post(move || {
                let counter = counter.clone();
                async move {
                    counter.fetch_add(1, Ordering::SeqCst);
                    (StatusCode::INTERNAL_SERVER_ERROR, "down")
                }
            }),
        );
        let gw = Gateway::from_config(&config(spawn(router).await, 3)).unwrap();
        let err = gw
            .complete(&ChatRequest::new("t", 0.0).with_user("hi"))
            .await
            .unwrap_err();
        assert_eq!(
            err,
            GatewayError::Provider {
                status: 500,
                attempts: 3,
                body: "down".into()
            }
        );
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[tokio::test]
    async fn client_errors_are_not_retried() {
        let hits = Arc::new(AtomicU32::new(0));
        let counter = hits.clone();
        let router = Router::new().route(
            "/v1/chat/completions",
            post(move || {
                let counter = counter.clone();
                async move {
                    counter.fetch_add(1, Ordering::SeqCst);
                    (StatusCode::BAD_REQUEST, "bad")
                }
            }),
        );
        let gw = Gateway::from_config(&config(spawn(router).await, 3)).unwrap();
        let err = gw
            .complete(&ChatRequest::new("t", 0.0).with_user("hi"))
            .await
            .unwrap_err();
        assert!(matches!(err, GatewayError::Provider { status: 400, attempts: 1, .. }));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[tokio::test]
    async fn recovers_after_transient_failure_and_sends_openai_body() {
        let hits = Arc::new(AtomicU32::new(0));
        let counter = hits.clone();
        let router = Router::new().route(
            "/v1/chat/completions",
            post(move |Json(body): Json<serde_json::Value>| {
                let counter = counter.clone();
                async move {
                    if counter.fetch_add(1, Ordering::SeqCst) == 0 {
                        return Err(StatusCode::SERVICE_UNAVAILABLE);
                    }
                    assert_eq!(body["model"], "test-model");
                    assert_eq!(body["messages"][0]["role"], "system");
                    assert_eq!(body["messages"][1]["content"], "hi");
                    Ok(Json(json!({"choices": [{"message": {"role": "assistant", "content": "2"}}]})))
                }
            }),
        );
        let gw = Gateway::from_config(&config(spawn(router).await, 3)).unwrap();
        let req = ChatRequest::new("master", 0.0).with_system("sys").with_user("hi");
        assert_eq!(gw.complete(&req).await.unwrap(), "2");
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }

    #[tokio::test]
    async fn unreachable_host_is_transport_error() {
        let gw = Gateway::from_config(&config("http://127.0.0.1:1/v1".into(), 2)).unwrap();
        let err = gw
            .complete(&ChatRequest::new("t", 0.0).with_user("hi"))
            .await
            .unwrap_err();
        assert_eq!(err.kind(), "transport_error");
    }

    #[test]
    fn missing_auth_env_var_is_config_error() {
        let mut cfg = ProviderConfig::remote("http://localhost", "m");
        cfg.auth_env_var = Some("TEACHBENCH_TEST_SURELY_UNSET_VAR".into());
        assert!(matches!(RemoteProvider::new(&cfg), Err(GatewayError::Config(_))));
    }
}
