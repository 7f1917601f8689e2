#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde_json::{json, Value};
use teachbench_core::gateway::{ChatProvider, ChatRequest, Gateway, GatewayError, Gateways, Script, ScriptedProvider};
use teachbench_core::store::Store;
use teachbench_core::student::SimSettings;
use teachbench_server::{router, AppState};

pub const DEMO_SCRIPT: &str = include_str!("../../../../fixtures/demo_script.json");

pub fn demo_script() -> Script {
    Script::parse(DEMO_SCRIPT).unwrap()
}

pub fn demo_gateways() -> Gateways {
    Gateways::shared(Gateway::scripted(demo_script()))
}

/// Demo script behind a fixed delay per call.
pub struct Slow {
    inner: ScriptedProvider,
    delay: Duration,
}

#[async_trait]
impl ChatProvider for Slow {
    async fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        tokio::time::sleep(self.delay).await;
        self.inner.answer(request)
    }
}

pub fn slow_gateways(delay_ms: u64) -> Gateways {
    Gateways::shared(Gateway::new(Arc::new(Slow {
        inner: ScriptedProvider::new(demo_script()),
        delay: Duration::from_millis(delay_ms),
    })))
}

pub struct Server {
    pub base: String,
    pub client: reqwest::Client,
    pub token: Option<String>,
}

pub async fn spawn(state: AppState) -> Server {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router(state)).await.unwrap();
    });
    Server {
        base: format!("http://{addr}"),
        client: reqwest::Client::new(),
        token: None,
    }
}

pub async fn spawn_with(root: &Path, gateways: Gateways) -> Server {
    let state = AppState::new(Store::open(root).unwrap(), gateways, SimSettings::default());
    spawn(state).await
}

impl Server {
    fn req(&self, method: reqwest::Method, path: &str) -> reqwest::RequestBuilder {
        let r = self.client.request(method, format!("{}{}", self.base, path));
        match &self.token {
            Some(t) => r.bearer_auth(t),
            None => r,
        }
    }

    pub async fn call(&self, method: reqwest::Method, path: &str, body: Option<Value>) -> (u16, Value) {
        let mut r = self.req(method, path);
        if let Some(b) = body {
            r = r.json(&b);
        }
        let resp = r.send().await.unwrap();
        let status = resp.status().as_u16();
        let text = resp.text().await.unwrap();
        let value = if text.is_empty() {
            Value::Null
        } else {
            serde_json::from_str(&text).unwrap_or(Value::String(text))
        };
        (status, value)
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        self.call(reqwest::Method::GET, path, None).await
    }

    pub async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        self.call(reqwest::Method::POST, path, Some(body)).await
    }

    pub async fn put(&self, path: &str, body: Value) -> (u16, Value) {
        self.call(reqwest::Method::PUT, path, Some(body)).await
    }

    pub async fn delete(&self, path: &str) -> (u16, Value) {
        self.call(reqwest::Method::DELETE, path, None).await
    }

    pub async fn raw_post(&self, path: &str, body: &str) -> (u16, Value) {
        let resp = self
            .req(reqwest::Method::POST, path)
            .header("content-type", "application/json")
            .body(body.to_string())
            .send()
            .await
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    /// Runs a batch over SSE and returns `(event, data)` pairs in arrival order.
    pub async fn batch_events(&self, session: &str) -> (u16, Vec<(String, Value)>) {
        let resp = self
            .req(reqwest::Method::POST, &format!("/sessions/{session}/batch"))
            .send()
            .await
            .unwrap();
        let status = resp.status().as_u16();
        let text = resp.text().await.unwrap();
        if status != 200 {
            return (status, vec![("error".into(), serde_json::from_str(&text).unwrap())]);
        }
        (status, parse_sse(&text))
    }

    /// Project with one ready-to-simulate profile `s1`.
    pub async fn project_with_profile(&self, id: &str) {
        let (s, _) = self.post("/projects", json!({"id": id, "name": "Demo"})).await;
        assert_eq!(s, 201);
        let (s, _) = self.post(&format!("/projects/{id}/profiles"), profile_json("s1")).await;
        assert_eq!(s, 201);
        let (s, _) = self.post(&format!("/projects/{id}/profiles/s1/overview"), json!({})).await;
        assert_eq!(s, 200);
    }

    pub async fn automated_session(&self, project: &str) -> String {
        let (s, v) = self
            .post(
                "/sessions",
                json!({"project_id": project, "mode": "automated", "profile_id": "s1"}),
            )
            .await;
        assert_eq!(s, 201, "{v}");
        v["id"].as_str().unwrap().to_string()
    }
}

pub fn parse_sse(text: &str) -> Vec<(String, Value)> {
    let mut out = Vec::new();
    for block in text.split("\n\n") {
        let mut event = None;
        let mut data = String::new();
        for line in block.lines() {
            if let Some(e) = line.strip_prefix("event:") {
                event = Some(e.trim().to_string());
            } else if let Some(d) = line.strip_prefix("data:") {
                data.push_str(d.trim_start());
            }
        }
        if let Some(e) = event {
            out.push((e, serde_json::from_str(&data).unwrap()));
        }
    }
    out
}

pub fn profile_json(id: &str) -> Value {
    json!({
        "id": id,
        "name": "Mina",
        "initial_knowledge": [true, false, false, false, false, false],
        "ratings": {
            "goal_commitment": [3, 3, 3],
            "motivation": [5, 5, 5],
            "self_efficacy": [1, 1, 1],
            "stress": [3, 3, 3]
        },
        "pipeline": "ours"
    })
}
