use std::collections::HashSet;
use std::path::Path;
use std::sync::Mutex;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{ChatProvider, ChatRequest, GatewayError};

/// Request predicate. Absent fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matcher {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    /// Substring of the rendered request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
}

impl Matcher {
    pub fn any() -> Self {
        Self::default()
    }

    pub fn tag(tag: impl Into<String>) -> Self {
        Self {
            tag: Some(tag.into()),
            contains: None,
        }
    }

    pub fn contains(text: impl Into<String>) -> Self {
        Self {
            tag: None,
            contains: Some(text.into()),
        }
    }

    pub fn and_contains(mut self, text: impl Into<String>) -> Self {
        self.contains = Some(text.into());
        self
    }

    fn matches(&self, request: &ChatRequest, rendered: &str) -> bool {
        self.tag.as_deref().is_none_or(|t| t == request.tag)
            && self.contains.as_deref().is_none_or(|c| rendered.contains(c))
    }
}

/// One scripted reply. Exactly one of `response` and `error` is set; `error`
/// makes the rule fail like an HTTP 500 from a real backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(rename = "match", default)]
    pub matcher: Matcher,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Rule fires at most once per provider instance.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub consume_once: bool,
}

impl ScriptRule {
    pub fn reply(matcher: Matcher, response: impl Into<String>) -> Self {
        Self {
            matcher,
            response: Some(response.into()),
            error: None,
            consume_once: false,
        }
    }

    pub fn fail(matcher: Matcher, error: impl Into<String>) -> Self {
        Self {
            matcher,
            response: None,
            error: Some(error.into()),
            consume_once: false,
        }
    }

    pub fn once(mut self) -> Self {
        self.consume_once = true;
        self
    }
}

/// Ordered rule list, stored on disk as a JSON array.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Script {
    pub rules: Vec<ScriptRule>,
}

impl Script {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        Self { rules }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        for (i, r) in self.rules.iter().enumerate() {
            if r.response.is_some() == r.error.is_some() {
                return Err(GatewayError::Config(format!(
                    "script rule {i} needs exactly one of response or error"
                )));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        let script: Script =
            serde_json::from_str(text).map_err(|e| GatewayError::Config(format!("script: {e}")))?;
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Offline provider: the first rule (in file order) whose matcher accepts
/// the request supplies the completion.
pub struct ScriptedProvider {
    script: Script,
    consumed: Mutex<HashSet<usize>>,
}

impl ScriptedProvider {
    pub fn new(script: Script) -> Self {
        Self {
            script,
            consumed: Mutex::new(HashSet::new()),
        }
    }

    /// Resolves a request without the async wrapper.
    pub fn answer(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let rendered = request.render();
        let mut consumed = self.consumed.lock().expect("script lock poisoned");
        for (i, rule) in self.script.rules.iter().enumerate() {
            if rule.consume_once && consumed.contains(&i) {
                continue;
            }
            if !rule.matcher.matches(request, &rendered) {
                continue;
            }
            if rule.consume_once {
                consumed.insert(i);
            }
            return match (&rule.response, &rule.error) {
                (Some(text), _) => Ok(text.clone()),
                (None, Some(err)) => Err(GatewayError::Provider {
                    status: 500,
                    attempts: 1,
                    body: err.clone(),
                }),
                (None, None) => Err(GatewayError::Config(format!("script rule {i} is empty"))),
            };
        }
        Err(GatewayError::ScriptMiss {
            tag: request.tag.clone(),
        })
    }
}

#[async_trait]
impl ChatProvider for ScriptedProvider {
    async fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        self.answer(request)
    }
}
