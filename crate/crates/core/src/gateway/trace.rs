use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::Serialize;

use super::{ChatMessage, ChatRequest, GatewayError};

const EXCERPT_CHARS: usize = 400;

/// One request/completion exchange.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub seq: u64,
    pub tag: String,
    pub temperature: f32,
    pub system: Option<String>,
    pub messages: Vec<ChatMessage>,
    pub completion: Option<String>,
    pub error: Option<String>,
    pub latency_ms: u64,
}

#[derive(Serialize)]
struct JsonLine<'a> {
    seq: u64,
    tag: &'a str,
    temperature: f32,
    latency_ms: u64,
    request: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    completion: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

fn excerpt(text: &str) -> String {
    if text.chars().count() <= EXCERPT_CHARS {
        text.to_string()
    } else {
        let mut s: String = text.chars().take(EXCERPT_CHARS).collect();
        s.push('…');
        s
    }
}

/// Append-only record of every gateway call.
///
/// Entries are kept in memory in full; the optional JSON-lines sink gets
/// truncated excerpts.
#[derive(Default)]
pub struct TraceLog {
    entries: Mutex<Vec<TraceEntry>>,
    sink: Mutex<Option<BufWriter<File>>>,
}

impl TraceLog {
    /// Log that also appends JSON lines to `path`.
    pub fn with_file(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            entries: Mutex::default(),
            sink: Mutex::new(Some(BufWriter::new(file))),
        })
    }

    pub(super) fn record(
        &self,
        request: &ChatRequest,
        result: &Result<String, GatewayError>,
        latency: Duration,
    ) {
        let mut entries = self.entries.lock().expect("trace lock poisoned");
        let entry = TraceEntry {
            seq: entries.len() as u64,
            tag: request.tag.clone(),
            temperature: request.temperature,
            system: request.system.clone(),
            messages: request.messages.clone(),
            completion: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(|e| e.to_string()),
            latency_ms: latency.as_millis() as u64,
        };
        if let Some(sink) = self.sink.lock().expect("trace sink poisoned").as_mut() {
            let line = JsonLine {
                seq: entry.seq,
                tag: &entry.tag,
                temperature: entry.temperature,
                latency_ms: entry.latency_ms,
                request: excerpt(&request.render()),
                completion: entry.completion.as_deref().map(excerpt),
                error: entry.error.as_deref(),
            };
            if let Ok(json) = serde_json::to_string(&line) {
                let _ = writeln!(sink, "{json}").and_then(|_| sink.flush());
            }
        }
        entries.push(entry);
    }

    pub fn entries(&self) -> Vec<TraceEntry> {
        self.entries.lock().expect("trace lock poisoned").clone()
    }

    pub fn with_tag(&self, tag: &str) -> Vec<TraceEntry> {
        self.entries
            .lock()
            .expect("trace lock poisoned")
            .iter()
            .filter(|e| e.tag == tag)
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("trace lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
