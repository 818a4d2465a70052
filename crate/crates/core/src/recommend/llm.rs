//! External chat-completion client and the structured reply grammar.
//!
//! Replies are untrusted. Only lines of the form
//!
//! ```text
//! ASK <field>: <question>
//! RECOMMEND <surface> <outlet> <gain> perf=<x> ux=<y>
//! ```
//!
//! are read; every other line is treated as reasoning and ignored.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::scoring::PrefField;

pub const ENDPOINT_ENV: &str = "VIBESENSE_LLM_ENDPOINT";
pub const MODEL_ENV: &str = "VIBESENSE_LLM_MODEL";
pub const DEFAULT_MODEL: &str = "default";

pub const SYSTEM_TEMPLATE: &str = include_str!("../../data/prompts/system.txt");
pub const GATHER_TEMPLATE: &str = include_str!("../../data/prompts/gather.txt");
pub const RECOMMEND_TEMPLATE: &str = include_str!("../../data/prompts/recommend.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: "assistant".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("endpoint returned status {0}")]
    Status(u16),
    #[error("unreadable response: {0}")]
    Response(String),
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;

    fn model(&self) -> &str {
        DEFAULT_MODEL
    }
}

/// POSTs `{model, system, messages}` as JSON. The reply text is taken from
/// `text`, `content`, `message.content` or `choices[0].message.content`.
pub struct HttpChatClient {
    endpoint: String,
    model: String,
    client: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(HttpChatClient {
            endpoint: endpoint.into(),
            model: model.into(),
            client,
        })
    }

    /// Built from the environment; `None` when no endpoint is configured.
    pub fn from_env() -> Option<Result<Self, LlmError>> {
        let endpoint = std::env::var(ENDPOINT_ENV).ok().filter(|e| !e.trim().is_empty())?;
        let model = std::env::var(MODEL_ENV).unwrap_or_else(|_| DEFAULT_MODEL.into());
        Some(HttpChatClient::new(endpoint, model))
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let resp = self
            .client
            .post(&self.endpoint)
            .json(request)
            .send()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(LlmError::Status(resp.status().as_u16()));
        }
        let body: serde_json::Value = resp.json().map_err(|e| LlmError::Response(e.to_string()))?;
        reply_text(&body).ok_or_else(|| LlmError::Response("no reply text field".into()))
    }

    fn model(&self) -> &str {
        &self.model
    }
}

pub fn reply_text(body: &serde_json::Value) -> Option<String> {
    let candidates = [
        body.get("text"),
        body.get("content"),
        body.pointer("/message/content"),
        body.pointer("/choices/0/message/content"),
    ];
    candidates
        .into_iter()
        .flatten()
        .find_map(|v| v.as_str().map(str::to_owned))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Directive {
    Ask { field: PrefField, question: String },
    Recommend { surface: String, outlet: String, gain: u32, perf: f64, ux: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("reply contains no directive")]
    Empty,
}

/// Extracts directives; a malformed directive line rejects the whole reply.
pub fn parse_reply(text: &str) -> Result<Vec<Directive>, GrammarError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let bad = |reason: String| GrammarError::Malformed { line: i + 1, reason };
        if let Some(rest) = line.strip_prefix("ASK ") {
            let (field, question) = rest.split_once(':').ok_or_else(|| bad("ASK without ':'".into()))?;
            let field = field.trim().parse::<PrefField>().map_err(bad)?;
            let question = question.trim();
            if question.is_empty() {
                return Err(bad("empty question".into()));
            }
            out.push(Directive::Ask { field, question: question.into() });
        } else if let Some(rest) = line.strip_prefix("RECOMMEND ") {
            let tokens: Vec<&str> = rest.split_whitespace().collect();
            let [surface, outlet, gain, perf, ux] = tokens[..] else {
                return Err(bad(format!("RECOMMEND needs 5 fields, got {}", tokens.len())));
            };
            let gain = gain.parse::<u32>().map_err(|_| bad(format!("bad gain '{gain}'")))?;
            let score = |tok: &str, key: &str| -> Result<f64, GrammarError> {
                tok.strip_prefix(key)
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("expected {key}<number>, got '{tok}'")))
            };
            out.push(Directive::Recommend {
                surface: surface.into(),
                outlet: outlet.into(),
                gain,
                perf: score(perf, "perf=")?,
                ux: score(ux, "ux=")?,
            });
        }
    }
    if out.is_empty() {
        Err(GrammarError::Empty)
    } else {
        Ok(out)
    }
}

/// Substitutes `{name}` placeholders.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    vars.iter()
        .fold(template.to_string(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reasoning_lines_are_ignored() {
        let reply = "The pillbox sits on the counter.\nASK tamper_risk: Does anyone tend to move devices around?\n";
        assert_eq!(
            parse_reply(reply).unwrap(),
            vec![Directive::Ask {
                field: PrefField::TamperRisk,
                question: "Does anyone tend to move devices around?".into()
            }]
        );
    }

    #[test]
    fn recommend_lines() {
        let d = parse_reply("RECOMMEND shelf o1 4 perf=0.7 ux=0.9\nRECOMMEND counter o1 2 perf=1.2 ux=0.1").unwrap();
        assert_eq!(d.len(), 2);
        assert!(matches!(&d[1], Directive::Recommend { perf, .. } if *perf == 1.2));
    }

    #[test]
    fn malformed_rejected() {
        assert!(matches!(parse_reply("ASK colour: which?"), Err(GrammarError::Malformed { line: 1, .. })));
        assert!(parse_reply("RECOMMEND shelf o1 x perf=1 ux=1").is_err());
        assert!(parse_reply("RECOMMEND shelf o1 2 perf=NaN ux=1").is_err());
        assert_eq!(parse_reply("just chatting"), Err(GrammarError::Empty));
    }

    #[test]
    fn reply_text_shapes() {
        let a = serde_json::json!({"choices": [{"message": {"content": "hi"}}]});
        let b = serde_json::json!({"text": "yo"});
        assert_eq!(reply_text(&a).as_deref(), Some("hi"));
        assert_eq!(reply_text(&b).as_deref(), Some("yo"));
        assert_eq!(reply_text(&serde_json::json!({})), None);
    }

    #[test]
    fn templates_have_placeholders() {
        assert!(SYSTEM_TEMPLATE.contains("{site}"));
        assert!(GATHER_TEMPLATE.contains("{missing}"));
        assert!(RECOMMEND_TEMPLATE.contains("{candidates}"));
        assert_eq!(render("a {x} b", &[("x", "1")]), "a 1 b");
    }
}
