use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// A tool the model may call, with a JSON-schema parameter object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub name: String,
    pub arguments: Value,
}

impl ToolCall {
    pub fn new(name: impl Into<String>, arguments: Value) -> Self {
        ToolCall {
            id: None,
            name: name.into(),
            arguments,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LmResponse {
    Text(String),
    ToolCall(ToolCall),
    Structured(Value),
}

impl LmResponse {
    /// Best-effort JSON view: structured payloads and tool arguments as-is,
    /// text parsed after stripping code fences and leading prose.
    pub fn json(&self) -> Option<Value> {
        match self {
            LmResponse::Structured(v) => Some(v.clone()),
            LmResponse::ToolCall(c) => Some(c.arguments.clone()),
            LmResponse::Text(t) => json_from_text(t),
        }
    }

    pub fn tool_call(&self) -> Option<&ToolCall> {
        match self {
            LmResponse::ToolCall(c) => Some(c),
            _ => None,
        }
    }
}

fn json_from_text(text: &str) -> Option<Value> {
    let t = text.trim();
    if let Ok(v) = serde_json::from_str(t) {
        return Some(v);
    }
    let start = t.find(['[', '{'])?;
    let close = if t.as_bytes()[start] == b'[' { ']' } else { '}' };
    let end = t.rfind(close)?;
    (end > start)
        .then(|| serde_json::from_str(&t[start..=end]).ok())
        .flatten()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Message {
    User(String),
    Assistant(LmResponse),
    ToolResult {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        call_id: Option<String>,
        content: Value,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmRequest {
    /// Which pipeline step issued the request; used for logging and routing.
    pub purpose: String,
    pub system: String,
    pub messages: Vec<Message>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tools: Vec<ToolSpec>,
    /// Ask for a bare JSON document rather than prose.
    pub json_output: bool,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl LmRequest {
    pub fn new(purpose: impl Into<String>, system: impl Into<String>, user: impl Into<String>) -> Self {
        LmRequest {
            purpose: purpose.into(),
            system: system.into(),
            messages: vec![Message::User(user.into())],
            tools: Vec::new(),
            json_output: false,
            temperature: 0.0,
            max_tokens: 4000,
        }
    }

    pub fn json_output(mut self) -> Self {
        self.json_output = true;
        self
    }

    pub fn with_tools(mut self, tools: Vec<ToolSpec>) -> Self {
        self.tools = tools;
        self
    }

    /// All user turns joined with newlines.
    pub fn user_text(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            if let Message::User(u) = m {
                if !out.is_empty() {
                    out.push('\n');
                }
                out.push_str(u);
            }
        }
        out
    }

    /// The system text plus every message, as one string for substring checks.
    pub fn full_text(&self) -> String {
        let mut out = self.system.clone();
        for m in &self.messages {
            out.push('\n');
            match m {
                Message::User(u) => out.push_str(u),
                Message::Assistant(r) => out.push_str(&serde_json::to_string(r).unwrap_or_default()),
                Message::ToolResult { content, .. } => out.push_str(&content.to_string()),
            }
        }
        out
    }

    pub fn has_tool(&self, name: &str) -> bool {
        self.tools.iter().any(|t| t.name == name)
    }
}

pub trait LanguageModel: Send + Sync {
    fn complete(&self, request: &LmRequest) -> Result<LmResponse>;
}

impl<T: LanguageModel + ?Sized> LanguageModel for std::sync::Arc<T> {
    fn complete(&self, request: &LmRequest) -> Result<LmResponse> {
        (**self).complete(request)
    }
}

impl<T: LanguageModel + ?Sized> LanguageModel for &T {
    fn complete(&self, request: &LmRequest) -> Result<LmResponse> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CallPolicy {
    /// Re-requests after a response fails validation.
    pub schema_retries: u32,
    /// Total attempts when the provider reports rate limiting.
    pub rate_limit_attempts: u32,
    pub backoff: Duration,
}

impl Default for CallPolicy {
    fn default() -> Self {
        CallPolicy {
            schema_retries: 1,
            rate_limit_attempts: 4,
            backoff: Duration::from_millis(250),
        }
    }
}

/// Issues `request`, validating the reply with `parse`.
///
/// A rejected reply is fed back to the model together with the validation
/// message and the request is re-issued, up to `schema_retries` times.
pub fn lm_call<T>(
    llm: &dyn LanguageModel,
    request: LmRequest,
    schema_retries: u32,
    parse: impl FnMut(&LmResponse) -> std::result::Result<T, String>,
) -> Result<T> {
    let policy = CallPolicy {
        schema_retries,
        ..CallPolicy::default()
    };
    lm_call_with(llm, request, &policy, parse)
}

pub fn lm_call_with<T>(
    llm: &dyn LanguageModel,
    mut request: LmRequest,
    policy: &CallPolicy,
    mut parse: impl FnMut(&LmResponse) -> std::result::Result<T, String>,
) -> Result<T> {
    let mut last_problem = String::new();
    for attempt in 0..=policy.schema_retries {
        let response = complete_with_backoff(llm, &request, policy)?;
        match parse(&response) {
            Ok(v) => return Ok(v),
            Err(problem) => {
                log::debug!(
                    "{}: invalid response on attempt {}: {problem}",
                    request.purpose,
                    attempt + 1
                );
                request.messages.push(Message::Assistant(response));
                request.messages.push(Message::User(format!(
                    "Your previous response was invalid: {problem}. Respond again in the required format."
                )));
                last_problem = problem;
            }
        }
    }
    Err(Error::LlmProtocol(format!(
        "{}: no valid response after {} attempts: {last_problem}",
        request.purpose,
        policy.schema_retries + 1
    )))
}

pub(crate) fn complete_with_backoff(
    llm: &dyn LanguageModel,
    request: &LmRequest,
    policy: &CallPolicy,
) -> Result<LmResponse> {
    let attempts = policy.rate_limit_attempts.max(1);
    for attempt in 0..attempts {
        match llm.complete(request) {
            Err(Error::RateLimit { .. }) if attempt + 1 < attempts => {
                std::thread::sleep(policy.backoff * 2u32.pow(attempt));
            }
            Err(Error::RateLimit { .. }) => return Err(Error::RateLimit { attempts }),
            other => return other,
        }
    }
    unreachable!("loop returns on the final attempt")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{Matcher, Reply, ScriptedLm};
    use serde_json::json;

    #[test]
    fn json_from_fenced_text() {
        let r = LmResponse::Text("Sure:\n```json\n[{\"set\": 1, \"p\": 0.6}]\n```".into());
        assert_eq!(r.json().unwrap(), json!([{"set": 1, "p": 0.6}]));
        assert!(LmResponse::Text("no json here".into()).json().is_none());
    }

    #[test]
    fn malformed_then_valid_consumes_one_retry() {
        let lm = ScriptedLm::strict(vec![
            (Matcher::Any, LmResponse::Text("oops".into())),
            (Matcher::Any, LmResponse::Structured(json!({"x": 1}))),
        ]);
        let v = lm_call(&lm, LmRequest::new("t", "s", "u"), 2, |r| {
            r.json().ok_or_else(|| "not json".to_string())
        })
        .unwrap();
        assert_eq!(v, json!({"x": 1}));
        assert_eq!(lm.calls(), 2);
        // The retry carries the validation feedback.
        let second = &lm.requests()[1];
        assert!(second.user_text().contains("not json"));
    }

    #[test]
    fn exhausted_retries_are_a_protocol_error() {
        let lm = ScriptedLm::lenient(vec![]);
        let err = lm_call(&lm, LmRequest::new("t", "s", "u"), 1, |_| Err::<(), _>("bad".into()))
            .unwrap_err();
        assert!(matches!(err, Error::LlmProtocol(m) if m.contains("bad")));
        assert_eq!(lm.calls(), 2);
    }

    #[test]
    fn rate_limit_backs_off_then_succeeds() {
        let lm = ScriptedLm::from_steps(
            vec![
                (Matcher::Any, Reply::RateLimited),
                (Matcher::Any, Reply::Respond(LmResponse::Text("ok".into()))),
            ],
            true,
        );
        let policy = CallPolicy {
            backoff: Duration::from_millis(1),
            ..CallPolicy::default()
        };
        let out = lm_call_with(&lm, LmRequest::new("t", "s", "u"), &policy, |r| match r {
            LmResponse::Text(t) => Ok(t.clone()),
            _ => Err("text".into()),
        })
        .unwrap();
        assert_eq!(out, "ok");
    }

    #[test]
    fn temperature_defaults_to_zero() {
        assert_eq!(LmRequest::new("p", "s", "u").temperature, 0.0);
    }
}
