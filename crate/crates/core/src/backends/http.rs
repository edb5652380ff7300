//! Thin HTTP shims for a chat-completions style model endpoint and a JSON
//! search endpoint. Request/response translation is kept in pure functions.

use std::path::Path;
use std::time::Duration;

use chrono::NaiveDate;
use serde::Deserialize;
use serde_json::{json, Value};

use super::lm::{LanguageModel, LmRequest, LmResponse, Message, ToolCall};
use super::search::{SearchBackend, SearchRequest, SearchResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub key_var: String,
    pub timeout_secs: u64,
    pub max_concurrency: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            endpoint: String::new(),
            model: String::new(),
            key_var: String::new(),
            timeout_secs: 120,
            max_concurrency: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub lm: EndpointConfig,
    pub search: EndpointConfig,
}

impl ProviderConfig {
    /// Reads a TOML file (when given) and applies `LEAKAUDIT_*` overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => ProviderConfig::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok());
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        for (prefix, ep) in [("LEAKAUDIT_LM", &mut self.lm), ("LEAKAUDIT_SEARCH", &mut self.search)] {
            if let Some(v) = get(&format!("{prefix}_ENDPOINT")) {
                ep.endpoint = v;
            }
            if let Some(v) = get(&format!("{prefix}_MODEL")) {
                ep.model = v;
            }
            if let Some(v) = get(&format!("{prefix}_KEY_VAR")) {
                ep.key_var = v;
            }
            if let Some(v) = get(&format!("{prefix}_TIMEOUT_SECS")).and_then(|v| v.parse().ok()) {
                ep.timeout_secs = v;
            }
        }
    }
}

fn agent(timeout_secs: u64) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(timeout_secs)))
        .http_status_as_error(false)
        .build()
        .into()
}

fn api_key(cfg: &EndpointConfig) -> Result<Option<String>> {
    if cfg.key_var.is_empty() {
        return Ok(None);
    }
    std::env::var(&cfg.key_var)
        .map(Some)
        .map_err(|_| Error::Config(format!("environment variable {} is not set", cfg.key_var)))
}

fn post_json(agent: &ureq::Agent, cfg: &EndpointConfig, body: &Value) -> Result<Value> {
    let mut req = agent.post(&cfg.endpoint).header("content-type", "application/json");
    if let Some(key) = api_key(cfg)? {
        req = req.header("authorization", &format!("Bearer {key}"));
    }
    let mut resp = req
        .send_json(body)
        .map_err(|e| Error::Transport(e.to_string()))?;
    let status = resp.status().as_u16();
    if status == 429 {
        return Err(Error::RateLimit { attempts: 1 });
    }
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| Error::Transport(e.to_string()))?;
    if !(200..300).contains(&status) {
        return Err(Error::Transport(format!("HTTP {status}: {text}")));
    }
    serde_json::from_str(&text).map_err(|e| Error::Transport(format!("invalid JSON body: {e}")))
}

/// Chat-completions request body for `req`.
pub fn chat_body(model: &str, req: &LmRequest) -> Value {
    let mut messages = vec![json!({"role": "system", "content": req.system})];
    let mut call_seq = 0usize;
    let mut last_call_id = None;
    for m in &req.messages {
        match m {
            Message::User(u) => messages.push(json!({"role": "user", "content": u})),
            Message::Assistant(LmResponse::ToolCall(c)) => {
                let id = c.id.clone().unwrap_or_else(|| {
                    call_seq += 1;
                    format!("call_{call_seq}")
                });
                last_call_id = Some(id.clone());
                messages.push(json!({
                    "role": "assistant",
                    "content": null,
                    "tool_calls": [{
                        "id": id,
                        "type": "function",
                        "function": {"name": c.name, "arguments": c.arguments.to_string()},
                    }],
                }));
            }
            Message::Assistant(LmResponse::Text(t)) => {
                messages.push(json!({"role": "assistant", "content": t}))
            }
            Message::Assistant(LmResponse::Structured(v)) => {
                messages.push(json!({"role": "assistant", "content": v.to_string()}))
            }
            Message::ToolResult { call_id, content, .. } => messages.push(json!({
                "role": "tool",
                "tool_call_id": call_id.clone().or_else(|| last_call_id.clone()).unwrap_or_default(),
                "content": content.to_string(),
            })),
        }
    }
    let mut body = json!({
        "model": model,
        "messages": messages,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    });
    if !req.tools.is_empty() {
        body["tools"] = req
            .tools
            .iter()
            .map(|t| {
                json!({"type": "function", "function": {
                    "name": t.name, "description": t.description, "parameters": t.parameters,
                }})
            })
            .collect();
    }
    if req.json_output {
        body["response_format"] = json!({"type": "json_object"});
    }
    body
}

/// Interprets a chat-completions response body.
pub fn parse_chat_response(body: &Value, json_output: bool) -> Result<LmResponse> {
    let message = &body["choices"][0]["message"];
    if message.is_null() {
        return Err(Error::LlmProtocol(format!("no choices in response: {body}")));
    }
    if let Some(call) = message["tool_calls"].as_array().and_then(|a| a.first()) {
        let name = call["function"]["name"].as_str().unwrap_or_default().to_string();
        let raw = &call["function"]["arguments"];
        let arguments = match raw {
            Value::String(s) => serde_json::from_str(s)
                .map_err(|e| Error::LlmProtocol(format!("tool arguments are not JSON: {e}")))?,
            other => other.clone(),
        };
        return Ok(LmResponse::ToolCall(ToolCall {
            id: call["id"].as_str().map(String::from),
            name,
            arguments,
        }));
    }
    let text = message["content"].as_str().unwrap_or_default().to_string();
    if json_output {
        if let Ok(v) = serde_json::from_str::<Value>(&text) {
            return Ok(LmResponse::Structured(v));
        }
    }
    Ok(LmResponse::Text(text))
}

pub struct ChatCompletionsLm {
    cfg: EndpointConfig,
    agent: ureq::Agent,
}

impl ChatCompletionsLm {
    pub fn new(cfg: EndpointConfig) -> Result<Self> {
        if cfg.endpoint.is_empty() || cfg.model.is_empty() {
            return Err(Error::Config("model endpoint and model name are required".into()));
        }
        Ok(ChatCompletionsLm {
            agent: agent(cfg.timeout_secs),
            cfg,
        })
    }
}

impl LanguageModel for ChatCompletionsLm {
    fn complete(&self, request: &LmRequest) -> Result<LmResponse> {
        let body = chat_body(&self.cfg.model, request);
        let resp = post_json(&self.agent, &self.cfg, &body)?;
        parse_chat_response(&resp, request.json_output)
    }
}

/// Search request body: `{query, before_date, max_results}`.
pub fn search_body(model: &str, req: &SearchRequest) -> Value {
    let mut body = json!({
        "query": req.query,
        "before_date": req.before_date.map(|d| d.to_string()),
        "max_results": req.max_results,
    });
    if !model.is_empty() {
        body["model"] = json!(model);
    }
    body
}

/// Accepts `{"results": [...]}` or a bare array of `{url, title, snippet, publication_date}`.
/// Dates that do not parse as ISO days become `None`.
pub fn parse_search_response(body: &Value) -> Result<Vec<SearchResult>> {
    let items = body
        .get("results")
        .unwrap_or(body)
        .as_array()
        .ok_or_else(|| Error::SearchBackend(format!("unexpected search response: {body}")))?;
    Ok(items
        .iter()
        .map(|r| {
            let s = |k: &str| r[k].as_str().unwrap_or_default().to_string();
            SearchResult {
                url: s("url"),
                title: s("title"),
                snippet: s("snippet"),
                publication_date: r["publication_date"]
                    .as_str()
                    .and_then(|d| d.get(..10))
                    .and_then(|d| d.parse::<NaiveDate>().ok()),
            }
        })
        .collect())
}

pub struct HttpSearch {
    cfg: EndpointConfig,
    agent: ureq::Agent,
}

impl HttpSearch {
    pub fn new(cfg: EndpointConfig) -> Result<Self> {
        if cfg.endpoint.is_empty() {
            return Err(Error::Config("search endpoint is required".into()));
        }
        Ok(HttpSearch {
            agent: agent(cfg.timeout_secs),
            cfg,
        })
    }
}

impl SearchBackend for HttpSearch {
    fn search(&self, request: &SearchRequest) -> Result<Vec<SearchResult>> {
        let body = search_body(&self.cfg.model, request);
        let resp = post_json(&self.agent, &self.cfg, &body).map_err(|e| match e {
            Error::Transport(m) => Error::SearchBackend(m),
            other => other,
        })?;
        parse_search_response(&resp)
    }
}
