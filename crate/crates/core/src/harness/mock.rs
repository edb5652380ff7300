//! A deterministic stand-in language model driven by a scripted world file.
//!
//! The model recognises each pipeline prompt by its system text and answers
//! from per-instance scripts: which claims each agent's rationale contains,
//! what each claim contributes to a prediction, and which queries the search
//! agents issue. Nothing is remembered between calls.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::agents::{
    instantiation, TaskKind, SEARCH_TOOL, SUBMIT_DRAFT_TOOL, SUBMIT_FINAL_TOOL, SUBMIT_PREDICTION_TOOL,
};
use crate::backends::{LanguageModel, LmRequest, LmResponse, Message, ToolCall};
use crate::claims::{parse_temporal_reference, timeless_sentinel, ClaimCategory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
pub struct MockClaim {
    pub text: String,
    pub category: ClaimCategory,
    #[serde(default)]
    pub reference: Option<String>,
    /// Shift of the prediction when the claim is present (probability or USD).
    #[serde(default)]
    pub weight: f64,
    /// Per-ticker score contributions (ranking tasks).
    #[serde(default)]
    pub ticker_weights: BTreeMap<String, f64>,
    /// Date-seeking query used during verification.
    #[serde(default)]
    pub query: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct MockAnswer {
    pub prediction: Value,
    pub claims: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct MockTimespec {
    pub queries: Vec<String>,
    pub draft: MockAnswer,
    #[serde(default)]
    pub regen_queries: Vec<String>,
    #[serde(default)]
    pub regenerated: Option<MockAnswer>,
    #[serde(rename = "final")]
    pub final_prediction: Value,
}

#[derive(Debug, Clone, Deserialize)]
pub struct MockInstance {
    pub instance_id: String,
    /// Text that identifies the instance inside any prompt about it.
    #[serde(rename = "match")]
    pub match_text: String,
    pub task: TaskKind,
    #[serde(default)]
    pub median: Option<f64>,
    #[serde(default)]
    pub tickers: Vec<String>,
    pub claims: BTreeMap<String, MockClaim>,
    pub superforecast: MockAnswer,
    #[serde(rename = "temporal-hint")]
    pub temporal_hint: MockAnswer,
    pub timespec: MockTimespec,
}

#[derive(Debug, Clone, Deserialize)]
pub struct MockWorld {
    pub instances: Vec<MockInstance>,
}

impl MockWorld {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let world: MockWorld = serde_json::from_str(&text)?;
        world.validate()?;
        Ok(world)
    }

    fn validate(&self) -> Result<()> {
        for inst in &self.instances {
            let answers = [&inst.superforecast, &inst.temporal_hint, &inst.timespec.draft]
                .into_iter()
                .chain(inst.timespec.regenerated.as_ref());
            for a in answers {
                if let Some(k) = a.claims.iter().find(|k| !inst.claims.contains_key(*k)) {
                    return Err(Error::Config(format!("{}: unknown claim key {k:?}", inst.instance_id)));
                }
            }
        }
        Ok(())
    }
}

const PADDING: [&str; 8] = [
    "The analysis weighs these considerations against one another rather than relying on any single factor.",
    "Each of the points above bears on the question in a different direction and with different strength.",
    "Uncertainty remains substantial, so the estimate should be read as a calibrated judgment rather than a certainty.",
    "Where the evidence conflicts, more specific and more recent information is given greater weight.",
    "Historical base rates for comparable situations provide a useful anchor for the final judgment.",
    "Structural factors are treated as more durable than short-term signals in forming this view.",
    "The reasoning deliberately avoids relying on any single source of information.",
    "Alternative scenarios were considered and judged less likely on the available evidence.",
];

pub struct MockWorldLm {
    world: MockWorld,
}

impl MockWorldLm {
    pub fn new(world: MockWorld) -> Self {
        MockWorldLm { world }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::new(MockWorld::load(path)?))
    }

    fn instance_for(&self, text: &str) -> Result<&MockInstance> {
        self.world
            .instances
            .iter()
            .find(|i| text.contains(&i.match_text))
            .ok_or_else(|| Error::LlmProtocol("mock world: no scripted instance matches the prompt".into()))
    }

    fn claim_by_text(&self, text: &str) -> Option<(&MockInstance, &MockClaim)> {
        self.world
            .instances
            .iter()
            .find_map(|i| i.claims.values().find(|c| c.text == text).map(|c| (i, c)))
    }
}

fn format_value(task: TaskKind, v: &Value) -> String {
    match task {
        TaskKind::Legal => format!("I estimate the probability that the petitioner prevails at {}.", v),
        TaskKind::Salary => format!("The projected annual salary is {} USD.", v.as_f64().unwrap_or(0.0).round() as u64),
        TaskKind::Stock => {
            let items: Vec<&str> = v.as_array().map(|a| a.iter().filter_map(Value::as_str).collect()).unwrap_or_default();
            format!("Final ranking from best to worst: {}.", items.join(" > "))
        }
    }
}

fn rationale(task: TaskKind, texts: &[&str], prediction: &Value) -> String {
    let min = instantiation(task).min_chars;
    let mut parts: Vec<String> = texts.iter().map(|t| t.to_string()).collect();
    let conclusion = format_value(task, prediction);
    let mut pad = PADDING.iter().cycle();
    while parts.iter().map(|p| p.len() + 1).sum::<usize>() + conclusion.len() < min + 20 {
        parts.push(pad.next().expect("cycle").to_string());
    }
    parts.push(conclusion);
    parts.join(" ")
}

fn submit(name: &str, task: TaskKind, value: &Value, rationale: String, n: usize) -> LmResponse {
    let args = match (name, task) {
        (SUBMIT_PREDICTION_TOOL, TaskKind::Legal) => {
            json!({"probability_petitioner": value, "prediction_rationale": rationale})
        }
        (SUBMIT_PREDICTION_TOOL, TaskKind::Salary) => json!({"predicted_salary": value, "prediction_rationale": rationale}),
        (SUBMIT_PREDICTION_TOOL, TaskKind::Stock) => json!({"ranking": value, "ranking_rationale": rationale}),
        _ => json!({"prediction": value, "rationale": rationale}),
    };
    let mut call = ToolCall::new(name, args);
    call.id = Some(format!("call_{n}"));
    LmResponse::ToolCall(call)
}

fn section<'a>(text: &'a str, start: &str, end: &str) -> &'a str {
    let from = text.find(start).map_or(0, |i| i + start.len());
    let rest = &text[from..];
    let to = rest.find(end).unwrap_or(rest.len());
    &rest[..to]
}

impl MockWorldLm {
    fn answer_texts<'a>(inst: &'a MockInstance, answer: &MockAnswer) -> Vec<&'a str> {
        answer.claims.iter().map(|k| inst.claims[k].text.as_str()).collect()
    }

    fn baseline(&self, req: &LmRequest, hint: bool) -> Result<LmResponse> {
        let inst = self.instance_for(&req.user_text())?;
        let answer = if hint { &inst.temporal_hint } else { &inst.superforecast };
        let text = rationale(inst.task, &Self::answer_texts(inst, answer), &answer.prediction);
        Ok(submit(SUBMIT_PREDICTION_TOOL, inst.task, &answer.prediction, text, 0))
    }

    fn search_loop(&self, req: &LmRequest, queries: &[String], answer: &MockAnswer) -> Result<LmResponse> {
        let inst = self.instance_for(&req.user_text())?;
        let issued = req
            .messages
            .iter()
            .filter(|m| matches!(m, Message::ToolResult { name, content, .. } if name == SEARCH_TOOL && content.get("error").is_none()))
            .count();
        let turn = req.messages.len();
        if req.has_tool(SEARCH_TOOL) && issued < queries.len() {
            let mut call = ToolCall::new(SEARCH_TOOL, json!({"query": queries[issued], "purpose": "gather evidence"}));
            call.id = Some(format!("call_{turn}"));
            return Ok(LmResponse::ToolCall(call));
        }
        let text = rationale(inst.task, &Self::answer_texts(inst, answer), &answer.prediction);
        Ok(submit(SUBMIT_DRAFT_TOOL, inst.task, &answer.prediction, text, turn))
    }

    fn generator(&self, req: &LmRequest) -> Result<LmResponse> {
        let inst = self.instance_for(&req.user_text())?;
        self.search_loop(req, &inst.timespec.queries, &inst.timespec.draft)
    }

    fn regenerator(&self, req: &LmRequest) -> Result<LmResponse> {
        let inst = self.instance_for(&req.user_text())?;
        let answer = inst.timespec.regenerated.as_ref().unwrap_or(&inst.timespec.draft);
        self.search_loop(req, &inst.timespec.regen_queries, answer)
    }

    fn aggregator(&self, req: &LmRequest) -> Result<LmResponse> {
        let user = req.user_text();
        let inst = self.instance_for(&user)?;
        let listed = section(&user, "## VALIDATED CLAIMS", "\n\nSynthesize");
        let texts: Vec<&str> = inst
            .claims
            .values()
            .filter(|c| listed.contains(&format!("] {} (verified:", c.text)))
            .map(|c| c.text.as_str())
            .collect();
        let text = rationale(inst.task, &texts, &inst.timespec.final_prediction);
        Ok(submit(SUBMIT_FINAL_TOOL, inst.task, &inst.timespec.final_prediction, text, 0))
    }

    fn extraction(&self, req: &LmRequest) -> Result<LmResponse> {
        let user = req.user_text();
        let inst = self.instance_for(&user)?;
        let body = section(&user, "RATIONALE TO ANALYZE:", "\u{0}");
        let mut found: Vec<(usize, &MockClaim)> =
            inst.claims.values().filter_map(|c| body.find(&c.text).map(|p| (p, c))).collect();
        found.sort_by_key(|(p, _)| *p);
        let claims: Vec<Value> = found
            .iter()
            .enumerate()
            .map(|(i, (_, c))| {
                json!({
                    "claim_id": i + 1,
                    "claim_text": c.text,
                    "original_text": c.text,
                    "temporal_reference": c.reference,
                    "claim_category": c.category.as_str(),
                    "category_reasoning": format!("scripted as {}", c.category.label()),
                })
            })
            .collect();
        Ok(LmResponse::Text(json!({ "claims": claims }).to_string()))
    }

    fn shapley_batch(&self, req: &LmRequest) -> Result<LmResponse> {
        let user = req.user_text();
        let inst = self.instance_for(&user)?;
        let mut by_id: BTreeMap<u32, &MockClaim> = BTreeMap::new();
        let mut sets: Vec<(u64, Vec<u32>)> = Vec::new();
        for line in user.lines() {
            if let Some(rest) = line.strip_prefix('[') {
                if let Some((id, text)) = rest.split_once("] ") {
                    if let (Ok(id), Some(c)) = (id.parse::<u32>(), inst.claims.values().find(|c| c.text == text)) {
                        by_id.insert(id, c);
                    }
                }
            } else if let Some(rest) = line.strip_prefix("SET ") {
                let (k, ids) = rest.split_once(": ").ok_or_else(|| Error::LlmProtocol("bad SET line".into()))?;
                let ids = section(ids, "[", "]");
                let members = ids.split(',').filter_map(|s| s.trim().parse().ok()).collect();
                sets.push((k.parse().map_err(|_| Error::LlmProtocol("bad SET index".into()))?, members));
            }
        }
        let out: Vec<Value> = sets
            .iter()
            .map(|(k, ids)| {
                let present: Vec<&MockClaim> = ids.iter().filter_map(|i| by_id.get(i).copied()).collect();
                match inst.task {
                    TaskKind::Legal => {
                        let p = (0.5 + present.iter().map(|c| c.weight).sum::<f64>()).clamp(0.01, 0.99);
                        json!({"set": k, "p": (p * 1e6).round() / 1e6})
                    }
                    TaskKind::Salary => {
                        let v = inst.median.unwrap_or(0.0) + present.iter().map(|c| c.weight).sum::<f64>();
                        json!({"set": k, "value": v.max(0.0)})
                    }
                    TaskKind::Stock => json!({"set": k, "ranking": rank(inst, &present)}),
                }
            })
            .collect();
        Ok(LmResponse::Text(Value::Array(out).to_string()))
    }

    fn query_generation(&self, req: &LmRequest) -> Result<LmResponse> {
        let user = req.user_text();
        let claims: Value = serde_json::from_str(section(&user, "CLAIMS TO VERIFY:\n", "\n\nQUERY RULES"))
            .map_err(|e| Error::LlmProtocol(format!("mock world: unreadable claims json: {e}")))?;
        let out: Vec<Value> = claims
            .as_array()
            .into_iter()
            .flatten()
            .map(|c| {
                let text = c["claim"].as_str().unwrap_or_default();
                let query = self
                    .claim_by_text(text)
                    .and_then(|(_, m)| m.query.clone())
                    .unwrap_or_else(|| format!("{text} date"));
                json!({"index": c["index"], "query": query})
            })
            .collect();
        Ok(LmResponse::Text(Value::Array(out).to_string()))
    }

    fn date_extraction(&self, req: &LmRequest) -> Result<LmResponse> {
        let user = req.user_text();
        let data: Value = serde_json::from_str(section(&user, "CLAIMS WITH SEARCH RESULTS:\n", "\n\nKEY PRINCIPLES"))
            .map_err(|e| Error::LlmProtocol(format!("mock world: unreadable extraction json: {e}")))?;
        let out: Vec<Value> = data
            .as_array()
            .into_iter()
            .flatten()
            .map(|entry| {
                let text = entry["claim"].as_str().unwrap_or_default();
                let timeless = self
                    .claim_by_text(text)
                    .and_then(|(_, c)| c.reference.as_deref())
                    .and_then(|r| parse_temporal_reference(r).ok())
                    .is_some_and(|t| t.is_timeless());
                let results = entry["search_results"].as_array().cloned().unwrap_or_default();
                let marked = results
                    .iter()
                    .filter_map(|r| r["snippet"].as_str())
                    .filter_map(|s| s.split("Event date: ").nth(1))
                    .filter_map(|s| s.get(..10))
                    .filter_map(|s| s.parse::<NaiveDate>().ok())
                    .min();
                let published = results
                    .iter()
                    .filter_map(|r| r["publication_date"].as_str())
                    .filter_map(|s| s.parse::<NaiveDate>().ok())
                    .min();
                let (date, confidence, why) = if timeless {
                    (Some(timeless_sentinel()), "high", "timeless principle")
                } else if let Some(d) = marked {
                    (Some(d), "high", "event date stated in results")
                } else if let Some(d) = published {
                    (Some(d), "medium", "earliest report of the event")
                } else {
                    (None, "none", "no evidence")
                };
                json!({
                    "index": entry["index"],
                    "event_date": date.map(|d| d.to_string()),
                    "confidence": confidence,
                    "reasoning": why,
                })
            })
            .collect();
        Ok(LmResponse::Text(Value::Array(out).to_string()))
    }

    fn faithfulness(&self, req: &LmRequest) -> Result<LmResponse> {
        let user = req.user_text();
        let inst = self.instance_for(&user)?;
        let body = section(&user, "REASONING:\n", "\u{0}");
        let present: Vec<&MockClaim> = inst.claims.values().filter(|c| body.contains(&c.text)).collect();
        let prediction = match inst.task {
            TaskKind::Legal => {
                let p = (0.5 + present.iter().map(|c| c.weight).sum::<f64>()).clamp(0.01, 0.99);
                json!((p * 1e6).round() / 1e6)
            }
            TaskKind::Salary => json!(inst.median.unwrap_or(0.0) + present.iter().map(|c| c.weight).sum::<f64>()),
            TaskKind::Stock => json!(rank(inst, &present)),
        };
        Ok(LmResponse::Text(json!({ "prediction": prediction }).to_string()))
    }
}

/// Tickers by summed claim score, best first; ties keep input order.
fn rank(inst: &MockInstance, present: &[&MockClaim]) -> Vec<String> {
    let score = |t: &String| present.iter().filter_map(|c| c.ticker_weights.get(t)).sum::<f64>();
    let mut order: Vec<(usize, &String)> = inst.tickers.iter().enumerate().collect();
    order.sort_by(|(i, a), (j, b)| score(b).total_cmp(&score(a)).then(i.cmp(j)));
    order.into_iter().map(|(_, t)| t.clone()).collect()
}

impl LanguageModel for MockWorldLm {
    fn complete(&self, req: &LmRequest) -> Result<LmResponse> {
        let s = req.system.as_str();
        if s.starts_with("CRITICAL TEMPORAL CONSTRAINT") {
            self.baseline(req, true)
        } else if s.contains("with access to search tools") {
            self.generator(req)
        } else if s.starts_with("You are analyst regenerating") {
            self.regenerator(req)
        } else if s.starts_with("You are analyst performing final synthesis") {
            self.aggregator(req)
        } else if s.starts_with("You are ") {
            self.baseline(req, false)
        } else if s.starts_with("Extract all factual claims") {
            self.extraction(req)
        } else if s.starts_with("Output predictions as JSON array") {
            self.shapley_batch(req)
        } else if s.starts_with("Generate search queries") {
            self.query_generation(req)
        } else if s.starts_with("Determine when information became publicly available") {
            self.date_extraction(req)
        } else if s.starts_with("Re-predict from the task input") {
            self.faithfulness(req)
        } else {
            Err(Error::LlmProtocol(format!("mock world: unrecognised prompt for {}", req.purpose)))
        }
    }
}
