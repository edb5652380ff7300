use parking_lot::Mutex;

use super::lm::{LanguageModel, LmRequest, LmResponse};
use crate::error::{Error, Result};

/// Which requests a script step answers.
#[derive(Debug, Clone)]
pub enum Matcher {
    Any,
    Purpose(String),
    SystemContains(String),
    UserContains(String),
    All(Vec<Matcher>),
}

impl Matcher {
    pub fn matches(&self, req: &LmRequest) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::Purpose(p) => req.purpose == *p,
            Matcher::SystemContains(s) => req.system.contains(s.as_str()),
            Matcher::UserContains(s) => req.user_text().contains(s.as_str()),
            Matcher::All(ms) => ms.iter().all(|m| m.matches(req)),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Reply {
    Respond(LmResponse),
    RateLimited,
    TransportFailure(String),
}

#[derive(Debug)]
struct Step {
    matcher: Matcher,
    reply: Reply,
    consumed: bool,
}

#[derive(Debug, Default)]
struct State {
    steps: Vec<Step>,
    calls: usize,
    requests: Vec<LmRequest>,
}

/// Deterministic model replaying canned responses.
///
/// Each request consumes the first unconsumed step whose matcher accepts it.
/// In strict mode an unmatched request is an error; otherwise it gets an
/// empty text reply.
#[derive(Debug)]
pub struct ScriptedLm {
    state: Mutex<State>,
    strict: bool,
}

impl ScriptedLm {
    pub fn strict(script: Vec<(Matcher, LmResponse)>) -> Self {
        Self::from_responses(script, true)
    }

    pub fn lenient(script: Vec<(Matcher, LmResponse)>) -> Self {
        Self::from_responses(script, false)
    }

    fn from_responses(script: Vec<(Matcher, LmResponse)>, strict: bool) -> Self {
        Self::from_steps(
            script.into_iter().map(|(m, r)| (m, Reply::Respond(r))).collect(),
            strict,
        )
    }

    pub fn from_steps(script: Vec<(Matcher, Reply)>, strict: bool) -> Self {
        let steps = script
            .into_iter()
            .map(|(matcher, reply)| Step {
                matcher,
                reply,
                consumed: false,
            })
            .collect();
        ScriptedLm {
            state: Mutex::new(State {
                steps,
                ..State::default()
            }),
            strict,
        }
    }

    pub fn push(&self, matcher: Matcher, response: LmResponse) {
        self.state.lock().steps.push(Step {
            matcher,
            reply: Reply::Respond(response),
            consumed: false,
        });
    }

    /// Number of `complete` invocations, matched or not.
    pub fn calls(&self) -> usize {
        self.state.lock().calls
    }

    pub fn consumed(&self) -> usize {
        self.state.lock().steps.iter().filter(|s| s.consumed).count()
    }

    pub fn remaining(&self) -> usize {
        self.state.lock().steps.iter().filter(|s| !s.consumed).count()
    }

    /// Every request received, in arrival order.
    pub fn requests(&self) -> Vec<LmRequest> {
        self.state.lock().requests.clone()
    }
}

impl LanguageModel for ScriptedLm {
    fn complete(&self, request: &LmRequest) -> Result<LmResponse> {
        let mut state = self.state.lock();
        state.calls += 1;
        state.requests.push(request.clone());
        let step = state
            .steps
            .iter_mut()
            .find(|s| !s.consumed && s.matcher.matches(request));
        match step {
            Some(step) => {
                step.consumed = true;
                match &step.reply {
                    Reply::Respond(r) => Ok(r.clone()),
                    Reply::RateLimited => Err(Error::RateLimit { attempts: 1 }),
                    Reply::TransportFailure(m) => Err(Error::Transport(m.clone())),
                }
            }
            None if self.strict => {
                let user = request.user_text();
                let head: String = user.chars().take(120).collect();
                Err(Error::LlmProtocol(format!(
                    "scripted model has no step for `{}` request: {head:?}",
                    request.purpose
                )))
            }
            None => Ok(LmResponse::Text(String::new())),
        }
    }
}
