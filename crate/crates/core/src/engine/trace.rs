use serde_json::{json, Value};

use crate::dsl::CompiledProgram;
use crate::rational::{parse_rational, Rational};
use crate::valuation::ValuationProfile;

use super::{step, Action, EngineError, ExecutionState, FinishedRun, Step};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Bound {
    Cut(Rational),
    Choice(usize),
}

/// One executed decision: who acted and which label it bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub agent: usize,
    pub label: String,
    pub(crate) value: Bound,
}

impl TraceEntry {
    pub fn action(&self) -> Action {
        match &self.value {
            Bound::Cut(x) => Action::Cut(x.clone()),
            Bound::Choice(k) => Action::Choose(*k),
        }
    }

    pub fn to_json(&self) -> Value {
        let (kind, action) = match &self.value {
            Bound::Cut(x) => ("cut", json!(x.to_string())),
            Bound::Choice(k) => ("choose", json!(k)),
        };
        json!({
            "node_kind": kind,
            "agent": self.agent,
            "action": action,
            "bindings_delta": { self.label.clone(): action },
        })
    }
}

pub fn trace_to_json(trace: &[TraceEntry]) -> Value {
    Value::Array(trace.iter().map(TraceEntry::to_json).collect())
}

pub fn trace_from_json(v: &Value) -> Result<Vec<TraceEntry>, EngineError> {
    let bad = |m: &str| EngineError::BadTrace(m.to_string());
    let items = v.as_array().ok_or_else(|| bad("trace must be an array"))?;
    items
        .iter()
        .map(|e| {
            let agent = e["agent"].as_u64().ok_or_else(|| bad("missing agent"))? as usize;
            let delta = e["bindings_delta"].as_object().ok_or_else(|| bad("missing bindings_delta"))?;
            let label = delta.keys().next().ok_or_else(|| bad("empty bindings_delta"))?.clone();
            let value = match e["node_kind"].as_str() {
                Some("cut") => {
                    let s = e["action"].as_str().ok_or_else(|| bad("cut action must be a string"))?;
                    Bound::Cut(parse_rational(s).map_err(|err| bad(&err.to_string()))?)
                }
                Some("choose") => {
                    Bound::Choice(e["action"].as_u64().ok_or_else(|| bad("choose action must be an index"))? as usize)
                }
                _ => return Err(bad("node_kind must be cut or choose")),
            };
            Ok(TraceEntry { agent, label, value })
        })
        .collect()
}

/// Re-executes a recorded trace action by action.
pub fn replay(
    program: &CompiledProgram,
    profile: &ValuationProfile,
    trace: &[TraceEntry],
) -> Result<FinishedRun, EngineError> {
    let mut state = ExecutionState::new(program)?;
    for (i, entry) in trace.iter().enumerate() {
        let node = state.node(program)?.ok_or_else(|| EngineError::BadTrace(format!("entry {i} after the end")))?;
        if node.agent() != entry.agent {
            return Err(EngineError::BadTrace(format!(
                "entry {i}: agent {} recorded, agent {} to move",
                entry.agent,
                node.agent()
            )));
        }
        match step(&state, program, profile, &entry.action())? {
            Step::Next(s) => state = s,
            Step::Done(run) => {
                if i + 1 != trace.len() {
                    return Err(EngineError::BadTrace(format!("program ended at entry {i}")));
                }
                return Ok(run);
            }
        }
    }
    if state.terminated() {
        let outcome = state.outcome(profile);
        Ok(FinishedRun { outcome, trace: state.trace })
    } else {
        Err(EngineError::BadTrace("trace stops before the program ends".into()))
    }
}
