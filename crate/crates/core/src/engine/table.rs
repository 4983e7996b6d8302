//! Strategies stored as a table from canonical node keys to actions.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use crate::dsl::CompiledProgram;
use crate::rational::{fmt_rational, parse_rational};
use crate::valuation::ValuationProfile;

use super::{step, Action, DecisionNode, EngineError, ExecutionState, FinishedRun, Step, Strategy};

/// One table serves every agent: a node's key determines who moves there.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StrategyTable {
    entries: BTreeMap<String, Action>,
}

impl StrategyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: String, action: Action) {
        self.entries.insert(key, action);
    }

    pub fn get(&self, key: &str) -> Option<&Action> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Action)> {
        self.entries.iter()
    }

    /// Plays `strategies` to the end and records the action taken at every
    /// node on the way.
    pub fn record(
        program: &CompiledProgram,
        profile: &ValuationProfile,
        strategies: &[&dyn Strategy],
    ) -> Result<(Self, FinishedRun), EngineError> {
        if strategies.len() != program.n_agents {
            return Err(EngineError::ProfileMismatch { expected: program.n_agents, got: strategies.len() });
        }
        let mut table = StrategyTable::new();
        let mut state = ExecutionState::new(program)?;
        loop {
            let Some(node) = state.node(program)? else {
                let outcome = state.outcome(profile);
                return Ok((table, FinishedRun { outcome, trace: state.trace }));
            };
            let agent = node.agent();
            let action = strategies[agent - 1].act(&node).map_err(|msg| EngineError::Strategy { agent, msg })?;
            table.insert(node.key(), action.clone());
            match step(&state, program, profile, &action)? {
                Step::Next(s) => state = s,
                Step::Done(run) => return Ok((table, run)),
            }
        }
    }

    pub fn to_json(&self) -> Value {
        let entries: Map<String, Value> = self
            .entries
            .iter()
            .map(|(k, a)| {
                let v = match a {
                    Action::Cut(x) => json!({"cut": fmt_rational(x)}),
                    Action::Choose(i) => json!({"choose": i}),
                };
                (k.clone(), v)
            })
            .collect();
        json!({"entries": entries})
    }

    /// Reads `{"entries": {key: {"cut": "p/q"} | {"choose": k}}}`; other
    /// top-level fields are ignored, so solver tables load as well.
    pub fn from_json(v: &Value) -> Result<Self, EngineError> {
        let bad = |m: String| EngineError::BadTrace(m);
        let entries = v["entries"].as_object().ok_or_else(|| bad("strategy table needs an entries object".into()))?;
        let mut table = StrategyTable::new();
        for (k, a) in entries {
            let action = if let Some(x) = a.get("cut") {
                let s = x.as_str().ok_or_else(|| bad(format!("{k}: cut must be a \"p/q\" string")))?;
                Action::Cut(parse_rational(s).map_err(|e| bad(format!("{k}: {e}")))?)
            } else if let Some(i) = a.get("choose") {
                Action::Choose(i.as_u64().ok_or_else(|| bad(format!("{k}: choose must be an index")))? as usize)
            } else {
                return Err(bad(format!("{k}: action must be cut or choose")));
            };
            table.insert(k.clone(), action);
        }
        Ok(table)
    }
}

impl Strategy for StrategyTable {
    fn act(&self, node: &DecisionNode<'_>) -> Result<Action, String> {
        let key = node.key();
        self.entries.get(&key).cloned().ok_or_else(|| format!("no table entry for node {key}"))
    }

    fn memo_safe(&self) -> bool {
        true
    }
}
