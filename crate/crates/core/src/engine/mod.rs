//! Small-step interpreter for compiled GCC programs over exact rationals.

pub(crate) mod machine;
mod table;
mod trace;

use std::fmt::Write as _;

use num_traits::{One, Zero};

use crate::dsl::{CompiledProgram, Instr};
use crate::rational::Rational;
use crate::valuation::{Interval, Piece, ValuationProfile};

pub(crate) use machine::Machine;
pub use table::StrategyTable;
pub use trace::{replay, trace_from_json, trace_to_json, TraceEntry};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("illegal action: {0}")]
    IllegalAction(String),
    #[error("choose at {0} has no options")]
    EmptyChooseSet(String),
    #[error("unbound label {0}")]
    UnboundLabel(String),
    #[error("allocation overlaps a piece already allocated")]
    OverlappingAllocation,
    #[error("program has already terminated")]
    Terminated,
    #[error("profile has {got} agents, program needs {expected}")]
    ProfileMismatch { expected: usize, got: usize },
    #[error("strategy for agent {agent} failed: {msg}")]
    Strategy { agent: usize, msg: String },
    #[error("invalid trace: {0}")]
    BadTrace(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Cut(Rational),
    /// 0-based option index.
    Choose(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    /// `agent` is 1-based.
    Cut { agent: usize, feasible: Vec<Interval> },
    /// `any` marks a choose-any-available-interval node.
    Choose { agent: usize, options: Vec<Piece>, any: bool },
}

impl NodeKind {
    pub fn agent(&self) -> usize {
        match self {
            NodeKind::Cut { agent, .. } | NodeKind::Choose { agent, .. } => *agent,
        }
    }
}

/// Program position, cut bindings and allocations so far. Immutable from
/// the outside: [`step`] returns a fresh state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionState {
    pub(crate) m: Machine<Rational>,
    pub(crate) trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub allocation: Vec<Piece>,
    pub utilities: Vec<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinishedRun {
    pub outcome: Outcome,
    pub trace: Vec<TraceEntry>,
}

pub enum Step {
    Next(ExecutionState),
    Done(FinishedRun),
}

/// A decision node together with the state it was reached in.
pub struct DecisionNode<'a> {
    pub kind: NodeKind,
    pub state: &'a ExecutionState,
    pub program: &'a CompiledProgram,
}

impl DecisionNode<'_> {
    pub fn agent(&self) -> usize {
        self.kind.agent()
    }

    /// Coordinate bound to a cut label, if any.
    pub fn binding(&self, label: &str) -> Option<&Rational> {
        self.state.binding(self.program, label)
    }

    /// Option taken at a choose label.
    pub fn choice(&self, label: &str) -> Option<usize> {
        let s = self.program.choice_slot(label)?;
        self.state.m.choices[s as usize].map(|c| c as usize)
    }

    /// 1-based ordinal the pending cut would get.
    pub fn next_ordinal(&self) -> u32 {
        self.state.m.n_cuts + 1
    }

    pub fn path(&self) -> &str {
        &self.program.info[self.state.m.pc].path
    }

    /// Label the pending statement binds.
    pub fn label(&self) -> &str {
        match &self.program.instrs[self.state.m.pc] {
            Instr::Cut { slot, .. } => &self.program.cut_labels[*slot as usize],
            Instr::Choose { slot, .. } | Instr::ChooseAny { slot, .. } => {
                &self.program.choice_labels[*slot as usize]
            }
            _ => unreachable!("states rest at decisions"),
        }
    }

    /// Canonical key of this node: AST position plus every part of the
    /// history the remaining program can still observe.
    pub fn key(&self) -> String {
        canonical_key(self.program, &self.state.m, |r| r.to_string())
    }

    /// All bound cuts as `(label, coordinate, ordinal)`.
    pub fn cuts(&self) -> Vec<(&str, &Rational, u32)> {
        self.state
            .m
            .cuts
            .iter()
            .enumerate()
            .filter_map(|(s, c)| c.as_ref().map(|(x, o)| (self.program.cut_labels[s].as_str(), x, *o)))
            .collect()
    }
}

pub(crate) fn canonical_key<P: Clone + Ord>(
    program: &CompiledProgram,
    m: &Machine<P>,
    show: impl Fn(&P) -> String,
) -> String {
    let parts = m.key_parts(program);
    let info = &program.info[parts.pc];
    let mut s = String::new();
    let _ = write!(s, "{}#{}|", info.path, parts.n_cuts);
    for (i, (slot, c)) in info.live_cuts.iter().zip(&parts.cuts).enumerate() {
        if i > 0 {
            s.push(',');
        }
        let label = &program.cut_labels[*slot as usize];
        match c {
            Some((x, o)) => {
                let _ = write!(s, "{label}={}@{o}", show(x));
            }
            None => {
                let _ = write!(s, "{label}=_");
            }
        }
    }
    s.push('|');
    for (i, (slot, c)) in info.live_choices.iter().zip(&parts.choices).enumerate() {
        if i > 0 {
            s.push(',');
        }
        let label = &program.choice_labels[*slot as usize];
        match c {
            Some(k) => {
                let _ = write!(s, "{label}={k}");
            }
            None => {
                let _ = write!(s, "{label}=_");
            }
        }
    }
    let _ = write!(s, "|a{:x}|", parts.allocated);
    for b in parts.claimed {
        s.push(if *b { '1' } else { '0' });
    }
    s
}

impl ExecutionState {
    /// Initial state, already advanced to the first decision.
    pub fn new(program: &CompiledProgram) -> Result<Self, EngineError> {
        let mut m = Machine::new(program, Rational::zero(), Rational::one());
        m.advance(program)?;
        Ok(ExecutionState { m, trace: Vec::new() })
    }

    pub fn terminated(&self) -> bool {
        self.m.done
    }

    pub fn binding(&self, program: &CompiledProgram, label: &str) -> Option<&Rational> {
        let s = program.cut_slot(label)?;
        self.m.cuts[s as usize].as_ref().map(|(x, _)| x)
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    /// Pieces allocated so far, per agent (index 0 is agent 1).
    pub fn allocation(&self) -> Vec<Piece> {
        self.m
            .alloc
            .iter()
            .map(|ivs| {
                Piece::new(
                    ivs.iter()
                        .filter(|(a, b)| a < b)
                        .map(|(a, b)| Interval::new(a.clone(), b.clone()).expect("cut points lie in [0,1]"))
                        .collect(),
                )
                .expect("allocations are disjoint")
            })
            .collect()
    }

    pub fn outcome(&self, profile: &ValuationProfile) -> Outcome {
        let allocation = self.allocation();
        let utilities = allocation
            .iter()
            .enumerate()
            .map(|(i, p)| profile.agent(i + 1).value_of_piece(p))
            .collect();
        Outcome { allocation, utilities }
    }

    /// The pending decision, or `None` once the program has ended.
    pub fn node<'a>(&'a self, program: &'a CompiledProgram) -> Result<Option<DecisionNode<'a>>, EngineError> {
        if self.m.done {
            return Ok(None);
        }
        let to_iv = |(a, b): (Rational, Rational)| Interval::new(a, b).expect("cut points lie in [0,1]");
        let kind = match &program.instrs[self.m.pc] {
            Instr::Cut { agent, .. } => NodeKind::Cut {
                agent: agent + 1,
                feasible: self.m.cut_feasible(program)?.into_iter().map(to_iv).collect(),
            },
            Instr::Choose { agent, .. } | Instr::ChooseAny { agent, .. } => {
                let options: Vec<Piece> = self
                    .m
                    .choose_options(program)?
                    .into_iter()
                    .map(|p| Piece::single(to_iv(p)))
                    .collect();
                if options.is_empty() {
                    return Err(EngineError::EmptyChooseSet(program.info[self.m.pc].path.clone()));
                }
                let any = matches!(program.instrs[self.m.pc], Instr::ChooseAny { .. });
                NodeKind::Choose { agent: agent + 1, options, any }
            }
            _ => unreachable!("states rest at decisions"),
        };
        Ok(Some(DecisionNode { kind, state: self, program }))
    }
}

/// Applies `action` at the pending decision. Returns the next state, or the
/// finished run when the program ends.
pub fn step(
    state: &ExecutionState,
    program: &CompiledProgram,
    profile: &ValuationProfile,
    action: &Action,
) -> Result<Step, EngineError> {
    if profile.n() != program.n_agents {
        return Err(EngineError::ProfileMismatch { expected: program.n_agents, got: profile.n() });
    }
    if state.m.done {
        return Err(EngineError::Terminated);
    }
    let mut next = state.clone();
    let instr = &program.instrs[state.m.pc];
    let (agent, delta) = match (instr, action) {
        (Instr::Cut { agent, slot, .. }, Action::Cut(x)) => {
            let feasible = state.m.cut_feasible(program)?;
            if !feasible.iter().any(|(a, b)| a <= x && x <= b) {
                return Err(EngineError::IllegalAction(format!("cut at {x} outside the feasible set")));
            }
            next.m.apply_cut(program, x.clone());
            (*agent, (program.cut_labels[*slot as usize].clone(), trace::Bound::Cut(x.clone())))
        }
        (Instr::Choose { agent, slot, .. } | Instr::ChooseAny { agent, slot }, Action::Choose(k)) => {
            let options = state.m.choose_options(program)?;
            if options.is_empty() {
                return Err(EngineError::EmptyChooseSet(program.info[state.m.pc].path.clone()));
            }
            if *k >= options.len() {
                return Err(EngineError::IllegalAction(format!(
                    "choose index {k} out of range 0..{}",
                    options.len()
                )));
            }
            next.m.apply_choose(program, *k)?;
            (*agent, (program.choice_labels[*slot as usize].clone(), trace::Bound::Choice(*k)))
        }
        (Instr::Cut { .. }, _) => return Err(EngineError::IllegalAction("expected a cut".into())),
        _ => return Err(EngineError::IllegalAction("expected a choose".into())),
    };
    next.trace.push(TraceEntry { agent: agent + 1, label: delta.0, value: delta.1 });
    next.m.advance(program)?;
    if next.m.done {
        let outcome = next.outcome(profile);
        Ok(Step::Done(FinishedRun { outcome, trace: next.trace }))
    } else {
        Ok(Step::Next(next))
    }
}

/// Maps a decision node to an action. Strategies must be total over every
/// node they can reach, including nodes off the equilibrium path.
pub trait Strategy: Send + Sync {
    fn act(&self, node: &DecisionNode<'_>) -> Result<Action, String>;

    /// True when `act` depends only on [`DecisionNode::key`] and the node
    /// kind. The auditor memoizes subgames only for such strategies.
    fn memo_safe(&self) -> bool {
        false
    }
}

impl<F> Strategy for F
where
    F: Fn(&DecisionNode<'_>) -> Result<Action, String> + Send + Sync,
{
    fn act(&self, node: &DecisionNode<'_>) -> Result<Action, String> {
        self(node)
    }
}

/// Plays the program to the end with one strategy per agent.
pub fn run(
    program: &CompiledProgram,
    profile: &ValuationProfile,
    strategies: &[&dyn Strategy],
) -> Result<FinishedRun, EngineError> {
    run_from(ExecutionState::new(program)?, program, profile, strategies)
}

/// Plays from an arbitrary state.
pub fn run_from(
    mut state: ExecutionState,
    program: &CompiledProgram,
    profile: &ValuationProfile,
    strategies: &[&dyn Strategy],
) -> Result<FinishedRun, EngineError> {
    if strategies.len() != program.n_agents {
        return Err(EngineError::ProfileMismatch { expected: program.n_agents, got: strategies.len() });
    }
    loop {
        let action = match state.node(program)? {
            None => {
                let outcome = state.outcome(profile);
                return Ok(FinishedRun { outcome, trace: state.trace });
            }
            Some(node) => {
                let agent = node.agent();
                strategies[agent - 1].act(&node).map_err(|msg| EngineError::Strategy { agent, msg })?
            }
        };
        match step(&state, program, profile, &action)? {
            Step::Next(s) => state = s,
            Step::Done(r) => return Ok(r),
        }
    }
}

/// Interval between two bound endpoints, lower value first.
pub fn resolve_piece(
    state: &ExecutionState,
    program: &CompiledProgram,
    piece: &crate::dsl::PieceExpr,
) -> Result<Interval, EngineError> {
    use crate::dsl::Endpoint;
    let get = |e: &Endpoint| -> Result<Rational, EngineError> {
        match e {
            Endpoint::Zero => Ok(Rational::zero()),
            Endpoint::One => Ok(Rational::one()),
            Endpoint::Label(l) => {
                state.binding(program, l).cloned().ok_or_else(|| EngineError::UnboundLabel(l.clone()))
            }
        }
    };
    let (a, b) = (get(&piece.a)?, get(&piece.b)?);
    Ok(Interval::spanning(a, b).expect("bound cut points lie in [0,1]"))
}
