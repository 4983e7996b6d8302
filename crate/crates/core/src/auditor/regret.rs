//! Best-response regret: how much one agent can gain by deviating while
//! everyone else keeps to their strategies. Cut deviations range over a
//! grid, choose deviations over every option.

use std::collections::{HashMap, HashSet, VecDeque};

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

use super::AuditError;
use crate::dsl::{CompiledProgram, Instr};
use crate::engine::machine::Machine;
use crate::engine::{canonical_key, run_from, step, Action, EngineError, ExecutionState, NodeKind, Step, Strategy};
use crate::rational::{fmt_rational, rat, Rational};
use crate::solver::grid::refine;
use crate::solver::GridFamily;
use crate::valuation::{Interval, ValuationProfile};

/// Cut points an agent may deviate to, per cut ordinal. Ordinals past the
/// last grid use the last one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviationGrids {
    grids: Vec<Vec<Rational>>,
}

impl DeviationGrids {
    /// `{k/m : 0 <= k <= m}` for every cut.
    pub fn uniform(m: usize) -> Self {
        let m = m.max(1) as i64;
        DeviationGrids { grids: vec![(0..=m).map(|k| rat(k, m)).collect()] }
    }

    pub fn per_ordinal(grids: Vec<Vec<Rational>>) -> Self {
        assert!(!grids.is_empty(), "need at least one deviation grid");
        DeviationGrids { grids }
    }

    /// One midpoint refinement of each solver grid: the `i`-th cut may
    /// deviate anywhere on `G_i` plus the midpoints of its cells.
    pub fn refining(family: &GridFamily) -> Self {
        if family.grids.is_empty() {
            return DeviationGrids::uniform(2);
        }
        DeviationGrids { grids: family.grids.iter().map(|g| refine(g)).collect() }
    }

    /// The solver's own grids.
    pub fn matching(family: &GridFamily) -> Self {
        if family.grids.is_empty() {
            return DeviationGrids::uniform(1);
        }
        DeviationGrids { grids: family.grids.clone() }
    }

    /// Grid for the 1-based cut `ordinal`.
    pub fn points(&self, ordinal: u32) -> &[Rational] {
        let i = (ordinal.max(1) as usize).min(self.grids.len()) - 1;
        &self.grids[i]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.grids.iter().map(Vec::len).collect()
    }
}

/// A single deviating action: the node's canonical key and what the agent
/// did there instead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deviation {
    pub node: String,
    pub action: Action,
}

impl Deviation {
    fn to_json(&self) -> Value {
        let action = match &self.action {
            Action::Cut(x) => json!({"cut": fmt_rational(x)}),
            Action::Choose(k) => json!({"choose": k}),
        };
        json!({"node": self.node, "action": action})
    }
}

/// Largest gain one agent can get, the subtree root where it was found and
/// the deviating actions along the best response from there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentRegret {
    pub agent: usize,
    pub max_gain: Rational,
    pub at: String,
    pub witness: Vec<Deviation>,
}

impl AgentRegret {
    pub fn to_json(&self) -> Value {
        json!({
            "agent": self.agent,
            "max_gain": fmt_rational(&self.max_gain),
            "at": self.at,
            "witness": self.witness.iter().map(Deviation::to_json).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegretReport {
    pub per_agent: Vec<AgentRegret>,
    pub audited_nodes: usize,
    /// Canonical keys of the audited subtree roots.
    pub nodes: Vec<String>,
    pub deviation_grid: Vec<usize>,
}

impl RegretReport {
    pub fn max_gain(&self) -> Rational {
        self.per_agent.iter().map(|a| a.max_gain.clone()).max().unwrap_or_else(Rational::zero)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "per_agent": self.per_agent.iter().map(AgentRegret::to_json).collect::<Vec<_>>(),
            "audited_nodes": self.audited_nodes,
            "nodes": self.nodes,
            "deviation_grid": {"kind": "per_ordinal", "sizes": self.deviation_grid},
            "max_gain": fmt_rational(&self.max_gain()),
        })
    }
}

type Memo = HashMap<String, (Rational, Vec<Deviation>)>;

/// Single-agent backward induction against fixed opponents. Values are the
/// agent's utility from pieces allocated after the current node.
struct Searcher<'a> {
    program: &'a CompiledProgram,
    profile: &'a ValuationProfile,
    strategies: &'a [&'a dyn Strategy],
    agent: usize,
    grids: &'a DeviationGrids,
    memo: Option<Memo>,
}

impl Searcher<'_> {
    fn key(&self, m: &Machine<Rational>) -> String {
        canonical_key(self.program, m, |r| r.to_string())
    }

    fn prescribed(&self, m: &Machine<Rational>, agent: usize) -> Result<Action, AuditError> {
        let state = ExecutionState { m: m.clone(), trace: Vec::new() };
        let node = state.node(self.program)?.expect("called at a decision");
        self.strategies[agent]
            .act(&node)
            .map_err(|msg| EngineError::Strategy { agent: agent + 1, msg }.into())
    }

    /// Applies `action`, recurses and reverts.
    fn follow(&mut self, m: &mut Machine<Rational>, action: &Action) -> Result<(Rational, Vec<Deviation>), AuditError> {
        let p = self.program;
        let (undo, gained) = match action {
            Action::Cut(x) => {
                if !m.cut_feasible(p)?.iter().any(|(a, b)| a <= x && x <= b) {
                    return Err(EngineError::IllegalAction(format!("cut at {x} outside the feasible set")).into());
                }
                (m.apply_cut(p, x.clone()), Rational::zero())
            }
            Action::Choose(k) => {
                let count = m.choose_options(p)?.len();
                if *k >= count {
                    return Err(EngineError::IllegalAction(format!("option {k} of {count}")).into());
                }
                let chooser = match &p.instrs[m.pc] {
                    Instr::Choose { agent, .. } | Instr::ChooseAny { agent, .. } => *agent,
                    _ => unreachable!("choose action at a choose node"),
                };
                let undo = m.apply_choose(p, *k)?;
                let gained = if chooser == self.agent {
                    let (lo, hi) = m.alloc[chooser].last().unwrap().clone();
                    self.profile.agent(chooser + 1).eval(&Interval::new(lo, hi).expect("ordered piece"))
                } else {
                    Rational::zero()
                };
                (undo, gained)
            }
        };
        let result = m.advance(p).map_err(AuditError::from).and_then(|_| self.best(m));
        m.undo(undo);
        let (v, w) = result?;
        Ok((v + gained, w))
    }

    fn best(&mut self, m: &mut Machine<Rational>) -> Result<(Rational, Vec<Deviation>), AuditError> {
        if m.done {
            return Ok((Rational::zero(), Vec::new()));
        }
        let key = self.memo.as_ref().map(|_| self.key(m));
        if let (Some(memo), Some(k)) = (&self.memo, &key) {
            if let Some(hit) = memo.get(k) {
                return Ok(hit.clone());
            }
        }
        let p = self.program;
        let (owner, is_cut) = match &p.instrs[m.pc] {
            Instr::Cut { agent, .. } => (*agent, true),
            Instr::Choose { agent, .. } | Instr::ChooseAny { agent, .. } => (*agent, false),
            _ => unreachable!("machine rests at decisions"),
        };
        let options = if is_cut { 0 } else { m.choose_options(p)?.len() };
        if !is_cut && options == 0 {
            return Err(EngineError::EmptyChooseSet(p.info[m.pc].path.clone()).into());
        }
        let result = if owner != self.agent {
            let action = if options == 1 { Action::Choose(0) } else { self.prescribed(m, owner)? };
            self.follow(m, &action)?
        } else {
            let prescribed = self.prescribed(m, owner)?;
            let mut candidates = vec![prescribed.clone()];
            if is_cut {
                let feasible = m.cut_feasible(p)?;
                let grid = self.grids.points(m.n_cuts + 1);
                for x in grid {
                    if feasible.iter().any(|(a, b)| a <= x && x <= b) && prescribed != Action::Cut(x.clone()) {
                        candidates.push(Action::Cut(x.clone()));
                    }
                }
            } else {
                candidates.extend((0..options).filter(|k| prescribed != Action::Choose(*k)).map(Action::Choose));
            }
            let here = key.clone().unwrap_or_else(|| self.key(m));
            let mut best: Option<(Rational, Vec<Deviation>)> = None;
            for (i, a) in candidates.iter().enumerate() {
                let (v, w) = self.follow(m, a)?;
                if best.as_ref().is_none_or(|b| v > b.0) {
                    let w = if i == 0 {
                        w
                    } else {
                        let mut line = vec![Deviation { node: here.clone(), action: a.clone() }];
                        line.extend(w);
                        line
                    };
                    best = Some((v, w));
                }
            }
            best.expect("prescribed action is always a candidate")
        };
        if let (Some(memo), Some(k)) = (&mut self.memo, key) {
            memo.insert(k, result.clone());
        }
        Ok(result)
    }
}

fn utility_so_far(state: &ExecutionState, profile: &ValuationProfile, agent: usize) -> Rational {
    state.outcome(profile).utilities[agent].clone()
}

fn check_inputs(
    program: &CompiledProgram,
    profile: &ValuationProfile,
    strategies: &[&dyn Strategy],
) -> Result<(), AuditError> {
    if profile.n() != program.n_agents || strategies.len() != program.n_agents {
        return Err(EngineError::ProfileMismatch { expected: program.n_agents, got: profile.n().min(strategies.len()) }.into());
    }
    Ok(())
}

/// Gain of `agent` (1-based) from its best deviation, played from `at` or
/// from the start. Everyone else, and the agent itself where it does not
/// deviate, follows `strategies`.
pub fn best_response_regret(
    program: &CompiledProgram,
    profile: &ValuationProfile,
    strategies: &[&dyn Strategy],
    agent: usize,
    grids: &DeviationGrids,
    at: Option<&ExecutionState>,
) -> Result<AgentRegret, AuditError> {
    check_inputs(program, profile, strategies)?;
    let start = match at {
        Some(s) => s.clone(),
        None => ExecutionState::new(program)?,
    };
    let mut searcher = new_searcher(program, profile, strategies, agent, grids);
    regret_at(&mut searcher, &start)
}

fn new_searcher<'a>(
    program: &'a CompiledProgram,
    profile: &'a ValuationProfile,
    strategies: &'a [&'a dyn Strategy],
    agent: usize,
    grids: &'a DeviationGrids,
) -> Searcher<'a> {
    let memo = strategies.iter().all(|s| s.memo_safe()).then(HashMap::new);
    Searcher { program, profile, strategies, agent: agent - 1, grids, memo }
}

fn regret_at(searcher: &mut Searcher<'_>, start: &ExecutionState) -> Result<AgentRegret, AuditError> {
    let agent = searcher.agent;
    let at = if start.terminated() { "end".to_string() } else { searcher.key(&start.m) };
    let before = utility_so_far(start, searcher.profile, agent);
    let baseline =
        run_from(start.clone(), searcher.program, searcher.profile, searcher.strategies)?.outcome.utilities[agent].clone()
            - &before;
    let mut m = start.m.clone();
    let (best, witness) = searcher.best(&mut m)?;
    let max_gain = best - baseline;
    let witness = if max_gain.is_zero() { Vec::new() } else { witness };
    Ok(AgentRegret { agent: agent + 1, max_gain, at, witness })
}

/// Which subtree roots to audit: every node within `depth` decisions of the
/// start, cutting on `root_grid` and taking every option, plus `samples`
/// random plays stopped at a random depth.
#[derive(Debug, Clone)]
pub struct SubtreeAudit {
    pub depth: usize,
    pub root_grid: Vec<Rational>,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SubtreeAudit {
    fn default() -> Self {
        SubtreeAudit { depth: 2, root_grid: (0..=4).map(|k| rat(k, 4)).collect(), samples: 0, seed: 0 }
    }
}

impl SubtreeAudit {
    /// Only the game root.
    pub fn root_only() -> Self {
        SubtreeAudit { depth: 0, root_grid: Vec::new(), samples: 0, seed: 0 }
    }
}

fn children(
    state: &ExecutionState,
    program: &CompiledProgram,
    profile: &ValuationProfile,
    grid: &[Rational],
) -> Result<Vec<ExecutionState>, AuditError> {
    let Some(node) = state.node(program)? else {
        return Ok(Vec::new());
    };
    let actions: Vec<Action> = match &node.kind {
        NodeKind::Cut { feasible, .. } => {
            let mut xs: Vec<Rational> = grid.iter().filter(|x| feasible.iter().any(|iv| iv.contains(x))).cloned().collect();
            if xs.is_empty() {
                xs.push(feasible[0].lo().clone());
            }
            xs.into_iter().map(Action::Cut).collect()
        }
        NodeKind::Choose { options, .. } => (0..options.len()).map(Action::Choose).collect(),
    };
    let mut out = Vec::new();
    for a in actions {
        if let Step::Next(s) = step(state, program, profile, &a)? {
            out.push(s);
        }
    }
    Ok(out)
}

fn random_descendant<R: Rng>(
    mut state: ExecutionState,
    program: &CompiledProgram,
    profile: &ValuationProfile,
    rng: &mut R,
) -> Result<Option<ExecutionState>, AuditError> {
    let depth = rng.gen_range(1..=program.max_ops.max(1));
    for _ in 0..depth {
        let Some(node) = state.node(program)? else {
            return Ok(None);
        };
        let action = match &node.kind {
            NodeKind::Cut { feasible, .. } => {
                let iv = &feasible[rng.gen_range(0..feasible.len())];
                let t = rat(rng.gen_range(0..=64), 64);
                Action::Cut(iv.lo() + (iv.hi() - iv.lo()) * t)
            }
            NodeKind::Choose { options, .. } => Action::Choose(rng.gen_range(0..options.len())),
        };
        match step(&state, program, profile, &action)? {
            Step::Next(s) => state = s,
            Step::Done(_) => return Ok(None),
        }
    }
    Ok(Some(state))
}

/// Regret of every agent at every audited subtree root; each agent's entry
/// is its largest gain over all roots.
pub fn audit_regret(
    program: &CompiledProgram,
    profile: &ValuationProfile,
    strategies: &[&dyn Strategy],
    grids: &DeviationGrids,
    opts: &SubtreeAudit,
) -> Result<RegretReport, AuditError> {
    check_inputs(program, profile, strategies)?;
    let root = ExecutionState::new(program)?;
    let mut roots = Vec::new();
    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([(root.clone(), 0usize)]);
    while let Some((s, d)) = queue.pop_front() {
        if s.terminated() {
            continue;
        }
        let key = canonical_key(program, &s.m, |r| r.to_string());
        if !seen.insert(key) {
            continue;
        }
        if d < opts.depth {
            for c in children(&s, program, profile, &opts.root_grid)? {
                queue.push_back((c, d + 1));
            }
        }
        roots.push(s);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.samples {
        if let Some(s) = random_descendant(root.clone(), program, profile, &mut rng)? {
            if seen.insert(canonical_key(program, &s.m, |r| r.to_string())) {
                roots.push(s);
            }
        }
    }
    let mut per_agent = Vec::new();
    for agent in 1..=program.n_agents {
        // The memo only depends on the fixed strategies, so it is shared
        // across subtree roots.
        let mut searcher = new_searcher(program, profile, strategies, agent, grids);
        let mut worst: Option<AgentRegret> = None;
        for s in &roots {
            let r = regret_at(&mut searcher, s)?;
            if worst.as_ref().is_none_or(|w| r.max_gain > w.max_gain) {
                worst = Some(r);
            }
        }
        per_agent.push(worst.unwrap_or(AgentRegret {
            agent,
            max_gain: Rational::zero(),
            at: "end".into(),
            witness: Vec::new(),
        }));
    }
    Ok(RegretReport {
        per_agent,
        audited_nodes: roots.len(),
        nodes: roots.iter().map(|s| canonical_key(program, &s.m, |r| r.to_string())).collect(),
        deviation_grid: grids.sizes(),
    })
}
