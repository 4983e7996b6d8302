//! Approximate subgame-perfect equilibria: nested grids, backward induction
//! on the discretized game and certificates for the result.

pub(crate) mod grid;
mod lift;
mod search;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};

use crate::dsl::{CompiledProgram, Instr};
use crate::engine::{EngineError, Machine};
use crate::rational::{fmt_rational, Rational};
use crate::valuation::ValuationProfile;

pub use grid::{build_grids, map_history, GridFamily};
pub use lift::SolverStrategy;
use search::{make_core, DynCore};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolverError {
    #[error("eps must be positive, got {0}")]
    DegenerateEps(Rational),
    #[error("{0}")]
    BadParameters(String),
    #[error("estimated game tree size {estimate} exceeds the budget {budget}; raise eps or the budget")]
    BudgetExceeded { estimate: u128, budget: u128 },
    #[error("cut number {ordinal} has no grid (K = {k})")]
    CutOrdinalExceedsK { ordinal: usize, k: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Deterministic tie-break: leftmost optimal grid point at cuts, lowest
/// optimal option index at chooses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    LowestIndex,
}

impl TieBreak {
    pub fn id(self) -> &'static str {
        match self {
            TieBreak::LowestIndex => "lowest-index",
        }
    }
}

/// Default cap on [`estimate_tree_size`].
pub const DEFAULT_BUDGET: u128 = 10_000_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TableAction {
    Cut(Rational),
    Choose(usize),
}

/// The solved grid strategies. Every grid state the search visited is in
/// the table; other states are solved on demand.
#[derive(Clone)]
pub struct DiscreteStrategyProfile {
    core: Arc<Mutex<Box<dyn DynCore>>>,
    pub tiebreak_id: &'static str,
}

impl DiscreteStrategyProfile {
    /// Table entries keyed by canonical node key, sorted by key.
    pub fn table(&self) -> Vec<(String, TableAction)> {
        let core = self.core.lock().expect("solver state");
        let grid = core.grids().finest().to_vec();
        core.table()
            .into_iter()
            .map(|(k, a, is_cut)| {
                let a = if is_cut { TableAction::Cut(grid[a as usize].clone()) } else { TableAction::Choose(a as usize) };
                (k, a)
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.core.lock().expect("solver state").memo_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Continuous strategies for every agent, sharing this table.
    pub fn strategies(&self) -> Vec<SolverStrategy> {
        let n = self.core.lock().expect("solver state").program().n_agents;
        (0..n).map(|_| SolverStrategy { core: self.core.clone() }).collect()
    }

    /// The table as JSON, truncated to `limit` entries when given.
    pub fn to_json(&self, limit: Option<usize>) -> Value {
        let table = self.table();
        let complete = limit.is_none_or(|l| table.len() <= l);
        let entries: serde_json::Map<String, Value> = table
            .into_iter()
            .take(limit.unwrap_or(usize::MAX))
            .map(|(k, a)| {
                let v = match a {
                    TableAction::Cut(x) => json!({"cut": fmt_rational(&x)}),
                    TableAction::Choose(i) => json!({"choose": i}),
                };
                (k, v)
            })
            .collect();
        json!({"tiebreak_id": self.tiebreak_id, "complete": complete, "entries": entries})
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquilibriumCertificate {
    /// Index 0 is agent 1.
    pub utilities: Vec<Rational>,
    pub eps: Rational,
    pub per_agent_regret_bound: Vec<Rational>,
    pub grid_stats: Vec<usize>,
    /// Distinct grid states in the strategy table.
    pub node_count: u64,
    pub threshold: Rational,
    pub f_n: usize,
    pub k: usize,
    pub tiebreak_id: String,
}

impl EquilibriumCertificate {
    pub fn to_json(&self) -> Value {
        let q = |v: &[Rational]| v.iter().map(fmt_rational).collect::<Vec<_>>();
        json!({
            "utilities": q(&self.utilities),
            "eps": fmt_rational(&self.eps),
            "per_agent_regret_bound": q(&self.per_agent_regret_bound),
            "grid_stats": self.grid_stats,
            "node_count": self.node_count,
            "threshold": fmt_rational(&self.threshold),
            "f_n": self.f_n,
            "K": self.k,
            "tiebreak_id": self.tiebreak_id,
        })
    }
}

/// Upper bound on the number of leaves: the product along a path of the
/// grid size at each cut and the option count at each choose, maximised
/// over paths.
pub fn estimate_tree_size(program: &CompiledProgram, grids: &GridFamily) -> u128 {
    let sizes: Vec<u128> = grids.sizes().into_iter().map(|s| s as u128).collect();
    estimate_with(program, &sizes)
}

fn estimate_with(program: &CompiledProgram, sizes: &[u128]) -> u128 {
    fn go(
        program: &CompiledProgram,
        sizes: &[u128],
        pc: usize,
        cuts: usize,
        claims: usize,
        memo: &mut HashMap<(usize, usize, usize), u128>,
    ) -> u128 {
        if let Some(v) = memo.get(&(pc, cuts, claims)) {
            return *v;
        }
        let v = match &program.instrs[pc] {
            Instr::Exit | Instr::End => 1,
            Instr::Jump(t) => go(program, sizes, *t, cuts, claims, memo),
            Instr::Branch { else_pc, .. } => {
                go(program, sizes, pc + 1, cuts, claims, memo).max(go(program, sizes, *else_pc, cuts, claims, memo))
            }
            Instr::Cut { .. } => {
                let width = if sizes.is_empty() { 1 } else { sizes[cuts.min(sizes.len() - 1)] };
                width.saturating_mul(go(program, sizes, pc + 1, cuts + 1, claims, memo))
            }
            Instr::Choose { pieces, .. } => {
                (pieces.len() as u128).saturating_mul(go(program, sizes, pc + 1, cuts, claims, memo))
            }
            Instr::ChooseAny { .. } => {
                let options = (cuts + 1).saturating_sub(claims).max(1) as u128;
                options.saturating_mul(go(program, sizes, pc + 1, cuts, claims + 1, memo))
            }
        };
        memo.insert((pc, cuts, claims), v);
        v
    }
    go(program, sizes, 0, 0, 0, &mut HashMap::new())
}

/// Options for [`solve`].
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub budget: u128,
    pub tiebreak: TieBreak,
    /// Worker threads splitting the root cut; results do not depend on it.
    pub threads: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { budget: DEFAULT_BUDGET, tiebreak: TieBreak::LowestIndex, threads: 1 }
    }
}

/// A solved protocol instance.
pub struct Solution {
    pub grids: Arc<GridFamily>,
    pub profile: DiscreteStrategyProfile,
    pub certificate: EquilibriumCertificate,
}

/// Builds grids with `f_n` and `K` taken from the program's operation
/// counts, checks the budget and runs backward induction.
pub fn solve(
    program: &CompiledProgram,
    profile: &ValuationProfile,
    eps: &Rational,
    opts: &SolveOptions,
) -> Result<Solution, SolverError> {
    let f_n = program.max_ops.max(1);
    let k = program.max_cuts;
    let (_, g1) = grid::first_grid_for(profile, eps, f_n, k)?;
    let sizes: Vec<u128> = (1..=k).map(|i| grid::refined_size(g1.len(), i)).collect();
    let estimate = estimate_with(program, &sizes);
    if estimate > opts.budget {
        return Err(SolverError::BudgetExceeded { estimate, budget: opts.budget });
    }
    let grids = Arc::new(build_grids(profile, eps, f_n, k)?);
    let (table, certificate) = backward_induction_with(program, profile, grids.clone(), opts)?;
    Ok(Solution { grids, profile: table, certificate })
}

/// Backward induction on `grids` with the given tie-break.
pub fn backward_induction(
    program: &CompiledProgram,
    profile: &ValuationProfile,
    grids: &GridFamily,
    tiebreak: TieBreak,
) -> Result<(DiscreteStrategyProfile, EquilibriumCertificate), SolverError> {
    let opts = SolveOptions { tiebreak, ..Default::default() };
    backward_induction_with(program, profile, Arc::new(grids.clone()), &opts)
}

fn backward_induction_with(
    program: &CompiledProgram,
    profile: &ValuationProfile,
    grids: Arc<GridFamily>,
    opts: &SolveOptions,
) -> Result<(DiscreteStrategyProfile, EquilibriumCertificate), SolverError> {
    if profile.n() != program.n_agents {
        return Err(EngineError::ProfileMismatch { expected: program.n_agents, got: profile.n() }.into());
    }
    if program.max_cuts > grids.k {
        return Err(SolverError::CutOrdinalExceedsK { ordinal: program.max_cuts, k: grids.k });
    }
    let mut core = make_core(program.clone(), grids.clone(), profile);
    let top = grids.top();
    let mut root = Machine::new(program, 0u32, top);
    root.advance(program)?;
    if opts.threads > 1 {
        presolve_root_parallel(&mut core, &root, opts.threads)?;
    }
    let utilities = if root.done {
        vec![Rational::from_integer(0.into()); program.n_agents]
    } else {
        core.solve_at(&mut root)?.1
    };
    let certificate = EquilibriumCertificate {
        utilities,
        eps: grids.eps.clone(),
        per_agent_regret_bound: vec![grids.eps.clone(); program.n_agents],
        grid_stats: grids.sizes(),
        node_count: core.memo_len() as u64,
        threshold: grids.threshold.clone(),
        f_n: grids.f_n,
        k: grids.k,
        tiebreak_id: opts.tiebreak.id().to_string(),
    };
    let table = DiscreteStrategyProfile { core: Arc::new(Mutex::new(core)), tiebreak_id: opts.tiebreak.id() };
    Ok((table, certificate))
}

/// Solves the subgames after each root cut on worker threads and merges
/// their tables, so the sequential root pass only does lookups.
fn presolve_root_parallel(core: &mut Box<dyn DynCore>, root: &Machine<u32>, threads: usize) -> Result<(), SolverError> {
    let program = core.program().clone();
    let Instr::Cut { .. } = program.instrs[root.pc] else {
        return Ok(());
    };
    let grids = core.grids().clone();
    let s = grids.stride(1);
    let ivs = root.cut_feasible(&program)?;
    let mut xs: Vec<u32> = ivs.iter().flat_map(|(lo, hi)| (lo.div_ceil(s)..=hi / s).map(move |j| j * s)).collect();
    xs.sort_unstable();
    xs.dedup();
    let chunk = xs.len().div_ceil(threads).max(1);
    let results: Vec<Result<Box<dyn DynCore>, SolverError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = xs
            .chunks(chunk)
            .map(|part| {
                let mut worker = core.boxed_clone();
                let program = program.clone();
                let root = root.clone();
                scope.spawn(move || -> Result<Box<dyn DynCore>, SolverError> {
                    for &x in part {
                        let mut m = root.clone();
                        m.apply_cut(&program, x);
                        m.advance(&program)?;
                        if !m.done {
                            worker.solve_at(&mut m)?;
                        }
                    }
                    Ok(worker)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("solver worker panicked")).collect()
    });
    for r in results {
        core.absorb(r?.into_any());
    }
    Ok(())
}

#[cfg(test)]
mod tests;
