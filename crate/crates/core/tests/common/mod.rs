#![allow(dead_code)]

use cutchoose::dsl::{parse, CompiledProgram, Condition, Endpoint, PieceExpr, ProtocolProgram, RelOp, Statement};
use cutchoose::engine::{step, Action, ExecutionState, NodeKind, Step};
use cutchoose::solver::GridFamily;
use cutchoose::{Rational, ValuationProfile};
use rand::Rng;

pub fn compile(text: &str) -> CompiledProgram {
    CompiledProgram::new(&parse(text).unwrap()).unwrap()
}

/// Plain game-tree enumeration on the exact engine: every grid point of
/// `G_ordinal` inside the feasible set at cuts, every option at chooses.
/// Ties keep the first action in ascending order.
pub fn exhaustive(program: &CompiledProgram, profile: &ValuationProfile, grids: &GridFamily) -> Vec<Rational> {
    let state = ExecutionState::new(program).unwrap();
    if state.terminated() {
        return state.outcome(profile).utilities;
    }
    enumerate(&state, program, profile, grids)
}

fn enumerate(state: &ExecutionState, program: &CompiledProgram, profile: &ValuationProfile, grids: &GridFamily) -> Vec<Rational> {
    let node = state.node(program).unwrap().unwrap();
    let agent = node.agent() - 1;
    let actions: Vec<Action> = match &node.kind {
        NodeKind::Cut { feasible, .. } => {
            let ordinal = node.next_ordinal() as usize;
            grids.grids[ordinal - 1]
                .iter()
                .filter(|x| feasible.iter().any(|iv| iv.contains(x)))
                .map(|x| Action::Cut(x.clone()))
                .collect()
        }
        NodeKind::Choose { options, .. } => (0..options.len()).map(Action::Choose).collect(),
    };
    let mut best: Option<Vec<Rational>> = None;
    for a in actions {
        let u = match step(state, program, profile, &a).unwrap() {
            Step::Done(run) => run.outcome.utilities,
            Step::Next(next) => enumerate(&next, program, profile, grids),
        };
        if best.as_ref().map_or(true, |b| u[agent] > b[agent]) {
            best = Some(u);
        }
    }
    best.unwrap()
}

/// A random valid program with at most `max_ops` decisions on any path.
pub fn random_program<R: Rng>(rng: &mut R, n_agents: usize, max_ops: usize) -> ProtocolProgram {
    loop {
        let mut labels = Vec::new();
        let mut counter = 0;
        let body = random_body(rng, n_agents, max_ops, &mut labels, &mut counter, 0, false);
        let p = ProtocolProgram::new(n_agents, body);
        if cutchoose::dsl::validate(&p).is_empty() && cutchoose::dsl::count_operations(&p).0 <= max_ops {
            return p;
        }
    }
}

fn endpoint<R: Rng>(rng: &mut R, labels: &[String]) -> Endpoint {
    if !labels.is_empty() && rng.gen_bool(0.6) {
        return Endpoint::label(&labels[rng.gen_range(0..labels.len())]);
    }
    if rng.gen_bool(0.5) {
        Endpoint::Zero
    } else {
        Endpoint::One
    }
}

fn random_body<R: Rng>(
    rng: &mut R,
    n: usize,
    ops: usize,
    labels: &mut Vec<String>,
    counter: &mut usize,
    depth: usize,
    mut chose: bool,
) -> Vec<Statement> {
    let mut body = Vec::new();
    let mut left = ops;
    while left > 0 && rng.gen_bool(0.85) {
        let agent = rng.gen_range(1..=n);
        match rng.gen_range(0..6) {
            0..=2 => {
                *counter += 1;
                let label = format!("x{counter}");
                let pieces = (0..rng.gen_range(1..=2))
                    .map(|_| PieceExpr::new(endpoint(rng, labels), endpoint(rng, labels)))
                    .collect();
                body.push(Statement::cut(agent, pieces, &label));
                labels.push(label);
                left -= 1;
            }
            3 | 4 if !chose => {
                *counter += 1;
                let label = format!("c{counter}");
                // One choose per path, so allocations never overlap.
                let pieces = (0..rng.gen_range(1..=3))
                    .map(|_| PieceExpr::new(endpoint(rng, labels), endpoint(rng, labels)))
                    .collect();
                body.push(Statement::choose(agent, pieces, &label));
                chose = true;
                left -= 1;
            }
            _ if depth < 2 && labels.len() >= 1 => {
                let a = endpoint(rng, labels);
                let b = endpoint(rng, labels);
                let op = [RelOp::Lt, RelOp::Le, RelOp::Eq, RelOp::Ge][rng.gen_range(0..4)];
                let cond = Condition::order(a, op, b);
                let mut l1 = labels.clone();
                let mut l2 = labels.clone();
                let then_body = random_body(rng, n, left, &mut l1, counter, depth + 1, chose);
                let else_body = random_body(rng, n, left, &mut l2, counter, depth + 1, chose);
                body.push(Statement::if_else(cond, then_body, else_body));
                break;
            }
            _ => {}
        }
    }
    body
}

/// Grid family from an explicit `G_1`, refined by midpoints `k - 1` times.
/// The cell bound is not enforced; the oracle tests do not need it.
pub fn grids_from(g1: Vec<Rational>, k: usize) -> GridFamily {
    let mut grids = vec![g1];
    while grids.len() < k {
        let last = grids.last().unwrap();
        let mut next = Vec::new();
        for w in last.windows(2) {
            next.push(w[0].clone());
            next.push((&w[0] + &w[1]) / Rational::from_integer(2.into()));
        }
        next.push(last.last().unwrap().clone());
        grids.push(next);
    }
    grids.truncate(k);
    GridFamily {
        grids,
        threshold: Rational::from_integer(1.into()),
        f_n: k.max(1),
        k,
        eps: Rational::from_integer(1.into()),
    }
}

pub fn seeded(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// Brute-force best response: every play in which the others follow their
/// strategies and `agent` (1-based) takes any grid cut, its prescribed
/// action or any option. Returns the best utility minus the prescribed one.
pub fn brute_force_gain(
    program: &CompiledProgram,
    profile: &ValuationProfile,
    strategies: &[&dyn cutchoose::engine::Strategy],
    agent: usize,
    grid: &[Rational],
) -> Rational {
    let root = ExecutionState::new(program).unwrap();
    let baseline = cutchoose::engine::run(program, profile, strategies).unwrap().outcome.utilities[agent - 1].clone();
    let mut best = None;
    plays(&root, program, profile, strategies, agent, grid, &mut best);
    best.unwrap_or(baseline.clone()) - baseline
}

fn plays(
    state: &ExecutionState,
    program: &CompiledProgram,
    profile: &ValuationProfile,
    strategies: &[&dyn cutchoose::engine::Strategy],
    agent: usize,
    grid: &[Rational],
    best: &mut Option<Rational>,
) {
    let Some(node) = state.node(program).unwrap() else {
        let u = state.outcome(profile).utilities[agent - 1].clone();
        if best.as_ref().map_or(true, |b| &u > b) {
            *best = Some(u);
        }
        return;
    };
    let prescribed = strategies[node.agent() - 1].act(&node).unwrap();
    let actions = if node.agent() != agent {
        vec![prescribed]
    } else {
        let mut v = vec![prescribed];
        match &node.kind {
            NodeKind::Cut { feasible, .. } => {
                v.extend(grid.iter().filter(|x| feasible.iter().any(|iv| iv.contains(x))).cloned().map(Action::Cut))
            }
            NodeKind::Choose { options, .. } => v.extend((0..options.len()).map(Action::Choose)),
        }
        v
    };
    for a in actions {
        match step(state, program, profile, &a).unwrap() {
            Step::Done(run) => {
                let u = run.outcome.utilities[agent - 1].clone();
                if best.as_ref().map_or(true, |b| &u > b) {
                    *best = Some(u);
                }
            }
            Step::Next(next) => plays(&next, program, profile, strategies, agent, grid, best),
        }
    }
}
