//! The Thieves protocol: agent 1 demarcates a contiguous allocation, then
//! every agent may steal a strict sub-interval of some piece, ending the
//! protocol. Its Nash equilibrium outcomes are exactly the envy-free
//! contiguous allocations.

use num_traits::{One, Zero};

use crate::dsl::{Condition, Endpoint, ProtocolProgram, RelOp, Statement};
use crate::engine::{Action, DecisionNode, NodeKind, Strategy};
use crate::rational::Rational;
use crate::valuation::Interval;

use super::*;

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

fn lt(a: &Endpoint, b: &Endpoint) -> Condition {
    Condition::order(a.clone(), RelOp::Lt, b.clone())
}

/// `choose i from {[w,z] ∩ [p,q]}; exit;`, with the intersection's
/// endpoints picked by comparing the cuts.
fn steal(i: usize, w: &Endpoint, z: &Endpoint, p: &Endpoint, q: &Endpoint) -> Vec<Statement> {
    let label = format!("s{i}");
    let take = |lo: &Endpoint, hi: &Endpoint| {
        vec![Statement::choose(i, vec![piece(lo.clone(), hi.clone())], &label), Statement::exit()]
    };
    let with_lo = |lo: &Endpoint| vec![Statement::if_else(lt(z, q), take(lo, z), take(lo, q))];
    vec![Statement::if_else(lt(p, w), with_lo(w), with_lo(p))]
}

fn after_demarcation(n: usize, pieces: &[(Endpoint, Endpoint)]) -> Vec<Statement> {
    let mut body = Vec::new();
    let order: Vec<usize> = (2..=n).chain(std::iter::once(1)).collect();
    for i in order {
        let (w, z) = (lbl(&format!("w{i}")), lbl(&format!("z{i}")));
        body.push(Statement::cut(i, vec![PieceExpr::whole()], &format!("w{i}")));
        body.push(Statement::cut(i, vec![piece(w.clone(), Endpoint::One)], &format!("z{i}")));
        for (p, q) in pieces {
            // Non-empty intersection of positive length that misses part of [p,q].
            let cond = lt(&w, q).and(lt(p, &z)).and(lt(p, &w).or(lt(&z, q)));
            body.push(Statement::if_else(cond, steal(i, &w, &z, p, q), vec![]));
        }
    }
    for (j, (p, q)) in pieces.iter().enumerate() {
        body.push(Statement::choose(j + 1, vec![piece(p.clone(), q.clone())], &format!("f{}", j + 1)));
    }
    body
}

pub fn thieves(n: usize) -> Result<GeneratedProtocol, ProtocolError> {
    if n < 2 {
        return Err(ProtocolError::UnsupportedN { n, reason: "need at least 2 agents".into() });
    }
    let d = |i: usize| lbl(&format!("d{i}"));
    let mut body: Vec<Statement> = (1..=n).map(|i| Statement::cut(1, vec![PieceExpr::whole()], &format!("d{i}"))).collect();
    // One branch per left-to-right order of the demarcation cuts, ties
    // going to the smaller agent index.
    let agents: Vec<usize> = (1..=n).collect();
    let mut branches = Vec::new();
    for perm in permutations(&agents) {
        let cond = Condition::all(perm.windows(2).map(|w| before(d(w[0]), w[0], d(w[1]), w[1])).collect());
        let mut pieces = vec![(Endpoint::Zero, Endpoint::One); n];
        for (k, &agent) in perm.iter().enumerate() {
            let lo = if k == 0 { Endpoint::Zero } else { d(agent) };
            let hi = perm.get(k + 1).map(|&next| d(next)).unwrap_or(Endpoint::One);
            pieces[agent - 1] = (lo, hi);
        }
        branches.push((cond, after_demarcation(n, &pieces)));
    }
    let (_, mut ladder) = branches.pop().unwrap();
    for (cond, then) in branches.into_iter().rev() {
        ladder = vec![Statement::if_else(cond, then, ladder)];
    }
    body.extend(ladder);
    Ok(GeneratedProtocol::new(
        ProtocolKind::Thieves,
        format!("thieves-{n}"),
        n,
        None,
        FairnessClass::EnvyFree,
        ProtocolProgram::new(n, body),
    ))
}

/// A partition of the cake into `n` contiguous pieces, piece `i` going to
/// agent `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContiguousAllocation {
    pub pieces: Vec<Interval>,
}

impl ContiguousAllocation {
    /// Checks that the pieces are non-empty and tile `[0,1]` without gaps.
    pub fn new(pieces: Vec<Interval>) -> Result<Self, ProtocolError> {
        let mut sorted: Vec<&Interval> = pieces.iter().collect();
        sorted.sort();
        let mut at = Rational::zero();
        for iv in &sorted {
            if iv.is_empty() {
                return Err(ProtocolError::InvalidAllocation(format!("empty piece {iv}")));
            }
            if *iv.lo() != at {
                return Err(ProtocolError::InvalidAllocation(format!("gap or overlap at {at}")));
            }
            at = iv.hi().clone();
        }
        if !at.is_one() {
            return Err(ProtocolError::InvalidAllocation("pieces do not reach 1".into()));
        }
        Ok(ContiguousAllocation { pieces })
    }

    pub fn n(&self) -> usize {
        self.pieces.len()
    }

    pub fn to_pieces(&self) -> Vec<crate::valuation::Piece> {
        self.pieces.iter().cloned().map(crate::valuation::Piece::single).collect()
    }
}

/// Equilibrium strategies for target allocation `Z`: agent 1 demarcates
/// `Z`, and in every verification round agent `i` cuts exactly at the
/// endpoints of `Z_i`, whatever happened before.
#[derive(Debug, Clone)]
pub struct ThievesStrategy {
    agent: usize,
    z: ContiguousAllocation,
}

pub fn thieves_ne_strategies(n: usize, z: &ContiguousAllocation) -> Result<Vec<ThievesStrategy>, ProtocolError> {
    if z.n() != n {
        return Err(ProtocolError::InvalidAllocation(format!("{} pieces for {n} agents", z.n())));
    }
    Ok((1..=n).map(|agent| ThievesStrategy { agent, z: z.clone() }).collect())
}

impl Strategy for ThievesStrategy {
    fn act(&self, node: &DecisionNode<'_>) -> Result<Action, String> {
        match &node.kind {
            NodeKind::Choose { .. } => Ok(Action::Choose(0)),
            NodeKind::Cut { feasible, .. } => {
                let label = node.label();
                let (kind, idx) = label.split_at(1);
                let idx: usize = idx.parse().map_err(|_| format!("unexpected cut label {label}"))?;
                let target = match kind {
                    "d" => self.z.pieces[idx - 1].lo().clone(),
                    "w" => self.z.pieces[self.agent - 1].lo().clone(),
                    "z" => self.z.pieces[self.agent - 1].hi().clone(),
                    _ => return Err(format!("unexpected cut label {label}")),
                };
                // Off path the own left cut may lie beyond the target.
                let iv = &feasible[0];
                let x = target.max(iv.lo().clone()).min(iv.hi().clone());
                Ok(Action::Cut(x))
            }
        }
    }

    fn memo_safe(&self) -> bool {
        true
    }
}
