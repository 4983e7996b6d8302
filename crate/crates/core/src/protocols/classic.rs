//! Cut-and-choose, Dubins-Spanier and Even-Paz.

use crate::dsl::{Condition, Endpoint, ProtocolProgram, Statement};
use crate::engine::{Action, DecisionNode, NodeKind, Strategy};
use crate::rational::{rat, Rational};
use crate::valuation::{Interval, PiecewiseDensity};

use super::*;

pub fn cut_and_choose() -> GeneratedProtocol {
    let x = || lbl("x");
    let body = vec![
        Statement::cut(1, vec![PieceExpr::whole()], "x"),
        Statement::choose(2, vec![piece(Endpoint::Zero, x()), piece(x(), Endpoint::One)], "c"),
        Statement::if_else(
            Condition::Chose { label: "c".into(), index: 0 },
            vec![Statement::choose(1, vec![piece(x(), Endpoint::One)], "r")],
            vec![Statement::choose(1, vec![piece(Endpoint::Zero, x())], "r")],
        ),
    ];
    GeneratedProtocol::new(
        ProtocolKind::CutAndChoose,
        "cut-and-choose".into(),
        2,
        None,
        FairnessClass::Proportional,
        ProtocolProgram::new(2, body),
    )
}

fn ds_round(remaining: &[usize], left: Endpoint, round: usize) -> Vec<Statement> {
    if let [last] = remaining {
        return vec![Statement::choose(*last, vec![piece(left, Endpoint::One)], &format!("g{round}"))];
    }
    let cut_label = |a: usize| format!("c{round}_{a}");
    let mut body: Vec<Statement> = remaining
        .iter()
        .map(|&a| Statement::cut(a, vec![piece(left.clone(), Endpoint::One)], &cut_label(a)))
        .collect();
    // Ladder: the first agent whose cut precedes everyone else's wins; the
    // last candidate is the only one left when all earlier tests fail.
    let award = |w: usize| -> Vec<Statement> {
        let mut v = vec![Statement::choose(w, vec![piece(left.clone(), lbl(&cut_label(w)))], &format!("g{round}"))];
        let rest: Vec<usize> = remaining.iter().copied().filter(|&a| a != w).collect();
        v.extend(ds_round(&rest, lbl(&cut_label(w)), round + 1));
        v
    };
    let mut ladder = award(*remaining.last().unwrap());
    for &w in remaining[..remaining.len() - 1].iter().rev() {
        let cond = Condition::all(
            remaining
                .iter()
                .filter(|&&b| b != w)
                .map(|&b| before(lbl(&cut_label(w)), w, lbl(&cut_label(b)), b))
                .collect(),
        );
        ladder = vec![Statement::if_else(cond, award(w), ladder)];
    }
    body.extend(ladder);
    body
}

pub fn dubins_spanier(n: usize) -> Result<GeneratedProtocol, ProtocolError> {
    if n < 2 {
        return Err(ProtocolError::UnsupportedN { n, reason: "need at least 2 agents".into() });
    }
    let agents: Vec<usize> = (1..=n).collect();
    let body = ds_round(&agents, Endpoint::Zero, 1);
    Ok(GeneratedProtocol::new(
        ProtocolKind::DubinsSpanier,
        format!("dubins-spanier-{n}"),
        n,
        None,
        FairnessClass::Proportional,
        ProtocolProgram::new(n, body),
    ))
}

fn subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if items.len() < k {
        return vec![];
    }
    let mut with: Vec<Vec<usize>> = subsets(&items[1..], k - 1)
        .into_iter()
        .map(|mut s| {
            s.insert(0, items[0]);
            s
        })
        .collect();
    with.extend(subsets(&items[1..], k));
    with
}

/// Halving of block `[lo, hi]` among `group`. `tag` names the block.
fn ep_block(group: &[usize], lo: Endpoint, hi: Endpoint, tag: &str) -> Vec<Statement> {
    if let [a] = group {
        return vec![Statement::choose(*a, vec![piece(lo, hi)], &format!("g{a}"))];
    }
    let cut_label = |a: usize| format!("e{tag}_{a}");
    let mut body: Vec<Statement> = group
        .iter()
        .map(|&a| Statement::cut(a, vec![piece(lo.clone(), hi.clone())], &cut_label(a)))
        .collect();
    let half = group.len() / 2;
    // One branch per (left half, divider) pair: every left agent's cut
    // precedes every right agent's, and the divider is the last left cut.
    let mut branches = Vec::new();
    for left in subsets(group, half) {
        let right: Vec<usize> = group.iter().copied().filter(|a| !left.contains(a)).collect();
        for &d in &left {
            let mut conds = Vec::new();
            for &t in &left {
                if t != d {
                    conds.push(before(lbl(&cut_label(t)), t, lbl(&cut_label(d)), d));
                }
            }
            for &u in &right {
                conds.push(before(lbl(&cut_label(d)), d, lbl(&cut_label(u)), u));
            }
            let mut then = ep_block(&left, lo.clone(), lbl(&cut_label(d)), &format!("{tag}l"));
            then.extend(ep_block(&right, lbl(&cut_label(d)), hi.clone(), &format!("{tag}r")));
            branches.push((Condition::all(conds), then));
        }
    }
    let (_, last) = branches.pop().unwrap();
    let mut ladder = last;
    for (cond, then) in branches.into_iter().rev() {
        ladder = vec![Statement::if_else(cond, then, ladder)];
    }
    body.extend(ladder);
    body
}

pub fn even_paz(n: usize) -> Result<GeneratedProtocol, ProtocolError> {
    if n < 2 || !n.is_power_of_two() {
        return Err(ProtocolError::UnsupportedN { n, reason: "Even-Paz needs a power of two".into() });
    }
    let agents: Vec<usize> = (1..=n).collect();
    let body = ep_block(&agents, Endpoint::Zero, Endpoint::One, "");
    Ok(GeneratedProtocol::new(
        ProtocolKind::EvenPaz,
        format!("even-paz-{n}"),
        n,
        None,
        FairnessClass::Proportional,
        ProtocolProgram::new(n, body),
    ))
}

/// Honest play: cut-and-choose and Even-Paz mark half the current block,
/// Dubins-Spanier marks `1/n` from the round's left boundary; every choose
/// takes the favourite option.
pub(super) struct Honest {
    kind: ProtocolKind,
    share: Rational,
    density: PiecewiseDensity,
}

impl Honest {
    pub fn new(kind: ProtocolKind, n: usize, density: PiecewiseDensity) -> Self {
        Honest { kind, share: rat(1, n as i64), density }
    }
}

impl Strategy for Honest {
    fn act(&self, node: &DecisionNode<'_>) -> Result<Action, String> {
        match &node.kind {
            NodeKind::Cut { .. } => {
                let (lo, hi) = only_feasible(node)?;
                let alpha = match self.kind {
                    ProtocolKind::DubinsSpanier => self.share.clone(),
                    _ => self.density.eval(&Interval::new(lo.clone(), hi.clone()).unwrap()) * rat(1, 2),
                };
                Ok(Action::Cut(mark_within(&self.density, &lo, &hi, &alpha)))
            }
            NodeKind::Choose { .. } => favourite(&self.density, node),
        }
    }

    fn memo_safe(&self) -> bool {
        true
    }
}
