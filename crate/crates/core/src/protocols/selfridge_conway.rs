//! Selfridge-Conway for three agents, trim and residue division included.

use crate::dsl::{Condition, Endpoint, ProtocolProgram, RelOp, Statement};
use crate::engine::{Action, DecisionNode, NodeKind, Strategy};
use crate::rational::{rat, Rational};
use crate::valuation::{Interval, PiecewiseDensity};

use super::*;

/// Agents in `agents` choose one piece each, in order, from what is left.
fn choose_in_turn(agents: &[usize], pieces: &[PieceExpr], labels: &[String]) -> Vec<Statement> {
    let first = Statement::choose(agents[0], pieces.to_vec(), &labels[0]);
    if agents.len() == 1 {
        return vec![first];
    }
    let branch = |j: usize| {
        let rest: Vec<PieceExpr> = pieces.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, p)| p.clone()).collect();
        choose_in_turn(&agents[1..], &rest, &labels[1..])
    };
    let mut ladder = branch(pieces.len() - 1);
    for j in (0..pieces.len() - 1).rev() {
        ladder = vec![Statement::if_else(Condition::Chose { label: labels[0].clone(), index: j }, branch(j), ladder)];
    }
    let mut body = vec![first];
    body.extend(ladder);
    body
}

fn residue(lo: Endpoint, hi: Endpoint, taker: usize, other: usize) -> Vec<Statement> {
    let mut body = vec![
        Statement::cut(other, vec![piece(lo.clone(), hi.clone())], "r1"),
        Statement::cut(other, vec![piece(lbl("r1"), hi.clone())], "r2"),
    ];
    let pieces = [piece(lo, lbl("r1")), piece(lbl("r1"), lbl("r2")), piece(lbl("r2"), hi)];
    let order = [taker, 1, other];
    let labels: Vec<String> = (1..=3).map(|turn| format!("m{turn}")).collect();
    body.extend(choose_in_turn(&order, &pieces, &labels));
    body
}

/// Branch where piece `k` of `pieces` was trimmed; `res` is the trimming.
fn trimmed(pieces: &[PieceExpr; 3], k: usize, res: (Endpoint, Endpoint)) -> Vec<Statement> {
    let mut body = vec![Statement::choose(3, pieces.to_vec(), "k3")];
    let branch = |j: usize| -> Vec<Statement> {
        let others: Vec<PieceExpr> = (0..3).filter(|&i| i != j).map(|i| pieces[i].clone()).collect();
        if j == k {
            let mut v = choose_in_turn(&[2, 1], &others, &["k2".to_string(), "k1".to_string()]);
            v.extend(residue(res.0.clone(), res.1.clone(), 3, 2));
            v
        } else {
            let last = (0..3).find(|&i| i != j && i != k).unwrap();
            let mut v = vec![
                Statement::choose(2, vec![pieces[k].clone()], "k2"),
                Statement::choose(1, vec![pieces[last].clone()], "k1"),
            ];
            v.extend(residue(res.0.clone(), res.1.clone(), 2, 3));
            v
        }
    };
    let mut ladder = branch(2);
    for j in (0..2).rev() {
        ladder = vec![Statement::if_else(Condition::Chose { label: "k3".into(), index: j }, branch(j), ladder)];
    }
    body.extend(ladder);
    body
}

pub fn selfridge_conway() -> GeneratedProtocol {
    use Endpoint::{One, Zero};
    let (a, b, t) = (lbl("a"), lbl("b"), lbl("t"));
    let plain = [piece(Zero, a.clone()), piece(a.clone(), b.clone()), piece(b.clone(), One)];
    let strictly_between = |lo: &Endpoint, hi: &Endpoint| {
        Condition::order(lo.clone(), RelOp::Lt, t.clone()).and(Condition::order(t.clone(), RelOp::Lt, hi.clone()))
    };
    let mut body = vec![
        Statement::cut(1, vec![PieceExpr::whole()], "a"),
        Statement::cut(1, vec![piece(a.clone(), One)], "b"),
        Statement::cut(2, vec![PieceExpr::whole()], "t"),
    ];
    let bounds = [(Zero, a.clone()), (a.clone(), b.clone()), (b.clone(), One)];
    let mut ladder = choose_in_turn(&[3, 2, 1], &plain, &["k3".into(), "k2".into(), "k1".into()]);
    for k in (0..3).rev() {
        let (lo, hi) = bounds[k].clone();
        let mut pieces = plain.clone();
        pieces[k] = piece(t.clone(), hi.clone());
        ladder = vec![Statement::if_else(
            strictly_between(&lo, &hi),
            trimmed(&pieces, k, (lo, t.clone())),
            ladder,
        )];
    }
    body.extend(ladder);
    GeneratedProtocol::new(
        ProtocolKind::SelfridgeConway,
        "selfridge-conway".into(),
        3,
        None,
        FairnessClass::EnvyFree,
        ProtocolProgram::new(3, body),
    )
}

pub(super) struct Honest {
    pub density: PiecewiseDensity,
}

impl Honest {
    fn value(&self, lo: &Rational, hi: &Rational) -> Rational {
        self.density.eval(&Interval::spanning(lo.clone(), hi.clone()).unwrap())
    }

    /// Trim the unique most valuable piece down to the runner-up.
    fn trim(&self, node: &DecisionNode<'_>) -> Result<Rational, String> {
        let zero = Rational::from_integer(0.into());
        let one = Rational::from_integer(1.into());
        let a = node.binding("a").ok_or("a unbound")?.clone();
        let b = node.binding("b").ok_or("b unbound")?.clone();
        let bounds = [(zero.clone(), a.clone()), (a, b.clone()), (b, one)];
        let mut vals: Vec<(Rational, usize)> = bounds.iter().enumerate().map(|(i, (l, h))| (self.value(l, h), i)).collect();
        vals.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
        if vals[0].0 == vals[1].0 {
            return Ok(zero);
        }
        let (lo, hi) = &bounds[vals[0].1];
        Ok(mark_within(&self.density, lo, hi, &(&vals[0].0 - &vals[1].0)))
    }
}

impl Strategy for Honest {
    fn act(&self, node: &DecisionNode<'_>) -> Result<Action, String> {
        if let NodeKind::Choose { .. } = node.kind {
            return favourite(&self.density, node);
        }
        if node.label() == "t" {
            return self.trim(node).map(Action::Cut);
        }
        let (lo, hi) = only_feasible(node)?;
        let parts = match node.label() {
            "a" | "r1" => 3,
            _ => 2,
        };
        let alpha = self.value(&lo, &hi) * rat(1, parts);
        Ok(Action::Cut(mark_within(&self.density, &lo, &hi, &alpha)))
    }

    fn memo_safe(&self) -> bool {
        true
    }
}
