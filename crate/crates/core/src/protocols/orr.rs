//! Oblivious round robin: every agent makes `m = ceil(n/eps)` cuts anywhere,
//! then agents take turns picking any unclaimed interval between adjacent
//! cuts until all `n*m + 1` are gone.

use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::dsl::{ProtocolProgram, Statement};
use crate::engine::{Action, DecisionNode, NodeKind, Strategy};
use crate::rational::{int, Rational};
use crate::valuation::PiecewiseDensity;

use super::*;

pub(crate) fn cuts_per_agent(n: usize, eps: &Rational) -> usize {
    let q = int(n as i64) / eps;
    let (c, r) = q.numer().div_rem(q.denom());
    let c: usize = c.try_into().expect("cut count fits in usize");
    if r.is_zero() {
        c
    } else {
        c + 1
    }
}

pub fn oblivious_round_robin(n: usize, eps: Rational) -> Result<GeneratedProtocol, ProtocolError> {
    if n < 2 {
        return Err(ProtocolError::UnsupportedN { n, reason: "need at least 2 agents".into() });
    }
    if !eps.is_positive() || eps > Rational::one() {
        return Err(ProtocolError::BadEps(eps));
    }
    let m = cuts_per_agent(n, &eps);
    let mut body = Vec::new();
    for i in 1..=n {
        for k in 1..=m {
            body.push(Statement::cut(i, vec![PieceExpr::whole()], &format!("a{i}_{k}")));
        }
    }
    for t in 0..n * m + 1 {
        body.push(Statement::choose_any(t % n + 1, &format!("p{}", t + 1)));
    }
    Ok(GeneratedProtocol::new(
        ProtocolKind::ObliviousRoundRobin,
        format!("oblivious-round-robin-{n}-{eps}"),
        n,
        Some(eps),
        FairnessClass::EpsEnvyFree,
        ProtocolProgram::new(n, body),
    ))
}

/// Cuts at own `k/(m+1)` quantiles, then always takes the favourite
/// remaining interval.
pub(super) struct Honest {
    density: PiecewiseDensity,
    m: usize,
}

impl Honest {
    pub fn new(density: PiecewiseDensity, n: usize, eps: Rational) -> Self {
        Honest { density, m: cuts_per_agent(n, &eps) }
    }
}

impl Strategy for Honest {
    fn act(&self, node: &DecisionNode<'_>) -> Result<Action, String> {
        match &node.kind {
            NodeKind::Choose { .. } => favourite(&self.density, node),
            NodeKind::Cut { .. } => {
                let label = node.label();
                let k: i64 = label
                    .rsplit('_')
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| format!("unexpected cut label {label}"))?;
                let alpha = Rational::new(k.into(), (self.m as i64 + 1).into());
                Ok(Action::Cut(self.density.mark(&Rational::zero(), &alpha).map_err(|e| e.to_string())?))
            }
        }
    }

    fn memo_safe(&self) -> bool {
        true
    }
}
