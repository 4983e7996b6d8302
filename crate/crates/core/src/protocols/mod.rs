//! Generators for classic protocols, each paired with its honest strategies.

mod classic;
mod orr;
mod selfridge_conway;
mod thieves;

use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::dsl::{CompiledProgram, Condition, Endpoint, PieceExpr, ProtocolProgram, RelOp};
use crate::engine::{Action, DecisionNode, NodeKind, Strategy};
use crate::rational::Rational;
use crate::valuation::{Interval, PiecewiseDensity, ValuationProfile};

pub use classic::{cut_and_choose, dubins_spanier, even_paz};
pub use orr::oblivious_round_robin;
pub use selfridge_conway::selfridge_conway;
pub use thieves::{thieves, thieves_ne_strategies, ContiguousAllocation};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("unsupported number of agents {n}: {reason}")]
    UnsupportedN { n: usize, reason: String },
    #[error("eps must lie in (0,1], got {0}")]
    BadEps(Rational),
    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),
    #[error("profile has {got} agents, protocol needs {expected}")]
    ProfileMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FairnessClass {
    Proportional,
    EnvyFree,
    EpsEnvyFree,
}

impl fmt::Display for FairnessClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FairnessClass::Proportional => "proportional",
            FairnessClass::EnvyFree => "envy_free",
            FairnessClass::EpsEnvyFree => "eps_envy_free",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    CutAndChoose,
    DubinsSpanier,
    EvenPaz,
    SelfridgeConway,
    Thieves,
    ObliviousRoundRobin,
}

impl ProtocolKind {
    /// Short name used on the command line.
    pub fn code(self) -> &'static str {
        match self {
            ProtocolKind::CutAndChoose => "cc",
            ProtocolKind::DubinsSpanier => "ds",
            ProtocolKind::EvenPaz => "ep",
            ProtocolKind::SelfridgeConway => "sc",
            ProtocolKind::Thieves => "thieves",
            ProtocolKind::ObliviousRoundRobin => "orr",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        [
            ProtocolKind::CutAndChoose,
            ProtocolKind::DubinsSpanier,
            ProtocolKind::EvenPaz,
            ProtocolKind::SelfridgeConway,
            ProtocolKind::Thieves,
            ProtocolKind::ObliviousRoundRobin,
        ]
        .into_iter()
        .find(|k| k.code() == s)
    }
}

pub struct GeneratedProtocol {
    pub kind: ProtocolKind,
    pub name: String,
    pub n: usize,
    pub eps: Option<Rational>,
    pub fairness_class: FairnessClass,
    pub program: ProtocolProgram,
    pub compiled: CompiledProgram,
}

/// Resolution the Thieves honest profile uses to find its target allocation.
pub const THIEVES_HONEST_RESOLUTION: usize = 24;

impl GeneratedProtocol {
    pub(crate) fn new(
        kind: ProtocolKind,
        name: String,
        n: usize,
        eps: Option<Rational>,
        fairness_class: FairnessClass,
        program: ProtocolProgram,
    ) -> Self {
        let compiled = CompiledProgram::new(&program)
            .unwrap_or_else(|v| panic!("generator {name} emitted an invalid program: {v:?}"));
        GeneratedProtocol { kind, name, n, eps, fairness_class, program, compiled }
    }

    /// Honest strategies for `profile`, one per agent. For Thieves these are
    /// the equilibrium strategies for the least-envy contiguous allocation
    /// found on a uniform grid.
    pub fn honest(&self, profile: &ValuationProfile) -> Result<Vec<Box<dyn Strategy>>, ProtocolError> {
        if profile.n() != self.n {
            return Err(ProtocolError::ProfileMismatch { expected: self.n, got: profile.n() });
        }
        let densities = profile.agents();
        Ok(match self.kind {
            ProtocolKind::CutAndChoose | ProtocolKind::DubinsSpanier | ProtocolKind::EvenPaz => densities
                .iter()
                .map(|d| Box::new(classic::Honest::new(self.kind, self.n, d.clone())) as Box<dyn Strategy>)
                .collect(),
            ProtocolKind::SelfridgeConway => densities
                .iter()
                .map(|d| Box::new(selfridge_conway::Honest { density: d.clone() }) as Box<dyn Strategy>)
                .collect(),
            ProtocolKind::ObliviousRoundRobin => densities
                .iter()
                .map(|d| Box::new(orr::Honest::new(d.clone(), self.n, self.eps.clone().unwrap())) as Box<dyn Strategy>)
                .collect(),
            ProtocolKind::Thieves => {
                let found = crate::auditor::find_envy_free_contiguous(profile, THIEVES_HONEST_RESOLUTION, None)
                    .map_err(|e| ProtocolError::UnsupportedN { n: self.n, reason: e.to_string() })?;
                thieves_ne_strategies(self.n, &found.allocation)?
                    .into_iter()
                    .map(|s| Box::new(s) as Box<dyn Strategy>)
                    .collect()
            }
        })
    }
}

/// Regenerates a builtin protocol from its command-line code.
pub fn generate(kind: ProtocolKind, n: usize, eps: Option<Rational>) -> Result<GeneratedProtocol, ProtocolError> {
    match kind {
        ProtocolKind::CutAndChoose if n == 2 => Ok(cut_and_choose()),
        ProtocolKind::CutAndChoose => Err(ProtocolError::UnsupportedN { n, reason: "cut and choose is for 2 agents".into() }),
        ProtocolKind::DubinsSpanier => dubins_spanier(n),
        ProtocolKind::EvenPaz => even_paz(n),
        ProtocolKind::SelfridgeConway if n == 3 => Ok(selfridge_conway()),
        ProtocolKind::SelfridgeConway => Err(ProtocolError::UnsupportedN { n, reason: "Selfridge-Conway is for 3 agents".into() }),
        ProtocolKind::Thieves => thieves(n),
        ProtocolKind::ObliviousRoundRobin => {
            let eps = eps.ok_or_else(|| ProtocolError::BadEps(Rational::zero()))?;
            oblivious_round_robin(n, eps)
        }
    }
}

pub(crate) fn lbl(name: &str) -> Endpoint {
    Endpoint::label(name)
}

pub(crate) fn piece(a: Endpoint, b: Endpoint) -> PieceExpr {
    PieceExpr::new(a, b)
}

/// `a` comes before `b` in the smallest-index tie-break order between the
/// cuts of agents `ia` and `ib`.
pub(crate) fn before(a: Endpoint, ia: usize, b: Endpoint, ib: usize) -> Condition {
    let op = if ia < ib { RelOp::Le } else { RelOp::Lt };
    Condition::order(a, op, b)
}

/// Leftmost point `y` in `[lo, hi]` with `V([lo, y]) = alpha`, or `hi` when
/// the interval is worth less than `alpha`.
pub(crate) fn mark_within(d: &PiecewiseDensity, lo: &Rational, hi: &Rational, alpha: &Rational) -> Rational {
    let avail = d.eval(&Interval::new(lo.clone(), hi.clone()).expect("feasible interval"));
    if alpha >= &avail || alpha.is_negative() {
        return if alpha.is_negative() { lo.clone() } else { hi.clone() };
    }
    d.mark(lo, alpha).expect("alpha is below the available value").min(hi.clone())
}

/// Index of the option this agent values most, lowest index on ties.
pub(crate) fn favourite(d: &PiecewiseDensity, node: &DecisionNode<'_>) -> Result<Action, String> {
    let NodeKind::Choose { options, .. } = &node.kind else {
        return Err("expected a choose node".into());
    };
    let mut best = 0;
    let mut best_v = Rational::zero() - Rational::one();
    for (i, o) in options.iter().enumerate() {
        let v = d.value_of_piece(o);
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    Ok(Action::Choose(best))
}

pub(crate) fn only_feasible(node: &DecisionNode<'_>) -> Result<(Rational, Rational), String> {
    match &node.kind {
        NodeKind::Cut { feasible, .. } if feasible.len() == 1 => {
            Ok((feasible[0].lo().clone(), feasible[0].hi().clone()))
        }
        _ => Err(format!("expected a single-interval cut at {}", node.path())),
    }
}
