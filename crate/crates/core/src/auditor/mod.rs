//! Independent checks: exact fairness measurements, grid-restricted
//! best-response regret and a brute-force contiguous envy-free search.

mod ef;
mod fairness;
mod regret;

pub use ef::{find_envy_free_contiguous, EfSearch};
pub use fairness::{check_fairness, FairnessReport};
pub use regret::{audit_regret, best_response_regret, AgentRegret, Deviation, DeviationGrids, RegretReport, SubtreeAudit};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AuditError {
    #[error("no contiguous allocation with max envy at most {bound} at resolution {resolution} (best {best})")]
    InfeasibleResolution { resolution: usize, bound: crate::Rational, best: crate::Rational },
    #[error("unsupported search: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
}

#[cfg(test)]
mod tests;
