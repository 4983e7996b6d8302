use num_traits::{Signed, Zero};
use serde_json::{json, Value};

use crate::rational::{fmt_rational, rat, Rational};
use crate::valuation::{Piece, ValuationProfile};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FairnessReport {
    /// `V_i(X_i) - 1/n`, index 0 is agent 1.
    pub proportional_margin: Vec<Rational>,
    /// `envy[i][j] = V_i(X_j) - V_i(X_i)`.
    pub envy_matrix: Vec<Vec<Rational>>,
    pub eps_used: Rational,
    pub proportional: bool,
    pub eps_proportional: bool,
    pub envy_free: bool,
    pub eps_envy_free: bool,
}

impl FairnessReport {
    /// Largest entry of the envy matrix, never below zero.
    pub fn max_envy(&self) -> Rational {
        self.envy_matrix.iter().flatten().fold(Rational::zero(), |m, e| m.max(e.clone()))
    }

    pub fn to_json(&self) -> Value {
        let q = |r: &Rational| Value::String(fmt_rational(r));
        json!({
            "proportional_margin": self.proportional_margin.iter().map(q).collect::<Vec<_>>(),
            "envy_matrix": self.envy_matrix.iter().map(|row| row.iter().map(q).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "eps_used": q(&self.eps_used),
            "flags": {
                "proportional": self.proportional,
                "eps_proportional": self.eps_proportional,
                "envy_free": self.envy_free,
                "eps_envy_free": self.eps_envy_free,
            },
        })
    }
}

/// Exact margins and envy for `alloc[i]` going to agent `i + 1`.
pub fn check_fairness(alloc: &[Piece], profile: &ValuationProfile, eps: &Rational) -> FairnessReport {
    let n = profile.n();
    let share = rat(1, n as i64);
    let values: Vec<Vec<Rational>> = profile
        .agents()
        .iter()
        .map(|d| alloc.iter().map(|p| d.value_of_piece(p)).collect())
        .collect();
    let own = |i: usize| values[i].get(i).cloned().unwrap_or_else(Rational::zero);
    let proportional_margin: Vec<Rational> = (0..n).map(|i| own(i) - &share).collect();
    let envy_matrix: Vec<Vec<Rational>> = (0..n)
        .map(|i| (0..alloc.len()).map(|j| &values[i][j] - own(i)).collect())
        .collect();
    let neg_eps = -eps.clone();
    let proportional = proportional_margin.iter().all(|m| !m.is_negative());
    let eps_proportional = proportional_margin.iter().all(|m| *m >= neg_eps);
    let envy_free = envy_matrix.iter().flatten().all(|e| !e.is_positive());
    let eps_envy_free = envy_matrix.iter().flatten().all(|e| e <= eps);
    FairnessReport {
        proportional_margin,
        envy_matrix,
        eps_used: eps.clone(),
        proportional,
        eps_proportional,
        envy_free,
        eps_envy_free,
    }
}
