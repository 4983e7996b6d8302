//! Generalized cut-and-choose (GCC) cake-cutting protocols: a small language
//! for writing them, an exact interpreter, generators for classic protocols,
//! an approximate subgame-perfect equilibrium solver and an auditor.

pub mod auditor;
pub mod dsl;
pub mod engine;
pub mod protocols;
pub mod rational;
pub mod solver;
pub mod valuation;

pub use rational::{parse_rational, rat, Rational, Q};
pub use valuation::{Interval, Piece, PiecewiseDensity, Segment, ValuationError, ValuationProfile};
