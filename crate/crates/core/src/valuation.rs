//! Agents' valuations over the unit-interval cake.
//!
//! A valuation is a piecewise-constant density with rational breakpoints and
//! rational densities, normalized so the whole cake is worth exactly 1. This
//! keeps every Robertson-Webb query ([`PiecewiseDensity::eval`] and
//! [`PiecewiseDensity::mark`]) exact.

use std::fmt;

use num_traits::{One, Signed, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rational::{rat, Rational, Q};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValuationError {
    #[error("coordinate {0} lies outside [0,1]")]
    CoordinateOutOfRange(Rational),
    #[error("interval [{lo},{hi}] has lo > hi")]
    InvalidInterval { lo: Rational, hi: Rational },
    #[error("intervals [{0}] overlap")]
    OverlappingIntervals(String),
    #[error("cannot mark value {alpha}: only {available} remains to the right")]
    AlphaOutOfRange { alpha: Rational, available: Rational },
    #[error("agent {agent}: density integrates to {total}, deficit {deficit}")]
    NotNormalized { agent: usize, total: Rational, deficit: Rational },
    #[error("agent {agent}: {reason}")]
    InvalidSegments { agent: usize, reason: String },
    #[error("profile needs at least one agent")]
    EmptyProfile,
    #[error("malformed profile: {0}")]
    Malformed(String),
}

/// Closed interval `[lo, hi]` of the cake. `lo == hi` is the empty interval.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Interval {
    lo: Rational,
    hi: Rational,
}

fn check_coordinate(x: &Rational) -> Result<(), ValuationError> {
    if x.is_negative() || *x > Rational::one() {
        Err(ValuationError::CoordinateOutOfRange(x.clone()))
    } else {
        Ok(())
    }
}

impl Interval {
    pub fn new(lo: Rational, hi: Rational) -> Result<Self, ValuationError> {
        check_coordinate(&lo)?;
        check_coordinate(&hi)?;
        if lo > hi {
            return Err(ValuationError::InvalidInterval { lo, hi });
        }
        Ok(Interval { lo, hi })
    }

    /// Builds the interval spanned by two coordinates in either order.
    pub fn spanning(a: Rational, b: Rational) -> Result<Self, ValuationError> {
        if a <= b {
            Interval::new(a, b)
        } else {
            Interval::new(b, a)
        }
    }

    pub fn full() -> Self {
        Interval { lo: Rational::zero(), hi: Rational::one() }
    }

    pub fn lo(&self) -> &Rational {
        &self.lo
    }

    pub fn hi(&self) -> &Rational {
        &self.hi
    }

    pub fn length(&self) -> Rational {
        &self.hi - &self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: &Rational) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    /// True when the two intervals share a set of positive length.
    /// Touching at a boundary point does not count.
    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo.clone().max(other.lo.clone()) < self.hi.clone().min(other.hi.clone())
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

/// A finite union of intervals, kept sorted by left endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Piece {
    intervals: Vec<Interval>,
}

impl Piece {
    pub fn new(mut intervals: Vec<Interval>) -> Result<Self, ValuationError> {
        intervals.sort();
        for w in intervals.windows(2) {
            if w[0].overlaps(&w[1]) {
                return Err(ValuationError::OverlappingIntervals(format!("{} {}", w[0], w[1])));
            }
        }
        Ok(Piece { intervals })
    }

    pub fn empty() -> Self {
        Piece::default()
    }

    pub fn single(iv: Interval) -> Self {
        Piece { intervals: vec![iv] }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.iter().all(Interval::is_empty)
    }

    pub fn overlaps(&self, iv: &Interval) -> bool {
        self.intervals.iter().any(|own| own.overlaps(iv))
    }
}

impl fmt::Display for Piece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, iv) in self.intervals.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{iv}")?;
        }
        write!(f, "}}")
    }
}

/// Constant density on `(previous breakpoint, to]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub to: Rational,
    pub density: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PiecewiseDensity {
    segments: Vec<Segment>,
    strictly_positive: bool,
    /// `starts[k]` is the left breakpoint of segment `k`, `cumulative[k]` the
    /// value of `[0, starts[k]]`.
    starts: Vec<Rational>,
    cumulative: Vec<Rational>,
}

impl PiecewiseDensity {
    /// Validates breakpoints, signs and normalization. `agent` is only used
    /// in error messages (1-based).
    pub fn new(
        segments: Vec<Segment>,
        strictly_positive: bool,
        agent: usize,
    ) -> Result<Self, ValuationError> {
        let bad = |reason: &str| ValuationError::InvalidSegments { agent, reason: reason.into() };
        if segments.is_empty() {
            return Err(bad("no segments"));
        }
        let mut starts = Vec::with_capacity(segments.len());
        let mut cumulative = Vec::with_capacity(segments.len());
        let mut prev = Rational::zero();
        let mut total = Rational::zero();
        for seg in &segments {
            if seg.to <= prev {
                return Err(bad("breakpoints must be strictly increasing"));
            }
            if seg.to > Rational::one() {
                return Err(bad("breakpoint beyond 1"));
            }
            if seg.density.is_negative() {
                return Err(bad("negative density"));
            }
            if strictly_positive && seg.density.is_zero() {
                return Err(bad("zero density in a strictly positive valuation"));
            }
            starts.push(prev.clone());
            cumulative.push(total.clone());
            total += &seg.density * (&seg.to - &prev);
            prev = seg.to.clone();
        }
        if !prev.is_one() {
            return Err(bad("last breakpoint must be 1"));
        }
        if !total.is_one() {
            return Err(ValuationError::NotNormalized {
                agent,
                deficit: Rational::one() - &total,
                total,
            });
        }
        Ok(PiecewiseDensity { segments, strictly_positive, starts, cumulative })
    }

    pub fn uniform() -> Self {
        PiecewiseDensity::new(
            vec![Segment { to: Rational::one(), density: Rational::one() }],
            true,
            1,
        )
        .expect("uniform density is valid")
    }

    /// Density proportional to `weights` on equal-width segments.
    pub fn from_weights(weights: &[u32]) -> Result<Self, ValuationError> {
        let k = weights.len() as i64;
        let sum: i64 = weights.iter().map(|&w| w as i64).sum();
        if k == 0 || sum == 0 {
            return Err(ValuationError::InvalidSegments { agent: 1, reason: "empty weights".into() });
        }
        let segments = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| Segment { to: rat(i as i64 + 1, k), density: rat(w as i64 * k, sum) })
            .collect();
        PiecewiseDensity::new(segments, weights.iter().all(|&w| w > 0), 1)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn strictly_positive(&self) -> bool {
        self.strictly_positive
    }

    fn segment_index(&self, x: &Rational) -> usize {
        // First segment whose right breakpoint is >= x.
        self.segments.partition_point(|s| &s.to < x).min(self.segments.len() - 1)
    }

    /// Value of `[0, x]`.
    pub fn cdf(&self, x: &Rational) -> Rational {
        let k = self.segment_index(x);
        &self.cumulative[k] + &self.segments[k].density * (x - &self.starts[k])
    }

    /// Evaluate query: the value of `iv`.
    pub fn eval(&self, iv: &Interval) -> Rational {
        if iv.is_empty() {
            return Rational::zero();
        }
        self.cdf(&iv.hi) - self.cdf(&iv.lo)
    }

    /// Cut query: the leftmost `y >= x` with `eval([x, y]) == alpha`.
    pub fn mark(&self, x: &Rational, alpha: &Rational) -> Result<Rational, ValuationError> {
        check_coordinate(x)?;
        let available = Rational::one() - self.cdf(x);
        if alpha.is_negative() || alpha > &available {
            return Err(ValuationError::AlphaOutOfRange { alpha: alpha.clone(), available });
        }
        if alpha.is_zero() {
            return Ok(x.clone());
        }
        let target = Rational::one() - available + alpha;
        let first = self.segment_index(x);
        for k in first..self.segments.len() {
            let seg = &self.segments[k];
            let end_value = self.cumulative.get(k + 1).cloned().unwrap_or_else(Rational::one);
            if end_value >= target && seg.density.is_positive() {
                return Ok(&self.starts[k] + (&target - &self.cumulative[k]) / &seg.density);
            }
        }
        unreachable!("alpha was checked against the remaining value")
    }

    pub fn value_of_piece(&self, piece: &Piece) -> Rational {
        piece.intervals().iter().map(|iv| self.eval(iv)).sum()
    }
}

/// Free-function forms of the query primitives.
pub fn eval(density: &PiecewiseDensity, iv: &Interval) -> Rational {
    density.eval(iv)
}

pub fn mark(
    density: &PiecewiseDensity,
    x: &Rational,
    alpha: &Rational,
) -> Result<Rational, ValuationError> {
    density.mark(x, alpha)
}

pub fn value_of_piece(density: &PiecewiseDensity, piece: &Piece) -> Rational {
    density.value_of_piece(piece)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValuationProfile {
    agents: Vec<PiecewiseDensity>,
}

#[derive(Serialize, Deserialize)]
struct SegmentDoc {
    to: Q,
    density: Q,
}

#[derive(Serialize, Deserialize)]
struct AgentDoc {
    strictly_positive: bool,
    segments: Vec<SegmentDoc>,
}

#[derive(Serialize, Deserialize)]
struct ProfileDoc {
    agents: Vec<AgentDoc>,
}

impl ValuationProfile {
    pub fn new(agents: Vec<PiecewiseDensity>) -> Result<Self, ValuationError> {
        if agents.is_empty() {
            return Err(ValuationError::EmptyProfile);
        }
        Ok(ValuationProfile { agents })
    }

    pub fn uniform(n: usize) -> Self {
        ValuationProfile { agents: vec![PiecewiseDensity::uniform(); n.max(1)] }
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    /// Density of agent `i` (1-based).
    pub fn agent(&self, i: usize) -> &PiecewiseDensity {
        &self.agents[i - 1]
    }

    pub fn agents(&self) -> &[PiecewiseDensity] {
        &self.agents
    }

    pub fn strictly_positive(&self) -> bool {
        self.agents.iter().all(PiecewiseDensity::strictly_positive)
    }

    pub fn from_json(text: &str) -> Result<Self, ValuationError> {
        let doc: ProfileDoc =
            serde_json::from_str(text).map_err(|e| ValuationError::Malformed(e.to_string()))?;
        let agents = doc
            .agents
            .into_iter()
            .enumerate()
            .map(|(i, a)| {
                let segments = a
                    .segments
                    .into_iter()
                    .map(|s| Segment { to: s.to.0, density: s.density.0 })
                    .collect();
                PiecewiseDensity::new(segments, a.strictly_positive, i + 1)
            })
            .collect::<Result<Vec<_>, _>>()?;
        ValuationProfile::new(agents)
    }

    pub fn to_json(&self) -> String {
        let doc = ProfileDoc {
            agents: self
                .agents
                .iter()
                .map(|d| AgentDoc {
                    strictly_positive: d.strictly_positive,
                    segments: d
                        .segments
                        .iter()
                        .map(|s| SegmentDoc { to: Q(s.to.clone()), density: Q(s.density.clone()) })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("profile serializes")
    }

    /// Random strictly positive profile: each agent gets 1 to 4 segments with
    /// breakpoints on multiples of 1/8 and integer weights in 1..=5.
    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        let agents = (0..n.max(1)).map(|i| random_density(rng, i + 1)).collect();
        ValuationProfile { agents }
    }
}

fn random_density<R: Rng>(rng: &mut R, agent: usize) -> PiecewiseDensity {
    let pieces = rng.gen_range(1..=4usize);
    let mut cuts: Vec<i64> = Vec::new();
    while cuts.len() < pieces - 1 {
        let c = rng.gen_range(1..8i64);
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    cuts.push(8);
    let weights: Vec<i64> = (0..pieces).map(|_| rng.gen_range(1..=5i64)).collect();
    let mut prev = 0;
    let mass: i64 = cuts
        .iter()
        .zip(&weights)
        .map(|(&c, &w)| {
            let m = w * (c - prev);
            prev = c;
            m
        })
        .sum();
    // density_k = w_k / sum_j(w_j * len_j) with len in eighths.
    let segments = cuts
        .iter()
        .zip(&weights)
        .map(|(&c, &w)| Segment { to: rat(c, 8), density: rat(w * 8, mass) })
        .collect();
    PiecewiseDensity::new(segments, true, agent).expect("random density is normalized")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    pub(crate) fn skewed() -> PiecewiseDensity {
        PiecewiseDensity::new(
            vec![
                Segment { to: rat(1, 2), density: rat(3, 2) },
                Segment { to: int(1), density: rat(1, 2) },
            ],
            true,
            1,
        )
        .unwrap()
    }

    fn iv(a: (i64, i64), b: (i64, i64)) -> Interval {
        Interval::new(rat(a.0, a.1), rat(b.0, b.1)).unwrap()
    }

    /// Midpoint Riemann sum with `steps` cells. Exact for piecewise-constant
    /// densities whenever every breakpoint falls on a cell boundary.
    fn riemann(d: &PiecewiseDensity, lo: &Rational, hi: &Rational, steps: i64) -> Rational {
        let width = (hi - lo) / int(steps);
        (0..steps)
            .map(|k| {
                let mid = lo + &width * (int(k) + rat(1, 2));
                let seg = d.segments().iter().find(|s| mid <= s.to).unwrap();
                &seg.density * &width
            })
            .sum()
    }

    #[test]
    fn eval_examples() {
        let u = PiecewiseDensity::uniform();
        assert_eq!(u.eval(&iv((0, 1), (1, 2))), rat(1, 2));
        let d = skewed();
        assert_eq!(d.eval(&iv((1, 4), (3, 4))), rat(1, 2));
        assert_eq!(riemann(&d, &rat(1, 4), &rat(3, 4), 8), rat(1, 2));
        assert_eq!(d.eval(&iv((1, 3), (1, 3))), int(0));
    }

    #[test]
    fn mark_examples() {
        let u = PiecewiseDensity::uniform();
        assert_eq!(u.mark(&rat(1, 4), &rat(1, 4)).unwrap(), rat(1, 2));
        let d = skewed();
        assert_eq!(d.mark(&int(0), &rat(7, 8)).unwrap(), rat(3, 4));
        assert_eq!(d.mark(&int(0), &int(0)).unwrap(), int(0));
        assert_eq!(d.mark(&int(0), &rat(1, 2)).unwrap(), rat(1, 3));
    }

    #[test]
    fn mark_rejects_excess_alpha() {
        let d = skewed();
        let err = d.mark(&rat(1, 2), &rat(1, 2)).unwrap_err();
        assert_eq!(err, ValuationError::AlphaOutOfRange { alpha: rat(1, 2), available: rat(1, 4) });
    }

    #[test]
    fn mark_is_leftmost_across_zero_plateau() {
        let d = PiecewiseDensity::new(
            vec![
                Segment { to: rat(1, 4), density: int(2) },
                Segment { to: rat(3, 4), density: int(0) },
                Segment { to: int(1), density: int(2) },
            ],
            false,
            1,
        )
        .unwrap();
        assert_eq!(d.mark(&int(0), &rat(1, 2)).unwrap(), rat(1, 4));
        assert_eq!(d.mark(&rat(1, 2), &rat(1, 4)).unwrap(), rat(7, 8));
    }

    #[test]
    fn value_of_piece_examples() {
        let u = PiecewiseDensity::uniform();
        let p = Piece::new(vec![iv((0, 1), (1, 4)), iv((3, 4), (1, 1))]).unwrap();
        assert_eq!(u.value_of_piece(&p), rat(1, 2));
        let d = skewed();
        let halves = Piece::new(vec![iv((0, 1), (1, 2)), iv((1, 2), (1, 1))]).unwrap();
        assert_eq!(d.value_of_piece(&halves), int(1));
        assert_eq!(d.value_of_piece(&Piece::single(iv((1, 4), (1, 2)))), rat(3, 8));
    }

    #[test]
    fn rejects_bad_densities() {
        let short = PiecewiseDensity::new(
            vec![Segment { to: int(1), density: rat(3, 4) }],
            true,
            2,
        );
        assert_eq!(
            short.unwrap_err(),
            ValuationError::NotNormalized { agent: 2, total: rat(3, 4), deficit: rat(1, 4) }
        );
        assert!(PiecewiseDensity::new(
            vec![Segment { to: rat(1, 2), density: int(2) }, Segment { to: int(1), density: int(0) }],
            true,
            1
        )
        .is_err());
        assert!(Interval::new(rat(3, 4), rat(1, 4)).is_err());
        assert!(Interval::new(int(0), rat(5, 4)).is_err());
        assert!(Piece::new(vec![iv((0, 1), (1, 2)), iv((1, 4), (3, 4))]).is_err());
    }

    #[test]
    fn json_roundtrip_and_deficit_message() {
        let text = r#"{"agents":[{"strictly_positive":true,"segments":[{"to":"1/2","density":"3/2"},{"to":"1","density":"1/2"}]}]}"#;
        let p = ValuationProfile::from_json(text).unwrap();
        assert_eq!(p.agent(1), &skewed());
        let again = ValuationProfile::from_json(&p.to_json()).unwrap();
        assert_eq!(again, p);

        let bad = r#"{"agents":[{"strictly_positive":true,"segments":[{"to":"1","density":"2/3"}]}]}"#;
        let err = ValuationProfile::from_json(bad).unwrap_err();
        assert!(err.to_string().contains("deficit 1/3"), "{err}");
    }

    #[test]
    fn random_profiles_are_valid() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = ValuationProfile::random(3, &mut rng);
            assert!(p.strictly_positive());
            for d in p.agents() {
                assert_eq!(d.eval(&Interval::full()), int(1));
            }
        }
    }
}
