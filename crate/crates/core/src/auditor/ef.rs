use num_traits::{One, Zero};
use serde_json::{json, Value};

use super::AuditError;
use crate::protocols::ContiguousAllocation;
use crate::rational::{fmt_rational, rat, Rational};
use crate::valuation::{Interval, ValuationProfile};

/// Result of the grid search: `allocation.pieces[i]` goes to agent `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EfSearch {
    pub allocation: ContiguousAllocation,
    pub cuts: Vec<Rational>,
    pub max_envy: Rational,
    pub resolution: usize,
}

impl EfSearch {
    pub fn envy_free(&self) -> bool {
        self.max_envy.is_zero()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "resolution": self.resolution,
            "cuts": self.cuts.iter().map(fmt_rational).collect::<Vec<_>>(),
            "allocation": self.allocation.pieces.iter()
                .map(|iv| vec![fmt_rational(iv.lo()), fmt_rational(iv.hi())])
                .collect::<Vec<_>>(),
            "max_envy": fmt_rational(&self.max_envy),
            "envy_free": self.envy_free(),
        })
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in (0..=p.len()).rev() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Tries every vector of `n - 1` strictly increasing cuts on `{k/resolution}`
/// and every assignment of the pieces to agents; returns the allocation with
/// the least maximum envy. Ties go to the lexicographically first cut vector,
/// then the first assignment. With `bound`, fails unless that envy is within it.
pub fn find_envy_free_contiguous(
    profile: &ValuationProfile,
    resolution: usize,
    bound: Option<Rational>,
) -> Result<EfSearch, AuditError> {
    let n = profile.n();
    if n > 3 {
        return Err(AuditError::Unsupported(format!("contiguous search supports at most 3 agents, got {n}")));
    }
    if resolution < n {
        return Err(AuditError::Unsupported(format!("resolution {resolution} below {n} agents")));
    }
    let grid: Vec<Rational> = (0..=resolution).map(|k| rat(k as i64, resolution as i64)).collect();
    let cdf: Vec<Vec<Rational>> = profile.agents().iter().map(|d| grid.iter().map(|x| d.cdf(x)).collect()).collect();
    let perms = permutations(n);

    let mut best: Option<(Rational, Vec<usize>, Vec<usize>)> = None;
    let mut idx: Vec<usize> = (1..n).collect();
    loop {
        let bounds: Vec<usize> = std::iter::once(0).chain(idx.iter().copied()).chain(std::iter::once(resolution)).collect();
        // value[a][p] = agent a's value for piece p.
        let value: Vec<Vec<Rational>> = cdf
            .iter()
            .map(|c| bounds.windows(2).map(|w| &c[w[1]] - &c[w[0]]).collect())
            .collect();
        for perm in &perms {
            let mut worst = Rational::zero();
            for a in 0..n {
                let own = &value[a][perm[a]];
                for p in 0..n {
                    let e = &value[a][p] - own;
                    if e > worst {
                        worst = e;
                    }
                }
            }
            if best.as_ref().is_none_or(|(b, _, _)| worst < *b) {
                best = Some((worst, bounds.clone(), perm.clone()));
            }
        }
        if !next_combination(&mut idx, resolution) {
            break;
        }
    }
    let (max_envy, bounds, perm) = best.expect("at least one cut vector exists");
    if let Some(b) = bound {
        if max_envy > b {
            return Err(AuditError::InfeasibleResolution { resolution, bound: b, best: max_envy });
        }
    }
    let pieces: Vec<Interval> = (0..n)
        .map(|a| Interval::new(grid[bounds[perm[a]]].clone(), grid[bounds[perm[a] + 1]].clone()).unwrap())
        .collect();
    let cuts = bounds[1..n].iter().map(|&k| grid[k].clone()).collect();
    debug_assert!(grid[resolution].is_one());
    Ok(EfSearch {
        allocation: ContiguousAllocation::new(pieces).expect("grid pieces tile the cake"),
        cuts,
        max_envy,
        resolution,
    })
}

/// Advances strictly increasing `idx` with entries in `1..resolution`.
fn next_combination(idx: &mut [usize], resolution: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < resolution - (k - i) {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
