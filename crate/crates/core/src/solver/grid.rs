use num_traits::{One, Signed, Zero};

use super::SolverError;
use crate::rational::{int, Rational};
use crate::valuation::{Interval, ValuationProfile};

/// Nested grids `G_1 ⊂ … ⊂ G_K`. `G_{i+1}` adds the midpoint of every cell
/// of `G_i`, so point `j` of `G_i` is point `j * 2^(K-i)` of `G_K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridFamily {
    pub grids: Vec<Vec<Rational>>,
    pub threshold: Rational,
    pub f_n: usize,
    pub k: usize,
    pub eps: Rational,
}

impl GridFamily {
    /// `|G_i|` for 1-based `i`.
    pub fn size(&self, i: usize) -> usize {
        self.grids[i - 1].len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.grids.iter().map(Vec::len).collect()
    }

    /// The finest grid, empty when `K = 0`.
    pub fn finest(&self) -> &[Rational] {
        self.grids.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Points the search indexes into: the finest grid, or `{0, 1}` when
    /// there are no cuts.
    pub(crate) fn points(&self) -> Vec<Rational> {
        match self.grids.last() {
            Some(g) => g.clone(),
            None => vec![Rational::zero(), Rational::one()],
        }
    }

    /// Largest finest-grid index.
    pub(crate) fn top(&self) -> u32 {
        (self.finest().len().max(2) - 1) as u32
    }

    /// Index step in the finest grid between consecutive points of `G_i`.
    pub(crate) fn stride(&self, i: usize) -> u32 {
        1 << (self.k - i)
    }

    /// Closest point of `G_i` strictly between finest-grid indices `lo` and
    /// `hi` (both points of a coarser grid), lower point on ties.
    fn closest_between(&self, x: &Rational, i: usize, lo: u32, hi: u32) -> u32 {
        let g = &self.grids[i - 1];
        let s = self.stride(i);
        let (first, last) = (lo / s + 1, hi / s - 1);
        if first > last {
            // Only possible when G_1 has no interior point.
            return if x - &self.finest()[lo as usize] <= &self.finest()[hi as usize] - x { lo } else { hi };
        }
        let pos = g.partition_point(|p| p < x) as u32;
        let above = pos.clamp(first, last);
        let below = pos.saturating_sub(1).clamp(first, last);
        let d_below = (x - &g[below as usize]).abs();
        let d_above = (&g[above as usize] - x).abs();
        if d_below <= d_above {
            below * s
        } else {
            above * s
        }
    }

    /// The map `M` for cuts given as `(point, ordinal)` in ordinal order:
    /// each point goes to the closest point of `G_ordinal` that keeps the
    /// order and equality pattern with the points mapped before it and
    /// fixes 0 and 1. Returns finest-grid indices.
    pub(crate) fn map_points(&self, cuts: &[(&Rational, u32)]) -> Vec<u32> {
        let top = self.top();
        let mut out: Vec<u32> = Vec::with_capacity(cuts.len());
        for (n, &(x, ord)) in cuts.iter().enumerate() {
            if x.is_zero() {
                out.push(0);
                continue;
            }
            if x.is_one() {
                out.push(top);
                continue;
            }
            let (mut lo, mut hi) = (0u32, top);
            let mut same = None;
            for (j, &(y, _)) in cuts[..n].iter().enumerate() {
                if y == x {
                    same = Some(out[j]);
                    break;
                }
                if y < x {
                    lo = lo.max(out[j]);
                } else {
                    hi = hi.min(out[j]);
                }
            }
            out.push(match same {
                Some(m) => m,
                None => self.closest_between(x, ord as usize, lo, hi),
            });
        }
        out
    }
}

/// `M` applied to a cut history: the `i`-th cut (0-based) is mapped into
/// `G_{i+1}`.
pub fn map_history(cuts: &[Rational], grids: &GridFamily) -> Vec<Rational> {
    let with_ord: Vec<(&Rational, u32)> = cuts.iter().zip(1u32..).collect();
    grids.map_points(&with_ord).into_iter().map(|i| grids.finest()[i as usize].clone()).collect()
}

/// Points where every agent's cumulative value crosses a multiple of `t`,
/// thinned greedily: from each point, jump to the furthest candidate whose
/// cell is still worth at most `t` to everyone.
fn first_grid(profile: &ValuationProfile, t: &Rational) -> Vec<Rational> {
    let mut cand: Vec<Rational> = Vec::new();
    for d in profile.agents() {
        let mut alpha = t.clone();
        while alpha < Rational::one() {
            cand.push(d.mark(&Rational::zero(), &alpha).expect("alpha below total value"));
            alpha += t;
        }
    }
    cand.push(Rational::one());
    cand.sort();
    cand.dedup();
    cand.retain(|c| c.is_positive());
    let fits = |a: &Rational, b: &Rational| {
        let iv = Interval::new(a.clone(), b.clone()).expect("ordered candidates");
        profile.agents().iter().all(|d| d.eval(&iv) <= *t)
    };
    let mut grid = vec![Rational::zero()];
    let mut from = 0usize;
    while !grid.last().unwrap().is_one() {
        let cur = grid.last().unwrap().clone();
        // The next candidate always fits: no agent's quantile lies strictly
        // inside, so the cell sits within one quantile cell of every agent.
        let ok = cand[from..].partition_point(|c| fits(&cur, c));
        debug_assert!(ok >= 1);
        let next = from + ok.max(1) - 1;
        grid.push(cand[next].clone());
        from = next + 1;
    }
    grid
}

pub(crate) fn refine(g: &[Rational]) -> Vec<Rational> {
    let half = Rational::new(1.into(), 2.into());
    let mut out = Vec::with_capacity(2 * g.len() - 1);
    for w in g.windows(2) {
        out.push(w[0].clone());
        out.push((&w[0] + &w[1]) * &half);
    }
    out.push(g.last().unwrap().clone());
    out
}

/// Size of `G_i` given `|G_1|`.
pub(crate) fn refined_size(g1: usize, i: usize) -> u128 {
    ((g1 as u128) - 1) * (1u128 << (i - 1)) + 1
}

/// Grid family with threshold `eps / (2 f_n)`.
pub fn build_grids(profile: &ValuationProfile, eps: &Rational, f_n: usize, k: usize) -> Result<GridFamily, SolverError> {
    let (threshold, g1) = first_grid_for(profile, eps, f_n, k)?;
    let mut grids = Vec::with_capacity(k);
    if k > 0 {
        grids.push(g1);
        for _ in 1..k {
            let next = refine(grids.last().unwrap());
            grids.push(next);
        }
    }
    Ok(GridFamily { grids, threshold, f_n, k, eps: eps.clone() })
}

/// Threshold and `G_1` without refining, for size estimates.
pub(crate) fn first_grid_for(
    profile: &ValuationProfile,
    eps: &Rational,
    f_n: usize,
    k: usize,
) -> Result<(Rational, Vec<Rational>), SolverError> {
    if !eps.is_positive() {
        return Err(SolverError::DegenerateEps(eps.clone()));
    }
    if f_n == 0 || k > f_n {
        return Err(SolverError::BadParameters(format!("need 1 <= f_n and K <= f_n, got f_n={f_n}, K={k}")));
    }
    if k > 30 {
        return Err(SolverError::BadParameters(format!("K={k} cut operations is beyond the supported depth")));
    }
    let threshold = eps / int(2 * f_n as i64);
    let g1 = first_grid(profile, &threshold);
    Ok((threshold, g1))
}
