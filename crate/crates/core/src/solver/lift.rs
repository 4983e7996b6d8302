//! Playing a grid solution on the continuous cake.

use std::sync::{Arc, Mutex};

use num_traits::{One, Zero};

use super::search::{DynCore, NO_ACTION};
use super::GridFamily;
use crate::dsl::Instr;
use crate::engine::{Action, DecisionNode, Machine, NodeKind, Strategy};
use crate::rational::{rat, Rational};

/// One agent's continuous strategy derived from a grid solution: map the
/// live cuts onto their grids with `M`, look up (or solve) the grid state,
/// and pull a grid cut back to a point whose image is that grid point.
#[derive(Clone)]
pub struct SolverStrategy {
    pub(crate) core: Arc<Mutex<Box<dyn DynCore>>>,
}

impl SolverStrategy {
    fn decide(&self, node: &DecisionNode<'_>) -> Result<Action, String> {
        let mut core = self.core.lock().map_err(|_| "solver state poisoned".to_string())?;
        let program = core.program().clone();
        let grids = core.grids().clone();
        let st = &node.state.m;
        let info = &program.info[st.pc];

        let mut live: Vec<(u16, &Rational, u32)> = info
            .live_cuts
            .iter()
            .filter_map(|&s| st.cuts[s as usize].as_ref().map(|(x, o)| (s, x, *o)))
            .collect();
        live.sort_by_key(|c| c.2);
        let pairs: Vec<(&Rational, u32)> = live.iter().map(|c| (c.1, c.2)).collect();
        let mapped = grids.map_points(&pairs);

        let top = grids.top();
        let mut m = Machine::new(&program, 0u32, top);
        m.pc = st.pc;
        m.n_cuts = st.n_cuts;
        for ((slot, _, ord), g) in live.iter().zip(&mapped) {
            m.cuts[*slot as usize] = Some((*g, *ord));
        }
        m.choices = st.choices.clone();
        m.allocated = st.allocated;
        m.claimed = st.claimed.clone();

        let (action, _) = core.solve_at(&mut m).map_err(|e| e.to_string())?;
        if action == NO_ACTION {
            return Err("no grid action at a decision node".into());
        }
        Ok(match (&program.instrs[st.pc], &node.kind) {
            (Instr::Cut { .. }, NodeKind::Cut { .. }) => {
                let ord = st.n_cuts as usize + 1;
                Action::Cut(pull_back(&grids, ord, action, &live, &mapped))
            }
            _ => Action::Choose(action as usize),
        })
    }
}

impl Strategy for SolverStrategy {
    fn act(&self, node: &DecisionNode<'_>) -> Result<Action, String> {
        self.decide(node)
    }

    fn memo_safe(&self) -> bool {
        true
    }
}

/// Closest point of `c` (ascending) to `x`, lower on ties.
fn image(c: &[Rational], x: &Rational) -> usize {
    let pos = c.partition_point(|p| p < x);
    if pos == 0 {
        return 0;
    }
    if pos == c.len() {
        return c.len() - 1;
    }
    if x - &c[pos - 1] <= &c[pos] - x {
        pos - 1
    } else {
        pos
    }
}

/// A continuous point whose image under `M` is finest-grid index `target`
/// on `G_ord`, given live cuts and their images. When no point between the
/// neighbouring cuts maps there, the reachable image closest to `target` is
/// used instead.
fn pull_back(
    grids: &GridFamily,
    ord: usize,
    target: u32,
    live: &[(u16, &Rational, u32)],
    mapped: &[u32],
) -> Rational {
    let fine = grids.finest();
    let top = (fine.len() - 1) as u32;
    if target == 0 {
        return Rational::zero();
    }
    if target == top {
        return Rational::one();
    }
    let (mut lo, mut lo_x) = (0u32, Rational::zero());
    let (mut hi, mut hi_x) = (top, Rational::one());
    for ((_, x, _), &g) in live.iter().zip(mapped) {
        if g == target {
            return (*x).clone();
        }
        if g < target && g >= lo {
            lo = g;
            lo_x = (*x).clone();
        }
        if g > target && g <= hi {
            hi = g;
            hi_x = (*x).clone();
        }
    }
    // Grid points of G_ord strictly between the neighbours' images.
    let s = grids.stride(ord);
    let c: Vec<Rational> = ((lo / s + 1)..=(hi / s - 1)).map(|j| fine[(j * s) as usize].clone()).collect();
    let want = ((target / s) - (lo / s + 1)) as usize;
    let half = rat(1, 2);
    // Images reachable from (lo_x, hi_x) form a contiguous index range.
    let first = {
        let j = image(&c, &lo_x);
        // Just above an exact midpoint the upper point wins.
        if j + 1 < c.len() && &lo_x - &c[j] == &c[j + 1] - &lo_x { j + 1 } else { j }
    };
    let last = image(&c, &hi_x);
    let j = want.clamp(first, last);
    let cell_lo = if j == 0 { None } else { Some((&c[j - 1] + &c[j]) * &half) };
    let cell_hi = if j + 1 == c.len() { None } else { Some((&c[j] + &c[j + 1]) * &half) };
    let a = match cell_lo {
        Some(v) if v > lo_x => v,
        _ => lo_x.clone(),
    };
    let (b, b_closed) = match cell_hi {
        Some(v) if v < hi_x => (v, true),
        _ => (hi_x.clone(), false),
    };
    let p = &c[j];
    if &a < p && (p < &b || (p == &b && b_closed)) {
        p.clone()
    } else {
        (a + b) * half
    }
}
