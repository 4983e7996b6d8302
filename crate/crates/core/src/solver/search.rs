//! Backward induction over grid indices.

use std::fmt::Debug;
use std::ops::{AddAssign, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rustc_hash::FxHashMap;

use super::{GridFamily, SolverError};
use crate::dsl::{CompiledInner, CompiledProgram, Instr};
use crate::engine::Machine;
use crate::rational::Rational;
use crate::valuation::ValuationProfile;

pub(crate) const NO_ACTION: u32 = u32::MAX;

pub(crate) trait Value: Clone + Ord + Zero + AddAssign + Sub<Output = Self> + Debug + Send + Sync + 'static {
    fn to_rational(&self, scale: &Rational) -> Rational;
}

impl Value for i128 {
    fn to_rational(&self, scale: &Rational) -> Rational {
        Rational::from_integer(BigInt::from(*self)) / scale
    }
}

impl Value for Rational {
    fn to_rational(&self, scale: &Rational) -> Rational {
        self / scale
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Entry<U> {
    pub action: u32,
    pub util: Box<[U]>,
}

#[derive(Clone)]
pub(crate) struct Core<U> {
    pub program: CompiledProgram,
    pub grids: std::sync::Arc<GridFamily>,
    /// Per agent, cumulative value at every finest-grid point, in units of
    /// `1 / scale[agent]`.
    cdf: Vec<Vec<U>>,
    scale: Vec<Rational>,
    pub memo: FxHashMap<Box<[u32]>, Entry<U>>,
    pool: Vec<Vec<U>>,
    key_buf: Vec<u32>,
}

impl<U: Value> Core<U> {
    fn new(program: CompiledProgram, grids: std::sync::Arc<GridFamily>, cdf: Vec<Vec<U>>, scale: Vec<Rational>) -> Self {
        Core { program, grids, cdf, scale, memo: FxHashMap::default(), pool: Vec::new(), key_buf: Vec::new() }
    }

    fn buf(&mut self) -> Vec<U> {
        // Pooled buffers already have length n and are overwritten by `solve`.
        self.pool.pop().unwrap_or_else(|| vec![U::zero(); self.program.n_agents])
    }

    fn memoized(p: &CompiledInner, pc: usize) -> bool {
        match p.instrs[pc] {
            Instr::Cut { .. } => true,
            Instr::Choose { .. } | Instr::ChooseAny { .. } => p.info[pc].ops_ahead >= 3,
            _ => false,
        }
    }

    /// Feasible cut points at ordinal `ord`, ascending.
    fn cut_candidates(&self, p: &CompiledInner, m: &Machine<u32>, ord: usize) -> Result<Vec<u32>, SolverError> {
        let s = self.grids.stride(ord);
        let mut out = Vec::new();
        let Instr::Cut { pieces, .. } = &p.instrs[m.pc] else { unreachable!() };
        for piece in pieces {
            let (lo, hi) = m.resolve(piece)?;
            let mut x = lo.div_ceil(s) * s;
            while x <= hi {
                out.push(x);
                x += s;
            }
        }
        if pieces.len() > 1 {
            out.sort_unstable();
            out.dedup();
        }
        Ok(out)
    }

    /// Future utilities from `m` (which rests at a decision or has ended)
    /// under optimal play, written to `out`. Returns the action taken at
    /// `m`: a finest-grid index for cuts, an option index for chooses.
    pub fn solve(&mut self, p: &CompiledInner, m: &mut Machine<u32>, out: &mut [U]) -> Result<u32, SolverError> {
        if m.done {
            out.iter_mut().for_each(|u| *u = U::zero());
            return Ok(NO_ACTION);
        }
        let pc = m.pc;
        let memoize = Self::memoized(p, pc);
        if memoize {
            node_key_into(p, m, &mut self.key_buf);
            if let Some(e) = self.memo.get(self.key_buf.as_slice()) {
                out.clone_from_slice(&e.util);
                return Ok(e.action);
            }
        }
        let action = match &p.instrs[pc] {
            Instr::Cut { agent, .. } => {
                let a = *agent;
                let ord = m.n_cuts as usize + 1;
                if ord > self.grids.k {
                    return Err(SolverError::CutOrdinalExceedsK { ordinal: ord, k: self.grids.k });
                }
                let mut cur = self.buf();
                let mut action = NO_ACTION;
                for x in self.cut_candidates(p, m, ord)? {
                    let undo = m.apply_cut(p, x);
                    m.advance(p)?;
                    self.solve(p, m, &mut cur)?;
                    m.undo(undo);
                    if action == NO_ACTION || cur[a] > out[a] {
                        out.clone_from_slice(&cur);
                        action = x;
                    }
                }
                self.pool.push(cur);
                action
            }
            Instr::Choose { agent, pieces, .. } => self.choose_loop(p, m, *agent, pieces.len(), out)?,
            Instr::ChooseAny { agent, .. } => {
                let points = m.cuts.iter().flatten().count() + 2;
                let claimed = m.claimed.iter().filter(|c| **c).count();
                self.choose_loop(p, m, *agent, points - 1 - claimed, out)?
            }
            _ => unreachable!("solver rests at decisions"),
        };
        if action == NO_ACTION {
            return Err(SolverError::Engine(crate::engine::EngineError::EmptyChooseSet(p.info[pc].path.clone())));
        }
        if memoize {
            // The key buffer was overwritten by the subtree; rebuild it.
            let key = node_key(p, m);
            self.memo.insert(key, Entry { action, util: out.to_vec().into_boxed_slice() });
        }
        Ok(action)
    }

    fn choose_loop(
        &mut self,
        p: &CompiledInner,
        m: &mut Machine<u32>,
        a: usize,
        count: usize,
        out: &mut [U],
    ) -> Result<u32, SolverError> {
        if count == 0 {
            return Ok(NO_ACTION);
        }
        if count == 1 {
            let undo = m.apply_choose(p, 0)?;
            let v = self.piece_value(m, a);
            m.advance(p)?;
            self.solve(p, m, out)?;
            m.undo(undo);
            out[a] += v;
            return Ok(0);
        }
        let mut cur = self.buf();
        let mut action = NO_ACTION;
        for k in 0..count {
            let undo = m.apply_choose(p, k)?;
            let v = self.piece_value(m, a);
            m.advance(p)?;
            self.solve(p, m, &mut cur)?;
            m.undo(undo);
            cur[a] += v;
            if action == NO_ACTION || cur[a] > out[a] {
                out.clone_from_slice(&cur);
                action = k as u32;
            }
        }
        self.pool.push(cur);
        Ok(action)
    }

    /// Agent `a`'s value for the piece it was just given.
    fn piece_value(&self, m: &Machine<u32>, a: usize) -> U {
        let (lo, hi) = *m.alloc[a].last().expect("just allocated");
        self.cdf[a][hi as usize].clone() - self.cdf[a][lo as usize].clone()
    }

    fn utilities(&self, u: &[U]) -> Vec<Rational> {
        u.iter().zip(&self.scale).map(|(v, s)| v.to_rational(s)).collect()
    }
}

/// Canonical key of a grid state: program position, live cut indices with
/// their ordinals, live choices, and the allocation/claim history when the
/// rest of the program can observe it.
pub(crate) fn node_key(program: &CompiledInner, m: &Machine<u32>) -> Box<[u32]> {
    let mut k = Vec::new();
    node_key_into(program, m, &mut k);
    k.into_boxed_slice()
}

fn node_key_into(program: &CompiledInner, m: &Machine<u32>, k: &mut Vec<u32>) {
    k.clear();
    let parts = m.key_parts(program);
    k.push(parts.pc as u32);
    k.push(parts.n_cuts);
    for c in &parts.cuts {
        match c {
            Some((x, o)) => {
                k.push(x + 1);
                k.push(*o);
            }
            None => {
                k.push(0);
                k.push(0);
            }
        }
    }
    for c in &parts.choices {
        k.push(c.map_or(0, |c| c + 1));
    }
    k.push(parts.allocated as u32);
    k.push((parts.allocated >> 32) as u32);
    k.push(parts.claimed.len() as u32);
    for chunk in parts.claimed.chunks(32) {
        k.push(chunk.iter().enumerate().fold(0u32, |w, (i, b)| w | (u32::from(*b) << i)));
    }
}

/// Rebuilds the engine-style key string of a grid state key.
pub(crate) fn key_string(program: &CompiledProgram, grid: &[Rational], key: &[u32]) -> String {
    use std::fmt::Write as _;
    let pc = key[0] as usize;
    let info = &program.info[pc];
    let mut s = format!("{}#{}|", info.path, key[1]);
    let mut at = 2;
    for (i, slot) in info.live_cuts.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let label = &program.cut_labels[*slot as usize];
        match key[at] {
            0 => {
                let _ = write!(s, "{label}=_");
            }
            x => {
                let _ = write!(s, "{label}={}@{}", grid[x as usize - 1], key[at + 1]);
            }
        }
        at += 2;
    }
    s.push('|');
    for (i, slot) in info.live_choices.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let label = &program.choice_labels[*slot as usize];
        match key[at] {
            0 => {
                let _ = write!(s, "{label}=_");
            }
            c => {
                let _ = write!(s, "{label}={}", c - 1);
            }
        }
        at += 1;
    }
    let allocated = key[at] as u64 | (key[at + 1] as u64) << 32;
    let _ = write!(s, "|a{allocated:x}|");
    let len = key[at + 2] as usize;
    for r in 0..len {
        let w = key[at + 3 + r / 32];
        s.push(if w >> (r % 32) & 1 == 1 { '1' } else { '0' });
    }
    s
}

/// Type-erased solver core, so exact and fixed-width utilities share one API.
pub(crate) trait DynCore: Send {
    /// Optimal action at `m` and the future utilities it yields.
    fn solve_at(&mut self, m: &mut Machine<u32>) -> Result<(u32, Vec<Rational>), SolverError>;
    fn table(&self) -> Vec<(String, u32, bool)>;
    fn memo_len(&self) -> usize;
    fn program(&self) -> &CompiledProgram;
    fn grids(&self) -> &GridFamily;
    fn boxed_clone(&self) -> Box<dyn DynCore>;
    fn absorb(&mut self, other: Box<dyn std::any::Any>);
    fn into_any(self: Box<Self>) -> Box<dyn std::any::Any>;
}

impl<U: Value> DynCore for Core<U> {
    fn solve_at(&mut self, m: &mut Machine<u32>) -> Result<(u32, Vec<Rational>), SolverError> {
        let mut out = vec![U::zero(); self.program.n_agents];
        let program = self.program.clone();
        let a = self.solve(&program, m, &mut out)?;
        Ok((a, self.utilities(&out)))
    }

    fn table(&self) -> Vec<(String, u32, bool)> {
        let grid = self.grids.finest();
        let mut t: Vec<(String, u32, bool)> = self
            .memo
            .iter()
            .map(|(k, e)| {
                let is_cut = matches!(self.program.instrs[k[0] as usize], Instr::Cut { .. });
                (key_string(&self.program, grid, k), e.action, is_cut)
            })
            .collect();
        t.sort();
        t
    }

    fn memo_len(&self) -> usize {
        self.memo.len()
    }

    fn program(&self) -> &CompiledProgram {
        &self.program
    }

    fn grids(&self) -> &GridFamily {
        &self.grids
    }

    fn boxed_clone(&self) -> Box<dyn DynCore> {
        let mut c = self.clone();
        c.memo = FxHashMap::default();
        Box::new(c)
    }

    fn absorb(&mut self, other: Box<dyn std::any::Any>) {
        let other = other.downcast::<Core<U>>().expect("same core type");
        for (k, e) in other.memo {
            self.memo.entry(k).or_insert(e);
        }
    }

    fn into_any(self: Box<Self>) -> Box<dyn std::any::Any> {
        self
    }
}

/// Builds a core, with `i128` utilities whenever every agent's values share
/// a denominator small enough to keep sums exact.
pub(crate) fn make_core(
    program: CompiledProgram,
    grids: std::sync::Arc<GridFamily>,
    profile: &ValuationProfile,
) -> Box<dyn DynCore> {
    let pts = grids.points();
    let exact: Vec<Vec<Rational>> = profile.agents().iter().map(|d| pts.iter().map(|x| d.cdf(x)).collect()).collect();
    let mut scales = Vec::new();
    let mut fast = Vec::new();
    for row in &exact {
        let den = row.iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
        if den.bits() > 100 {
            break;
        }
        let nums: Vec<i128> = row
            .iter()
            .map(|v| (v.numer() * (&den / v.denom())).to_i128().expect("fits below the denominator"))
            .collect();
        scales.push(Rational::from_integer(den));
        fast.push(nums);
    }
    if fast.len() == exact.len() {
        Box::new(Core::new(program, grids, fast, scales))
    } else {
        let ones = vec![Rational::one(); exact.len()];
        Box::new(Core::new(program, grids, exact, ones))
    }
}
