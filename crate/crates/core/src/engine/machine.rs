//! Interpreter core shared by the public engine (rational coordinates) and
//! the solver (grid indices). Everything here is generic over the point
//! type; the only thing the semantics needs from a point is a total order.

use crate::dsl::{CompiledInner, CondOp, Instr, Operand, PieceOp};

use super::EngineError;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) struct Machine<P> {
    pub pc: usize,
    pub done: bool,
    pub n_cuts: u32,
    /// Per cut slot: bound point and the 1-based ordinal of the cut.
    pub cuts: Vec<Option<(P, u32)>>,
    /// Per choose slot: the option index taken.
    pub choices: Vec<Option<u32>>,
    /// Per agent (0-based): allocated intervals in allocation order.
    pub alloc: Vec<Vec<(P, P)>>,
    pub allocated: u64,
    /// Per `choose any` interval rank: already taken.
    pub claimed: Vec<bool>,
    pub zero: P,
    pub one: P,
}

/// Decision at the current instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Pending {
    Cut { agent: usize },
    Choose { agent: usize },
    ChooseAny { agent: usize },
}

/// Information needed to revert one action in place.
#[derive(Debug, Clone)]
pub(crate) struct Undo {
    pc: usize,
    kind: UndoKind,
}

#[derive(Debug, Clone)]
enum UndoKind {
    Cut { slot: u16 },
    Choose { slot: u16, agent: usize, allocated: u64, claimed: Option<usize> },
}

impl<P: Clone + Ord> Machine<P> {
    pub fn new(program: &CompiledInner, zero: P, one: P) -> Self {
        Machine {
            pc: 0,
            done: false,
            n_cuts: 0,
            cuts: vec![None; program.cut_labels.len()],
            choices: vec![None; program.choice_labels.len()],
            alloc: vec![Vec::new(); program.n_agents],
            allocated: 0,
            claimed: Vec::new(),
            zero,
            one,
        }
    }

    pub fn point(&self, op: Operand) -> Result<&P, EngineError> {
        match op {
            Operand::Zero => Ok(&self.zero),
            Operand::One => Ok(&self.one),
            Operand::Cut(s) => match &self.cuts[s as usize] {
                Some((p, _)) => Ok(p),
                None => Err(EngineError::UnboundLabel(format!("cut slot {s}"))),
            },
        }
    }

    /// Resolves a piece expression to `(lo, hi)` with `lo <= hi`.
    pub fn resolve(&self, piece: &PieceOp) -> Result<(P, P), EngineError> {
        let a = self.point(piece.a)?;
        let b = self.point(piece.b)?;
        Ok(if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) })
    }

    pub fn eval_cond(&self, c: &CondOp) -> Result<bool, EngineError> {
        Ok(match c {
            CondOp::Order { a, op, b } => op.holds(self.point(*a)?, self.point(*b)?),
            CondOp::Chose { slot, index } => self.choices[*slot as usize] == Some(*index),
            CondOp::Allocated(a) => self.allocated >> a & 1 == 1,
            CondOp::And(a, b) => self.eval_cond(a)? && self.eval_cond(b)?,
            CondOp::Or(a, b) => self.eval_cond(a)? || self.eval_cond(b)?,
            CondOp::Not(a) => !self.eval_cond(a)?,
        })
    }

    /// Runs branches and jumps until a decision or the end of the program.
    pub fn advance(&mut self, program: &CompiledInner) -> Result<Option<Pending>, EngineError> {
        loop {
            if self.done {
                return Ok(None);
            }
            match &program.instrs[self.pc] {
                Instr::Cut { agent, .. } => return Ok(Some(Pending::Cut { agent: *agent })),
                Instr::Choose { agent, .. } => return Ok(Some(Pending::Choose { agent: *agent })),
                Instr::ChooseAny { agent, .. } => return Ok(Some(Pending::ChooseAny { agent: *agent })),
                Instr::Branch { cond, else_pc } => {
                    self.pc = if self.eval_cond(cond)? { self.pc + 1 } else { *else_pc };
                }
                Instr::Jump(t) => self.pc = *t,
                Instr::Exit | Instr::End => self.done = true,
            }
        }
    }

    pub fn cut_pieces<'p>(&self, program: &'p CompiledInner) -> &'p [PieceOp] {
        match &program.instrs[self.pc] {
            Instr::Cut { pieces, .. } => pieces,
            _ => &[],
        }
    }

    /// Feasible intervals of the pending cut, lower endpoint first.
    pub fn cut_feasible(&self, program: &CompiledInner) -> Result<Vec<(P, P)>, EngineError> {
        self.cut_pieces(program).iter().map(|p| self.resolve(p)).collect()
    }

    /// Sorted multiset `{0, 1, all bound cuts}`.
    pub fn sorted_points(&self) -> Vec<P> {
        let mut pts: Vec<P> = self.cuts.iter().flatten().map(|(p, _)| p.clone()).collect();
        pts.push(self.zero.clone());
        pts.push(self.one.clone());
        pts.sort();
        pts
    }

    /// Options of the pending choose. For `choose any` these are the
    /// unclaimed intervals between adjacent points, in cake order.
    pub fn choose_options(&self, program: &CompiledInner) -> Result<Vec<(P, P)>, EngineError> {
        match &program.instrs[self.pc] {
            Instr::Choose { pieces, .. } => pieces.iter().map(|p| self.resolve(p)).collect(),
            Instr::ChooseAny { .. } => {
                let pts = self.sorted_points();
                Ok(pts
                    .windows(2)
                    .enumerate()
                    .filter(|(r, _)| !self.claimed.get(*r).copied().unwrap_or(false))
                    .map(|(_, w)| (w[0].clone(), w[1].clone()))
                    .collect())
            }
            _ => Ok(Vec::new()),
        }
    }

    pub fn apply_cut(&mut self, program: &CompiledInner, x: P) -> Undo {
        let Instr::Cut { slot, .. } = &program.instrs[self.pc] else {
            unreachable!("apply_cut at a non-cut instruction")
        };
        let undo = Undo { pc: self.pc, kind: UndoKind::Cut { slot: *slot } };
        self.n_cuts += 1;
        self.cuts[*slot as usize] = Some((x, self.n_cuts));
        self.pc += 1;
        undo
    }

    fn overlaps(&self, lo: &P, hi: &P) -> bool {
        self.alloc.iter().flatten().any(|(a, b)| lo.max(a) < hi.min(b))
    }

    /// Allocates option `index`. The caller has checked the index range.
    pub fn apply_choose(&mut self, program: &CompiledInner, index: usize) -> Result<Undo, EngineError> {
        let (agent, slot, any) = match &program.instrs[self.pc] {
            Instr::Choose { agent, slot, .. } => (*agent, *slot, false),
            Instr::ChooseAny { agent, slot } => (*agent, *slot, true),
            _ => unreachable!("apply_choose at a non-choose instruction"),
        };
        let (piece, claimed) = if any {
            let pts = self.sorted_points();
            if self.claimed.len() < pts.len() - 1 {
                self.claimed.resize(pts.len() - 1, false);
            }
            let rank = (0..pts.len() - 1)
                .filter(|r| !self.claimed[*r])
                .nth(index)
                .expect("option index checked by caller");
            self.claimed[rank] = true;
            ((pts[rank].clone(), pts[rank + 1].clone()), Some(rank))
        } else {
            let Instr::Choose { pieces, .. } = &program.instrs[self.pc] else { unreachable!() };
            let piece = self.resolve(&pieces[index])?;
            if self.overlaps(&piece.0, &piece.1) {
                return Err(EngineError::OverlappingAllocation);
            }
            (piece, None)
        };
        let undo = Undo {
            pc: self.pc,
            kind: UndoKind::Choose { slot, agent, allocated: self.allocated, claimed },
        };
        self.alloc[agent].push(piece);
        self.allocated |= 1 << agent;
        self.choices[slot as usize] = Some(index as u32);
        self.pc += 1;
        Ok(undo)
    }

    pub fn undo(&mut self, u: Undo) {
        self.pc = u.pc;
        self.done = false;
        match u.kind {
            UndoKind::Cut { slot } => {
                self.cuts[slot as usize] = None;
                self.n_cuts -= 1;
            }
            UndoKind::Choose { slot, agent, allocated, claimed } => {
                self.choices[slot as usize] = None;
                self.alloc[agent].pop();
                self.allocated = allocated;
                if let Some(r) = claimed {
                    self.claimed[r] = false;
                }
            }
        }
    }

    /// Canonical key of the current position: everything the rest of the
    /// game can observe. Two states with equal keys have identical futures.
    pub fn key_parts(&self, program: &CompiledInner) -> KeyParts<'_, P> {
        let info = &program.info[self.pc];
        KeyParts {
            pc: self.pc,
            n_cuts: if info.cut_ahead { self.n_cuts } else { 0 },
            cuts: info.live_cuts.iter().map(|s| self.cuts[*s as usize].as_ref()).collect(),
            choices: info.live_choices.iter().map(|s| self.choices[*s as usize]).collect(),
            allocated: if info.allocated_ahead { self.allocated } else { 0 },
            claimed: if info.any_ahead { &self.claimed } else { &[] },
        }
    }
}

pub(crate) struct KeyParts<'a, P> {
    pub pc: usize,
    pub n_cuts: u32,
    pub cuts: Vec<Option<&'a (P, u32)>>,
    pub choices: Vec<Option<u32>>,
    pub allocated: u64,
    pub claimed: &'a [bool],
}
