//! Flattening of a validated AST into a jump-based instruction list, plus
//! the per-position liveness facts used for canonical node keys.

use std::collections::HashMap;
use std::sync::Arc;

use super::ast::*;
use super::validate::{count_operations, validate, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operand {
    Zero,
    One,
    Cut(u16),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PieceOp {
    pub a: Operand,
    pub b: Operand,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CondOp {
    Order { a: Operand, op: RelOp, b: Operand },
    Chose { slot: u16, index: u32 },
    /// 0-based agent.
    Allocated(usize),
    And(Box<CondOp>, Box<CondOp>),
    Or(Box<CondOp>, Box<CondOp>),
    Not(Box<CondOp>),
}

/// Agents are 0-based here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instr {
    Cut { agent: usize, pieces: Vec<PieceOp>, slot: u16 },
    Choose { agent: usize, pieces: Vec<PieceOp>, slot: u16 },
    ChooseAny { agent: usize, slot: u16 },
    /// Falls through when `cond` holds, otherwise jumps to `else_pc`.
    Branch { cond: CondOp, else_pc: usize },
    Jump(usize),
    Exit,
    End,
}

/// Static facts about one instruction position.
#[derive(Debug, Clone, Default)]
pub struct PcInfo {
    /// Position in the AST, e.g. `3.t.0` for the first statement of the
    /// then-branch of top-level statement 3.
    pub path: String,
    /// Cut slots whose binding may still be read from here on.
    pub live_cuts: Vec<u16>,
    pub live_choices: Vec<u16>,
    pub allocated_ahead: bool,
    pub any_ahead: bool,
    pub cut_ahead: bool,
    /// Longest number of Cut/Choose instructions from here to the end.
    pub ops_ahead: usize,
}

#[derive(Debug)]
pub struct CompiledInner {
    pub program: ProtocolProgram,
    pub instrs: Vec<Instr>,
    pub info: Vec<PcInfo>,
    pub cut_labels: Vec<String>,
    pub choice_labels: Vec<String>,
    pub n_agents: usize,
    pub max_ops: usize,
    pub max_cuts: usize,
}

/// A validated, flattened program. Cheap to clone.
#[derive(Debug, Clone)]
pub struct CompiledProgram(pub Arc<CompiledInner>);

impl std::ops::Deref for CompiledProgram {
    type Target = CompiledInner;
    fn deref(&self) -> &CompiledInner {
        &self.0
    }
}

struct Builder {
    cut_slots: HashMap<String, u16>,
    choice_slots: HashMap<String, u16>,
    instrs: Vec<Instr>,
    paths: Vec<String>,
}

impl Builder {
    fn operand(&self, e: &Endpoint) -> Operand {
        match e {
            Endpoint::Zero => Operand::Zero,
            Endpoint::One => Operand::One,
            Endpoint::Label(l) => Operand::Cut(self.cut_slots[l]),
        }
    }

    fn pieces(&self, ps: &[PieceExpr]) -> Vec<PieceOp> {
        ps.iter().map(|p| PieceOp { a: self.operand(&p.a), b: self.operand(&p.b) }).collect()
    }

    fn cond(&self, c: &Condition) -> CondOp {
        match c {
            Condition::Order { a, op, b } => CondOp::Order { a: self.operand(a), op: *op, b: self.operand(b) },
            Condition::Chose { label, index } => {
                CondOp::Chose { slot: self.choice_slots[label], index: *index as u32 }
            }
            Condition::Allocated(a) => CondOp::Allocated(a - 1),
            Condition::And(a, b) => CondOp::And(Box::new(self.cond(a)), Box::new(self.cond(b))),
            Condition::Or(a, b) => CondOp::Or(Box::new(self.cond(a)), Box::new(self.cond(b))),
            Condition::Not(a) => CondOp::Not(Box::new(self.cond(a))),
        }
    }

    fn emit(&mut self, i: Instr, path: String) -> usize {
        self.instrs.push(i);
        self.paths.push(path);
        self.instrs.len() - 1
    }

    fn body(&mut self, body: &[Statement], prefix: &str) {
        for (k, s) in body.iter().enumerate() {
            let path = if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
            match &s.kind {
                StmtKind::Cut { agent, pieces, label } => {
                    let i = Instr::Cut { agent: agent - 1, pieces: self.pieces(pieces), slot: self.cut_slots[label] };
                    self.emit(i, path);
                }
                StmtKind::Choose { agent, pieces, label } => {
                    let i = Instr::Choose {
                        agent: agent - 1,
                        pieces: self.pieces(pieces),
                        slot: self.choice_slots[label],
                    };
                    self.emit(i, path);
                }
                StmtKind::ChooseAny { agent, label } => {
                    let i = Instr::ChooseAny { agent: agent - 1, slot: self.choice_slots[label] };
                    self.emit(i, path);
                }
                StmtKind::Exit => {
                    self.emit(Instr::Exit, path);
                }
                StmtKind::If { cond, then_body, else_body } => {
                    let cond = self.cond(cond);
                    let branch = self.emit(Instr::Branch { cond, else_pc: usize::MAX }, path.clone());
                    self.body(then_body, &format!("{path}.t"));
                    let jump = if else_body.is_empty() {
                        None
                    } else {
                        Some(self.emit(Instr::Jump(usize::MAX), format!("{path}.j")))
                    };
                    let else_pc = self.instrs.len();
                    self.body(else_body, &format!("{path}.e"));
                    let after = self.instrs.len();
                    if let Instr::Branch { else_pc: e, .. } = &mut self.instrs[branch] {
                        *e = else_pc;
                    }
                    if let Some(j) = jump {
                        self.instrs[j] = Instr::Jump(after);
                    }
                }
            }
        }
    }
}

fn cond_slots(c: &CondOp, cuts: &mut Vec<u16>, choices: &mut Vec<u16>, allocated: &mut bool) {
    match c {
        CondOp::Order { a, b, .. } => {
            for o in [a, b] {
                if let Operand::Cut(s) = o {
                    cuts.push(*s);
                }
            }
        }
        CondOp::Chose { slot, .. } => choices.push(*slot),
        CondOp::Allocated(_) => *allocated = true,
        CondOp::And(a, b) | CondOp::Or(a, b) => {
            cond_slots(a, cuts, choices, allocated);
            cond_slots(b, cuts, choices, allocated);
        }
        CondOp::Not(a) => cond_slots(a, cuts, choices, allocated),
    }
}

fn piece_slots(ps: &[PieceOp], cuts: &mut Vec<u16>) {
    for p in ps {
        for o in [p.a, p.b] {
            if let Operand::Cut(s) = o {
                cuts.push(s);
            }
        }
    }
}

fn union_into(dst: &mut Vec<u16>, src: &[u16]) {
    for s in src {
        if !dst.contains(s) {
            dst.push(*s);
        }
    }
}

fn analyse(instrs: &[Instr], paths: Vec<String>, n_cut_slots: usize) -> Vec<PcInfo> {
    let mut info: Vec<PcInfo> = paths.into_iter().map(|path| PcInfo { path, ..Default::default() }).collect();
    // Every edge goes forward, so one reverse sweep reaches the fixpoint.
    for pc in (0..instrs.len()).rev() {
        let succs: Vec<usize> = match &instrs[pc] {
            Instr::Cut { .. } | Instr::Choose { .. } | Instr::ChooseAny { .. } => vec![pc + 1],
            Instr::Branch { else_pc, .. } => vec![pc + 1, *else_pc],
            Instr::Jump(t) => vec![*t],
            Instr::Exit | Instr::End => vec![],
        };
        let mut cuts = Vec::new();
        let mut choices = Vec::new();
        let mut allocated = false;
        let mut any = false;
        let mut cut_ahead = false;
        let mut ops = 0;
        for s in &succs {
            let i = &info[*s];
            union_into(&mut cuts, &i.live_cuts);
            union_into(&mut choices, &i.live_choices);
            allocated |= i.allocated_ahead;
            any |= i.any_ahead;
            cut_ahead |= i.cut_ahead;
            ops = ops.max(i.ops_ahead);
        }
        match &instrs[pc] {
            Instr::Cut { pieces, slot, .. } => {
                cuts.retain(|s| s != slot);
                piece_slots(pieces, &mut cuts);
                cut_ahead = true;
                ops += 1;
            }
            Instr::Choose { pieces, slot, .. } => {
                choices.retain(|s| s != slot);
                piece_slots(pieces, &mut cuts);
                ops += 1;
            }
            Instr::ChooseAny { slot, .. } => {
                choices.retain(|s| s != slot);
                cuts = (0..n_cut_slots as u16).collect();
                any = true;
                ops += 1;
            }
            Instr::Branch { cond, .. } => cond_slots(cond, &mut cuts, &mut choices, &mut allocated),
            _ => {}
        }
        cuts.sort_unstable();
        cuts.dedup();
        choices.sort_unstable();
        choices.dedup();
        let i = &mut info[pc];
        i.live_cuts = cuts;
        i.live_choices = choices;
        i.allocated_ahead = allocated;
        i.any_ahead = any;
        i.cut_ahead = cut_ahead;
        i.ops_ahead = ops;
    }
    info
}

impl CompiledProgram {
    /// Validates and flattens `program`.
    pub fn new(program: &ProtocolProgram) -> Result<Self, Vec<Violation>> {
        let violations = validate(program);
        if !violations.is_empty() {
            return Err(violations);
        }
        let mut cut_labels = Vec::new();
        let mut choice_labels = Vec::new();
        for (l, k) in program.label_table() {
            match k {
                LabelKind::Cut => cut_labels.push(l),
                LabelKind::Choose => choice_labels.push(l),
            }
        }
        let index = |ls: &[String]| ls.iter().enumerate().map(|(i, l)| (l.clone(), i as u16)).collect();
        let mut b = Builder {
            cut_slots: index(&cut_labels),
            choice_slots: index(&choice_labels),
            instrs: Vec::new(),
            paths: Vec::new(),
        };
        b.body(&program.body, "");
        b.emit(Instr::End, "end".into());
        let info = analyse(&b.instrs, b.paths, cut_labels.len());
        let (max_ops, max_cuts) = count_operations(program);
        Ok(CompiledProgram(Arc::new(CompiledInner {
            program: program.clone(),
            instrs: b.instrs,
            info,
            cut_labels,
            choice_labels,
            n_agents: program.n_agents,
            max_ops,
            max_cuts,
        })))
    }

    pub fn cut_slot(&self, label: &str) -> Option<u16> {
        self.cut_labels.iter().position(|l| l == label).map(|i| i as u16)
    }

    pub fn choice_slot(&self, label: &str) -> Option<u16> {
        self.choice_labels.iter().position(|l| l == label).map(|i| i as u16)
    }
}
