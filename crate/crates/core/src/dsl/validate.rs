use std::collections::BTreeSet;
use std::fmt;

use super::ast::*;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    /// A label is used on a path where no preceding statement binds it.
    UnboundLabelOnPath(String),
    /// A choose label used as an endpoint, or a cut label used in `chose`.
    WrongLabelKind(String),
    DuplicateLabelOnPath(String),
    EmptyPieceSet,
    AgentOutOfRange(usize),
    ChoseIndexOutOfRange { label: String, index: usize, options: usize },
    /// Cuts after a `choose any` would change the interval set it drew from.
    CutAfterChooseAny,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub span: Span,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.span)?;
        match &self.kind {
            ViolationKind::UnboundLabelOnPath(l) => write!(f, "UnboundLabelOnPath: {l} is not bound on every path"),
            ViolationKind::WrongLabelKind(l) => write!(f, "WrongLabelKind: {l} used as the wrong kind of label"),
            ViolationKind::DuplicateLabelOnPath(l) => write!(f, "DuplicateLabelOnPath: {l} is bound twice on one path"),
            ViolationKind::EmptyPieceSet => write!(f, "EmptyPieceSet: statement lists no pieces"),
            ViolationKind::AgentOutOfRange(a) => write!(f, "AgentOutOfRange: agent {a}"),
            ViolationKind::ChoseIndexOutOfRange { label, index, options } => write!(
                f,
                "ChoseIndexOutOfRange: chose({label},{index}) but {label} has {options} options"
            ),
            ViolationKind::CutAfterChooseAny => write!(f, "CutAfterChooseAny: cut follows a choose any"),
        }
    }
}

#[derive(Clone, Default)]
struct Scope {
    /// Labels bound on every path reaching this point.
    must: BTreeSet<String>,
    /// Labels bound on some path.
    may: BTreeSet<String>,
    any_seen: bool,
}

struct Checker {
    n: usize,
    kinds: Vec<(String, LabelKind)>,
    options: Vec<(String, Option<usize>)>,
    out: Vec<Violation>,
}

impl Checker {
    fn kind_of(&self, label: &str) -> Option<LabelKind> {
        self.kinds.iter().find(|(l, _)| l == label).map(|(_, k)| *k)
    }

    fn push(&mut self, span: Span, kind: ViolationKind) {
        if !self.out.iter().any(|v| v.span == span && v.kind == kind) {
            self.out.push(Violation { span, kind });
        }
    }

    fn use_cut_label(&mut self, scope: &Scope, label: &str, span: Span) {
        if self.kind_of(label) != Some(LabelKind::Cut) {
            self.push(span, ViolationKind::WrongLabelKind(label.into()));
        } else if !scope.must.contains(label) {
            self.push(span, ViolationKind::UnboundLabelOnPath(label.into()));
        }
    }

    fn endpoint(&mut self, scope: &Scope, e: &Endpoint, span: Span) {
        if let Endpoint::Label(l) = e {
            self.use_cut_label(scope, l, span);
        }
    }

    fn agent(&mut self, a: usize, span: Span) {
        if a == 0 || a > self.n {
            self.push(span, ViolationKind::AgentOutOfRange(a));
        }
    }

    fn bind(&mut self, scope: &mut Scope, label: &str, kind: LabelKind, span: Span) {
        if self.kind_of(label) != Some(kind) {
            self.push(span, ViolationKind::WrongLabelKind(label.into()));
        }
        if scope.may.contains(label) {
            self.push(span, ViolationKind::DuplicateLabelOnPath(label.into()));
        }
        scope.must.insert(label.into());
        scope.may.insert(label.into());
    }

    fn cond(&mut self, scope: &Scope, c: &Condition, span: Span) {
        let mut atoms = Vec::new();
        c.visit(&mut |c| atoms.push(c.clone()));
        for atom in atoms {
            match atom {
                Condition::Order { a, b, .. } => {
                    self.endpoint(scope, &a, span);
                    self.endpoint(scope, &b, span);
                }
                Condition::Chose { label, index } => {
                    if self.kind_of(&label) != Some(LabelKind::Choose) {
                        self.push(span, ViolationKind::WrongLabelKind(label));
                        continue;
                    }
                    if !scope.must.contains(&label) {
                        self.push(span, ViolationKind::UnboundLabelOnPath(label.clone()));
                    }
                    let options = self.options.iter().find(|(l, _)| *l == label).and_then(|(_, o)| *o);
                    if let Some(options) = options {
                        if index >= options {
                            self.push(span, ViolationKind::ChoseIndexOutOfRange { label, index, options });
                        }
                    }
                }
                Condition::Allocated(a) => self.agent(a, span),
                _ => {}
            }
        }
    }

    /// Returns the scope after `body`, or `None` if every path exits.
    fn body(&mut self, mut scope: Scope, body: &[Statement]) -> Option<Scope> {
        for s in body {
            let span = s.span;
            match &s.kind {
                StmtKind::Cut { agent, pieces, label } | StmtKind::Choose { agent, pieces, label } => {
                    let is_cut = matches!(s.kind, StmtKind::Cut { .. });
                    self.agent(*agent, span);
                    if pieces.is_empty() {
                        self.push(span, ViolationKind::EmptyPieceSet);
                    }
                    for p in pieces {
                        self.endpoint(&scope, &p.a, span);
                        self.endpoint(&scope, &p.b, span);
                    }
                    if is_cut && scope.any_seen {
                        self.push(span, ViolationKind::CutAfterChooseAny);
                    }
                    let kind = if is_cut { LabelKind::Cut } else { LabelKind::Choose };
                    self.bind(&mut scope, label, kind, span);
                }
                StmtKind::ChooseAny { agent, label } => {
                    self.agent(*agent, span);
                    scope.any_seen = true;
                    self.bind(&mut scope, label, LabelKind::Choose, span);
                }
                StmtKind::If { cond, then_body, else_body } => {
                    self.cond(&scope, cond, span);
                    let a = self.body(scope.clone(), then_body);
                    let b = self.body(scope.clone(), else_body);
                    scope = match (a, b) {
                        (None, None) => return None,
                        (Some(s), None) | (None, Some(s)) => s,
                        (Some(a), Some(b)) => Scope {
                            must: a.must.intersection(&b.must).cloned().collect(),
                            may: a.may.union(&b.may).cloned().collect(),
                            any_seen: a.any_seen || b.any_seen,
                        },
                    };
                }
                StmtKind::Exit => return None,
            }
        }
        Some(scope)
    }
}

fn collect_options(body: &[Statement], out: &mut Vec<(String, Option<usize>)>) {
    for s in body {
        match &s.kind {
            StmtKind::Choose { pieces, label, .. } => {
                match out.iter_mut().find(|(l, _)| l == label) {
                    // Same label in sibling branches: check against the smaller set.
                    Some((_, Some(o))) => *o = (*o).min(pieces.len()),
                    Some(_) => {}
                    None => out.push((label.clone(), Some(pieces.len()))),
                }
            }
            StmtKind::ChooseAny { label, .. } => {
                if let Some(e) = out.iter_mut().find(|(l, _)| l == label) {
                    e.1 = None;
                } else {
                    out.push((label.clone(), None));
                }
            }
            StmtKind::If { then_body, else_body, .. } => {
                collect_options(then_body, out);
                collect_options(else_body, out);
            }
            _ => {}
        }
    }
}

/// Static GCC check. An empty result means the program is a valid GCC
/// protocol.
pub fn validate(p: &ProtocolProgram) -> Vec<Violation> {
    let mut kinds = p.label_table();
    // A name used for both kinds is reported wherever it is used.
    kinds.dedup_by(|a, b| a.0 == b.0);
    let mut options = Vec::new();
    collect_options(&p.body, &mut options);
    let mut c = Checker { n: p.n_agents, kinds, options, out: Vec::new() };
    c.body(Scope::default(), &p.body);
    c.out
}

/// True when every depth of the tree is one fixed agent cutting in `[0,1]`
/// or choosing any available interval.
pub fn is_oblivious(p: &ProtocolProgram) -> bool {
    let straight = p.body.iter().all(|s| match &s.kind {
        StmtKind::Cut { pieces, .. } => pieces.as_slice() == [PieceExpr::whole()],
        StmtKind::ChooseAny { .. } => true,
        _ => false,
    });
    straight && validate(p).is_empty()
}

/// `(max Cut+Choose statements on any path, max Cut statements on any path)`.
pub fn count_operations(p: &ProtocolProgram) -> (usize, usize) {
    let ops = longest(&p.body, &|k| matches!(k, StmtKind::Cut { .. } | StmtKind::Choose { .. } | StmtKind::ChooseAny { .. }));
    let cuts = longest(&p.body, &|k| matches!(k, StmtKind::Cut { .. }));
    (ops, cuts)
}

fn longest(body: &[Statement], counts: &dyn Fn(&StmtKind) -> bool) -> usize {
    let (fall, exit) = longest_split(body, counts);
    fall.max(exit).unwrap_or(0)
}

/// Longest weight over paths that fall off the end of `body` and over paths
/// that hit `exit`.
fn longest_split(body: &[Statement], counts: &dyn Fn(&StmtKind) -> bool) -> (Option<usize>, Option<usize>) {
    let mut fall = Some(0usize);
    let mut exit: Option<usize> = None;
    for s in body {
        match &s.kind {
            StmtKind::Exit => {
                exit = exit.max(fall);
                fall = None;
            }
            StmtKind::If { then_body, else_body, .. } => {
                let (af, ae) = longest_split(then_body, counts);
                let (bf, be) = longest_split(else_body, counts);
                let base = fall;
                exit = exit.max(base.and_then(|b| ae.max(be).map(|e| b + e)));
                fall = base.and_then(|b| af.max(bf).map(|f| b + f));
            }
            k => {
                if counts(k) {
                    fall = fall.map(|f| f + 1);
                }
            }
        }
    }
    (fall, exit)
}
