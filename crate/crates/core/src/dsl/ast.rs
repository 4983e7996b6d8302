use std::fmt;

/// 1-based line and column of a statement's first token.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Zero,
    One,
    Label(String),
}

impl Endpoint {
    pub fn label(name: &str) -> Self {
        Endpoint::Label(name.to_string())
    }

    pub fn as_label(&self) -> Option<&str> {
        match self {
            Endpoint::Label(l) => Some(l),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PieceExpr {
    pub a: Endpoint,
    pub b: Endpoint,
}

impl PieceExpr {
    pub fn new(a: Endpoint, b: Endpoint) -> Self {
        PieceExpr { a, b }
    }

    pub fn whole() -> Self {
        PieceExpr { a: Endpoint::Zero, b: Endpoint::One }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl RelOp {
    pub fn holds<T: Ord>(self, a: &T, b: &T) -> bool {
        match self {
            RelOp::Lt => a < b,
            RelOp::Le => a <= b,
            RelOp::Eq => a == b,
            RelOp::Ge => a >= b,
            RelOp::Gt => a > b,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Eq => "==",
            RelOp::Ge => ">=",
            RelOp::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Condition {
    Order { a: Endpoint, op: RelOp, b: Endpoint },
    /// The choose statement labelled `label` picked option `index` (0-based).
    Chose { label: String, index: usize },
    Allocated(usize),
    And(Box<Condition>, Box<Condition>),
    Or(Box<Condition>, Box<Condition>),
    Not(Box<Condition>),
}

impl Condition {
    pub fn order(a: Endpoint, op: RelOp, b: Endpoint) -> Self {
        Condition::Order { a, op, b }
    }

    pub fn and(self, other: Condition) -> Self {
        Condition::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Condition) -> Self {
        Condition::Or(Box::new(self), Box::new(other))
    }

    pub fn negate(self) -> Self {
        Condition::Not(Box::new(self))
    }

    /// Conjunction of a non-empty list.
    pub fn all(conds: Vec<Condition>) -> Self {
        conds.into_iter().reduce(Condition::and).expect("at least one condition")
    }

    pub fn any(conds: Vec<Condition>) -> Self {
        conds.into_iter().reduce(Condition::or).expect("at least one condition")
    }

    pub(crate) fn visit(&self, f: &mut impl FnMut(&Condition)) {
        f(self);
        match self {
            Condition::And(a, b) | Condition::Or(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Condition::Not(a) => a.visit(f),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StmtKind {
    Cut { agent: usize, pieces: Vec<PieceExpr>, label: String },
    Choose { agent: usize, pieces: Vec<PieceExpr>, label: String },
    /// Choose any still-unallocated interval between adjacent cuts.
    ChooseAny { agent: usize, label: String },
    If { cond: Condition, then_body: Vec<Statement>, else_body: Vec<Statement> },
    Exit,
}

/// A statement with its source position. Equality ignores the span so that
/// parsed and generated ASTs compare structurally.
#[derive(Debug, Clone, Eq)]
pub struct Statement {
    pub kind: StmtKind,
    pub span: Span,
}

impl PartialEq for Statement {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl std::hash::Hash for Statement {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.kind.hash(state);
    }
}

impl Statement {
    pub fn new(kind: StmtKind) -> Self {
        Statement { kind, span: Span::default() }
    }

    pub fn cut(agent: usize, pieces: Vec<PieceExpr>, label: &str) -> Self {
        Statement::new(StmtKind::Cut { agent, pieces, label: label.into() })
    }

    pub fn choose(agent: usize, pieces: Vec<PieceExpr>, label: &str) -> Self {
        Statement::new(StmtKind::Choose { agent, pieces, label: label.into() })
    }

    pub fn choose_any(agent: usize, label: &str) -> Self {
        Statement::new(StmtKind::ChooseAny { agent, label: label.into() })
    }

    pub fn if_else(cond: Condition, then_body: Vec<Statement>, else_body: Vec<Statement>) -> Self {
        Statement::new(StmtKind::If { cond, then_body, else_body })
    }

    pub fn exit() -> Self {
        Statement::new(StmtKind::Exit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProtocolProgram {
    pub n_agents: usize,
    pub body: Vec<Statement>,
}

/// What a label names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Cut,
    Choose,
}

impl ProtocolProgram {
    pub fn new(n_agents: usize, body: Vec<Statement>) -> Self {
        ProtocolProgram { n_agents, body }
    }

    /// Every label declared anywhere in the program, in first-declaration
    /// order.
    pub fn label_table(&self) -> Vec<(String, LabelKind)> {
        fn walk(body: &[Statement], out: &mut Vec<(String, LabelKind)>) {
            for s in body {
                let entry = match &s.kind {
                    StmtKind::Cut { label, .. } => Some((label.clone(), LabelKind::Cut)),
                    StmtKind::Choose { label, .. } | StmtKind::ChooseAny { label, .. } => {
                        Some((label.clone(), LabelKind::Choose))
                    }
                    StmtKind::If { then_body, else_body, .. } => {
                        walk(then_body, out);
                        walk(else_body, out);
                        None
                    }
                    StmtKind::Exit => None,
                };
                if let Some(e) = entry {
                    if !out.iter().any(|(l, _)| *l == e.0) {
                        out.push(e);
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.body, &mut out);
        out
    }
}
