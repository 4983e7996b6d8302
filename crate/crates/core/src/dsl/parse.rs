//! Hand-written lexer and recursive-descent parser for `.gcc` files.

use std::collections::HashSet;

use super::ast::*;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("{span}: syntax error: {msg}")]
    Syntax { span: Span, msg: String },
    #[error("{span}: numeric literal {literal} in condition; only 0 and 1 may appear")]
    NumericLiteralInCondition { span: Span, literal: String },
    #[error("{span}: unknown label {label}")]
    UnknownLabel { span: Span, label: String },
    #[error("{span}: agent {agent} out of range 1..{n}")]
    AgentOutOfRange { span: Span, agent: usize, n: usize },
}

impl ParseError {
    pub fn span(&self) -> Span {
        match self {
            ParseError::Syntax { span, .. }
            | ParseError::NumericLiteralInCondition { span, .. }
            | ParseError::UnknownLabel { span, .. }
            | ParseError::AgentOutOfRange { span, .. } => *span,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    /// Digits, optionally with `/` or `.` parts, kept verbatim.
    Number(String),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: Span,
}

const PUNCT: [&str; 14] = ["<=", ">=", "==", "<", ">", "=", "{", "}", "[", "]", "(", ")", ",", ";"];

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            col += i - start;
            out.push(Token { tok: Tok::Ident(word), span });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '/' || chars[i] == '.') {
                i += 1;
            }
            let lit: String = chars[start..i].iter().collect();
            col += i - start;
            out.push(Token { tok: Tok::Number(lit), span });
            continue;
        }
        let rest: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        match PUNCT.iter().find(|p| rest.starts_with(*p)) {
            Some(p) => {
                i += p.len();
                col += p.len();
                out.push(Token { tok: Tok::Punct(p), span });
            }
            None => {
                return Err(ParseError::Syntax { span, msg: format!("unexpected character {c:?}") })
            }
        }
    }
    out.push(Token { tok: Tok::Eof, span: Span { line, col } });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    n: usize,
    /// Label uses to check once all declarations are known.
    uses: Vec<(String, Span)>,
}

const KEYWORDS: [&str; 13] = [
    "agents", "cut", "in", "as", "choose", "from", "any", "if", "else", "exit", "and", "or", "not",
];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax { span: self.span(), msg: msg.into() })
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::Ident(s) | Tok::Number(s) => format!("{s:?}"),
            Tok::Punct(p) => format!("{p:?}"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_kw(kw) {
            self.next();
            Ok(())
        } else {
            self.err(format!("expected {kw:?}, found {}", Self::describe(self.peek())))
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), ParseError> {
        if self.is_punct(p) {
            self.next();
            Ok(())
        } else {
            self.err(format!("expected {p:?}, found {}", Self::describe(self.peek())))
        }
    }

    fn int(&mut self) -> Result<(usize, Span), ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Number(s) => match s.parse::<usize>() {
                Ok(v) => {
                    self.next();
                    Ok((v, span))
                }
                Err(_) => self.err(format!("expected an integer, found {s:?}")),
            },
            t => self.err(format!("expected an integer, found {}", Self::describe(&t))),
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.next();
                Ok(s)
            }
            t => self.err(format!("expected a label, found {}", Self::describe(&t))),
        }
    }

    fn agent(&mut self) -> Result<usize, ParseError> {
        let (a, span) = self.int()?;
        if a == 0 || a > self.n {
            return Err(ParseError::AgentOutOfRange { span, agent: a, n: self.n });
        }
        Ok(a)
    }

    fn endpoint(&mut self, in_condition: bool) -> Result<Endpoint, ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Number(s) if s == "0" => {
                self.next();
                Ok(Endpoint::Zero)
            }
            Tok::Number(s) if s == "1" => {
                self.next();
                Ok(Endpoint::One)
            }
            Tok::Number(s) if in_condition => {
                Err(ParseError::NumericLiteralInCondition { span, literal: s })
            }
            Tok::Number(s) => self.err(format!("endpoint must be 0, 1 or a label, found {s:?}")),
            _ => {
                let l = self.ident()?;
                self.uses.push((l.clone(), span));
                Ok(Endpoint::Label(l))
            }
        }
    }

    fn piece(&mut self) -> Result<PieceExpr, ParseError> {
        self.expect_punct("[")?;
        let a = self.endpoint(false)?;
        self.expect_punct(",")?;
        let b = self.endpoint(false)?;
        self.expect_punct("]")?;
        Ok(PieceExpr { a, b })
    }

    fn piece_set(&mut self) -> Result<Vec<PieceExpr>, ParseError> {
        self.expect_punct("{")?;
        let mut v = vec![self.piece()?];
        while self.is_punct(",") {
            self.next();
            v.push(self.piece()?);
        }
        self.expect_punct("}")?;
        Ok(v)
    }

    fn relop(&mut self) -> Result<RelOp, ParseError> {
        let op = match self.peek() {
            Tok::Punct("<") => RelOp::Lt,
            Tok::Punct("<=") => RelOp::Le,
            Tok::Punct("==") | Tok::Punct("=") => RelOp::Eq,
            Tok::Punct(">=") => RelOp::Ge,
            Tok::Punct(">") => RelOp::Gt,
            t => return self.err(format!("expected a comparison, found {}", Self::describe(t))),
        };
        self.next();
        Ok(op)
    }

    fn cond_or(&mut self) -> Result<Condition, ParseError> {
        let mut c = self.cond_and()?;
        while self.is_kw("or") {
            self.next();
            c = c.or(self.cond_and()?);
        }
        Ok(c)
    }

    fn cond_and(&mut self) -> Result<Condition, ParseError> {
        let mut c = self.cond_unary()?;
        while self.is_kw("and") {
            self.next();
            c = c.and(self.cond_unary()?);
        }
        Ok(c)
    }

    fn cond_unary(&mut self) -> Result<Condition, ParseError> {
        if self.is_kw("not") {
            self.next();
            return Ok(self.cond_unary()?.negate());
        }
        if self.is_punct("(") {
            self.next();
            let c = self.cond_or()?;
            self.expect_punct(")")?;
            return Ok(c);
        }
        if self.is_kw("chose") {
            self.next();
            self.expect_punct("(")?;
            let span = self.span();
            let label = self.ident()?;
            self.uses.push((label.clone(), span));
            self.expect_punct(",")?;
            let (index, _) = self.int()?;
            self.expect_punct(")")?;
            return Ok(Condition::Chose { label, index });
        }
        if self.is_kw("allocated") {
            self.next();
            self.expect_punct("(")?;
            let a = self.agent()?;
            self.expect_punct(")")?;
            return Ok(Condition::Allocated(a));
        }
        let a = self.endpoint(true)?;
        let op = self.relop()?;
        let b = self.endpoint(true)?;
        Ok(Condition::Order { a, op, b })
    }

    fn block(&mut self) -> Result<Vec<Statement>, ParseError> {
        self.expect_punct("{")?;
        let mut body = Vec::new();
        while !self.is_punct("}") {
            if *self.peek() == Tok::Eof {
                return self.err("unclosed block");
            }
            body.push(self.stmt()?);
        }
        self.next();
        Ok(body)
    }

    fn stmt(&mut self) -> Result<Statement, ParseError> {
        let span = self.span();
        let kind = if self.is_kw("cut") {
            self.next();
            let agent = self.agent()?;
            self.expect_kw("in")?;
            let pieces = self.piece_set()?;
            self.expect_kw("as")?;
            let label = self.ident()?;
            self.expect_punct(";")?;
            StmtKind::Cut { agent, pieces, label }
        } else if self.is_kw("choose") {
            self.next();
            let agent = self.agent()?;
            if self.is_kw("any") {
                self.next();
                self.expect_kw("as")?;
                let label = self.ident()?;
                self.expect_punct(";")?;
                StmtKind::ChooseAny { agent, label }
            } else {
                self.expect_kw("from")?;
                let pieces = self.piece_set()?;
                self.expect_kw("as")?;
                let label = self.ident()?;
                self.expect_punct(";")?;
                StmtKind::Choose { agent, pieces, label }
            }
        } else if self.is_kw("if") {
            self.next();
            let cond = self.cond_or()?;
            let then_body = self.block()?;
            let else_body = if self.is_kw("else") {
                self.next();
                if self.is_kw("if") {
                    vec![self.stmt()?]
                } else {
                    self.block()?
                }
            } else {
                Vec::new()
            };
            StmtKind::If { cond, then_body, else_body }
        } else if self.is_kw("exit") {
            self.next();
            self.expect_punct(";")?;
            StmtKind::Exit
        } else {
            return self.err(format!("expected a statement, found {}", Self::describe(self.peek())));
        };
        Ok(Statement { kind, span })
    }
}

/// Parses a program. Labels must be declared somewhere in the program;
/// whether they are bound on every path is checked by `validate`.
pub fn parse(text: &str) -> Result<ProtocolProgram, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, n: 0, uses: Vec::new() };
    p.expect_kw("agents")?;
    let (n, span) = p.int()?;
    if n == 0 {
        return Err(ParseError::Syntax { span, msg: "need at least one agent".into() });
    }
    p.n = n;
    p.expect_punct(";")?;
    let mut body = Vec::new();
    while *p.peek() != Tok::Eof {
        body.push(p.stmt()?);
    }
    let program = ProtocolProgram { n_agents: n, body };
    let declared: HashSet<String> = program.label_table().into_iter().map(|(l, _)| l).collect();
    if let Some((label, span)) = p.uses.iter().find(|(l, _)| !declared.contains(l)) {
        return Err(ParseError::UnknownLabel { span: *span, label: label.clone() });
    }
    Ok(program)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const ALGORITHM_1: &str = "agents 1;
cut 1 in {[0,1]} as x;
cut 1 in {[0,1]} as y;
cut 1 in {[0,1]} as z;
if x < y and y < z {
  choose 1 from {[x,y],[y,z]} as c;
}
";

    #[test]
    fn parses_algorithm_1() {
        let p = parse(ALGORITHM_1).unwrap();
        assert_eq!(p.n_agents, 1);
        assert_eq!(p.body.len(), 4);
        assert_eq!(p.body[3].span, Span { line: 5, col: 1 });
        match &p.body[3].kind {
            StmtKind::If { then_body, else_body, .. } => {
                assert_eq!(then_body.len(), 1);
                assert!(else_body.is_empty());
            }
            k => panic!("unexpected {k:?}"),
        }
    }

    #[test]
    fn rejects_numeric_literal_in_condition() {
        let text = "agents 1;\ncut 1 in {[0,1]} as x;\nif x = 1/3 { choose 1 from {[0,x],[x,1]} as c; }\n";
        let err = parse(text).unwrap_err();
        assert_eq!(
            err,
            ParseError::NumericLiteralInCondition { span: Span { line: 3, col: 8 }, literal: "1/3".into() }
        );
    }

    #[test]
    fn empty_body_is_valid() {
        let p = parse("agents 2;").unwrap();
        assert!(p.body.is_empty());
    }

    #[test]
    fn reports_unknown_label_and_agent_range() {
        let err = parse("agents 1; choose 1 from {[0,q]} as c;").unwrap_err();
        assert!(matches!(err, ParseError::UnknownLabel { ref label, .. } if label == "q"));
        let err = parse("agents 2; cut 3 in {[0,1]} as x;").unwrap_err();
        assert!(matches!(err, ParseError::AgentOutOfRange { agent: 3, n: 2, .. }));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse("agents 1;\ncut 1 in {[0,1]} x;").unwrap_err();
        assert_eq!(err.span(), Span { line: 2, col: 18 });
        assert!(parse("agents 1; cut 1 in {[0,1/2]} as x;").is_err());
    }

    #[test]
    fn precedence_and_over_or() {
        let p = parse(
            "agents 1; cut 1 in {[0,1]} as x; if x < 1 or x > 0 and not x == 1 { exit; }",
        )
        .unwrap();
        let StmtKind::If { cond, .. } = &p.body[1].kind else { panic!() };
        assert!(matches!(cond, Condition::Or(_, r) if matches!(**r, Condition::And(..))));
    }
}
