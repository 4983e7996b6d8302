//! Canonical text form. `parse(&p.to_string())` reproduces `p`.

use std::fmt::{self, Display, Formatter, Write};

use super::ast::*;

impl Display for Endpoint {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Zero => f.write_str("0"),
            Endpoint::One => f.write_str("1"),
            Endpoint::Label(l) => f.write_str(l),
        }
    }
}

impl Display for PieceExpr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.a, self.b)
    }
}

fn level(c: &Condition) -> u8 {
    match c {
        Condition::Or(..) => 1,
        Condition::And(..) => 2,
        _ => 3,
    }
}

fn write_cond(out: &mut impl Write, c: &Condition, min_level: u8) -> fmt::Result {
    let paren = level(c) < min_level;
    if paren {
        out.write_char('(')?;
    }
    match c {
        Condition::Order { a, op, b } => write!(out, "{a} {} {b}", op.symbol())?,
        Condition::Chose { label, index } => write!(out, "chose({label},{index})")?,
        Condition::Allocated(i) => write!(out, "allocated({i})")?,
        Condition::And(a, b) => {
            write_cond(out, a, 2)?;
            out.write_str(" and ")?;
            write_cond(out, b, 3)?;
        }
        Condition::Or(a, b) => {
            write_cond(out, a, 1)?;
            out.write_str(" or ")?;
            write_cond(out, b, 2)?;
        }
        Condition::Not(a) => {
            out.write_str("not ")?;
            write_cond(out, a, 3)?;
        }
    }
    if paren {
        out.write_char(')')?;
    }
    Ok(())
}

impl Display for Condition {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_cond(f, self, 1)
    }
}

fn write_pieces(out: &mut impl Write, pieces: &[PieceExpr]) -> fmt::Result {
    out.write_char('{')?;
    for (i, p) in pieces.iter().enumerate() {
        if i > 0 {
            out.write_char(',')?;
        }
        write!(out, "{p}")?;
    }
    out.write_char('}')
}

fn write_body(out: &mut impl Write, body: &[Statement], indent: usize) -> fmt::Result {
    for s in body {
        for _ in 0..indent {
            out.write_str("  ")?;
        }
        match &s.kind {
            StmtKind::Cut { agent, pieces, label } => {
                write!(out, "cut {agent} in ")?;
                write_pieces(out, pieces)?;
                writeln!(out, " as {label};")?;
            }
            StmtKind::Choose { agent, pieces, label } => {
                write!(out, "choose {agent} from ")?;
                write_pieces(out, pieces)?;
                writeln!(out, " as {label};")?;
            }
            StmtKind::ChooseAny { agent, label } => writeln!(out, "choose {agent} any as {label};")?,
            StmtKind::Exit => writeln!(out, "exit;")?,
            StmtKind::If { cond, then_body, else_body } => {
                writeln!(out, "if {cond} {{")?;
                write_body(out, then_body, indent + 1)?;
                for _ in 0..indent {
                    out.write_str("  ")?;
                }
                if else_body.is_empty() {
                    writeln!(out, "}}")?;
                } else {
                    writeln!(out, "}} else {{")?;
                    write_body(out, else_body, indent + 1)?;
                    for _ in 0..indent {
                        out.write_str("  ")?;
                    }
                    writeln!(out, "}}")?;
                }
            }
        }
    }
    Ok(())
}

impl Display for ProtocolProgram {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        writeln!(f, "agents {};", self.n_agents)?;
        write_body(f, &self.body, 0)
    }
}
