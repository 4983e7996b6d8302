//! The GCC protocol language: AST, parser, printer and static checks.

mod ast;
mod compile;
mod parse;
mod print;
mod validate;

pub use ast::*;
pub use compile::{CompiledInner, CompiledProgram, CondOp, Instr, Operand, PcInfo, PieceOp};
pub use parse::{parse, ParseError};
pub use validate::{count_operations, is_oblivious, validate, Violation, ViolationKind};

/// Source of the three-cut example protocol without an exact equilibrium.
pub const ALGORITHM_1: &str = "agents 1;
cut 1 in {[0,1]} as x;
cut 1 in {[0,1]} as y;
cut 1 in {[0,1]} as z;
if x < y and y < z {
  choose 1 from {[x,y],[y,z]} as c;
}
";
