//! Symbolic transition systems, their expression language and the DSL.

pub mod dsl;
mod expr;
pub(crate) mod lexer;
mod system;

pub use dsl::{parse_predicate, parse_system, DslError};
pub use expr::{CmpOp, Predicate, Term, VarId};
pub use lexer::Pos;
pub use system::{state, DefinitionError, State, SymbolicSystem};
