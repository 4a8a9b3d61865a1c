//! SMT formulas and the subprocess solver backend.

mod ast;
mod solver;

pub use ast::{BoolExpr, IntExpr, Model, SmtFormula, Sort, Value};
pub use solver::{SmtError, SmtResult, Solver, DEFAULT_SOLVER, SOLVER_ENV};
