//! Symbolic transition systems over integer vectors.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use thiserror::Error;

use super::expr::{Predicate, Term};
use crate::smt::{BoolExpr, IntExpr};

/// Concrete state: one integer per declared variable.
pub type State = Vec<BigInt>;

/// Builds a state from machine integers.
pub fn state(values: &[i64]) -> State {
    values.iter().map(|&v| BigInt::from(v)).collect()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DefinitionError {
    #[error("branching bound must be positive")]
    ZeroBranching,
    #[error("expected {expected} successor functions, found {found}")]
    BranchCount { expected: usize, found: usize },
    #[error("successor function {branch} assigns {found} variables, expected {expected}")]
    BranchArity { branch: usize, expected: usize, found: usize },
    #[error("{what} refers to variable index {index}, but only {n} variables are declared")]
    UnresolvedVar { what: String, index: usize, n: usize },
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
}

/// Labelled transition system whose relation is the union of `k` total
/// successor functions over `Z^n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolicSystem {
    name: String,
    vars: Vec<String>,
    successors: Vec<Vec<Term>>,
    init: Predicate,
    labels: Vec<(String, Predicate)>,
}

impl SymbolicSystem {
    pub fn new(
        name: impl Into<String>,
        vars: Vec<String>,
        successors: Vec<Vec<Term>>,
        init: Predicate,
        labels: Vec<(String, Predicate)>,
    ) -> Result<SymbolicSystem, DefinitionError> {
        let n = vars.len();
        if successors.is_empty() {
            return Err(DefinitionError::ZeroBranching);
        }
        for (i, succ) in successors.iter().enumerate() {
            if succ.len() != n {
                return Err(DefinitionError::BranchArity {
                    branch: i + 1,
                    expected: n,
                    found: succ.len(),
                });
            }
            for t in succ {
                check_vars(t.max_var(), n, || format!("branch {}", i + 1))?;
            }
        }
        check_vars(init.max_var(), n, || "init".to_string())?;
        let mut seen = BTreeSet::new();
        for (name, p) in &labels {
            if !seen.insert(name.clone()) {
                return Err(DefinitionError::DuplicateLabel(name.clone()));
            }
            check_vars(p.max_var(), n, || format!("label `{name}`"))?;
        }
        Ok(SymbolicSystem { name: name.into(), vars, successors, init, labels })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    /// Branching bound `k`.
    pub fn branching(&self) -> usize {
        self.successors.len()
    }

    pub fn successor_functions(&self) -> &[Vec<Term>] {
        &self.successors
    }

    pub fn init(&self) -> &Predicate {
        &self.init
    }

    pub fn labels(&self) -> &[(String, Predicate)] {
        &self.labels
    }

    pub fn label(&self, name: &str) -> Option<&Predicate> {
        self.labels.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn label_names(&self) -> Vec<String> {
        self.labels.iter().map(|(n, _)| n.clone()).collect()
    }

    /// the successors of `s` in branch order, always of length `k`.
    pub fn successors(&self, s: &[BigInt]) -> Vec<State> {
        debug_assert_eq!(s.len(), self.dim());
        self.successors
            .iter()
            .map(|f| f.iter().map(|t| t.eval(s)).collect())
            .collect()
    }

    pub fn labels_of(&self, s: &[BigInt]) -> BTreeSet<String> {
        self.labels
            .iter()
            .filter(|(_, p)| p.eval(s))
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn is_initial(&self, s: &[BigInt]) -> bool {
        self.init.eval(s)
    }

    /// Symbolic successors of a symbolic state.
    pub fn successors_smt(&self, s: &[IntExpr]) -> Vec<Vec<IntExpr>> {
        self.successors
            .iter()
            .map(|f| f.iter().map(|t| t.to_smt(s)).collect())
            .collect()
    }

    pub fn init_smt(&self, s: &[IntExpr]) -> BoolExpr {
        self.init.to_smt(s)
    }
}

fn check_vars(
    max: Option<usize>,
    n: usize,
    what: impl FnOnce() -> String,
) -> Result<(), DefinitionError> {
    match max {
        Some(i) if i >= n => Err(DefinitionError::UnresolvedVar { what: what(), index: i, n }),
        _ => Ok(()),
    }
}
