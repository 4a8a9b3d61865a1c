//! Finite quotients of a classified system.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{State, SymbolicSystem};
use crate::smt::{BoolExpr, IntExpr, SmtError, SmtFormula, SmtResult, Solver};
use crate::templates::{ClassId, ClassifierTemplate, ParamAssignment};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotientClass {
    /// Leaf id of the classifier, or block id for explicit partitions.
    pub id: usize,
    pub name: String,
    pub labels: BTreeSet<String>,
    /// Region formula in the system's predicate syntax.
    pub region: String,
    pub initial: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quotient {
    pub classes: Vec<QuotientClass>,
    /// Sorted `(from, to)` pairs of class ids.
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Error)]
pub enum QuotientError {
    #[error("solver returned unknown for {what}: {reason}")]
    Unknown { what: String, reason: String },
    #[error(transparent)]
    Smt(#[from] SmtError),
    #[error("unknown export format `{0}` (expected dot or json)")]
    Format(String),
    #[error("invalid quotient document: {0}")]
    Json(#[from] serde_json::Error),
}

/// Conventional letter names `a`, `b`, ... by leaf id, `c26`, ... beyond.
pub fn class_name(id: usize) -> String {
    if id < 26 {
        ((b'a' + id as u8) as char).to_string()
    } else {
        format!("c{id}")
    }
}

impl Quotient {
    pub fn class(&self, id: usize) -> Option<&QuotientClass> {
        self.classes.iter().find(|c| c.id == id)
    }

    pub fn class_by_name(&self, name: &str) -> Option<&QuotientClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.binary_search(&(from, to)).is_ok()
    }

    pub fn successors(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.0 == id).map(|e| e.1)
    }

    pub fn initial(&self) -> impl Iterator<Item = usize> + '_ {
        self.classes.iter().filter(|c| c.initial).map(|c| c.id)
    }

    /// Edges as pairs of class names, for readable comparisons.
    pub fn named_edges(&self) -> BTreeSet<(String, String)> {
        let name = |id| self.class(id).map(|c| c.name.clone()).unwrap_or_default();
        self.edges.iter().map(|&(a, b)| (name(a), name(b))).collect()
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph quotient {\n  node [shape=circle];\n");
        for c in &self.classes {
            let labels: Vec<&str> = c.labels.iter().map(String::as_str).collect();
            let _ = writeln!(
                out,
                "  {} [label=\"{}\\n{{{}}}\", tooltip=\"{}\"{}];",
                c.id,
                escape(&c.name),
                escape(&labels.join(", ")),
                escape(&c.region),
                if c.initial { ", peripheries=2" } else { "" }
            );
        }
        for (a, b) in &self.edges {
            let _ = writeln!(out, "  {a} -> {b};");
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("quotient serializes")
    }

    pub fn from_json(text: &str) -> Result<Quotient, QuotientError> {
        let mut q: Quotient = serde_json::from_str(text)?;
        q.normalize();
        Ok(q)
    }

    /// Renders in `format` (`dot` or `json`).
    pub fn export(&self, format: &str) -> Result<String, QuotientError> {
        match format {
            "dot" => Ok(self.to_dot()),
            "json" => Ok(self.to_json()),
            other => Err(QuotientError::Format(other.to_string())),
        }
    }

    fn normalize(&mut self) {
        self.classes.sort_by_key(|c| c.id);
        self.edges.sort_unstable();
        self.edges.dedup();
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn solve(solver: &Solver, f: &SmtFormula, what: impl FnOnce() -> String) -> Result<SmtResult, QuotientError> {
    match solver.check(f)? {
        SmtResult::Unknown(reason) => Err(QuotientError::Unknown { what: what(), reason }),
        r => Ok(r),
    }
}

/// Fresh symbolic state with its successors and the class membership of
/// each.
struct Encoded {
    f: SmtFormula,
    s: Vec<IntExpr>,
    member: Vec<BoolExpr>,
    succ_member: Vec<Vec<BoolExpr>>,
}

fn encode(sys: &SymbolicSystem, template: &ClassifierTemplate, params: &ParamAssignment, with_succ: bool) -> Encoded {
    let mut f = SmtFormula::new();
    let s: Vec<IntExpr> = sys.vars().iter().map(|v| f.declare_int(format!("s_{v}"))).collect();
    let splits = params.split_exprs();
    let member = template.classify_shared(&mut f, &splits, &s);
    let succ_member = if with_succ {
        sys.successors_smt(&s)
            .into_iter()
            .map(|succ| {
                let named: Vec<IntExpr> = succ.into_iter().map(|e| f.define_int("succ", e)).collect();
                template.classify_shared(&mut f, &splits, &named)
            })
            .collect()
    } else {
        Vec::new()
    };
    Encoded { f, s, member, succ_member }
}

enum Query {
    Edge(usize, usize),
    SelfLoop(usize),
    Initial(usize),
}

/// Extracts the quotient induced by a classifier with concrete parameters.
/// Only the classifier is used; ranking parameters are ignored.
pub fn extract(
    sys: &SymbolicSystem,
    template: &ClassifierTemplate,
    params: &ParamAssignment,
    solver: &Solver,
) -> Result<Quotient, QuotientError> {
    let names = sys.vars();
    // Nonempty classes, each with a witness state for its labels.
    let witnesses: Vec<Option<State>> = template
        .classes()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|c| {
            let mut e = encode(sys, template, params, false);
            e.f.assert(e.member[c.0].clone());
            match solve(solver, &e.f, || format!("region of class {}", class_name(c.0)))? {
                SmtResult::Sat(m) => Ok(Some(e.s.iter().map(|v| v.eval(&m).unwrap_or_default()).collect())),
                _ => Ok(None),
            }
        })
        .collect::<Result<_, QuotientError>>()?;
    let live: Vec<usize> = witnesses
        .iter()
        .enumerate()
        .filter(|(_, w)| w.is_some())
        .map(|(i, _)| i)
        .collect();

    let mut queries = Vec::new();
    for &c in &live {
        queries.push(Query::SelfLoop(c));
        queries.push(Query::Initial(c));
        for &d in &live {
            if c != d {
                queries.push(Query::Edge(c, d));
            }
        }
    }
    let answers: Vec<bool> = queries
        .par_iter()
        .map(|q| match *q {
            Query::Edge(c, d) => {
                let mut e = encode(sys, template, params, true);
                e.f.assert(e.member[c].clone());
                e.f.assert(BoolExpr::or(e.succ_member.iter().map(|m| m[d].clone()).collect()));
                let r = solve(solver, &e.f, || format!("edge {} -> {}", class_name(c), class_name(d)))?;
                Ok(r.is_sat())
            }
            Query::SelfLoop(c) => {
                let mut e = encode(sys, template, params, true);
                e.f.assert(e.member[c].clone());
                for m in &e.succ_member {
                    e.f.assert(BoolExpr::not(m[c].clone()));
                }
                let r = solve(solver, &e.f, || format!("self-loop of {}", class_name(c)))?;
                Ok(r.is_unsat())
            }
            Query::Initial(c) => {
                let mut e = encode(sys, template, params, false);
                e.f.assert(e.member[c].clone());
                e.f.assert(sys.init_smt(&e.s));
                let r = solve(solver, &e.f, || format!("initial states of {}", class_name(c)))?;
                Ok(r.is_sat())
            }
        })
        .collect::<Result<_, QuotientError>>()?;

    let mut initial = BTreeMap::new();
    let mut edges = Vec::new();
    for (q, yes) in queries.iter().zip(answers) {
        match *q {
            Query::Edge(c, d) if yes => edges.push((c, d)),
            Query::SelfLoop(c) if yes => edges.push((c, c)),
            Query::Initial(c) => {
                initial.insert(c, yes);
            }
            _ => {}
        }
    }
    let classes = live
        .iter()
        .map(|&c| QuotientClass {
            id: c,
            name: class_name(c),
            labels: sys.labels_of(witnesses[c].as_ref().expect("live class")),
            region: template.region(&params.splits, ClassId(c)).display(names).to_string(),
            initial: initial[&c],
        })
        .collect();
    let mut q = Quotient { classes, edges };
    q.normalize();
    Ok(q)
}
