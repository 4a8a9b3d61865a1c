//! Quantifier-free linear integer arithmetic terms.
//!
//! Constructors fold constants eagerly: many queries mix concrete sample
//! states with symbolic parameters, and most fixed-predicate branches
//! collapse to `true`/`false` before anything reaches the solver.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::model::CmpOp;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum IntExpr {
    Const(BigInt),
    Var(String),
    Add(Vec<IntExpr>),
    Mul(BigInt, Box<IntExpr>),
    Ite(Box<BoolExpr>, Box<IntExpr>, Box<IntExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BoolExpr {
    Const(bool),
    Var(String),
    Cmp(CmpOp, IntExpr, IntExpr),
    Not(Box<BoolExpr>),
    And(Vec<BoolExpr>),
    Or(Vec<BoolExpr>),
}

impl IntExpr {
    pub fn var(name: impl Into<String>) -> IntExpr {
        IntExpr::Var(name.into())
    }

    pub fn constant(v: impl Into<BigInt>) -> IntExpr {
        IntExpr::Const(v.into())
    }

    pub fn as_const(&self) -> Option<&BigInt> {
        match self {
            IntExpr::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn add(parts: Vec<IntExpr>) -> IntExpr {
        let mut acc = BigInt::zero();
        let mut rest = Vec::with_capacity(parts.len());
        for p in parts {
            match p {
                IntExpr::Const(c) => acc += c,
                IntExpr::Add(inner) => {
                    for q in inner {
                        match q {
                            IntExpr::Const(c) => acc += c,
                            other => rest.push(other),
                        }
                    }
                }
                other => rest.push(other),
            }
        }
        if !acc.is_zero() {
            rest.push(IntExpr::Const(acc));
        }
        match rest.len() {
            0 => IntExpr::Const(BigInt::zero()),
            1 => rest.pop().unwrap(),
            _ => IntExpr::Add(rest),
        }
    }

    pub fn sub(a: IntExpr, b: IntExpr) -> IntExpr {
        IntExpr::add(vec![a, IntExpr::scale(-BigInt::one(), b)])
    }

    pub fn scale(c: BigInt, e: IntExpr) -> IntExpr {
        if c.is_zero() {
            return IntExpr::Const(BigInt::zero());
        }
        if c.is_one() {
            return e;
        }
        match e {
            IntExpr::Const(v) => IntExpr::Const(c * v),
            IntExpr::Mul(d, inner) => IntExpr::scale(c * d, *inner),
            IntExpr::Add(parts) => {
                IntExpr::add(parts.into_iter().map(|p| IntExpr::scale(c.clone(), p)).collect())
            }
            other => IntExpr::Mul(c, Box::new(other)),
        }
    }

    /// Product of two expressions, at least one of which must fold to a
    /// constant. Every product built by this crate has that shape.
    pub fn mul_linear(a: IntExpr, b: IntExpr) -> IntExpr {
        match (a, b) {
            (IntExpr::Const(c), e) | (e, IntExpr::Const(c)) => IntExpr::scale(c, e),
            (a, b) => panic!("non-linear product {a} * {b}"),
        }
    }

    /// `sum_i a[i] * b[i]`, linear as long as one side of each pair is constant.
    pub fn dot(a: &[IntExpr], b: &[IntExpr]) -> IntExpr {
        debug_assert_eq!(a.len(), b.len());
        IntExpr::add(
            a.iter()
                .zip(b)
                .map(|(x, y)| IntExpr::mul_linear(x.clone(), y.clone()))
                .collect(),
        )
    }

    pub fn ite(c: BoolExpr, a: IntExpr, b: IntExpr) -> IntExpr {
        match c {
            BoolExpr::Const(true) => a,
            BoolExpr::Const(false) => b,
            _ if a == b => a,
            c => IntExpr::Ite(Box::new(c), Box::new(a), Box::new(b)),
        }
    }

    pub fn eval(&self, model: &Model) -> Option<BigInt> {
        Some(match self {
            IntExpr::Const(c) => c.clone(),
            IntExpr::Var(v) => model.int(v)?.clone(),
            IntExpr::Add(ps) => {
                let mut acc = BigInt::zero();
                for p in ps {
                    acc += p.eval(model)?;
                }
                acc
            }
            IntExpr::Mul(c, e) => c * e.eval(model)?,
            IntExpr::Ite(c, a, b) => {
                if c.eval(model)? {
                    a.eval(model)?
                } else {
                    b.eval(model)?
                }
            }
        })
    }
}

impl BoolExpr {
    pub fn var(name: impl Into<String>) -> BoolExpr {
        BoolExpr::Var(name.into())
    }

    pub fn as_const(&self) -> Option<bool> {
        match self {
            BoolExpr::Const(b) => Some(*b),
            _ => None,
        }
    }

    pub fn cmp(op: CmpOp, a: IntExpr, b: IntExpr) -> BoolExpr {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            return BoolExpr::Const(op.holds(x, y));
        }
        BoolExpr::Cmp(op, a, b)
    }

    pub fn le(a: IntExpr, b: IntExpr) -> BoolExpr {
        BoolExpr::cmp(CmpOp::Le, a, b)
    }

    pub fn lt(a: IntExpr, b: IntExpr) -> BoolExpr {
        BoolExpr::cmp(CmpOp::Lt, a, b)
    }

    pub fn ge(a: IntExpr, b: IntExpr) -> BoolExpr {
        BoolExpr::cmp(CmpOp::Ge, a, b)
    }

    pub fn eq(a: IntExpr, b: IntExpr) -> BoolExpr {
        BoolExpr::cmp(CmpOp::Eq, a, b)
    }

    pub fn not(e: BoolExpr) -> BoolExpr {
        match e {
            BoolExpr::Const(b) => BoolExpr::Const(!b),
            BoolExpr::Not(inner) => *inner,
            BoolExpr::Cmp(op, a, b) => BoolExpr::Cmp(op.negated(), a, b),
            other => BoolExpr::Not(Box::new(other)),
        }
    }

    pub fn and(parts: Vec<BoolExpr>) -> BoolExpr {
        let mut flat = Vec::with_capacity(parts.len());
        for p in parts {
            match p {
                BoolExpr::Const(true) => {}
                BoolExpr::Const(false) => return BoolExpr::Const(false),
                BoolExpr::And(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => BoolExpr::Const(true),
            1 => flat.pop().unwrap(),
            _ => BoolExpr::And(flat),
        }
    }

    pub fn or(parts: Vec<BoolExpr>) -> BoolExpr {
        let mut flat = Vec::with_capacity(parts.len());
        for p in parts {
            match p {
                BoolExpr::Const(false) => {}
                BoolExpr::Const(true) => return BoolExpr::Const(true),
                BoolExpr::Or(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => BoolExpr::Const(false),
            1 => flat.pop().unwrap(),
            _ => BoolExpr::Or(flat),
        }
    }

    pub fn implies(a: BoolExpr, b: BoolExpr) -> BoolExpr {
        BoolExpr::or(vec![BoolExpr::not(a), b])
    }

    pub fn iff(a: BoolExpr, b: BoolExpr) -> BoolExpr {
        BoolExpr::and(vec![
            BoolExpr::implies(a.clone(), b.clone()),
            BoolExpr::implies(b, a),
        ])
    }

    pub fn eval(&self, model: &Model) -> Option<bool> {
        Some(match self {
            BoolExpr::Const(b) => *b,
            BoolExpr::Var(v) => model.bool(v)?,
            BoolExpr::Cmp(op, a, b) => op.holds(&a.eval(model)?, &b.eval(model)?),
            BoolExpr::Not(e) => !e.eval(model)?,
            BoolExpr::And(ps) => {
                for p in ps {
                    if !p.eval(model)? {
                        return Some(false);
                    }
                }
                true
            }
            BoolExpr::Or(ps) => {
                for p in ps {
                    if p.eval(model)? {
                        return Some(true);
                    }
                }
                false
            }
        })
    }
}

fn write_int_lit(out: &mut String, c: &BigInt) {
    if c.is_negative() {
        let _ = write!(out, "(- {})", -c);
    } else {
        let _ = write!(out, "{c}");
    }
}

impl IntExpr {
    pub fn write_smt(&self, out: &mut String) {
        match self {
            IntExpr::Const(c) => write_int_lit(out, c),
            IntExpr::Var(v) => out.push_str(v),
            IntExpr::Add(ps) => {
                out.push_str("(+");
                for p in ps {
                    out.push(' ');
                    p.write_smt(out);
                }
                out.push(')');
            }
            IntExpr::Mul(c, e) => {
                out.push_str("(* ");
                write_int_lit(out, c);
                out.push(' ');
                e.write_smt(out);
                out.push(')');
            }
            IntExpr::Ite(c, a, b) => {
                out.push_str("(ite ");
                c.write_smt(out);
                out.push(' ');
                a.write_smt(out);
                out.push(' ');
                b.write_smt(out);
                out.push(')');
            }
        }
    }
}

impl BoolExpr {
    pub fn write_smt(&self, out: &mut String) {
        match self {
            BoolExpr::Const(true) => out.push_str("true"),
            BoolExpr::Const(false) => out.push_str("false"),
            BoolExpr::Var(v) => out.push_str(v),
            BoolExpr::Cmp(CmpOp::Ne, a, b) => {
                out.push_str("(not (= ");
                a.write_smt(out);
                out.push(' ');
                b.write_smt(out);
                out.push_str("))");
            }
            BoolExpr::Cmp(op, a, b) => {
                out.push('(');
                out.push_str(op.symbol());
                out.push(' ');
                a.write_smt(out);
                out.push(' ');
                b.write_smt(out);
                out.push(')');
            }
            BoolExpr::Not(e) => {
                out.push_str("(not ");
                e.write_smt(out);
                out.push(')');
            }
            BoolExpr::And(ps) | BoolExpr::Or(ps) => {
                out.push_str(if matches!(self, BoolExpr::And(_)) { "(and" } else { "(or" });
                for p in ps {
                    out.push(' ');
                    p.write_smt(out);
                }
                out.push(')');
            }
        }
    }
}

impl fmt::Display for IntExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write_smt(&mut s);
        f.write_str(&s)
    }
}

impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write_smt(&mut s);
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sort {
    Int,
    Bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Int(BigInt),
    Bool(bool),
}

/// Satisfying assignment returned by the solver.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Model {
    values: HashMap<String, Value>,
}

impl Model {
    pub fn new() -> Model {
        Model::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, v: Value) {
        self.values.insert(name.into(), v);
    }

    pub fn int(&self, name: &str) -> Option<&BigInt> {
        match self.values.get(name) {
            Some(Value::Int(v)) => Some(v),
            _ => None,
        }
    }

    pub fn bool(&self, name: &str) -> Option<bool> {
        match self.values.get(name) {
            Some(Value::Bool(b)) => Some(*b),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Declarations plus a conjunction of assertions.
#[derive(Debug, Clone, Default)]
pub struct SmtFormula {
    decls: Vec<(String, Sort)>,
    assertions: Vec<BoolExpr>,
    fresh: usize,
}

impl SmtFormula {
    pub fn new() -> SmtFormula {
        SmtFormula::default()
    }

    pub fn declare_int(&mut self, name: impl Into<String>) -> IntExpr {
        let name = name.into();
        self.decls.push((name.clone(), Sort::Int));
        IntExpr::Var(name)
    }

    pub fn declare_bool(&mut self, name: impl Into<String>) -> BoolExpr {
        let name = name.into();
        self.decls.push((name.clone(), Sort::Bool));
        BoolExpr::Var(name)
    }

    /// Names an integer subterm so that it is printed once. Constants and
    /// variables are returned unchanged.
    pub fn define_int(&mut self, hint: &str, e: IntExpr) -> IntExpr {
        if matches!(e, IntExpr::Const(_) | IntExpr::Var(_)) {
            return e;
        }
        let name = format!("_{hint}_{}", self.fresh);
        self.fresh += 1;
        let v = self.declare_int(name);
        self.assert(BoolExpr::eq(v.clone(), e));
        v
    }

    /// Boolean counterpart of [`SmtFormula::define_int`].
    pub fn define_bool(&mut self, hint: &str, e: BoolExpr) -> BoolExpr {
        if matches!(e, BoolExpr::Const(_) | BoolExpr::Var(_)) {
            return e;
        }
        let name = format!("_{hint}_{}", self.fresh);
        self.fresh += 1;
        let v = self.declare_bool(name);
        self.assert(BoolExpr::iff(v.clone(), e));
        v
    }

    pub fn assert(&mut self, e: BoolExpr) {
        match e {
            BoolExpr::Const(true) => {}
            BoolExpr::And(parts) => self.assertions.extend(parts),
            other => self.assertions.push(other),
        }
    }

    pub fn decls(&self) -> &[(String, Sort)] {
        &self.decls
    }

    pub fn assertions(&self) -> &[BoolExpr] {
        &self.assertions
    }

    /// True when some assertion folded to `false`.
    pub fn trivially_unsat(&self) -> bool {
        self.assertions.iter().any(|a| *a == BoolExpr::Const(false))
    }

    /// Re-evaluates every assertion under `model`.
    pub fn holds_under(&self, model: &Model) -> bool {
        self.assertions.iter().all(|a| a.eval(model) == Some(true))
    }

    pub fn to_smtlib(&self) -> String {
        let mut out = String::new();
        out.push_str("(set-option :produce-models true)\n(set-logic QF_LIA)\n");
        for (name, sort) in &self.decls {
            let s = match sort {
                Sort::Int => "Int",
                Sort::Bool => "Bool",
            };
            let _ = writeln!(out, "(declare-const {name} {s})");
        }
        for a in &self.assertions {
            out.push_str("(assert ");
            a.write_smt(&mut out);
            out.push_str(")\n");
        }
        out
    }
}
