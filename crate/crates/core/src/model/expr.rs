//! Integer terms and linear predicates over the state variables of a system.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::smt::{BoolExpr, IntExpr};

/// Index of a declared state variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

/// Comparison operators. `>=`, `>` and `!=` are kept as written so that
/// printed predicates stay close to the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Le,
    Lt,
    Eq,
    Ge,
    Gt,
    Ne,
}

impl CmpOp {
    pub fn holds(self, lhs: &BigInt, rhs: &BigInt) -> bool {
        match self {
            CmpOp::Le => lhs <= rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ne => lhs != rhs,
        }
    }

    pub fn negated(self) -> CmpOp {
        match self {
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ge => CmpOp::Lt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ne => CmpOp::Eq,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
            CmpOp::Eq => "=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Ne => "!=",
        }
    }
}

/// Integer-valued expression over state variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    Const(BigInt),
    Var(VarId),
    Add(Box<Term>, Box<Term>),
    Sub(Box<Term>, Box<Term>),
    Neg(Box<Term>),
    /// Multiplication by a constant factor.
    Scale(BigInt, Box<Term>),
    Ite(Box<Predicate>, Box<Term>, Box<Term>),
}

/// Boolean combination of integer comparisons.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Predicate {
    True,
    False,
    Cmp(CmpOp, Term, Term),
    Not(Box<Predicate>),
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
}

impl Term {
    pub fn constant(v: impl Into<BigInt>) -> Term {
        Term::Const(v.into())
    }

    pub fn var(i: usize) -> Term {
        Term::Var(VarId(i))
    }

    /// Affine form `coeffs . x + constant`, skipping zero coefficients.
    pub fn affine(coeffs: &[BigInt], constant: &BigInt) -> Term {
        let mut acc: Option<Term> = None;
        for (i, c) in coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let atom = if c.is_one() {
                Term::var(i)
            } else {
                Term::Scale(c.clone(), Box::new(Term::var(i)))
            };
            acc = Some(match acc {
                None => atom,
                Some(prev) => Term::Add(Box::new(prev), Box::new(atom)),
            });
        }
        match acc {
            None => Term::Const(constant.clone()),
            Some(t) if constant.is_zero() => t,
            Some(t) => Term::Add(Box::new(t), Box::new(Term::Const(constant.clone()))),
        }
    }

    pub fn eval(&self, state: &[BigInt]) -> BigInt {
        match self {
            Term::Const(c) => c.clone(),
            Term::Var(v) => state[v.0].clone(),
            Term::Add(a, b) => a.eval(state) + b.eval(state),
            Term::Sub(a, b) => a.eval(state) - b.eval(state),
            Term::Neg(a) => -a.eval(state),
            Term::Scale(c, a) => c * a.eval(state),
            Term::Ite(c, a, b) => {
                if c.eval(state) {
                    a.eval(state)
                } else {
                    b.eval(state)
                }
            }
        }
    }

    /// Substitutes SMT expressions for the state variables.
    pub fn to_smt(&self, env: &[IntExpr]) -> IntExpr {
        match self {
            Term::Const(c) => IntExpr::Const(c.clone()),
            Term::Var(v) => env[v.0].clone(),
            Term::Add(a, b) => IntExpr::add(vec![a.to_smt(env), b.to_smt(env)]),
            Term::Sub(a, b) => IntExpr::sub(a.to_smt(env), b.to_smt(env)),
            Term::Neg(a) => IntExpr::scale(-BigInt::one(), a.to_smt(env)),
            Term::Scale(c, a) => IntExpr::scale(c.clone(), a.to_smt(env)),
            Term::Ite(c, a, b) => IntExpr::ite(c.to_smt(env), a.to_smt(env), b.to_smt(env)),
        }
    }

    pub fn max_var(&self) -> Option<usize> {
        match self {
            Term::Const(_) => None,
            Term::Var(v) => Some(v.0),
            Term::Add(a, b) | Term::Sub(a, b) => a.max_var().max(b.max_var()),
            Term::Neg(a) | Term::Scale(_, a) => a.max_var(),
            Term::Ite(c, a, b) => c.max_var().max(a.max_var()).max(b.max_var()),
        }
    }

    pub fn display<'a>(&'a self, names: &'a [String]) -> TermDisplay<'a> {
        TermDisplay { term: self, names }
    }
}

impl Predicate {
    pub fn cmp(op: CmpOp, lhs: Term, rhs: Term) -> Predicate {
        Predicate::Cmp(op, lhs, rhs)
    }

    pub fn and(parts: Vec<Predicate>) -> Predicate {
        let mut flat = Vec::with_capacity(parts.len());
        for p in parts {
            match p {
                Predicate::True => {}
                Predicate::False => return Predicate::False,
                Predicate::And(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Predicate::True,
            1 => flat.pop().unwrap(),
            _ => Predicate::And(flat),
        }
    }

    pub fn or(parts: Vec<Predicate>) -> Predicate {
        let mut flat = Vec::with_capacity(parts.len());
        for p in parts {
            match p {
                Predicate::False => {}
                Predicate::True => return Predicate::True,
                Predicate::Or(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Predicate::False,
            1 => flat.pop().unwrap(),
            _ => Predicate::Or(flat),
        }
    }

    /// Negation that pushes through comparisons and constants.
    pub fn negate(self) -> Predicate {
        match self {
            Predicate::True => Predicate::False,
            Predicate::False => Predicate::True,
            Predicate::Cmp(op, a, b) => Predicate::Cmp(op.negated(), a, b),
            Predicate::Not(p) => *p,
            other => Predicate::Not(Box::new(other)),
        }
    }

    pub fn eval(&self, state: &[BigInt]) -> bool {
        match self {
            Predicate::True => true,
            Predicate::False => false,
            Predicate::Cmp(op, a, b) => op.holds(&a.eval(state), &b.eval(state)),
            Predicate::Not(p) => !p.eval(state),
            Predicate::And(ps) => ps.iter().all(|p| p.eval(state)),
            Predicate::Or(ps) => ps.iter().any(|p| p.eval(state)),
        }
    }

    pub fn to_smt(&self, env: &[IntExpr]) -> BoolExpr {
        match self {
            Predicate::True => BoolExpr::Const(true),
            Predicate::False => BoolExpr::Const(false),
            Predicate::Cmp(op, a, b) => BoolExpr::cmp(*op, a.to_smt(env), b.to_smt(env)),
            Predicate::Not(p) => BoolExpr::not(p.to_smt(env)),
            Predicate::And(ps) => BoolExpr::and(ps.iter().map(|p| p.to_smt(env)).collect()),
            Predicate::Or(ps) => BoolExpr::or(ps.iter().map(|p| p.to_smt(env)).collect()),
        }
    }

    pub fn max_var(&self) -> Option<usize> {
        match self {
            Predicate::True | Predicate::False => None,
            Predicate::Cmp(_, a, b) => a.max_var().max(b.max_var()),
            Predicate::Not(p) => p.max_var(),
            Predicate::And(ps) | Predicate::Or(ps) => ps.iter().filter_map(|p| p.max_var()).max(),
        }
    }

    pub fn display<'a>(&'a self, names: &'a [String]) -> PredicateDisplay<'a> {
        PredicateDisplay { pred: self, names }
    }
}

pub struct TermDisplay<'a> {
    term: &'a Term,
    names: &'a [String],
}

pub struct PredicateDisplay<'a> {
    pred: &'a Predicate,
    names: &'a [String],
}

fn term_prec(t: &Term) -> u8 {
    match t {
        Term::Add(..) | Term::Sub(..) => 1,
        Term::Neg(_) | Term::Scale(..) => 2,
        Term::Const(c) if c.is_negative() => 2,
        Term::Ite(..) => 0,
        _ => 3,
    }
}

fn write_term(f: &mut fmt::Formatter<'_>, t: &Term, names: &[String], min_prec: u8) -> fmt::Result {
    let prec = term_prec(t);
    let paren = prec < min_prec;
    if paren {
        f.write_str("(")?;
    }
    match t {
        Term::Const(c) => write!(f, "{c}")?,
        Term::Var(v) => match names.get(v.0) {
            Some(n) => f.write_str(n)?,
            None => write!(f, "v{}", v.0)?,
        },
        Term::Add(a, b) => {
            write_term(f, a, names, 1)?;
            // Print `a + -3*x` as `a - 3*x`.
            match b.as_ref() {
                Term::Const(c) if c.is_negative() => write!(f, " - {}", -c)?,
                Term::Scale(c, inner) if c.is_negative() => {
                    f.write_str(" - ")?;
                    let abs = -c;
                    if !abs.is_one() {
                        write!(f, "{abs}*")?;
                    }
                    write_term(f, inner, names, 3)?;
                }
                Term::Neg(inner) => {
                    f.write_str(" - ")?;
                    write_term(f, inner, names, 2)?;
                }
                _ => {
                    f.write_str(" + ")?;
                    write_term(f, b, names, 2)?;
                }
            }
        }
        Term::Sub(a, b) => {
            write_term(f, a, names, 1)?;
            f.write_str(" - ")?;
            write_term(f, b, names, 2)?;
        }
        Term::Neg(a) => {
            f.write_str("-")?;
            write_term(f, a, names, 3)?;
        }
        Term::Scale(c, a) => {
            if (-c).is_one() {
                f.write_str("-")?;
            } else {
                write!(f, "{c}*")?;
            }
            write_term(f, a, names, 3)?;
        }
        Term::Ite(c, a, b) => {
            write!(f, "if {} then ", c.display(names))?;
            write_term(f, a, names, 1)?;
            f.write_str(" else ")?;
            write_term(f, b, names, 1)?;
        }
    }
    if paren {
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for TermDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_term(f, self.term, self.names, 0)
    }
}

fn pred_prec(p: &Predicate) -> u8 {
    match p {
        Predicate::Or(_) => 1,
        Predicate::And(_) => 2,
        _ => 3,
    }
}

fn write_pred(f: &mut fmt::Formatter<'_>, p: &Predicate, names: &[String], min_prec: u8) -> fmt::Result {
    let paren = pred_prec(p) < min_prec;
    if paren {
        f.write_str("(")?;
    }
    match p {
        Predicate::True => f.write_str("true")?,
        Predicate::False => f.write_str("false")?,
        Predicate::Cmp(op, a, b) => {
            write_term(f, a, names, 1)?;
            write!(f, " {} ", op.symbol())?;
            write_term(f, b, names, 1)?;
        }
        Predicate::Not(inner) => {
            f.write_str("!")?;
            write_pred(f, inner, names, 4)?;
        }
        Predicate::And(ps) => {
            for (i, q) in ps.iter().enumerate() {
                if i > 0 {
                    f.write_str(" && ")?;
                }
                write_pred(f, q, names, 3)?;
            }
        }
        Predicate::Or(ps) => {
            for (i, q) in ps.iter().enumerate() {
                if i > 0 {
                    f.write_str(" || ")?;
                }
                write_pred(f, q, names, 2)?;
            }
        }
    }
    if paren {
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for PredicateDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_pred(f, self.pred, self.names, 0)
    }
}
