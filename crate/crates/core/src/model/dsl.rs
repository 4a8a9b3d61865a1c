//! Parser for the `.bsys` system description language.
//!
//! ```text
//! system nested_loop;
//! vars x:int, y:int;
//! branching 2;
//! init true;
//! label xle0 := x <= 0;
//! label xgt0 := x > 0;
//! branch 1: x := if (x > 0 && 2*x <= y) then x - y else x,
//!           y := if (x > 0 && 2*x > y) then y - x else y;
//! branch 2: y := if (x > 0) then y - x else y;
//! ```
//!
//! Assignments within a branch are simultaneous; unmentioned variables keep
//! their value. When fewer than `branching` branches are given, the last one
//! is repeated.

use num_bigint::BigInt;
use thiserror::Error;

use super::expr::{CmpOp, Predicate, Term, VarId};
use super::lexer::{tokenize, Cursor, Pos, Tok};
use super::system::{DefinitionError, SymbolicSystem};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DslError {
    #[error("{pos}: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("{pos}: unknown variable `{name}`")]
    UnknownVariable { pos: Pos, name: String },
    #[error("{pos}: non-linear product; one factor must be constant")]
    NonLinear { pos: Pos },
    #[error(
        "{pos}: unbounded branching: `*` assigns a value from an infinite domain, \
         only bounded non-determinism via `branch` alternatives is supported"
    )]
    UnboundedBranching { pos: Pos },
    #[error("invalid system: {0}")]
    Definition(#[from] DefinitionError),
}

/// Parses a system description.
pub fn parse_system(src: &str) -> Result<SymbolicSystem, DslError> {
    let toks = tokenize(src).map_err(|(pos, msg)| DslError::Syntax { pos, msg })?;
    let mut p = Parser { cur: Cursor::new(toks, src), vars: Vec::new() };
    p.system()
}

/// Parses a standalone predicate over the given variable names.
pub fn parse_predicate(src: &str, vars: &[String]) -> Result<Predicate, DslError> {
    let toks = tokenize(src).map_err(|(pos, msg)| DslError::Syntax { pos, msg })?;
    let mut p = Parser { cur: Cursor::new(toks, src), vars: vars.to_vec() };
    let pred = p.predicate()?;
    if !p.cur.at_end() {
        return Err(p.unexpected("end of predicate"));
    }
    Ok(pred)
}

struct Parser {
    cur: Cursor,
    vars: Vec<String>,
}

const KEYWORDS: &[&str] = &[
    "system", "vars", "branching", "init", "label", "branch", "if", "then", "else", "true",
    "false", "int", "skip",
];

impl Parser {
    fn unexpected(&self, wanted: &str) -> DslError {
        DslError::Syntax {
            pos: self.cur.pos(),
            msg: format!("expected {wanted}, found {}", self.cur.describe_next()),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), DslError> {
        if self.cur.eat(&tok) {
            Ok(())
        } else {
            Err(self.unexpected(&tok.to_string()))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), DslError> {
        if self.cur.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn ident(&mut self) -> Result<String, DslError> {
        match self.cur.peek() {
            Some(Tok::Ident(s)) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.cur.next();
                Ok(s)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn int_literal(&mut self) -> Result<BigInt, DslError> {
        match self.cur.next() {
            Some(Tok::Int(i)) => Ok(i),
            _ => Err(self.unexpected("integer literal")),
        }
    }

    fn system(&mut self) -> Result<SymbolicSystem, DslError> {
        self.expect_keyword("system")?;
        let name = self.ident()?;
        self.expect(Tok::Semi)?;

        self.expect_keyword("vars")?;
        loop {
            let pos = self.cur.pos();
            let v = self.ident()?;
            if self.vars.contains(&v) {
                return Err(DslError::Syntax { pos, msg: format!("variable `{v}` declared twice") });
            }
            self.expect(Tok::Colon)?;
            self.expect_keyword("int")?;
            self.vars.push(v);
            if !self.cur.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::Semi)?;

        self.expect_keyword("branching")?;
        let k_pos = self.cur.pos();
        let k = self.int_literal()?;
        let k: usize = usize::try_from(&k)
            .ok()
            .filter(|&k| k > 0)
            .ok_or(DslError::Syntax { pos: k_pos, msg: "branching bound must be a positive integer".into() })?;
        self.expect(Tok::Semi)?;

        let mut init = Predicate::True;
        let mut labels = Vec::new();
        let mut branches: Vec<Vec<Term>> = Vec::new();
        while !self.cur.at_end() {
            if self.cur.eat_keyword("init") {
                init = self.predicate()?;
                self.expect(Tok::Semi)?;
            } else if self.cur.eat_keyword("label") {
                let name = self.ident()?;
                self.expect(Tok::Assign)?;
                let p = self.predicate()?;
                self.expect(Tok::Semi)?;
                labels.push((name, p));
            } else if self.cur.is_keyword("branch") {
                let pos = self.cur.pos();
                self.cur.next();
                let idx = self.int_literal()?;
                if idx != BigInt::from(branches.len() + 1) {
                    return Err(DslError::Syntax {
                        pos,
                        msg: format!("expected branch {}, found branch {idx}", branches.len() + 1),
                    });
                }
                if branches.len() == k {
                    return Err(DslError::Syntax {
                        pos,
                        msg: format!("more than {k} branches declared"),
                    });
                }
                self.expect(Tok::Colon)?;
                branches.push(self.assignments()?);
                self.expect(Tok::Semi)?;
            } else {
                return Err(self.unexpected("`init`, `label` or `branch`"));
            }
        }
        if branches.is_empty() {
            branches.push((0..self.vars.len()).map(Term::var).collect());
        }
        while branches.len() < k {
            branches.push(branches.last().unwrap().clone());
        }
        Ok(SymbolicSystem::new(name, self.vars.clone(), branches, init, labels)?)
    }

    fn assignments(&mut self) -> Result<Vec<Term>, DslError> {
        let mut update: Vec<Term> = (0..self.vars.len()).map(Term::var).collect();
        if self.cur.eat_keyword("skip") {
            return Ok(update);
        }
        let mut assigned = vec![false; self.vars.len()];
        loop {
            let pos = self.cur.pos();
            let v = self.ident()?;
            let idx = self.var_index(&v, pos)?;
            if assigned[idx] {
                return Err(DslError::Syntax { pos, msg: format!("`{v}` assigned twice in one branch") });
            }
            assigned[idx] = true;
            self.expect(Tok::Assign)?;
            update[idx] = self.term()?;
            if !self.cur.eat(&Tok::Comma) {
                break;
            }
        }
        Ok(update)
    }

    fn var_index(&self, name: &str, pos: Pos) -> Result<usize, DslError> {
        self.vars
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| DslError::UnknownVariable { pos, name: name.to_string() })
    }

    fn term(&mut self) -> Result<Term, DslError> {
        if self.cur.eat_keyword("if") {
            let c = self.predicate()?;
            self.expect_keyword("then")?;
            let a = self.term()?;
            self.expect_keyword("else")?;
            let b = self.term()?;
            return Ok(Term::Ite(Box::new(c), Box::new(a), Box::new(b)));
        }
        let mut acc = self.product()?;
        loop {
            if self.cur.eat(&Tok::Plus) {
                acc = Term::Add(Box::new(acc), Box::new(self.product()?));
            } else if self.cur.eat(&Tok::Minus) {
                acc = Term::Sub(Box::new(acc), Box::new(self.product()?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn product(&mut self) -> Result<Term, DslError> {
        let mut acc = self.unary()?;
        while self.cur.peek() == Some(&Tok::Star) {
            let pos = self.cur.pos();
            self.cur.next();
            let rhs = self.unary()?;
            acc = match (constant_value(&acc), constant_value(&rhs)) {
                (Some(c), _) => Term::Scale(c, Box::new(rhs)),
                (None, Some(c)) => Term::Scale(c, Box::new(acc)),
                (None, None) => return Err(DslError::NonLinear { pos }),
            };
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Term, DslError> {
        if self.cur.eat(&Tok::Minus) {
            return Ok(match self.unary()? {
                Term::Const(c) => Term::Const(-c),
                t => Term::Neg(Box::new(t)),
            });
        }
        let pos = self.cur.pos();
        match self.cur.peek().cloned() {
            Some(Tok::Int(i)) => {
                self.cur.next();
                Ok(Term::Const(i))
            }
            Some(Tok::Star) => Err(DslError::UnboundedBranching { pos }),
            Some(Tok::LParen) => {
                self.cur.next();
                let t = self.term()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            Some(Tok::Ident(ref kw)) if kw == "if" => self.term(),
            Some(Tok::Ident(_)) => {
                let name = self.ident()?;
                Ok(Term::Var(VarId(self.var_index(&name, pos)?)))
            }
            _ => Err(self.unexpected("term")),
        }
    }

    fn predicate(&mut self) -> Result<Predicate, DslError> {
        let lhs = self.disjunction()?;
        if self.cur.eat(&Tok::Arrow) {
            let rhs = self.predicate()?;
            return Ok(Predicate::or(vec![lhs.negate(), rhs]));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Predicate, DslError> {
        let mut parts = vec![self.conjunction()?];
        while self.cur.eat(&Tok::OrOr) {
            parts.push(self.conjunction()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Predicate::Or(parts) })
    }

    fn conjunction(&mut self) -> Result<Predicate, DslError> {
        let mut parts = vec![self.negation()?];
        while self.cur.eat(&Tok::AndAnd) {
            parts.push(self.negation()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Predicate::And(parts) })
    }

    fn negation(&mut self) -> Result<Predicate, DslError> {
        if self.cur.eat(&Tok::Bang) {
            return Ok(Predicate::Not(Box::new(self.negation()?)));
        }
        if self.cur.eat_keyword("true") {
            return Ok(Predicate::True);
        }
        if self.cur.eat_keyword("false") {
            return Ok(Predicate::False);
        }
        if self.cur.peek() == Some(&Tok::LParen) {
            // `(` opens either a nested predicate or a parenthesised term.
            let save = self.cur_state();
            self.cur.next();
            if let Ok(p) = self.predicate() {
                if self.cur.eat(&Tok::RParen) && !self.continues_term() {
                    return Ok(p);
                }
            }
            self.restore(save);
        }
        self.comparison()
    }

    fn continues_term(&self) -> bool {
        matches!(
            self.cur.peek(),
            Some(Tok::Plus | Tok::Minus | Tok::Star | Tok::Le | Tok::Lt | Tok::Ge | Tok::Gt | Tok::Eq | Tok::Ne)
        )
    }

    fn comparison(&mut self) -> Result<Predicate, DslError> {
        let lhs = self.term()?;
        let op = match self.cur.peek() {
            Some(Tok::Le) => CmpOp::Le,
            Some(Tok::Lt) => CmpOp::Lt,
            Some(Tok::Ge) => CmpOp::Ge,
            Some(Tok::Gt) => CmpOp::Gt,
            Some(Tok::Eq) => CmpOp::Eq,
            Some(Tok::Ne) => CmpOp::Ne,
            _ => return Err(self.unexpected("comparison operator")),
        };
        self.cur.next();
        let rhs = self.term()?;
        Ok(Predicate::Cmp(op, lhs, rhs))
    }

    fn cur_state(&self) -> usize {
        self.cur.offset()
    }

    fn restore(&mut self, at: usize) {
        self.cur.seek(at);
    }
}

fn constant_value(t: &Term) -> Option<BigInt> {
    match t {
        Term::Const(c) => Some(c.clone()),
        Term::Neg(a) => constant_value(a).map(|c| -c),
        Term::Add(a, b) => Some(constant_value(a)? + constant_value(b)?),
        Term::Sub(a, b) => Some(constant_value(a)? - constant_value(b)?),
        Term::Scale(c, a) => Some(c * constant_value(a)?),
        Term::Var(_) | Term::Ite(..) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::system::state;

    pub(crate) const NESTED_LOOP: &str = "
        system nested_loop;
        vars x:int, y:int;
        branching 2;
        init true;
        label xle0 := x <= 0;
        label xgt0 := x > 0;
        branch 1: x := if (x > 0 && 2*x <= y) then x - y else x,
                  y := if (x > 0 && 2*x > y) then y - x else y;
        branch 2: y := if (x > 0) then y - x else y;
    ";

    #[test]
    fn parses_running_example() {
        let sys = parse_system(NESTED_LOOP).unwrap();
        assert_eq!(sys.dim(), 2);
        assert_eq!(sys.branching(), 2);
        assert_eq!(sys.label_names(), vec!["xle0", "xgt0"]);
        assert_eq!(sys.successors(&state(&[3, 8])), vec![state(&[-5, 8]), state(&[3, 5])]);
        assert_eq!(sys.successors(&state(&[0, 5])), vec![state(&[0, 5]), state(&[0, 5])]);
        assert_eq!(sys.successors(&state(&[2, 1])), vec![state(&[2, -1]), state(&[2, -1])]);
    }

    #[test]
    fn missing_branches_repeat_the_last() {
        let sys = parse_system("system s; vars x:int; branching 3; branch 1: x := x + 1;").unwrap();
        assert_eq!(sys.branching(), 3);
        assert_eq!(sys.successors(&state(&[4])), vec![state(&[5]); 3]);
    }

    #[test]
    fn unknown_variable_is_reported_with_position() {
        let err = parse_system("system s; vars x:int; branching 1;\nbranch 1: x := z;").unwrap_err();
        assert_eq!(
            err,
            DslError::UnknownVariable { pos: Pos { line: 2, col: 16 }, name: "z".into() }
        );
    }

    #[test]
    fn havoc_is_rejected_as_unbounded_branching() {
        let err = parse_system("system s; vars x:int; branching 1; branch 1: x := *;").unwrap_err();
        assert!(matches!(err, DslError::UnboundedBranching { .. }), "{err}");
    }

    #[test]
    fn nonlinear_products_are_rejected() {
        let err = parse_system("system s; vars x:int, y:int; branching 1; branch 1: x := x*y;").unwrap_err();
        assert!(matches!(err, DslError::NonLinear { .. }));
        // constant factors on either side are fine
        let sys = parse_system("system s; vars x:int; branching 1; branch 1: x := (1+2)*x - x*2;").unwrap();
        assert_eq!(sys.successors(&state(&[5])), vec![state(&[5])]);
    }

    #[test]
    fn parenthesised_terms_in_comparisons() {
        let vars = vec!["x".to_string(), "y".to_string()];
        let p = parse_predicate("(x + 1) <= y && (x > 0 || !(y = 2))", &vars).unwrap();
        assert!(p.eval(&state(&[1, 2])));
        assert!(!p.eval(&state(&[2, 2])));
        assert!(p.eval(&state(&[-1, 0])));
    }

    #[test]
    fn predicate_roundtrips_through_display() {
        let vars = vec!["x".to_string(), "y".to_string()];
        let src = "x > 0 && 2*x - y <= 0 || !(y = 3) -> x != 1";
        let p = parse_predicate(src, &vars).unwrap();
        let printed = p.display(&vars).to_string();
        let q = parse_predicate(&printed, &vars).unwrap();
        for x in -3..4 {
            for y in -3..4 {
                let s = state(&[x, y]);
                assert_eq!(p.eval(&s), q.eval(&s), "{printed}");
            }
        }
    }

    #[test]
    fn empty_label_set_is_allowed() {
        let sys = parse_system("system s; vars x:int; branching 1;").unwrap();
        assert!(sys.labels_of(&state(&[0])).is_empty());
    }
}
