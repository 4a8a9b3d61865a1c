//! Branching-time properties without the next-time operator.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::model::lexer::{tokenize, Cursor, Pos, Tok};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StateFormula {
    True,
    Atom(String),
    Not(Box<StateFormula>),
    And(Box<StateFormula>, Box<StateFormula>),
    Exists(Box<PathFormula>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PathFormula {
    State(Box<StateFormula>),
    Not(Box<PathFormula>),
    And(Box<PathFormula>, Box<PathFormula>),
    Until(Box<PathFormula>, Box<PathFormula>),
}

impl StateFormula {
    pub fn atom(p: impl Into<String>) -> StateFormula {
        StateFormula::Atom(p.into())
    }

    pub fn not(self) -> StateFormula {
        match self {
            StateFormula::Not(inner) => *inner,
            other => StateFormula::Not(Box::new(other)),
        }
    }

    pub fn and(self, other: StateFormula) -> StateFormula {
        StateFormula::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: StateFormula) -> StateFormula {
        self.not().and(other.not()).not()
    }

    pub fn implies(self, other: StateFormula) -> StateFormula {
        self.and(other.not()).not()
    }

    pub fn exists(path: PathFormula) -> StateFormula {
        StateFormula::Exists(Box::new(path))
    }

    /// `A psi` as `!E !psi`.
    pub fn forall(path: PathFormula) -> StateFormula {
        StateFormula::exists(path.not()).not()
    }

    pub fn atoms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<String>) {
        match self {
            StateFormula::True => {}
            StateFormula::Atom(p) => {
                out.insert(p.clone());
            }
            StateFormula::Not(a) => a.collect_atoms(out),
            StateFormula::And(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
            StateFormula::Exists(p) => p.collect_atoms(out),
        }
    }
}

impl PathFormula {
    pub fn state(s: StateFormula) -> PathFormula {
        PathFormula::State(Box::new(s))
    }

    pub fn not(self) -> PathFormula {
        match self {
            PathFormula::Not(inner) => *inner,
            PathFormula::State(s) => PathFormula::state(s.not()),
            other => PathFormula::Not(Box::new(other)),
        }
    }

    pub fn and(self, other: PathFormula) -> PathFormula {
        match (self, other) {
            (PathFormula::State(a), PathFormula::State(b)) => PathFormula::state(a.and(*b)),
            (a, b) => PathFormula::And(Box::new(a), Box::new(b)),
        }
    }

    pub fn or(self, other: PathFormula) -> PathFormula {
        self.not().and(other.not()).not()
    }

    pub fn until(self, other: PathFormula) -> PathFormula {
        PathFormula::Until(Box::new(self), Box::new(other))
    }

    /// `F psi` as `true U psi`.
    pub fn eventually(self) -> PathFormula {
        PathFormula::state(StateFormula::True).until(self)
    }

    /// `G psi` as `!F !psi`.
    pub fn always(self) -> PathFormula {
        self.not().eventually().not()
    }

    fn collect_atoms(&self, out: &mut BTreeSet<String>) {
        match self {
            PathFormula::State(s) => s.collect_atoms(out),
            PathFormula::Not(a) => a.collect_atoms(out),
            PathFormula::And(a, b) | PathFormula::Until(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }
}

impl fmt::Display for StateFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateFormula::True => write!(f, "true"),
            StateFormula::Atom(p) => write!(f, "{p}"),
            StateFormula::Not(a) => write!(f, "!({a})"),
            StateFormula::And(a, b) => write!(f, "({a} && {b})"),
            StateFormula::Exists(p) => write!(f, "E ({p})"),
        }
    }
}

impl fmt::Display for PathFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathFormula::State(s) => write!(f, "{s}"),
            PathFormula::Not(a) => write!(f, "!({a})"),
            PathFormula::And(a, b) => write!(f, "({a} && {b})"),
            PathFormula::Until(a, b) => write!(f, "({a} U {b})"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PropertyError {
    #[error("{pos}: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("{pos}: the next-time operator `X` is not supported")]
    NextTime { pos: Pos },
    #[error("{pos}: temporal operator `{op}` must appear under a path quantifier `E` or `A`")]
    Unquantified { pos: Pos, op: &'static str },
    #[error("unknown atomic proposition `{0}`")]
    UnknownAtom(String),
}

const KEYWORDS: [&str; 8] = ["E", "A", "F", "G", "U", "X", "true", "false"];

/// Surface syntax before the state/path split.
#[derive(Debug, Clone)]
enum Surf {
    True,
    False,
    Atom(String),
    Not(Box<Surf>),
    And(Box<Surf>, Box<Surf>),
    Or(Box<Surf>, Box<Surf>),
    Implies(Box<Surf>, Box<Surf>),
    E(Box<Surf>),
    A(Box<Surf>),
    F(Pos, Box<Surf>),
    G(Pos, Box<Surf>),
    U(Pos, Box<Surf>, Box<Surf>),
}

struct Parser {
    cur: Cursor,
}

impl Parser {
    fn err(&self, msg: impl Into<String>) -> PropertyError {
        PropertyError::Syntax { pos: self.cur.pos(), msg: msg.into() }
    }

    fn implication(&mut self) -> Result<Surf, PropertyError> {
        let lhs = self.disjunction()?;
        if self.cur.eat(&Tok::Arrow) {
            let rhs = self.implication()?;
            return Ok(Surf::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Surf, PropertyError> {
        let mut lhs = self.conjunction()?;
        while self.cur.eat(&Tok::OrOr) {
            let rhs = self.conjunction()?;
            lhs = Surf::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Surf, PropertyError> {
        let mut lhs = self.until()?;
        while self.cur.eat(&Tok::AndAnd) {
            let rhs = self.until()?;
            lhs = Surf::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Surf, PropertyError> {
        let lhs = self.unary()?;
        if self.cur.is_keyword("U") {
            let pos = self.cur.pos();
            self.cur.next();
            let rhs = self.until()?;
            return Ok(Surf::U(pos, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Surf, PropertyError> {
        let pos = self.cur.pos();
        if self.cur.eat(&Tok::Bang) {
            return Ok(Surf::Not(Box::new(self.unary()?)));
        }
        match self.cur.peek() {
            Some(Tok::Ident(k)) => match k.as_str() {
                "E" => {
                    self.cur.next();
                    Ok(Surf::E(Box::new(self.unary()?)))
                }
                "A" => {
                    self.cur.next();
                    Ok(Surf::A(Box::new(self.unary()?)))
                }
                "F" => {
                    self.cur.next();
                    Ok(Surf::F(pos, Box::new(self.unary()?)))
                }
                "G" => {
                    self.cur.next();
                    Ok(Surf::G(pos, Box::new(self.unary()?)))
                }
                "X" => Err(PropertyError::NextTime { pos }),
                "U" => Err(self.err("expected a formula, found `U`")),
                "true" => {
                    self.cur.next();
                    Ok(Surf::True)
                }
                "false" => {
                    self.cur.next();
                    Ok(Surf::False)
                }
                _ => {
                    let Some(Tok::Ident(name)) = self.cur.next() else { unreachable!() };
                    Ok(Surf::Atom(name))
                }
            },
            Some(Tok::LParen) => {
                self.cur.next();
                let inner = self.implication()?;
                if !self.cur.eat(&Tok::RParen) {
                    return Err(self.err(format!("expected `)`, found {}", self.cur.describe_next())));
                }
                Ok(inner)
            }
            _ => Err(self.err(format!("expected a formula, found {}", self.cur.describe_next()))),
        }
    }
}

fn to_state(s: &Surf) -> Result<StateFormula, PropertyError> {
    Ok(match s {
        Surf::True => StateFormula::True,
        Surf::False => StateFormula::True.not(),
        Surf::Atom(p) => StateFormula::atom(p.clone()),
        Surf::Not(a) => to_state(a)?.not(),
        Surf::And(a, b) => to_state(a)?.and(to_state(b)?),
        Surf::Or(a, b) => to_state(a)?.or(to_state(b)?),
        Surf::Implies(a, b) => to_state(a)?.implies(to_state(b)?),
        Surf::E(p) => StateFormula::exists(to_path(p)?),
        Surf::A(p) => StateFormula::forall(to_path(p)?),
        Surf::F(pos, _) => return Err(PropertyError::Unquantified { pos: *pos, op: "F" }),
        Surf::G(pos, _) => return Err(PropertyError::Unquantified { pos: *pos, op: "G" }),
        Surf::U(pos, _, _) => return Err(PropertyError::Unquantified { pos: *pos, op: "U" }),
    })
}

fn to_path(s: &Surf) -> Result<PathFormula, PropertyError> {
    Ok(match s {
        Surf::True | Surf::False | Surf::Atom(_) | Surf::E(_) | Surf::A(_) => PathFormula::state(to_state(s)?),
        Surf::Not(a) => to_path(a)?.not(),
        Surf::And(a, b) => to_path(a)?.and(to_path(b)?),
        Surf::Or(a, b) => to_path(a)?.or(to_path(b)?),
        Surf::Implies(a, b) => to_path(a)?.not().or(to_path(b)?),
        Surf::F(_, a) => to_path(a)?.eventually(),
        Surf::G(_, a) => to_path(a)?.always(),
        Surf::U(_, a, b) => to_path(a)?.until(to_path(b)?),
    })
}

/// Parses a state formula. `E`, `A`, `F`, `G` and `!` are prefix operators
/// applying to the following operand; `U` binds tighter than `&&`, which
/// binds tighter than `||` and `->`.
pub fn parse_property(text: &str) -> Result<StateFormula, PropertyError> {
    let toks = tokenize(text).map_err(|(pos, msg)| PropertyError::Syntax { pos, msg })?;
    let mut p = Parser { cur: Cursor::new(toks, text) };
    let surf = p.implication()?;
    if !p.cur.at_end() {
        return Err(p.err(format!("unexpected {}", p.cur.describe_next())));
    }
    to_state(&surf)
}

/// Parses and checks that every atom is in `alphabet`.
pub fn parse_property_for(text: &str, alphabet: &BTreeSet<String>) -> Result<StateFormula, PropertyError> {
    let f = parse_property(text)?;
    validate_atoms(&f, alphabet)?;
    Ok(f)
}

pub fn validate_atoms(f: &StateFormula, alphabet: &BTreeSet<String>) -> Result<(), PropertyError> {
    match f.atoms().into_iter().find(|a| !alphabet.contains(a)) {
        Some(a) => Err(PropertyError::UnknownAtom(a)),
        None => Ok(()),
    }
}

/// Whether `name` can be used as an atom in the property syntax.
pub fn is_atom_name(name: &str) -> bool {
    !KEYWORDS.contains(&name)
        && name.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '\'')
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> PathFormula {
        PathFormula::state(StateFormula::atom(s))
    }

    #[test]
    fn running_property() {
        let f = parse_property("E F G (xle0) && E G (xgt0)").unwrap();
        let expect = StateFormula::exists(p("xle0").always().eventually())
            .and(StateFormula::exists(p("xgt0").always()));
        assert_eq!(f, expect);
    }

    #[test]
    fn trivial() {
        assert_eq!(parse_property("true").unwrap(), StateFormula::True);
    }

    #[test]
    fn universal_until_expands() {
        let f = parse_property("A (p U q)").unwrap();
        assert_eq!(f, StateFormula::exists(p("p").until(p("q")).not()).not());
    }

    #[test]
    fn next_time_is_rejected() {
        let err = parse_property("E X p").unwrap_err();
        assert_eq!(err, PropertyError::NextTime { pos: Pos { line: 1, col: 3 } });
    }

    #[test]
    fn unquantified_temporal_operator() {
        assert!(matches!(parse_property("F p"), Err(PropertyError::Unquantified { op: "F", .. })));
        assert!(matches!(parse_property("p U q"), Err(PropertyError::Unquantified { op: "U", .. })));
    }

    #[test]
    fn syntax_errors_have_positions() {
        match parse_property("E (p U") {
            Err(PropertyError::Syntax { pos, .. }) => assert_eq!(pos.col, 7),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_property("p q").is_err());
    }

    #[test]
    fn atoms_are_validated() {
        let alphabet: BTreeSet<String> = ["p".to_string()].into();
        assert_eq!(parse_property_for("E F q", &alphabet), Err(PropertyError::UnknownAtom("q".into())));
        assert!(parse_property_for("E F p", &alphabet).is_ok());
    }

    #[test]
    fn precedence() {
        let f = parse_property("E (p U q && r)").unwrap();
        assert_eq!(f, StateFormula::exists(p("p").until(p("q")).and(p("r"))));
        let g = parse_property("a -> b -> c").unwrap();
        let (a, b, c) = (StateFormula::atom("a"), StateFormula::atom("b"), StateFormula::atom("c"));
        assert_eq!(g, a.implies(b.implies(c)));
    }
}
