//! Model checking on finite graphs and transfer of verdicts to the
//! concrete system.

mod formula;

use std::collections::{BTreeSet, HashMap};

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use thiserror::Error;

pub use formula::{
    is_atom_name, parse_property, parse_property_for, validate_atoms, PathFormula, PropertyError,
    StateFormula,
};

use crate::model::{Predicate, SymbolicSystem};
use crate::oracle::ExplicitSystem;
use crate::quotient::Quotient;
use crate::templates::{ClassId, ClassifierTemplate, ParamAssignment};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckError {
    #[error("unknown atomic proposition `{0}`")]
    UnknownAtom(String),
    #[error("state {0} has no successor")]
    Deadlock(String),
}

/// Finite total graph with labelled states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Kripke {
    names: Vec<String>,
    succ: Vec<Vec<usize>>,
    labels: Vec<BTreeSet<String>>,
    alphabet: BTreeSet<String>,
}

impl Kripke {
    /// `alphabet` lists the atoms that may appear in properties; atoms
    /// carried by states are added to it.
    pub fn new(
        names: Vec<String>,
        succ: Vec<Vec<usize>>,
        labels: Vec<BTreeSet<String>>,
        alphabet: impl IntoIterator<Item = String>,
    ) -> Result<Kripke, CheckError> {
        if let Some(i) = succ.iter().position(Vec::is_empty) {
            return Err(CheckError::Deadlock(names[i].clone()));
        }
        let mut alphabet: BTreeSet<String> = alphabet.into_iter().collect();
        alphabet.extend(labels.iter().flatten().cloned());
        Ok(Kripke { names, succ, labels, alphabet })
    }

    /// Graph over the quotient classes, in class order.
    pub fn from_quotient(q: &Quotient, alphabet: impl IntoIterator<Item = String>) -> Result<Kripke, CheckError> {
        let index: HashMap<usize, usize> = q.classes.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
        let mut succ = vec![Vec::new(); q.classes.len()];
        for &(a, b) in &q.edges {
            succ[index[&a]].push(index[&b]);
        }
        Kripke::new(
            q.classes.iter().map(|c| c.name.clone()).collect(),
            succ,
            q.classes.iter().map(|c| c.labels.clone()).collect(),
            alphabet,
        )
    }

    pub fn from_explicit(es: &ExplicitSystem, alphabet: impl IntoIterator<Item = String>) -> Kripke {
        let n = es.len();
        Kripke::new(
            es.names().to_vec(),
            (0..n)
                .map(|i| {
                    let mut s = es.successors(i).to_vec();
                    s.sort_unstable();
                    s.dedup();
                    s
                })
                .collect(),
            (0..n).map(|i| es.labels(i).clone()).collect(),
            alphabet,
        )
        .expect("explicit systems are total")
    }

    pub fn len(&self) -> usize {
        self.succ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succ.is_empty()
    }

    pub fn successors(&self, i: usize) -> &[usize] {
        &self.succ[i]
    }

    pub fn labels(&self, i: usize) -> &BTreeSet<String> {
        &self.labels[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// States satisfying `f`.
    pub fn sat(&self, f: &StateFormula) -> Result<Vec<bool>, CheckError> {
        if let Some(a) = f.atoms().into_iter().find(|a| !self.alphabet.contains(a)) {
            return Err(CheckError::UnknownAtom(a));
        }
        Ok(self.eval(f))
    }

    fn eval(&self, f: &StateFormula) -> Vec<bool> {
        let n = self.len();
        match f {
            StateFormula::True => vec![true; n],
            StateFormula::Atom(p) => self.labels.iter().map(|l| l.contains(p)).collect(),
            StateFormula::Not(a) => self.eval(a).into_iter().map(|b| !b).collect(),
            StateFormula::And(a, b) => {
                let (x, y) = (self.eval(a), self.eval(b));
                x.into_iter().zip(y).map(|(a, b)| a && b).collect()
            }
            StateFormula::Exists(p) => self.exists(p),
        }
    }

    fn exists(&self, path: &PathFormula) -> Vec<bool> {
        match path {
            PathFormula::State(s) => self.eval(s),
            PathFormula::Until(a, b) => match (&**a, &**b) {
                (PathFormula::State(a), PathFormula::State(b)) => self.exists_until(&self.eval(a), &self.eval(b)),
                _ => self.exists_general(path),
            },
            PathFormula::Not(inner) => match &**inner {
                PathFormula::Until(a, b) if **a == PathFormula::state(StateFormula::True) => match &**b {
                    PathFormula::State(b) => {
                        let keep: Vec<bool> = self.eval(b).into_iter().map(|x| !x).collect();
                        self.exists_always(&keep)
                    }
                    _ => self.exists_general(path),
                },
                _ => self.exists_general(path),
            },
            PathFormula::And(..) => self.exists_general(path),
        }
    }

    /// Least fixpoint `Z = b | (a & EX Z)`.
    pub fn exists_until(&self, a: &[bool], b: &[bool]) -> Vec<bool> {
        let mut z = b.to_vec();
        let mut changed = true;
        while changed {
            changed = false;
            for s in 0..self.len() {
                if !z[s] && a[s] && self.succ[s].iter().any(|&t| z[t]) {
                    z[s] = true;
                    changed = true;
                }
            }
        }
        z
    }

    /// Greatest fixpoint `Z = a & EX Z`.
    pub fn exists_always(&self, a: &[bool]) -> Vec<bool> {
        let mut z = a.to_vec();
        let mut changed = true;
        while changed {
            changed = false;
            for s in 0..self.len() {
                if z[s] && !self.succ[s].iter().any(|&t| z[t]) {
                    z[s] = false;
                    changed = true;
                }
            }
        }
        z
    }

    /// `E psi` for an arbitrary path formula: product with the
    /// elementary-set tableau of `psi` and search for a reachable fair cycle.
    fn exists_general(&self, path: &PathFormula) -> Vec<bool> {
        let mut t = Tableau::default();
        let root = t.intern(self, path);
        let n = self.len();
        let u = t.untils.len();
        assert!(u < 24, "too many until subformulas for the tableau");

        // Elementary sets per state: truth of every Until subformula.
        let mut nodes: Vec<(usize, u64)> = Vec::new();
        for q in 0..n {
            for mask in 0..(1u64 << u) {
                if t.consistent(q, mask) {
                    nodes.push((q, mask));
                }
            }
        }
        let mut g = DiGraph::<(), ()>::with_capacity(nodes.len(), 0);
        let idx: Vec<NodeIndex> = nodes.iter().map(|_| g.add_node(())).collect();
        let mut by_state: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, &(q, _)) in nodes.iter().enumerate() {
            by_state[q].push(i);
        }
        for (i, &(q, mask)) in nodes.iter().enumerate() {
            for &q2 in &self.succ[q] {
                for &j in &by_state[q2] {
                    if t.step(q, mask, nodes[j].1) {
                        g.add_edge(idx[i], idx[j], ());
                    }
                }
            }
        }
        // Fair SCCs: nontrivial and meeting every fulfilment set.
        let mut good = vec![false; nodes.len()];
        for scc in tarjan_scc(&g) {
            let nontrivial = scc.len() > 1 || g.contains_edge(scc[0], scc[0]);
            if !nontrivial {
                continue;
            }
            let fair = (0..u).all(|k| {
                scc.iter().any(|v| {
                    let (q, mask) = nodes[v.index()];
                    t.fulfils(q, mask, k)
                })
            });
            if fair {
                for v in scc {
                    good[v.index()] = true;
                }
            }
        }
        // Backward closure.
        let mut stack: Vec<usize> = (0..nodes.len()).filter(|&i| good[i]).collect();
        while let Some(v) = stack.pop() {
            for w in g.neighbors_directed(idx[v], petgraph::Direction::Incoming) {
                if !good[w.index()] {
                    good[w.index()] = true;
                    stack.push(w.index());
                }
            }
        }
        let mut out = vec![false; n];
        for (i, &(q, mask)) in nodes.iter().enumerate() {
            if good[i] && t.value(root, q, mask) {
                out[q] = true;
            }
        }
        out
    }
}

/// Path formula with maximal state subformulas evaluated to state sets.
#[derive(Default)]
struct Tableau {
    nodes: Vec<TNode>,
    /// Props: truth per Kripke state.
    props: Vec<Vec<bool>>,
    /// Node ids of Until subformulas; bit `k` of a mask is `untils[k]`.
    untils: Vec<usize>,
    memo: HashMap<PathFormula, usize>,
}

enum TNode {
    Prop(usize),
    Not(usize),
    And(usize, usize),
    Until(usize, usize, usize),
}

impl Tableau {
    fn intern(&mut self, k: &Kripke, f: &PathFormula) -> usize {
        if let Some(&id) = self.memo.get(f) {
            return id;
        }
        let node = match f {
            PathFormula::State(s) => {
                self.props.push(k.eval(s));
                TNode::Prop(self.props.len() - 1)
            }
            PathFormula::Not(a) => TNode::Not(self.intern(k, a)),
            PathFormula::And(a, b) => {
                let (a, b) = (self.intern(k, a), self.intern(k, b));
                TNode::And(a, b)
            }
            PathFormula::Until(a, b) => {
                let (a, b) = (self.intern(k, a), self.intern(k, b));
                self.untils.push(self.nodes.len());
                TNode::Until(a, b, self.untils.len() - 1)
            }
        };
        self.nodes.push(node);
        let id = self.nodes.len() - 1;
        self.memo.insert(f.clone(), id);
        id
    }

    fn value(&self, id: usize, q: usize, mask: u64) -> bool {
        match self.nodes[id] {
            TNode::Prop(p) => self.props[p][q],
            TNode::Not(a) => !self.value(a, q, mask),
            TNode::And(a, b) => self.value(a, q, mask) && self.value(b, q, mask),
            TNode::Until(_, _, k) => mask >> k & 1 == 1,
        }
    }

    fn until_parts(&self, k: usize) -> (usize, usize) {
        match self.nodes[self.untils[k]] {
            TNode::Until(a, b, _) => (a, b),
            _ => unreachable!(),
        }
    }

    /// `b` forces `a U b`; `a U b` without `b` forces `a`.
    fn consistent(&self, q: usize, mask: u64) -> bool {
        (0..self.untils.len()).all(|k| {
            let (a, b) = self.until_parts(k);
            let holds = mask >> k & 1 == 1;
            let vb = self.value(b, q, mask);
            (!vb || holds) && (!holds || vb || self.value(a, q, mask))
        })
    }

    /// `a U b` now iff `b` now, or `a` now and `a U b` next.
    fn step(&self, q: usize, mask: u64, next: u64) -> bool {
        (0..self.untils.len()).all(|k| {
            let (a, b) = self.until_parts(k);
            let holds = mask >> k & 1 == 1;
            let later = next >> k & 1 == 1;
            holds == (self.value(b, q, mask) || (self.value(a, q, mask) && later))
        })
    }

    /// Acceptance set `k`: the obligation `a U b` is absent or met.
    fn fulfils(&self, q: usize, mask: u64, k: usize) -> bool {
        let (_, b) = self.until_parts(k);
        mask >> k & 1 == 0 || self.value(b, q, mask)
    }
}

/// Result of checking a property on a quotient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    /// Ids of classes satisfying the property.
    pub satisfying: BTreeSet<usize>,
    pub initial: BTreeSet<usize>,
    /// Every initial class satisfies the property.
    pub holds: bool,
}

impl Verdict {
    /// Initial classes violating the property.
    pub fn failing_initial(&self) -> BTreeSet<usize> {
        self.initial.difference(&self.satisfying).copied().collect()
    }
}

/// Checks `f` on `q`. Atoms must be labels of some class or be listed in
/// `alphabet`.
pub fn check(
    q: &Quotient,
    f: &StateFormula,
    alphabet: impl IntoIterator<Item = String>,
) -> Result<Verdict, CheckError> {
    let k = Kripke::from_quotient(q, alphabet)?;
    let sat = k.sat(f)?;
    let satisfying: BTreeSet<usize> = q.classes.iter().zip(&sat).filter(|(_, &s)| s).map(|(c, _)| c.id).collect();
    let initial: BTreeSet<usize> = q.initial().collect();
    let holds = initial.is_subset(&satisfying);
    Ok(Verdict { satisfying, initial, holds })
}

/// Initial states of the concrete system whose class satisfies the
/// property: `init && (region_1 || ... || region_m)`.
pub fn lift(
    sys: &SymbolicSystem,
    template: &ClassifierTemplate,
    params: &ParamAssignment,
    verdict: &Verdict,
) -> Predicate {
    let regions = verdict.satisfying.iter().map(|&c| template.region(&params.splits, ClassId(c))).collect();
    Predicate::and(vec![sys.init().clone(), Predicate::or(regions)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(succ: &[&[usize]], labels: &[&[&str]]) -> Kripke {
        Kripke::new(
            (0..succ.len()).map(|i| format!("n{i}")).collect(),
            succ.iter().map(|s| s.to_vec()).collect(),
            labels.iter().map(|l| l.iter().map(|s| s.to_string()).collect()).collect(),
            Vec::new(),
        )
        .unwrap()
    }

    fn sat(k: &Kripke, text: &str) -> Vec<usize> {
        let f = parse_property(text).unwrap();
        k.sat(&f).unwrap().iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    /// Quotient shape of the running example: a (terminated), b, c.
    fn running() -> Kripke {
        graph(&[&[0], &[0, 2], &[2]], &[&["xle0"], &["xgt0"], &["xgt0"]])
    }

    #[test]
    fn running_property_marks_middle_class() {
        assert_eq!(sat(&running(), "E F G (xle0) && E G (xgt0)"), vec![1]);
    }

    #[test]
    fn fixpoint_and_tableau_agree_on_simple_forms() {
        let k = running();
        // Forced through the general engine by conjoining a trivial path.
        assert_eq!(sat(&k, "E G xgt0"), sat(&k, "E (G xgt0 && true U true)"));
        assert_eq!(sat(&k, "E (xgt0 U xle0)"), sat(&k, "E ((xgt0 U xle0) && G true)"));
    }

    #[test]
    fn figure_two_quotient() {
        // R <-> Q, Q -> P, Q self-loop, P self-loop.
        let k = graph(&[&[1], &[0, 1, 2], &[2]], &[&["a"], &["b"], &["c"]]);
        assert_eq!(sat(&k, "E F c"), vec![0, 1, 2]);
        assert_eq!(sat(&k, "A F c"), vec![2]);
    }

    #[test]
    fn nested_until_needs_fairness() {
        // 0 -> 1 -> 0, 1 -> 2 -> 2. GF p with p only at 0.
        let k = graph(&[&[1], &[0, 2], &[2]], &[&["p"], &[], &[]]);
        assert_eq!(sat(&k, "E G F p"), vec![0, 1]);
        assert_eq!(sat(&k, "A G F p"), Vec::<usize>::new());
        assert_eq!(sat(&k, "E (F p && F G !p)"), vec![0, 1]);
        assert_eq!(sat(&k, "A (G F p || F G !p)"), vec![0, 1, 2]);
    }

    #[test]
    fn unknown_atom_is_reported() {
        let f = parse_property("E F zzz").unwrap();
        assert_eq!(running().sat(&f), Err(CheckError::UnknownAtom("zzz".into())));
    }

    #[test]
    fn deadlocks_are_rejected() {
        let r = Kripke::new(vec!["x".into()], vec![vec![]], vec![BTreeSet::new()], Vec::new());
        assert_eq!(r, Err(CheckError::Deadlock("x".into())));
    }
}
