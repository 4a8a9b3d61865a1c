//! Explicit finite systems and ground-truth partition algorithms.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use num_bigint::BigInt;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CmpOp, Predicate, State, SymbolicSystem, Term};
use crate::quotient::{Quotient, QuotientClass};

/// Finite system given by explicit successor lists, each of length `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplicitSystem {
    names: Vec<String>,
    succ: Vec<Vec<usize>>,
    labels: Vec<BTreeSet<String>>,
    init: Vec<bool>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EtsError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown successor `{name}`")]
    UnknownState { line: usize, name: String },
    #[error("line {line}: state `{name}` declared twice")]
    Duplicate { line: usize, name: String },
    #[error("state `{0}` has no successors")]
    Blocking(String),
    #[error("system has no states")]
    Empty,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExplicitError {
    #[error("state {state} has successor {successor} outside the box")]
    BoxEscape { state: String, successor: String },
    #[error("box has {0} dimensions, system has {1} variables")]
    BoxArity(usize, usize),
    #[error("box contains {0} states, more than the limit {1}")]
    TooLarge(u128, usize),
    #[error("empty range for variable `{0}`")]
    EmptyRange(String),
}

impl ExplicitSystem {
    /// Builds a system; shorter successor lists repeat their last entry up
    /// to the longest list.
    pub fn new(
        names: Vec<String>,
        succ: Vec<Vec<usize>>,
        labels: Vec<BTreeSet<String>>,
        init: Vec<bool>,
    ) -> Result<ExplicitSystem, EtsError> {
        if names.is_empty() {
            return Err(EtsError::Empty);
        }
        assert!(succ.len() == names.len() && labels.len() == names.len() && init.len() == names.len());
        let k = succ.iter().map(Vec::len).max().unwrap_or(0);
        let mut padded = Vec::with_capacity(succ.len());
        for (i, mut s) in succ.into_iter().enumerate() {
            let Some(&last) = s.last() else {
                return Err(EtsError::Blocking(names[i].clone()));
            };
            assert!(s.iter().all(|&j| j < names.len()), "successor index out of range");
            s.resize(k, last);
            padded.push(s);
        }
        Ok(ExplicitSystem { names, succ: padded, labels, init })
    }

    /// Parses the line format `id | labels | succ, succ, ... | init`.
    /// Labels are separated by commas or spaces; the last field is optional
    /// and marks initial states with `init`. `#` starts a comment.
    pub fn parse(text: &str) -> Result<ExplicitSystem, EtsError> {
        struct Line<'a> {
            no: usize,
            labels: BTreeSet<String>,
            succ: Vec<&'a str>,
            init: bool,
        }
        let mut index = HashMap::new();
        let mut names = Vec::new();
        let mut lines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('|').map(str::trim).collect();
            if fields.len() < 3 || fields.len() > 4 {
                return Err(EtsError::Syntax {
                    line: no,
                    msg: format!("expected 3 or 4 `|`-separated fields, found {}", fields.len()),
                });
            }
            let name = fields[0];
            if name.is_empty() || name.contains(char::is_whitespace) || name.contains(',') {
                return Err(EtsError::Syntax { line: no, msg: format!("bad state id `{name}`") });
            }
            if index.insert(name.to_string(), names.len()).is_some() {
                return Err(EtsError::Duplicate { line: no, name: name.to_string() });
            }
            names.push(name.to_string());
            let labels = fields[1]
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
            let succ: Vec<&str> = fields[2].split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            let init = match fields.get(3).copied().unwrap_or("") {
                "" => false,
                "init" | "initial" | "true" | "yes" | "1" => true,
                "false" | "no" | "0" => false,
                other => {
                    return Err(EtsError::Syntax { line: no, msg: format!("bad initial marker `{other}`") })
                }
            };
            lines.push(Line { no, labels, succ, init });
        }
        let mut succ = Vec::with_capacity(lines.len());
        let mut labels = Vec::with_capacity(lines.len());
        let mut init = Vec::with_capacity(lines.len());
        for l in lines {
            let mut s = Vec::with_capacity(l.succ.len());
            for name in l.succ {
                let j = *index
                    .get(name)
                    .ok_or_else(|| EtsError::UnknownState { line: l.no, name: name.to_string() })?;
                s.push(j);
            }
            succ.push(s);
            labels.push(l.labels);
            init.push(l.init);
        }
        ExplicitSystem::new(names, succ, labels, init)
    }

    pub fn to_ets(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            let labels: Vec<&str> = self.labels[i].iter().map(String::as_str).collect();
            let succ: Vec<&str> = self.succ[i].iter().map(|&j| self.names[j].as_str()).collect();
            out.push_str(&format!(
                "{} | {} | {} | {}\n",
                self.names[i],
                labels.join(","),
                succ.join(","),
                if self.init[i] { "init" } else { "" }
            ));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn branching(&self) -> usize {
        self.succ.first().map_or(0, Vec::len)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn successors(&self, i: usize) -> &[usize] {
        &self.succ[i]
    }

    pub fn labels(&self, i: usize) -> &BTreeSet<String> {
        &self.labels[i]
    }

    pub fn is_initial(&self, i: usize) -> bool {
        self.init[i]
    }

    /// All label names used by any state.
    pub fn alphabet(&self) -> BTreeSet<String> {
        self.labels.iter().flatten().cloned().collect()
    }
}

const EXPLICIT_LIMIT: usize = 1 << 20;

fn state_name(vars: &[String], s: &[BigInt]) -> String {
    vars.iter().zip(s).map(|(v, x)| format!("{v}{x}")).collect::<Vec<_>>().join(".")
}

/// Unrolls `sys` on the box `ranges` (inclusive bounds per variable).
/// Every successor of an in-box state must stay inside the box.
pub fn explicit_from_symbolic(
    sys: &SymbolicSystem,
    ranges: &[(i64, i64)],
) -> Result<(ExplicitSystem, Vec<State>), ExplicitError> {
    if ranges.len() != sys.dim() {
        return Err(ExplicitError::BoxArity(ranges.len(), sys.dim()));
    }
    let mut total: u128 = 1;
    for (v, &(lo, hi)) in sys.vars().iter().zip(ranges) {
        if lo > hi {
            return Err(ExplicitError::EmptyRange(v.clone()));
        }
        total = total.saturating_mul((hi as i128 - lo as i128 + 1) as u128);
    }
    if total > EXPLICIT_LIMIT as u128 {
        return Err(ExplicitError::TooLarge(total, EXPLICIT_LIMIT));
    }
    let mut states: Vec<State> = vec![Vec::new()];
    for &(lo, hi) in ranges {
        states = states
            .into_iter()
            .flat_map(|s| {
                (lo..=hi).map(move |x| {
                    let mut t = s.clone();
                    t.push(BigInt::from(x));
                    t
                })
            })
            .collect();
    }
    let index: HashMap<State, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let mut succ = Vec::with_capacity(states.len());
    for s in &states {
        let mut row = Vec::with_capacity(sys.branching());
        for t in sys.successors(s) {
            match index.get(&t) {
                Some(&j) => row.push(j),
                None => {
                    return Err(ExplicitError::BoxEscape {
                        state: format!("({})", s.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")),
                        successor: format!("({})", t.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")),
                    })
                }
            }
        }
        succ.push(row);
    }
    let names = states.iter().map(|s| state_name(sys.vars(), s)).collect();
    let labels = states.iter().map(|s| sys.labels_of(s)).collect();
    let init = states.iter().map(|s| sys.is_initial(s)).collect();
    let es = ExplicitSystem::new(names, succ, labels, init).expect("nonempty box, total successors");
    Ok((es, states))
}

/// Label carried by encoding vectors that do not denote a state.
pub const OUTSIDE_LABEL: &str = "__out";

/// One-hot encoding of an explicit system as a symbolic one: state `i` is
/// the unit vector `e_i`. All other vectors are fixed points labelled
/// [`OUTSIDE_LABEL`].
pub fn to_symbolic(es: &ExplicitSystem, name: &str) -> SymbolicSystem {
    let n = es.len();
    let vars: Vec<String> = (0..n).map(|i| format!("q{i}")).collect();
    let one = || Term::constant(1);
    let zero = || Term::constant(0);
    let sum = |idx: &[usize]| -> Term {
        idx.iter().fold(None, |acc: Option<Term>, &i| {
            Some(match acc {
                None => Term::var(i),
                Some(t) => Term::Add(Box::new(t), Box::new(Term::var(i))),
            })
        })
        .unwrap_or_else(zero)
    };
    let all: Vec<usize> = (0..n).collect();
    let mut valid = Vec::with_capacity(2 * n + 1);
    for i in 0..n {
        valid.push(Predicate::cmp(CmpOp::Ge, Term::var(i), zero()));
        valid.push(Predicate::cmp(CmpOp::Le, Term::var(i), one()));
    }
    valid.push(Predicate::cmp(CmpOp::Eq, sum(&all), one()));
    let valid = Predicate::and(valid);
    let member = |idx: &[usize]| -> Predicate {
        if idx.is_empty() {
            Predicate::False
        } else {
            Predicate::and(vec![valid.clone(), Predicate::cmp(CmpOp::Ge, sum(idx), one())])
        }
    };
    let successors = (0..es.branching())
        .map(|b| {
            (0..n)
                .map(|j| {
                    let pre: Vec<usize> = (0..n).filter(|&i| es.successors(i)[b] == j).collect();
                    Term::Ite(Box::new(valid.clone()), Box::new(sum(&pre)), Box::new(Term::var(j)))
                })
                .collect()
        })
        .collect();
    let mut labels: Vec<(String, Predicate)> = es
        .alphabet()
        .into_iter()
        .map(|p| {
            let idx: Vec<usize> = (0..n).filter(|&i| es.labels(i).contains(&p)).collect();
            (p, member(&idx))
        })
        .collect();
    labels.push((OUTSIDE_LABEL.to_string(), valid.clone().negate()));
    let init_idx: Vec<usize> = (0..n).filter(|&i| es.is_initial(i)).collect();
    SymbolicSystem::new(name, vars, successors, member(&init_idx), labels)
        .expect("one-hot encoding is well formed")
}

/// The encoding vector of explicit state `i`.
pub fn one_hot(n: usize, i: usize) -> State {
    (0..n).map(|j| BigInt::from((i == j) as u8)).collect()
}

/// Block id per state. Block ids are normalized to first-occurrence order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    block: Vec<usize>,
    blocks: usize,
}

impl Partition {
    /// Normalizes arbitrary keys to block ids.
    pub fn from_keys<K: Eq + std::hash::Hash>(keys: impl IntoIterator<Item = K>) -> Partition {
        let mut ids = HashMap::new();
        let block: Vec<usize> = keys
            .into_iter()
            .map(|k| {
                let next = ids.len();
                *ids.entry(k).or_insert(next)
            })
            .collect();
        Partition { block, blocks: ids.len() }
    }

    /// Builds from explicit blocks; every state in `0..n` must appear
    /// exactly once.
    pub fn from_blocks(n: usize, blocks: &[Vec<usize>]) -> Option<Partition> {
        let mut key = vec![usize::MAX; n];
        for (b, members) in blocks.iter().enumerate() {
            for &s in members {
                if s >= n || key[s] != usize::MAX {
                    return None;
                }
                key[s] = b;
            }
        }
        if key.contains(&usize::MAX) {
            return None;
        }
        Some(Partition::from_keys(key))
    }

    pub fn block_of(&self, s: usize) -> usize {
        self.block[s]
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks
    }

    pub fn len(&self) -> usize {
        self.block.len()
    }

    pub fn is_empty(&self) -> bool {
        self.block.is_empty()
    }

    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.blocks];
        for (s, &b) in self.block.iter().enumerate() {
            out[b].push(s);
        }
        out
    }

    /// Whether every block of `self` lies within a block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        let mut image = vec![None; self.blocks];
        self.block.iter().zip(&coarser.block).all(|(&b, &c)| match image[b] {
            None => {
                image[b] = Some(c);
                true
            }
            Some(x) => x == c,
        })
    }

    /// Blocks as sets of state names.
    pub fn named_blocks(&self, es: &ExplicitSystem) -> BTreeSet<BTreeSet<String>> {
        self.blocks()
            .into_iter()
            .map(|b| b.into_iter().map(|s| es.names()[s].clone()).collect())
            .collect()
    }
}

/// JSON form of a partition: blocks of state ids, optionally named.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionDoc {
    pub blocks: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub names: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PartitionDocError {
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("blocks must cover every state exactly once")]
    NotAPartition,
    #[error("{0} block names for {1} blocks")]
    Names(usize, usize),
}

impl PartitionDoc {
    pub fn new(es: &ExplicitSystem, p: &Partition) -> PartitionDoc {
        PartitionDoc {
            blocks: p
                .blocks()
                .into_iter()
                .map(|b| b.into_iter().map(|s| es.names()[s].clone()).collect())
                .collect(),
            names: Vec::new(),
        }
    }

    /// Resolves against `es`. Returns the partition and one name per block
    /// (given names, else `B0`, `B1`, ...), in partition block order.
    pub fn resolve(&self, es: &ExplicitSystem) -> Result<(Partition, Vec<String>), PartitionDocError> {
        if !self.names.is_empty() && self.names.len() != self.blocks.len() {
            return Err(PartitionDocError::Names(self.names.len(), self.blocks.len()));
        }
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let mut ids = Vec::with_capacity(b.len());
            for name in b {
                ids.push(es.index_of(name).ok_or_else(|| PartitionDocError::UnknownState(name.clone()))?);
            }
            blocks.push(ids);
        }
        if blocks.iter().any(Vec::is_empty) {
            return Err(PartitionDocError::NotAPartition);
        }
        let p = Partition::from_blocks(es.len(), &blocks).ok_or(PartitionDocError::NotAPartition)?;
        // Map doc block order to normalized block order.
        let mut names = vec![String::new(); p.num_blocks()];
        for (i, b) in blocks.iter().enumerate() {
            let given = self.names.get(i).cloned().unwrap_or_else(|| format!("B{i}"));
            names[p.block_of(b[0])] = given;
        }
        Ok((p, names))
    }
}

/// Per state: blocks reachable by a path inside its own block followed by
/// one exit edge, and whether such a path can stay inside forever.
fn signatures(es: &ExplicitSystem, p: &Partition) -> Vec<(BTreeSet<usize>, bool)> {
    let n = es.len();
    // States lying on a cycle inside their own block.
    let mut g = DiGraph::<(), ()>::with_capacity(n, n * es.branching());
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for s in 0..n {
        for &t in es.successors(s) {
            if p.block_of(s) == p.block_of(t) {
                g.update_edge(nodes[s], nodes[t], ());
            }
        }
    }
    let mut cyclic = vec![false; n];
    for scc in tarjan_scc(&g) {
        let nontrivial = scc.len() > 1 || {
            let s = scc[0].index();
            es.successors(s).contains(&s)
        };
        if nontrivial {
            for v in scc {
                cyclic[v.index()] = true;
            }
        }
    }
    (0..n)
        .map(|s| {
            let b = p.block_of(s);
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([s]);
            seen[s] = true;
            let mut exits = BTreeSet::new();
            let mut diverges = false;
            while let Some(v) = queue.pop_front() {
                diverges |= cyclic[v];
                for &w in es.successors(v) {
                    if p.block_of(w) != b {
                        exits.insert(p.block_of(w));
                    } else if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            (exits, diverges)
        })
        .collect()
}

/// Partition of states by label set.
pub fn label_partition(es: &ExplicitSystem) -> Partition {
    Partition::from_keys((0..es.len()).map(|s| es.labels(s).clone()))
}

/// Coarsest divergence-sensitive stutter-insensitive bisimulation, by
/// signature refinement from the label partition.
pub fn coarsest_partition(es: &ExplicitSystem) -> Partition {
    let mut p = label_partition(es);
    loop {
        let sig = signatures(es, &p);
        let next = Partition::from_keys((0..es.len()).map(|s| (p.block_of(s), sig[s].clone())));
        if next.num_blocks() == p.num_blocks() {
            return p;
        }
        p = next;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Two states of one block carry different labels.
    Labels { block: usize, s: usize, t: usize },
    /// `s` can leave its block towards `target`, `t` cannot.
    Exit { block: usize, s: usize, t: usize, target: usize },
    /// `s` can stay in its block forever, `t` cannot (or vice versa).
    Divergence { block: usize, diverging: usize, stuck: usize },
}

impl Violation {
    pub fn describe(&self, es: &ExplicitSystem) -> String {
        let n = |i: usize| es.names()[i].as_str();
        match *self {
            Violation::Labels { block, s, t } => {
                format!("block {block}: {} and {} carry different labels", n(s), n(t))
            }
            Violation::Exit { block, s, t, target } => format!(
                "block {block}: {} can move to block {target} through its own block, {} cannot",
                n(s),
                n(t)
            ),
            Violation::Divergence { block, diverging, stuck } => format!(
                "block {block}: {} can stay in the block forever, {} cannot",
                n(diverging),
                n(stuck)
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionCheck {
    Valid,
    Violation(Violation),
}

/// Checks that `p` is label preserving and that states of each block agree
/// on reachable exit blocks and on divergence.
pub fn check_partition(es: &ExplicitSystem, p: &Partition) -> PartitionCheck {
    let blocks = p.blocks();
    for (b, members) in blocks.iter().enumerate() {
        let first = members[0];
        if let Some(&t) = members.iter().find(|&&t| es.labels(t) != es.labels(first)) {
            return PartitionCheck::Violation(Violation::Labels { block: b, s: first, t });
        }
    }
    let sig = signatures(es, p);
    for (b, members) in blocks.iter().enumerate() {
        let all_exits: BTreeSet<usize> = members.iter().flat_map(|&s| sig[s].0.iter().copied()).collect();
        for &target in &all_exits {
            let s = *members.iter().find(|&&s| sig[s].0.contains(&target)).expect("some member exits");
            if let Some(&t) = members.iter().find(|&&t| !sig[t].0.contains(&target)) {
                return PartitionCheck::Violation(Violation::Exit { block: b, s, t, target });
            }
        }
        let div: Vec<usize> = members.iter().copied().filter(|&s| sig[s].1).collect();
        if !div.is_empty() && div.len() < members.len() {
            let stuck = *members.iter().find(|&&s| !sig[s].1).expect("some member is stuck");
            return PartitionCheck::Violation(Violation::Divergence { block: b, diverging: div[0], stuck });
        }
    }
    PartitionCheck::Valid
}

/// Quotient of an explicit system under a partition: `c -> d` for `c != d`
/// when some state of `c` has a successor in `d`; `c -> c` when every state
/// of `c` has a successor in `c`.
pub fn explicit_quotient(es: &ExplicitSystem, p: &Partition, names: Option<&[String]>) -> Quotient {
    let blocks = p.blocks();
    let mut edges = BTreeSet::new();
    for (b, members) in blocks.iter().enumerate() {
        for &s in members {
            for &t in es.successors(s) {
                if p.block_of(t) != b {
                    edges.insert((b, p.block_of(t)));
                }
            }
        }
        if members.iter().all(|&s| es.successors(s).iter().any(|&t| p.block_of(t) == b)) {
            edges.insert((b, b));
        }
    }
    let classes = blocks
        .iter()
        .enumerate()
        .map(|(b, members)| QuotientClass {
            id: b,
            name: names.map_or_else(|| format!("B{b}"), |n| n[b].clone()),
            labels: es.labels(members[0]).clone(),
            region: format!(
                "{{{}}}",
                members.iter().map(|&s| es.names()[s].as_str()).collect::<Vec<_>>().join(", ")
            ),
            initial: members.iter().any(|&s| es.is_initial(s)),
        })
        .collect();
    Quotient { classes, edges: edges.into_iter().collect() }
}

/// Groups states of `es` by `class`, returning the class value per block.
pub fn partition_by<K: Ord + Clone>(es: &ExplicitSystem, class: impl Fn(usize) -> K) -> (Partition, Vec<K>) {
    let mut ids = BTreeMap::new();
    let mut keys = Vec::new();
    let block = (0..es.len())
        .map(|s| {
            let k = class(s);
            *ids.entry(k.clone()).or_insert_with(|| {
                keys.push(k);
                keys.len() - 1
            })
        })
        .collect();
    (Partition { block, blocks: keys.len() }, keys)
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let blocks: Vec<String> = self
            .blocks()
            .into_iter()
            .map(|b| format!("{{{}}}", b.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        write!(f, "{}", blocks.join(" "))
    }
}
