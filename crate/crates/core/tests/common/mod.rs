#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::Rng;

use bisimlearn::cegis::{condition_holds, sample_satisfied, SampleSet, TraceEvent};
use bisimlearn::checker::{Kripke, PathFormula, StateFormula};
use bisimlearn::model::{parse_system, Predicate, SymbolicSystem};
use bisimlearn::oracle::{ExplicitSystem, Partition};
use bisimlearn::quotient::{class_name, Quotient, QuotientClass};
use bisimlearn::smt::{BoolExpr, SmtFormula, SmtResult, Solver};
use bisimlearn::templates::ClassifierTemplate;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

pub fn load_system(name: &str) -> SymbolicSystem {
    parse_system(&fixture(name)).unwrap()
}

pub fn solver() -> Solver {
    Solver::from_env(None, Duration::from_secs(30))
}

/// `a` and `b` denote the same set of states.
pub fn smt_equivalent(sys: &SymbolicSystem, a: &Predicate, b: &Predicate, solver: &Solver) -> bool {
    let mut f = SmtFormula::new();
    let s: Vec<_> = sys.vars().iter().map(|v| f.declare_int(format!("s_{v}"))).collect();
    let (ea, eb) = (a.to_smt(&s), b.to_smt(&s));
    f.assert(BoolExpr::not(BoolExpr::iff(ea, eb)));
    matches!(solver.check(&f).unwrap(), SmtResult::Unsat)
}

// ---------------------------------------------------------------------------
// Random systems

pub const ATOMS: [&str; 3] = ["p", "q", "r"];

fn random_labels(rng: &mut impl Rng, atoms: usize) -> BTreeSet<String> {
    ATOMS[..atoms].iter().filter(|_| rng.gen_bool(0.5)).map(|s| s.to_string()).collect()
}

/// Uniformly random total system with `n` states, branching `k` and up to
/// `atoms` atomic propositions.
pub fn random_explicit(rng: &mut impl Rng, n: usize, k: usize, atoms: usize) -> ExplicitSystem {
    let names = (0..n).map(|i| format!("s{i}")).collect();
    let succ = (0..n).map(|_| (0..k).map(|_| rng.gen_range(0..n)).collect()).collect();
    let labels = (0..n).map(|_| random_labels(rng, atoms)).collect();
    let mut init: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
    init[0] = true;
    ExplicitSystem::new(names, succ, labels, init).unwrap()
}

/// A small random skeleton blown up to `n` states: every skeleton state gets
/// one or more copies, and every copy steps to some copy of the skeleton
/// successor on each branch. Copies of one skeleton state are strongly
/// bisimilar, so the coarsest partition is that of the skeleton.
pub fn inflated_explicit(rng: &mut impl Rng, skeleton: usize, n: usize, k: usize, atoms: usize) -> ExplicitSystem {
    let base = random_explicit(rng, skeleton, k, atoms);
    let mut owner: Vec<usize> = (0..skeleton).collect();
    while owner.len() < n {
        owner.push(rng.gen_range(0..skeleton));
    }
    owner[1..].shuffle(rng);
    let copies: Vec<Vec<usize>> =
        (0..skeleton).map(|s| (0..n).filter(|&i| owner[i] == s).collect()).collect();
    let names = (0..n).map(|i| format!("s{i}")).collect();
    let succ = (0..n)
        .map(|i| {
            base.successors(owner[i])
                .iter()
                .map(|&t| *copies[t].choose(rng).unwrap())
                .collect()
        })
        .collect();
    let labels = (0..n).map(|i| base.labels(owner[i]).clone()).collect();
    let mut init: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.2)).collect();
    init[0] = true;
    ExplicitSystem::new(names, succ, labels, init).unwrap()
}

pub fn random_kripke(rng: &mut impl Rng, n: usize, atoms: usize) -> Kripke {
    let names = (0..n).map(|i| format!("c{i}")).collect();
    let succ = (0..n)
        .map(|_| {
            let mut s: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(0..n)).collect();
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect();
    let labels = (0..n).map(|_| random_labels(rng, atoms)).collect();
    Kripke::new(names, succ, labels, ATOMS[..atoms].iter().map(|s| s.to_string())).unwrap()
}

/// Random propositional state formula of the given depth.
pub fn random_propositional(rng: &mut impl Rng, depth: usize, atoms: usize) -> StateFormula {
    if depth == 0 || rng.gen_bool(0.3) {
        return match rng.gen_range(0..atoms + 1) {
            0 => StateFormula::True,
            i => StateFormula::atom(ATOMS[i - 1]),
        };
    }
    match rng.gen_range(0..3) {
        0 => random_propositional(rng, depth - 1, atoms).not(),
        1 => random_propositional(rng, depth - 1, atoms).and(random_propositional(rng, depth - 1, atoms)),
        _ => random_propositional(rng, depth - 1, atoms).or(random_propositional(rng, depth - 1, atoms)),
    }
}

/// Random `E (a U b)` or `E G a` formula, with operands that may themselves
/// contain such formulas.
pub fn random_eu_eg<R: Rng>(rng: &mut R, nesting: usize, atoms: usize) -> StateFormula {
    let operand = |rng: &mut R| {
        if nesting > 0 && rng.gen_bool(0.3) {
            let inner = random_eu_eg(rng, nesting - 1, atoms);
            if rng.gen_bool(0.5) { inner.not() } else { inner }
        } else {
            random_propositional(rng, 2, atoms)
        }
    };
    if rng.gen_bool(0.5) {
        let a = operand(rng);
        let b = operand(rng);
        StateFormula::exists(PathFormula::state(a).until(PathFormula::state(b)))
    } else {
        let a = operand(rng);
        StateFormula::exists(PathFormula::state(a).always())
    }
}

/// The six transfer properties, followed by a few richer CTL* shapes.
pub fn battery() -> Vec<(&'static str, StateFormula)> {
    let p = || StateFormula::atom("p");
    let q = || StateFormula::atom("q");
    let st = PathFormula::state;
    vec![
        ("E F p", StateFormula::exists(st(p()).eventually())),
        ("A F p", StateFormula::forall(st(p()).eventually())),
        ("E G p", StateFormula::exists(st(p()).always())),
        ("A G p", StateFormula::forall(st(p()).always())),
        ("A (p U q)", StateFormula::forall(st(p()).until(st(q())))),
        (
            "E F G p && E G q",
            StateFormula::exists(st(p()).always().eventually()).and(StateFormula::exists(st(q()).always())),
        ),
        ("E (p U q)", StateFormula::exists(st(p()).until(st(q())))),
        ("A G (p -> E F q)", StateFormula::forall(st(p().implies(StateFormula::exists(st(q()).eventually()))).always())),
        ("E G F q", StateFormula::exists(st(q()).eventually().always())),
        ("A (G F p -> F q)", StateFormula::forall(st(p()).eventually().always().not().or(st(q()).eventually()))),
    ]
}

// ---------------------------------------------------------------------------
// Lasso oracle

/// Truth of a path formula at every position of a lasso: positions
/// `0..len`, with position `len - 1` followed by `back`.
fn path_on_lasso(k: &Kripke, f: &PathFormula, lasso: &[usize], back: usize, memo: &mut Memo) -> Vec<bool> {
    let n = lasso.len();
    match f {
        PathFormula::State(s) => {
            let sat = memo.sat(k, s);
            lasso.iter().map(|&q| sat[q]).collect()
        }
        PathFormula::Not(a) => path_on_lasso(k, a, lasso, back, memo).into_iter().map(|v| !v).collect(),
        PathFormula::And(a, b) => {
            let (a, b) = (path_on_lasso(k, a, lasso, back, memo), path_on_lasso(k, b, lasso, back, memo));
            a.iter().zip(&b).map(|(x, y)| *x && *y).collect()
        }
        PathFormula::Until(a, b) => {
            let (a, b) = (path_on_lasso(k, a, lasso, back, memo), path_on_lasso(k, b, lasso, back, memo));
            let next = |i: usize| if i + 1 == n { back } else { i + 1 };
            let mut u = b.clone();
            loop {
                let mut changed = false;
                for i in 0..n {
                    if !u[i] && a[i] && u[next(i)] {
                        u[i] = true;
                        changed = true;
                    }
                }
                if !changed {
                    break u;
                }
            }
        }
    }
}

/// Enumerates every simple lasso from `start`: a path of distinct states
/// whose last state steps back to one of them.
fn simple_lassos(k: &Kripke, start: usize, visit: &mut dyn FnMut(&[usize], usize) -> bool) {
    fn go(k: &Kripke, path: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize], usize) -> bool) -> bool {
        let last = *path.last().unwrap();
        for &t in k.successors(last) {
            if let Some(back) = path.iter().position(|&q| q == t) {
                if visit(path, back) {
                    return true;
                }
            } else {
                path.push(t);
                if go(k, path, visit) {
                    return true;
                }
                path.pop();
            }
        }
        false
    }
    go(k, &mut vec![start], visit);
}

struct Memo(Vec<(StateFormula, Vec<bool>)>);

impl Memo {
    fn sat(&mut self, k: &Kripke, f: &StateFormula) -> Vec<bool> {
        if let Some((_, v)) = self.0.iter().find(|(g, _)| g == f) {
            return v.clone();
        }
        let v: Vec<bool> = match f {
            StateFormula::True => vec![true; k.len()],
            StateFormula::Atom(p) => (0..k.len()).map(|q| k.labels(q).contains(p)).collect(),
            StateFormula::Not(a) => self.sat(k, a).into_iter().map(|x| !x).collect(),
            StateFormula::And(a, b) => {
                let (a, b) = (self.sat(k, a), self.sat(k, b));
                a.iter().zip(&b).map(|(x, y)| *x && *y).collect()
            }
            StateFormula::Exists(p) => (0..k.len())
                .map(|q| {
                    let mut found = false;
                    simple_lassos(k, q, &mut |lasso, back| {
                        found = path_on_lasso(k, p, lasso, back, self)[0];
                        found
                    });
                    found
                })
                .collect(),
        };
        self.0.push((f.clone(), v.clone()));
        v
    }
}

/// Satisfying states by enumerating simple lassos. Exact whenever each
/// path quantifier has a simple-lasso witness, which holds for `E (a U b)`
/// and `E G a` with state-formula operands.
pub fn lasso_sat(k: &Kripke, f: &StateFormula) -> Vec<bool> {
    Memo(Vec::new()).sat(k, f)
}

// ---------------------------------------------------------------------------
// Partition oracles

/// Every partition of `0..n`, as restricted growth strings.
pub fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    fn go(i: usize, n: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..=max + 1 {
            cur.push(b);
            go(i + 1, n, max.max(b), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut cur = vec![0];
    go(1, n, 0, &mut cur, &mut out);
    out
}

pub fn partition_of(block: &[usize]) -> Partition {
    Partition::from_keys(block.iter().copied())
}

/// Validity of a partition from the definition, using reachability
/// matrices instead of graph search: related states agree on labels, on
/// the set of other blocks they can enter after staying in their own block,
/// and on whether they can stay in their own block forever.
pub fn naive_partition_valid(es: &ExplicitSystem, block: &[usize]) -> bool {
    let n = es.len();
    // reach[i][j]: j reachable from i by zero or more in-block steps.
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        reach[i][i] = true;
        for &j in es.successors(i) {
            if block[j] == block[i] {
                reach[i][j] = true;
            }
        }
    }
    for m in 0..n {
        for i in 0..n {
            if reach[i][m] {
                for j in 0..n {
                    if reach[m][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let on_cycle = |j: usize| es.successors(j).iter().any(|&s| block[s] == block[j] && reach[s][j]);
    let exits = |i: usize| -> BTreeSet<usize> {
        (0..n)
            .filter(|&j| reach[i][j])
            .flat_map(|j| es.successors(j).iter().map(|&t| block[t]))
            .filter(|&b| b != block[i])
            .collect()
    };
    let diverges = |i: usize| (0..n).any(|j| reach[i][j] && on_cycle(j));
    (0..n).all(|i| {
        (0..n).filter(|&j| block[j] == block[i]).all(|j| {
            es.labels(i) == es.labels(j) && exits(i) == exits(j) && diverges(i) == diverges(j)
        })
    })
}

pub fn random_quotient(rng: &mut impl Rng, n: usize, atoms: usize) -> Quotient {
    let classes = (0..n)
        .map(|id| QuotientClass {
            id,
            name: class_name(id),
            labels: random_labels(rng, atoms),
            region: String::new(),
            initial: rng.gen_bool(0.3),
        })
        .collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for _ in 0..rng.gen_range(1..=3) {
            edges.push((a, rng.gen_range(0..n)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    Quotient { classes, edges }
}

// ---------------------------------------------------------------------------
// Trace replay

#[derive(Debug, Default, Clone, Copy)]
pub struct Replay {
    pub models: usize,
    pub model_constraints: usize,
    pub counterexamples: usize,
}

/// Re-checks every learner model against the samples it was fitted to and
/// every counterexample against the parameters it refuted, by direct
/// evaluation.
pub fn replay(
    sys: &SymbolicSystem,
    templates: &[ClassifierTemplate],
    samples: &SampleSet,
    trace: &[TraceEvent],
) -> Result<Replay, String> {
    let mut r = Replay::default();
    for ev in trace {
        match ev {
            TraceEvent::Learned { generation, samples: m, params } => {
                let t = &templates[*generation];
                for (s, u) in &samples.pairs()[..*m] {
                    if !sample_satisfied(sys, t, params, s, u) {
                        return Err(format!("learner model violates sample ({s:?}, {u:?})"));
                    }
                    r.model_constraints += 1;
                }
                r.models += 1;
            }
            TraceEvent::Refuted { generation, params, counterexamples } => {
                let t = &templates[*generation];
                for c in counterexamples {
                    let cs = t.classify(&params.splits, &c.s);
                    let ct = t.classify(&params.splits, &c.t);
                    if cs != c.class || ct != c.class {
                        return Err(format!("counterexample ({:?}, {:?}) is not inside class {}", c.s, c.t, c.class));
                    }
                    if condition_holds(sys, t, params, params.rank_for(c.class), &c.s, &c.t) {
                        return Err(format!("counterexample ({:?}, {:?}) satisfies the matching condition", c.s, c.t));
                    }
                    r.counterexamples += 1;
                }
            }
            _ => {}
        }
    }
    Ok(r)
}
