//! The learner/verifier loop.

use std::collections::HashSet;
use std::fmt;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;
use tracing::{debug, info};

use super::condition::{condition_holds, sample_satisfied, violation_query, SampleEncoder};
use crate::model::{State, SymbolicSystem};
use crate::smt::{BoolExpr, IntExpr, SmtError, SmtFormula, SmtResult, Solver};
use crate::templates::{
    declare_ranking, declare_splits, AffineParams, CellOracle, ClassId, ClassifierTemplate,
    ParamAssignment, RankExpr, RankParams, RankingTemplate, SplitExpr,
};

/// Finite set of ordered state pairs, kept in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SampleSet {
    pairs: Vec<(State, State)>,
    seen: HashSet<(State, State)>,
}

impl SampleSet {
    pub fn new() -> SampleSet {
        SampleSet::default()
    }

    /// Returns false if the pair was already present.
    pub fn insert(&mut self, s: State, t: State) -> bool {
        if self.seen.insert((s.clone(), t.clone())) {
            self.pairs.push((s, t));
            true
        } else {
            false
        }
    }

    pub fn contains(&self, s: &State, t: &State) -> bool {
        self.seen.contains(&(s.clone(), t.clone()))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(State, State)] {
        &self.pairs
    }
}

#[derive(Debug, Clone)]
pub struct CegisConfig {
    /// Learner/verifier rounds in total.
    pub max_iters: usize,
    /// How many times the template may be refined.
    pub max_refinements: usize,
    /// Per-query solver timeout.
    pub timeout: Duration,
    pub jobs: usize,
    pub seed: u64,
    /// One ranking function per class instead of a global one.
    pub piecewise: bool,
    /// Random pairs added to the sample set before the first round.
    pub seed_samples: usize,
    /// Coordinates of random sample states are drawn from `[-r, r]`.
    pub sample_radius: i64,
    /// Optional bound `|p| <= B` on every learned coefficient.
    pub param_bound: Option<BigInt>,
    /// Coefficient bounds the learner tries before the final query.
    pub learner_bounds: Vec<u64>,
    /// State boxes the verifier searches before the unbounded query.
    pub counterexample_boxes: Vec<u64>,
}

impl Default for CegisConfig {
    fn default() -> CegisConfig {
        CegisConfig {
            max_iters: 200,
            max_refinements: 3,
            timeout: Duration::from_secs(30),
            jobs: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            seed: 0,
            piecewise: true,
            seed_samples: 0,
            sample_radius: 16,
            param_bound: None,
            learner_bounds: vec![2, 8, 64],
            counterexample_boxes: vec![8, 256],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LearnOutcome {
    Found(ParamAssignment),
    Infeasible,
}

/// A verifier-returned pair and the assignment it refutes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub class: ClassId,
    pub s: State,
    pub t: State,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyOutcome {
    Valid,
    /// At least one pair, at most one per class.
    Counterexamples(Vec<Counterexample>),
}

#[derive(Debug, Error)]
pub enum CegisError {
    #[error("solver returned unknown during {phase}: {reason}")]
    Unknown { phase: String, reason: String },
    #[error(transparent)]
    Smt(#[from] SmtError),
    #[error("{0}")]
    Inconsistent(String),
}

/// One event of a run, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    /// The learner returned `params` for the first `samples` pairs of the
    /// final sample set, using template generation `generation`.
    Learned { generation: usize, samples: usize, params: ParamAssignment },
    Infeasible { generation: usize, samples: usize },
    Refuted { generation: usize, params: ParamAssignment, counterexamples: Vec<Counterexample> },
    Refined { generation: usize, classes: usize },
    Verified { generation: usize },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CegisStats {
    pub iterations: usize,
    pub refinements: usize,
    pub counterexamples: usize,
    pub learn_time: Duration,
    pub verify_time: Duration,
    pub init_time: Duration,
    pub solver_queries: usize,
}

#[derive(Debug, Clone)]
pub struct LearnedBisimulation {
    pub template: ClassifierTemplate,
    pub ranking: RankingTemplate,
    pub params: ParamAssignment,
    pub samples: SampleSet,
    pub stats: CegisStats,
    /// Templates by generation; `templates[g]` is the one used in trace
    /// events tagged with generation `g`.
    pub templates: Vec<ClassifierTemplate>,
    pub trace: Vec<TraceEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    BudgetExhausted,
    RefinementLimit,
    SolverUnknown,
    Backend,
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureKind::BudgetExhausted => "budget-exhausted",
            FailureKind::RefinementLimit => "refinement-limit",
            FailureKind::SolverUnknown => "solver-unknown",
            FailureKind::Backend => "backend-error",
        })
    }
}

#[derive(Debug, Clone)]
pub struct FailureReport {
    pub kind: FailureKind,
    pub message: String,
    pub classes: usize,
    pub samples: SampleSet,
    pub stats: CegisStats,
    pub templates: Vec<ClassifierTemplate>,
    pub trace: Vec<TraceEvent>,
}

impl fmt::Display for FailureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} (after {} iterations, {} refinements, {} classes, {} samples)",
            self.kind,
            self.message,
            self.stats.iterations,
            self.stats.refinements,
            self.classes,
            self.samples.len()
        )
    }
}

impl std::error::Error for FailureReport {}

fn unknown(phase: impl Into<String>, reason: String) -> CegisError {
    CegisError::Unknown { phase: phase.into(), reason }
}

/// Cell oracle answering label-cell questions with the solver. Inconclusive
/// answers fall back to "satisfiable" and "not frozen", which only adds
/// nodes to the template.
pub struct SmtCells<'a> {
    pub sys: &'a SymbolicSystem,
    pub solver: &'a Solver,
}

impl SmtCells<'_> {
    fn cell(&self, f: &mut SmtFormula, s: &[IntExpr], literals: &[(usize, bool)]) {
        for &(i, pol) in literals {
            let p = self.sys.labels()[i].1.to_smt(s);
            f.assert(if pol { p } else { BoolExpr::not(p) });
        }
    }

    fn state(&self, f: &mut SmtFormula) -> Vec<IntExpr> {
        self.sys.vars().iter().map(|v| f.declare_int(format!("s_{v}"))).collect()
    }
}

impl CellOracle for SmtCells<'_> {
    fn satisfiable(&self, literals: &[(usize, bool)]) -> bool {
        let mut f = SmtFormula::new();
        let s = self.state(&mut f);
        self.cell(&mut f, &s, literals);
        !matches!(self.solver.check(&f), Ok(SmtResult::Unsat))
    }

    fn frozen(&self, literals: &[(usize, bool)]) -> bool {
        let mut f = SmtFormula::new();
        let s = self.state(&mut f);
        self.cell(&mut f, &s, literals);
        let moves = self
            .sys
            .successors_smt(&s)
            .into_iter()
            .flat_map(|succ| {
                succ.into_iter()
                    .zip(s.iter())
                    .map(|(a, b)| BoolExpr::not(BoolExpr::eq(a, b.clone())))
                    .collect::<Vec<_>>()
            })
            .collect();
        f.assert(BoolExpr::or(moves));
        matches!(self.solver.check(&f), Ok(SmtResult::Unsat))
    }
}

/// Initial template with cells decided by the solver.
pub fn initial_template(sys: &SymbolicSystem, solver: &Solver) -> ClassifierTemplate {
    ClassifierTemplate::initial(sys, &SmtCells { sys, solver })
}

fn read_int(m: &crate::smt::Model, e: &IntExpr) -> BigInt {
    e.eval(m).unwrap_or_default()
}

fn box_constraints(f: &mut SmtFormula, vars: &[IntExpr], bound: &BigInt) {
    let lo = IntExpr::Const(-bound.clone());
    let hi = IntExpr::Const(bound.clone());
    for v in vars {
        f.assert(BoolExpr::le(lo.clone(), v.clone()));
        f.assert(BoolExpr::le(v.clone(), hi.clone()));
    }
}

/// Bounds tried in order before the final query. The final query uses
/// `last`; ladder entries at or above it are skipped.
fn ladder(steps: &[u64], last: Option<&BigInt>) -> Vec<Option<BigInt>> {
    let mut out: Vec<Option<BigInt>> = steps
        .iter()
        .map(|&b| BigInt::from(b))
        .filter(|b| last.map_or(true, |l| b < l))
        .map(Some)
        .collect();
    out.push(last.cloned());
    out
}

/// Searches parameters satisfying the learner constraint on every sample.
///
/// Small coefficient bounds are tried first; `Infeasible` is only reported
/// when the query with the configured bound (unbounded by default) is
/// unsatisfiable.
pub fn learn(
    sys: &SymbolicSystem,
    template: &ClassifierTemplate,
    ranking: &RankingTemplate,
    samples: &[(State, State)],
    cfg: &CegisConfig,
    solver: &Solver,
) -> Result<LearnOutcome, CegisError> {
    if samples.is_empty() {
        return Ok(LearnOutcome::Found(ParamAssignment::zero(template, ranking)));
    }
    let mut f = SmtFormula::new();
    let splits: Vec<SplitExpr> = declare_splits(&mut f, template);
    let ranks: Vec<RankExpr> = declare_ranking(&mut f, ranking, ranking.pieces(template));
    let unknowns: Vec<IntExpr> = splits
        .iter()
        .flat_map(|t| t.coeffs.iter().chain(std::iter::once(&t.constant)))
        .chain(ranks.iter().flat_map(|r| r.cur.iter().chain(&r.other).chain(std::iter::once(&r.constant))))
        .cloned()
        .collect();
    let mut enc = SampleEncoder::new(sys, template, &splits);
    for (s, t) in samples {
        enc.assert_pair(&mut f, &ranks, s, t);
    }
    let steps = ladder(&cfg.learner_bounds, cfg.param_bound.as_ref());
    let last = steps.len() - 1;
    for (n, bound) in steps.into_iter().enumerate() {
        let mut q = f.clone();
        if let Some(b) = &bound {
            box_constraints(&mut q, &unknowns, b);
        }
        let m = match solver.check(&q)? {
            SmtResult::Sat(m) => m,
            SmtResult::Unsat if n == last => return Ok(LearnOutcome::Infeasible),
            SmtResult::Unknown(reason) if n == last => return Err(unknown("learning", reason)),
            _ => continue,
        };
        if !q.holds_under(&m) {
            return Err(CegisError::Inconsistent("learner model does not satisfy its query".into()));
        }
        let params = ParamAssignment {
            splits: splits
                .iter()
                .map(|t| {
                    AffineParams::new(
                        t.coeffs.iter().map(|c| read_int(&m, c)).collect(),
                        read_int(&m, &t.constant),
                    )
                })
                .collect(),
            ranking: ranks
                .iter()
                .map(|r| RankParams {
                    cur: r.cur.iter().map(|c| read_int(&m, c)).collect(),
                    other: r.other.iter().map(|c| read_int(&m, c)).collect(),
                    constant: read_int(&m, &r.constant),
                })
                .collect(),
        };
        return Ok(LearnOutcome::Found(params));
    }
    unreachable!("ladder always ends with the final query")
}

/// Checks the condition on the whole state space, one query per class.
/// Counterexamples are first searched inside small boxes; `Valid` needs the
/// unbounded query of every class to be unsatisfiable.
pub fn verify(
    sys: &SymbolicSystem,
    template: &ClassifierTemplate,
    params: &ParamAssignment,
    cfg: &CegisConfig,
    solver: &Solver,
) -> Result<VerifyOutcome, CegisError> {
    let results: Vec<Result<Option<Counterexample>, CegisError>> = template
        .classes()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|c| {
            let (f, s, t) = violation_query(sys, template, params, c);
            let steps = ladder(&cfg.counterexample_boxes, None);
            let last = steps.len() - 1;
            for (n, bound) in steps.into_iter().enumerate() {
                let mut q = f.clone();
                if let Some(b) = &bound {
                    box_constraints(&mut q, &s, b);
                    box_constraints(&mut q, &t, b);
                }
                let m = match solver.check(&q)? {
                    SmtResult::Sat(m) => m,
                    SmtResult::Unsat if n == last => return Ok(None),
                    SmtResult::Unknown(reason) if n == last => {
                        return Err(unknown(format!("verification of class {c}"), reason))
                    }
                    _ => continue,
                };
                let s: State = s.iter().map(|e| read_int(&m, e)).collect();
                let t: State = t.iter().map(|e| read_int(&m, e)).collect();
                let cs = template.classify(&params.splits, &s);
                let ct = template.classify(&params.splits, &t);
                if cs != c || ct != c || condition_holds(sys, template, params, params.rank_for(c), &s, &t) {
                    return Err(CegisError::Inconsistent(format!(
                        "verifier model for class {c} is not a concrete violation"
                    )));
                }
                return Ok(Some(Counterexample { class: c, s, t }));
            }
            unreachable!("ladder always ends with the final query")
        })
        .collect();
    let mut found = Vec::new();
    for r in results {
        if let Some(cex) = r? {
            found.push(cex);
        }
    }
    Ok(if found.is_empty() { VerifyOutcome::Valid } else { VerifyOutcome::Counterexamples(found) })
}

fn random_samples(sys: &SymbolicSystem, cfg: &CegisConfig, d: &mut SampleSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = cfg.sample_radius.max(0);
    let draw = |rng: &mut ChaCha8Rng| -> State {
        (0..sys.dim()).map(|_| BigInt::from(rng.gen_range(-r..=r))).collect()
    };
    for _ in 0..cfg.seed_samples {
        let s = draw(&mut rng);
        let t = draw(&mut rng);
        d.insert(s, t);
    }
}

/// Runs the loop from the solver-built initial template.
pub fn run(sys: &SymbolicSystem, cfg: &CegisConfig, solver: &Solver) -> Result<LearnedBisimulation, FailureReport> {
    let start = Instant::now();
    let template = initial_template(sys, solver);
    run_from(sys, template, cfg, solver, start.elapsed())
}

/// Runs the loop from a given initial template.
pub fn run_from(
    sys: &SymbolicSystem,
    template: ClassifierTemplate,
    cfg: &CegisConfig,
    solver: &Solver,
    init_time: Duration,
) -> Result<LearnedBisimulation, FailureReport> {
    let solver = solver.with_timeout(cfg.timeout);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .expect("thread pool");
    let queries_before = solver.query_count();
    let ranking = RankingTemplate { dim: sys.dim(), piecewise: cfg.piecewise };
    let mut st = LoopState {
        templates: vec![template],
        samples: SampleSet::new(),
        stats: CegisStats { init_time, ..CegisStats::default() },
        trace: Vec::new(),
    };
    random_samples(sys, cfg, &mut st.samples);

    let fail = |st: LoopState, kind: FailureKind, message: String| -> FailureReport {
        let mut stats = st.stats;
        stats.solver_queries = solver.query_count() - queries_before;
        FailureReport {
            kind,
            message,
            classes: st.templates.last().map(|t| t.num_classes()).unwrap_or(0),
            samples: st.samples,
            stats,
            templates: st.templates,
            trace: st.trace,
        }
    };
    let from_err = |st: LoopState, e: CegisError| -> FailureReport {
        let kind = match e {
            CegisError::Unknown { .. } => FailureKind::SolverUnknown,
            _ => FailureKind::Backend,
        };
        fail(st, kind, e.to_string())
    };

    loop {
        if st.stats.iterations >= cfg.max_iters {
            let msg = format!("no valid classifier within {} iterations", cfg.max_iters);
            return Err(fail(st, FailureKind::BudgetExhausted, msg));
        }
        st.stats.iterations += 1;
        let generation = st.templates.len() - 1;
        let template = st.templates[generation].clone();

        let t0 = Instant::now();
        let learned = pool.install(|| learn(sys, &template, &ranking, st.samples.pairs(), cfg, &solver));
        st.stats.learn_time += t0.elapsed();
        let params = match learned {
            Err(e) => return Err(from_err(st, e)),
            Ok(LearnOutcome::Infeasible) => {
                st.trace.push(TraceEvent::Infeasible { generation, samples: st.samples.len() });
                if st.stats.refinements >= cfg.max_refinements {
                    let msg = format!(
                        "template with {} classes cannot fit {} samples and the refinement limit {} is reached",
                        template.num_classes(),
                        st.samples.len(),
                        cfg.max_refinements
                    );
                    return Err(fail(st, FailureKind::RefinementLimit, msg));
                }
                let refined = template.refine();
                info!(classes = refined.num_classes(), "refining classifier template");
                st.stats.refinements += 1;
                st.trace.push(TraceEvent::Refined { generation: generation + 1, classes: refined.num_classes() });
                st.templates.push(refined);
                continue;
            }
            Ok(LearnOutcome::Found(p)) => p,
        };
        if let Some((s, t)) = st
            .samples
            .pairs()
            .iter()
            .find(|(s, t)| !sample_satisfied(sys, &template, &params, s, t))
        {
            let msg = format!("learned parameters violate sample ({s:?}, {t:?})");
            return Err(fail(st, FailureKind::Backend, msg));
        }
        st.trace.push(TraceEvent::Learned { generation, samples: st.samples.len(), params: params.clone() });

        let t0 = Instant::now();
        let verified = pool.install(|| verify(sys, &template, &params, cfg, &solver));
        st.stats.verify_time += t0.elapsed();
        match verified {
            Err(e) => return Err(from_err(st, e)),
            Ok(VerifyOutcome::Valid) => {
                st.trace.push(TraceEvent::Verified { generation });
                st.stats.solver_queries = solver.query_count() - queries_before;
                info!(
                    iterations = st.stats.iterations,
                    classes = template.num_classes(),
                    "learned a valid bisimulation"
                );
                return Ok(LearnedBisimulation {
                    template,
                    ranking,
                    params,
                    samples: st.samples,
                    stats: st.stats,
                    templates: st.templates,
                    trace: st.trace,
                });
            }
            Ok(VerifyOutcome::Counterexamples(cexs)) => {
                debug!(count = cexs.len(), "counterexamples");
                for c in &cexs {
                    if !st.samples.insert(c.s.clone(), c.t.clone()) {
                        let msg = format!("verifier repeated sample ({:?}, {:?})", c.s, c.t);
                        return Err(fail(st, FailureKind::Backend, msg));
                    }
                }
                st.stats.counterexamples += cexs.len();
                st.trace.push(TraceEvent::Refuted { generation, params, counterexamples: cexs });
            }
        }
    }
}

struct LoopState {
    templates: Vec<ClassifierTemplate>,
    samples: SampleSet,
    stats: CegisStats,
    trace: Vec<TraceEvent>,
}
