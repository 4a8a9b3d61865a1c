//! The local well-founded bisimulation condition for a pair of states,
//! symbolically and concretely.
//!
//! For a pair `(s, t)` in the same class and every branch `i`:
//! the `i`-th successor of `s` is matched by some successor of `t`, or `s`
//! stutters into its own class while the rank strictly drops (staying
//! nonnegative), or some successor of `t` stays in `t`'s class while the
//! rank relative to successor `i` of `s` strictly drops (staying nonnegative).

use std::collections::HashMap;

use num_bigint::BigInt;
use num_traits::Zero;

use crate::model::{State, SymbolicSystem};
use crate::smt::{BoolExpr, IntExpr, SmtFormula};
use crate::templates::{ClassId, ClassifierTemplate, ParamAssignment, RankExpr, RankParams, SplitExpr};

/// Class-membership literals of one state, indexed by class.
pub type Membership = Vec<BoolExpr>;

pub fn same_class(a: &Membership, b: &Membership) -> BoolExpr {
    BoolExpr::or(
        a.iter()
            .zip(b)
            .map(|(x, y)| BoolExpr::and(vec![x.clone(), y.clone()]))
            .collect(),
    )
}

/// Class-equality facts of a pair, independent of the ranking.
pub struct PairShape {
    /// `[i][j]`: successor `i` of `s` and successor `j` of `t` share a class.
    pub succ_match: Vec<Vec<BoolExpr>>,
    /// `[i]`: `s` and its successor `i` share a class.
    pub s_stays: Vec<BoolExpr>,
    /// `[j]`: `t` and its successor `j` share a class.
    pub t_stays: Vec<BoolExpr>,
}

impl PairShape {
    /// Builds the equalities, naming each non-constant one in `f`.
    pub fn new(
        f: &mut SmtFormula,
        s: &Membership,
        t: &Membership,
        s_succ: &[Membership],
        t_succ: &[Membership],
    ) -> PairShape {
        let succ_match = s_succ
            .iter()
            .map(|a| t_succ.iter().map(|b| f.define_bool("eq", same_class(a, b))).collect())
            .collect();
        let s_stays = s_succ.iter().map(|a| f.define_bool("eq", same_class(s, a))).collect();
        let t_stays = t_succ.iter().map(|b| f.define_bool("eq", same_class(t, b))).collect();
        PairShape { succ_match, s_stays, t_stays }
    }

    /// The condition under ranking `rank`.
    pub fn condition(
        &self,
        rank: &RankExpr,
        s: &[IntExpr],
        t: &[IntExpr],
        s_succ: &[Vec<IntExpr>],
        t_succ: &[Vec<IntExpr>],
    ) -> BoolExpr {
        let zero = IntExpr::constant(0);
        let r_ss = rank.apply(s, s);
        let mut conj = Vec::with_capacity(s_succ.len());
        for (i, si) in s_succ.iter().enumerate() {
            let matched = BoolExpr::or(self.succ_match[i].clone());
            if matched == BoolExpr::Const(true) {
                continue;
            }
            let r_ii = rank.apply(si, si);
            let stutter_s = BoolExpr::and(vec![
                self.s_stays[i].clone(),
                BoolExpr::lt(r_ii.clone(), r_ss.clone()),
                BoolExpr::ge(r_ii, zero.clone()),
            ]);
            let r_it = rank.apply(si, t);
            let stutter_t = BoolExpr::or(
                t_succ
                    .iter()
                    .enumerate()
                    .map(|(j, tj)| {
                        let r_ij = rank.apply(si, tj);
                        BoolExpr::and(vec![
                            self.t_stays[j].clone(),
                            BoolExpr::lt(r_ij.clone(), r_it.clone()),
                            BoolExpr::ge(r_ij, zero.clone()),
                        ])
                    })
                    .collect(),
            );
            conj.push(BoolExpr::or(vec![matched, stutter_s, stutter_t]));
        }
        BoolExpr::and(conj)
    }
}

fn consts(s: &[BigInt]) -> Vec<IntExpr> {
    s.iter().cloned().map(IntExpr::Const).collect()
}

/// Builds learner constraints for concrete sample pairs, caching the
/// class-membership literals of each concrete state.
pub struct SampleEncoder<'a> {
    sys: &'a SymbolicSystem,
    template: &'a ClassifierTemplate,
    splits: &'a [SplitExpr],
    cache: HashMap<State, Membership>,
}

impl<'a> SampleEncoder<'a> {
    pub fn new(
        sys: &'a SymbolicSystem,
        template: &'a ClassifierTemplate,
        splits: &'a [SplitExpr],
    ) -> SampleEncoder<'a> {
        SampleEncoder { sys, template, splits, cache: HashMap::new() }
    }

    fn membership(&mut self, f: &mut SmtFormula, s: &State) -> Membership {
        if let Some(m) = self.cache.get(s) {
            return m.clone();
        }
        let m = self.template.classify_shared(f, self.splits, &consts(s));
        self.cache.insert(s.clone(), m.clone());
        m
    }

    /// Asserts `f(s) = f(t) = c  ==>  condition(splits, rank_c, s, t)` for every
    /// class `c` (one shared ranking when `ranks` has a single entry).
    pub fn assert_pair(&mut self, f: &mut SmtFormula, ranks: &[RankExpr], s: &State, t: &State) {
        let s_succ = self.sys.successors(s);
        let t_succ = self.sys.successors(t);
        let ms = self.membership(f, s);
        let mt = self.membership(f, t);
        let ms_succ: Vec<Membership> = s_succ.iter().map(|x| self.membership(f, x)).collect();
        let mt_succ: Vec<Membership> = t_succ.iter().map(|x| self.membership(f, x)).collect();
        let shape = PairShape::new(f, &ms, &mt, &ms_succ, &mt_succ);
        let (se, te) = (consts(s), consts(t));
        let se_succ: Vec<Vec<IntExpr>> = s_succ.iter().map(|x| consts(x)).collect();
        let te_succ: Vec<Vec<IntExpr>> = t_succ.iter().map(|x| consts(x)).collect();
        if ranks.len() == 1 {
            let same = same_class(&ms, &mt);
            let cond = shape.condition(&ranks[0], &se, &te, &se_succ, &te_succ);
            f.assert(BoolExpr::implies(same, cond));
        } else {
            for (c, rank) in ranks.iter().enumerate() {
                let both = BoolExpr::and(vec![ms[c].clone(), mt[c].clone()]);
                if both == BoolExpr::Const(false) {
                    continue;
                }
                let cond = shape.condition(rank, &se, &te, &se_succ, &te_succ);
                f.assert(BoolExpr::implies(both, cond));
            }
        }
    }
}

/// Verifier query for class `c`: some pair in `c` violating the condition.
/// Returns the formula and the symbolic states `s`, `t`.
pub fn violation_query(
    sys: &SymbolicSystem,
    template: &ClassifierTemplate,
    params: &ParamAssignment,
    c: ClassId,
) -> (SmtFormula, Vec<IntExpr>, Vec<IntExpr>) {
    let mut f = SmtFormula::new();
    let s: Vec<IntExpr> = sys.vars().iter().map(|v| f.declare_int(format!("s_{v}"))).collect();
    let t: Vec<IntExpr> = sys.vars().iter().map(|v| f.declare_int(format!("t_{v}"))).collect();
    let splits = params.split_exprs();
    let name_succ = |f: &mut SmtFormula, x: &[IntExpr]| -> Vec<Vec<IntExpr>> {
        sys.successors_smt(x)
            .into_iter()
            .map(|succ| succ.into_iter().map(|e| f.define_int("succ", e)).collect())
            .collect()
    };
    let s_succ = name_succ(&mut f, &s);
    let t_succ = name_succ(&mut f, &t);
    let ms = template.classify_shared(&mut f, &splits, &s);
    let mt = template.classify_shared(&mut f, &splits, &t);
    let ms_succ: Vec<Membership> =
        s_succ.iter().map(|x| template.classify_shared(&mut f, &splits, x)).collect();
    let mt_succ: Vec<Membership> =
        t_succ.iter().map(|x| template.classify_shared(&mut f, &splits, x)).collect();
    f.assert(ms[c.0].clone());
    f.assert(mt[c.0].clone());
    let shape = PairShape::new(&mut f, &ms, &mt, &ms_succ, &mt_succ);
    let rank = params.rank_for(c).to_expr();
    let cond = shape.condition(&rank, &s, &t, &s_succ, &t_succ);
    f.assert(BoolExpr::not(cond));
    (f, s, t)
}

/// Concrete evaluation of the condition for `(s, t)` under `rank`.
pub fn condition_holds(
    sys: &SymbolicSystem,
    template: &ClassifierTemplate,
    params: &ParamAssignment,
    rank: &RankParams,
    s: &[BigInt],
    t: &[BigInt],
) -> bool {
    let class = |x: &[BigInt]| template.classify(&params.splits, x);
    let s_succ = sys.successors(s);
    let t_succ = sys.successors(t);
    let (cs, ct) = (class(s), class(t));
    let cs_succ: Vec<ClassId> = s_succ.iter().map(|x| class(x)).collect();
    let ct_succ: Vec<ClassId> = t_succ.iter().map(|x| class(x)).collect();
    let r_ss = rank.eval(s, s);
    s_succ.iter().enumerate().all(|(i, si)| {
        if ct_succ.contains(&cs_succ[i]) {
            return true;
        }
        let r_ii = rank.eval(si, si);
        if cs == cs_succ[i] && r_ii < r_ss && r_ii >= BigInt::zero() {
            return true;
        }
        let r_it = rank.eval(si, t);
        t_succ.iter().enumerate().any(|(j, tj)| {
            let r_ij = rank.eval(si, tj);
            ct == ct_succ[j] && r_ij < r_it && r_ij >= BigInt::zero()
        })
    })
}

/// Learner constraint for one sample: pairs in different classes are
/// unconstrained, pairs in class `c` must satisfy the condition under the
/// ranking of `c`.
pub fn sample_satisfied(
    sys: &SymbolicSystem,
    template: &ClassifierTemplate,
    params: &ParamAssignment,
    s: &[BigInt],
    t: &[BigInt],
) -> bool {
    let cs = template.classify(&params.splits, s);
    let ct = template.classify(&params.splits, t);
    cs != ct || condition_holds(sys, template, params, params.rank_for(cs), s, t)
}
