//! Parametric state classifiers (binary decision trees) and affine ranking
//! function templates.
//!
//! A classifier tree has parameter-free label predicates at the top, so any
//! two states reaching the same leaf agree on every label regardless of the
//! parameters. Below them sit affine decision nodes `w . s + c <= 0`
//! whose coefficients are learned. Leaves are the classes.

use std::fmt;

use num_bigint::BigInt;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CmpOp, Predicate, SymbolicSystem, Term};
use crate::smt::{BoolExpr, IntExpr, SmtFormula};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassId(pub usize);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Leaf(ClassId),
    /// Label predicate; `then` is taken when it holds.
    Fixed { label: String, predicate: Predicate, then: Box<Node>, otherwise: Box<Node> },
    /// Affine node `coeffs . s + constant <= 0`, parameters indexed by `id`.
    Param { id: usize, then: Box<Node>, otherwise: Box<Node> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifierTemplate {
    dim: usize,
    root: Node,
    classes: usize,
    params: usize,
}

/// One literal of a path condition through the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStep<'a> {
    Fixed(&'a Predicate, bool),
    Param(usize, bool),
}

/// Answers questions about conjunctions of label literals while the initial
/// template is laid out. Literals are `(label index, polarity)`.
pub trait CellOracle {
    /// Whether some state satisfies all literals.
    fn satisfiable(&self, literals: &[(usize, bool)]) -> bool;
    /// Whether every state satisfying the literals is a fixed point of all
    /// successor functions. Such a cell needs no parametric refinement.
    fn frozen(&self, literals: &[(usize, bool)]) -> bool;
}

/// Oracle that only folds literal `true`/`false` label predicates.
pub struct StructuralCells<'a>(pub &'a SymbolicSystem);

impl CellOracle for StructuralCells<'_> {
    fn satisfiable(&self, literals: &[(usize, bool)]) -> bool {
        literals.iter().all(|&(i, pol)| match &self.0.labels()[i].1 {
            Predicate::True => pol,
            Predicate::False => !pol,
            _ => true,
        })
    }

    fn frozen(&self, _literals: &[(usize, bool)]) -> bool {
        false
    }
}

fn fresh_param(next_param: &mut usize, next_class: &mut usize) -> Node {
    let id = *next_param;
    *next_param += 1;
    let a = ClassId(*next_class);
    let b = ClassId(*next_class + 1);
    *next_class += 2;
    Node::Param { id, then: Box::new(Node::Leaf(a)), otherwise: Box::new(Node::Leaf(b)) }
}

impl ClassifierTemplate {
    /// Lays out one fixed node per label that actually splits the current
    /// cell (in declaration order) and one parametric node below each
    /// observation cell that is not frozen.
    pub fn initial(sys: &SymbolicSystem, oracle: &dyn CellOracle) -> ClassifierTemplate {
        let mut next_param = 0;
        let mut next_class = 0;
        let mut path = Vec::new();
        let root = Self::layout(sys, oracle, 0, &mut path, &mut next_param, &mut next_class);
        ClassifierTemplate { dim: sys.dim(), root, classes: next_class, params: next_param }
    }

    fn layout(
        sys: &SymbolicSystem,
        oracle: &dyn CellOracle,
        label: usize,
        path: &mut Vec<(usize, bool)>,
        next_param: &mut usize,
        next_class: &mut usize,
    ) -> Node {
        if label == sys.labels().len() {
            if oracle.frozen(path) {
                let c = ClassId(*next_class);
                *next_class += 1;
                return Node::Leaf(c);
            }
            return fresh_param(next_param, next_class);
        }
        path.push((label, true));
        let pos = oracle.satisfiable(path);
        path.pop();
        path.push((label, false));
        let neg = oracle.satisfiable(path);
        path.pop();
        match (pos, neg) {
            (true, true) => {
                path.push((label, true));
                let then = Self::layout(sys, oracle, label + 1, path, next_param, next_class);
                path.pop();
                path.push((label, false));
                let otherwise = Self::layout(sys, oracle, label + 1, path, next_param, next_class);
                path.pop();
                let (name, predicate) = &sys.labels()[label];
                Node::Fixed {
                    label: name.clone(),
                    predicate: predicate.clone(),
                    then: Box::new(then),
                    otherwise: Box::new(otherwise),
                }
            }
            (true, false) | (false, true) => {
                path.push((label, pos));
                let n = Self::layout(sys, oracle, label + 1, path, next_param, next_class);
                path.pop();
                n
            }
            // Empty cell: keep a single (never inhabited) class.
            (false, false) => {
                let c = ClassId(*next_class);
                *next_class += 1;
                Node::Leaf(c)
            }
        }
    }

    /// Replaces every leaf by a fresh parametric node with two leaves.
    pub fn refine(&self) -> ClassifierTemplate {
        fn grow(n: &Node, next_param: &mut usize, next_class: &mut usize) -> Node {
            match n {
                Node::Leaf(_) => fresh_param(next_param, next_class),
                Node::Fixed { label, predicate, then, otherwise } => Node::Fixed {
                    label: label.clone(),
                    predicate: predicate.clone(),
                    then: Box::new(grow(then, next_param, next_class)),
                    otherwise: Box::new(grow(otherwise, next_param, next_class)),
                },
                Node::Param { id, then, otherwise } => {
                    let then = Box::new(grow(then, next_param, next_class));
                    let otherwise = Box::new(grow(otherwise, next_param, next_class));
                    Node::Param { id: *id, then, otherwise }
                }
            }
        }
        let mut next_param = self.params;
        let mut next_class = 0;
        let root = grow(&self.root, &mut next_param, &mut next_class);
        ClassifierTemplate { dim: self.dim, root, classes: next_class, params: next_param }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn num_params(&self) -> usize {
        self.params
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> {
        (0..self.classes).map(ClassId)
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Number of parametric layers on the deepest path.
    pub fn param_depth(&self) -> usize {
        fn depth(n: &Node) -> usize {
            match n {
                Node::Leaf(_) => 0,
                Node::Fixed { then, otherwise, .. } => depth(then).max(depth(otherwise)),
                Node::Param { then, otherwise, .. } => 1 + depth(then).max(depth(otherwise)),
            }
        }
        depth(&self.root)
    }

    /// Path conditions from the root to each leaf, indexed by class.
    pub fn paths(&self) -> Vec<Vec<PathStep<'_>>> {
        fn walk<'a>(n: &'a Node, path: &mut Vec<PathStep<'a>>, out: &mut [Vec<PathStep<'a>>]) {
            match n {
                Node::Leaf(c) => out[c.0] = path.clone(),
                Node::Fixed { predicate, then, otherwise, .. } => {
                    path.push(PathStep::Fixed(predicate, true));
                    walk(then, path, out);
                    path.pop();
                    path.push(PathStep::Fixed(predicate, false));
                    walk(otherwise, path, out);
                    path.pop();
                }
                Node::Param { id, then, otherwise } => {
                    path.push(PathStep::Param(*id, true));
                    walk(then, path, out);
                    path.pop();
                    path.push(PathStep::Param(*id, false));
                    walk(otherwise, path, out);
                    path.pop();
                }
            }
        }
        let mut out = vec![Vec::new(); self.classes];
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }

    pub fn classify(&self, splits: &[AffineParams], s: &[BigInt]) -> ClassId {
        let mut n = &self.root;
        loop {
            match n {
                Node::Leaf(c) => return *c,
                Node::Fixed { predicate, then, otherwise, .. } => {
                    n = if predicate.eval(s) { then } else { otherwise };
                }
                Node::Param { id, then, otherwise } => {
                    n = if splits[*id].holds(s) { then } else { otherwise };
                }
            }
        }
    }

    /// Class-membership formulas `in_c(splits, s)`, one per class. They are
    /// pairwise exclusive and jointly exhaustive.
    pub fn classify_symbolic(&self, splits: &[SplitExpr], s: &[IntExpr]) -> Vec<BoolExpr> {
        self.membership(s, |id, s| splits[id].le_zero(s))
    }

    /// Like [`Self::classify_symbolic`], but names each non-constant node
    /// predicate once in `f` so that the class formulas share it.
    pub fn classify_shared(
        &self,
        f: &mut SmtFormula,
        splits: &[SplitExpr],
        s: &[IntExpr],
    ) -> Vec<BoolExpr> {
        let mut nodes: Vec<Option<BoolExpr>> = vec![None; self.params];
        let mut fixed: Vec<(Predicate, BoolExpr)> = Vec::new();
        let mut lookup_fixed = |f: &mut SmtFormula, p: &Predicate| {
            if let Some((_, e)) = fixed.iter().find(|(q, _)| q == p) {
                return e.clone();
            }
            let e = f.define_bool("lab", p.to_smt(s));
            fixed.push((p.clone(), e.clone()));
            e
        };
        let paths = self.paths();
        let mut out = Vec::with_capacity(paths.len());
        for path in &paths {
            let mut lits = Vec::with_capacity(path.len());
            for step in path {
                let (e, pol) = match *step {
                    PathStep::Fixed(p, pol) => (lookup_fixed(f, p), pol),
                    PathStep::Param(id, pol) => {
                        if nodes[id].is_none() {
                            nodes[id] = Some(f.define_bool("node", splits[id].le_zero(s)));
                        }
                        (nodes[id].clone().unwrap(), pol)
                    }
                };
                lits.push(if pol { e } else { BoolExpr::not(e) });
            }
            out.push(BoolExpr::and(lits));
        }
        out
    }

    fn membership(&self, s: &[IntExpr], param: impl Fn(usize, &[IntExpr]) -> BoolExpr) -> Vec<BoolExpr> {
        self.paths()
            .iter()
            .map(|path| {
                BoolExpr::and(
                    path.iter()
                        .map(|step| match *step {
                            PathStep::Fixed(p, pol) => {
                                let e = p.to_smt(s);
                                if pol { e } else { BoolExpr::not(e) }
                            }
                            PathStep::Param(id, pol) => {
                                let e = param(id, s);
                                if pol { e } else { BoolExpr::not(e) }
                            }
                        })
                        .collect(),
                )
            })
            .collect()
    }

    /// Region of class `c` under concrete parameters, as a predicate over the
    /// system variables.
    pub fn region(&self, splits: &[AffineParams], c: ClassId) -> Predicate {
        let paths = self.paths();
        Predicate::and(
            paths[c.0]
                .iter()
                .map(|step| match *step {
                    PathStep::Fixed(p, true) => p.clone(),
                    PathStep::Fixed(p, false) => p.clone().negate(),
                    PathStep::Param(id, pol) => {
                        let lit = splits[id].as_predicate();
                        if pol { lit } else { lit.negate() }
                    }
                })
                .collect(),
        )
    }
}

/// Concrete affine node parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffineParams {
    pub coeffs: Vec<BigInt>,
    pub constant: BigInt,
}

impl AffineParams {
    pub fn new(coeffs: Vec<BigInt>, constant: BigInt) -> AffineParams {
        AffineParams { coeffs, constant }
    }

    pub fn zero(dim: usize) -> AffineParams {
        AffineParams { coeffs: vec![BigInt::zero(); dim], constant: BigInt::zero() }
    }

    pub fn value(&self, s: &[BigInt]) -> BigInt {
        self.coeffs.iter().zip(s).map(|(a, b)| a * b).sum::<BigInt>() + &self.constant
    }

    pub fn holds(&self, s: &[BigInt]) -> bool {
        self.value(s) <= BigInt::zero()
    }

    /// `affine <= 0`, folded to a constant when every coefficient is zero.
    pub fn as_predicate(&self) -> Predicate {
        if self.coeffs.iter().all(|c| c.is_zero()) {
            return if self.constant <= BigInt::zero() { Predicate::True } else { Predicate::False };
        }
        Predicate::cmp(CmpOp::Le, Term::affine(&self.coeffs, &self.constant), Term::constant(0))
    }

    pub fn to_expr(&self) -> SplitExpr {
        SplitExpr {
            coeffs: self.coeffs.iter().cloned().map(IntExpr::Const).collect(),
            constant: IntExpr::Const(self.constant.clone()),
        }
    }
}

/// Node parameters as SMT expressions: declared unknowns in the learner,
/// constants in the verifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitExpr {
    pub coeffs: Vec<IntExpr>,
    pub constant: IntExpr,
}

impl SplitExpr {
    pub fn le_zero(&self, s: &[IntExpr]) -> BoolExpr {
        let lhs = IntExpr::add(vec![IntExpr::dot(&self.coeffs, s), self.constant.clone()]);
        BoolExpr::le(lhs, IntExpr::constant(0))
    }
}

/// Declares fresh integer unknowns for every node of `template`.
pub fn declare_splits(f: &mut SmtFormula, template: &ClassifierTemplate) -> Vec<SplitExpr> {
    (0..template.num_params())
        .map(|id| SplitExpr {
            coeffs: (0..template.dim()).map(|i| f.declare_int(format!("th_{id}_{i}"))).collect(),
            constant: f.declare_int(format!("th_{id}_c")),
        })
        .collect()
}

/// Affine ranking template `r(s, t) = cur . s + other . t + constant`,
/// either one map for all classes or one per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankingTemplate {
    pub dim: usize,
    pub piecewise: bool,
}

impl RankingTemplate {
    pub fn pieces(&self, classifier: &ClassifierTemplate) -> usize {
        if self.piecewise {
            classifier.num_classes()
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankParams {
    pub cur: Vec<BigInt>,
    pub other: Vec<BigInt>,
    pub constant: BigInt,
}

impl RankParams {
    pub fn zero(dim: usize) -> RankParams {
        RankParams {
            cur: vec![BigInt::zero(); dim],
            other: vec![BigInt::zero(); dim],
            constant: BigInt::zero(),
        }
    }

    pub fn eval(&self, s: &[BigInt], t: &[BigInt]) -> BigInt {
        let a: BigInt = self.cur.iter().zip(s).map(|(x, y)| x * y).sum();
        let b: BigInt = self.other.iter().zip(t).map(|(x, y)| x * y).sum();
        a + b + &self.constant
    }

    pub fn to_expr(&self) -> RankExpr {
        RankExpr {
            cur: self.cur.iter().cloned().map(IntExpr::Const).collect(),
            other: self.other.iter().cloned().map(IntExpr::Const).collect(),
            constant: IntExpr::Const(self.constant.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankExpr {
    pub cur: Vec<IntExpr>,
    pub other: Vec<IntExpr>,
    pub constant: IntExpr,
}

impl RankExpr {
    /// `r(s, t)` as a linear term.
    pub fn apply(&self, s: &[IntExpr], t: &[IntExpr]) -> IntExpr {
        IntExpr::add(vec![
            IntExpr::dot(&self.cur, s),
            IntExpr::dot(&self.other, t),
            self.constant.clone(),
        ])
    }
}

pub fn declare_ranking(f: &mut SmtFormula, template: &RankingTemplate, pieces: usize) -> Vec<RankExpr> {
    (0..pieces)
        .map(|p| RankExpr {
            cur: (0..template.dim).map(|i| f.declare_int(format!("rank_{p}_s{i}"))).collect(),
            other: (0..template.dim).map(|i| f.declare_int(format!("rank_{p}_t{i}"))).collect(),
            constant: f.declare_int(format!("rank_{p}_c")),
        })
        .collect()
}

/// Concrete parameters for a classifier and its ranking functions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamAssignment {
    pub splits: Vec<AffineParams>,
    /// One entry for a global ranking, one per class when piecewise.
    pub ranking: Vec<RankParams>,
}

impl ParamAssignment {
    pub fn zero(template: &ClassifierTemplate, ranking: &RankingTemplate) -> ParamAssignment {
        ParamAssignment {
            splits: (0..template.num_params()).map(|_| AffineParams::zero(template.dim())).collect(),
            ranking: (0..ranking.pieces(template)).map(|_| RankParams::zero(template.dim())).collect(),
        }
    }

    /// Ranking map used for pairs in class `c`.
    pub fn rank_for(&self, c: ClassId) -> &RankParams {
        if self.ranking.len() == 1 {
            &self.ranking[0]
        } else {
            &self.ranking[c.0]
        }
    }

    pub fn split_exprs(&self) -> Vec<SplitExpr> {
        self.splits.iter().map(AffineParams::to_expr).collect()
    }

    pub fn is_complete_for(&self, template: &ClassifierTemplate, ranking: &RankingTemplate) -> bool {
        self.splits.len() == template.num_params()
            && self.splits.iter().all(|t| t.coeffs.len() == template.dim())
            && self.ranking.len() == ranking.pieces(template)
            && self
                .ranking
                .iter()
                .all(|r| r.cur.len() == template.dim() && r.other.len() == template.dim())
    }
}

mod bigint_json {
    //! Integers as JSON numbers when they fit in `i64`, strings otherwise.
    use num_bigint::BigInt;
    use num_traits::ToPrimitive;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Small(i64),
        Big(String),
    }

    pub fn to_repr(v: &BigInt) -> serde_json::Value {
        match v.to_i64() {
            Some(i) => serde_json::Value::from(i),
            None => serde_json::Value::from(v.to_string()),
        }
    }

    pub fn serialize<S: Serializer>(v: &[BigInt], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(to_repr).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigInt>, D::Error> {
        Vec::<Repr>::deserialize(d)?
            .into_iter()
            .map(|r| match r {
                Repr::Small(i) => Ok(BigInt::from(i)),
                Repr::Big(s) => s.parse().map_err(D::Error::custom),
            })
            .collect()
    }
}

/// JSON form of a tree node. Parametric nodes carry their coefficients
/// with the constant term last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeDoc {
    Leaf {
        class: usize,
    },
    Fixed {
        label: String,
        then: Box<NodeDoc>,
        #[serde(rename = "else")]
        otherwise: Box<NodeDoc>,
    },
    Param {
        #[serde(with = "bigint_json")]
        coeffs: Vec<BigInt>,
        then: Box<NodeDoc>,
        #[serde(rename = "else")]
        otherwise: Box<NodeDoc>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankDoc {
    #[serde(with = "bigint_json")]
    pub cur: Vec<BigInt>,
    #[serde(with = "bigint_json")]
    pub other: Vec<BigInt>,
    #[serde(with = "bigint_json")]
    pub constant: Vec<BigInt>,
}

/// Serialized learned classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierDoc {
    pub system: String,
    pub vars: Vec<String>,
    pub tree: NodeDoc,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ranking: Vec<RankDoc>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClassifierDocError {
    #[error("classifier was saved for variables {saved:?}, system declares {actual:?}")]
    VarMismatch { saved: Vec<String>, actual: Vec<String> },
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("parametric node has {found} coefficients, expected {expected}")]
    Arity { expected: usize, found: usize },
    #[error("class ids must be 0..{n} with no gaps or duplicates")]
    BadClasses { n: usize },
}

impl ClassifierDoc {
    pub fn new(
        sys: &SymbolicSystem,
        template: &ClassifierTemplate,
        params: &ParamAssignment,
    ) -> ClassifierDoc {
        fn conv(n: &Node, splits: &[AffineParams]) -> NodeDoc {
            match n {
                Node::Leaf(c) => NodeDoc::Leaf { class: c.0 },
                Node::Fixed { label, then, otherwise, .. } => NodeDoc::Fixed {
                    label: label.clone(),
                    then: Box::new(conv(then, splits)),
                    otherwise: Box::new(conv(otherwise, splits)),
                },
                Node::Param { id, then, otherwise } => {
                    let mut coeffs = splits[*id].coeffs.clone();
                    coeffs.push(splits[*id].constant.clone());
                    NodeDoc::Param {
                        coeffs,
                        then: Box::new(conv(then, splits)),
                        otherwise: Box::new(conv(otherwise, splits)),
                    }
                }
            }
        }
        ClassifierDoc {
            system: sys.name().to_string(),
            vars: sys.vars().to_vec(),
            tree: conv(template.root(), &params.splits),
            ranking: params
                .ranking
                .iter()
                .map(|r| RankDoc {
                    cur: r.cur.clone(),
                    other: r.other.clone(),
                    constant: vec![r.constant.clone()],
                })
                .collect(),
        }
    }

    /// Rebuilds the template and parameters against `sys`. A missing ranking
    /// section yields an empty ranking list.
    pub fn resolve(
        &self,
        sys: &SymbolicSystem,
    ) -> Result<(ClassifierTemplate, ParamAssignment), ClassifierDocError> {
        if self.vars != sys.vars() {
            return Err(ClassifierDocError::VarMismatch {
                saved: self.vars.clone(),
                actual: sys.vars().to_vec(),
            });
        }
        let dim = sys.dim();
        let mut splits = Vec::new();
        let mut seen = Vec::new();
        fn conv(
            d: &NodeDoc,
            sys: &SymbolicSystem,
            dim: usize,
            splits: &mut Vec<AffineParams>,
            seen: &mut Vec<usize>,
        ) -> Result<Node, ClassifierDocError> {
            Ok(match d {
                NodeDoc::Leaf { class } => {
                    seen.push(*class);
                    Node::Leaf(ClassId(*class))
                }
                NodeDoc::Fixed { label, then, otherwise } => {
                    let predicate = sys
                        .label(label)
                        .ok_or_else(|| ClassifierDocError::UnknownLabel(label.clone()))?
                        .clone();
                    Node::Fixed {
                        label: label.clone(),
                        predicate,
                        then: Box::new(conv(then, sys, dim, splits, seen)?),
                        otherwise: Box::new(conv(otherwise, sys, dim, splits, seen)?),
                    }
                }
                NodeDoc::Param { coeffs, then, otherwise } => {
                    if coeffs.len() != dim + 1 {
                        return Err(ClassifierDocError::Arity { expected: dim + 1, found: coeffs.len() });
                    }
                    let id = splits.len();
                    splits.push(AffineParams::new(coeffs[..dim].to_vec(), coeffs[dim].clone()));
                    Node::Param {
                        id,
                        then: Box::new(conv(then, sys, dim, splits, seen)?),
                        otherwise: Box::new(conv(otherwise, sys, dim, splits, seen)?),
                    }
                }
            })
        }
        let root = conv(&self.tree, sys, dim, &mut splits, &mut seen)?;
        let n = seen.len();
        let mut sorted = seen.clone();
        sorted.sort_unstable();
        if sorted != (0..n).collect::<Vec<_>>() {
            return Err(ClassifierDocError::BadClasses { n });
        }
        let ranking = self
            .ranking
            .iter()
            .map(|r| RankParams {
                cur: r.cur.clone(),
                other: r.other.clone(),
                constant: r.constant.first().cloned().unwrap_or_default(),
            })
            .collect();
        let params = splits.len();
        Ok((
            ClassifierTemplate { dim, root, classes: n, params },
            ParamAssignment { splits, ranking },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_system, state};

    const NESTED_LOOP: &str = "
        system nested_loop; vars x:int, y:int; branching 2;
        label xle0 := x <= 0; label xgt0 := x > 0;
        branch 1: x := if (x > 0 && 2*x <= y) then x - y else x,
                  y := if (x > 0 && 2*x > y) then y - x else y;
        branch 2: y := if (x > 0) then y - x else y;";

    /// Mirrors the observation structure of the running example by hand:
    /// `x<=0` and `x>0` are complementary and the `x<=0` cell is frozen.
    struct NestedLoopCells;
    impl CellOracle for NestedLoopCells {
        fn satisfiable(&self, lits: &[(usize, bool)]) -> bool {
            let le = lits.iter().find(|l| l.0 == 0).map(|l| l.1);
            let gt = lits.iter().find(|l| l.0 == 1).map(|l| l.1);
            !matches!((le, gt), (Some(a), Some(b)) if a == b)
        }
        fn frozen(&self, lits: &[(usize, bool)]) -> bool {
            lits.contains(&(0, true))
        }
    }

    fn nested_loop_template() -> (SymbolicSystem, ClassifierTemplate) {
        let sys = parse_system(NESTED_LOOP).unwrap();
        let t = ClassifierTemplate::initial(&sys, &NestedLoopCells);
        (sys, t)
    }

    fn split_2x_minus_y() -> Vec<AffineParams> {
        vec![AffineParams::new(vec![BigInt::from(2), BigInt::from(-1)], BigInt::zero())]
    }

    #[test]
    fn running_example_layout() {
        let (_, t) = nested_loop_template();
        assert_eq!(t.num_classes(), 3);
        assert_eq!(t.num_params(), 1);
        match t.root() {
            Node::Fixed { label, then, otherwise, .. } => {
                assert_eq!(label, "xle0");
                assert_eq!(**then, Node::Leaf(ClassId(0)));
                assert!(matches!(**otherwise, Node::Param { id: 0, .. }));
            }
            other => panic!("unexpected root {other:?}"),
        }
    }

    #[test]
    fn independent_labels_give_eight_classes() {
        let sys = parse_system(
            "system s; vars x:int, y:int; branching 1; label p := x > 0; label q := y > 0;",
        )
        .unwrap();
        let t = ClassifierTemplate::initial(&sys, &StructuralCells(&sys));
        assert_eq!(t.num_classes(), 8);
        assert_eq!(t.num_params(), 4);
    }

    #[test]
    fn trivially_true_label_gives_one_param_node() {
        let sys = parse_system("system s; vars x:int; branching 1; label t := true;").unwrap();
        let t = ClassifierTemplate::initial(&sys, &StructuralCells(&sys));
        assert_eq!(t.num_classes(), 2);
        assert!(matches!(t.root(), Node::Param { .. }));
    }

    #[test]
    fn refine_doubles_classes() {
        let (_, t) = nested_loop_template();
        let r = t.refine();
        assert_eq!(r.num_classes(), 6);
        assert_eq!(r.num_params(), 1 + 3);
        let sys = parse_system("system s; vars x:int; branching 1;").unwrap();
        let t2 = ClassifierTemplate::initial(&sys, &StructuralCells(&sys));
        assert_eq!(t2.num_classes(), 2);
        assert_eq!(t2.refine().refine().num_classes(), 8);
    }

    #[test]
    fn refine_from_zero_param_layers() {
        struct AllFrozen;
        impl CellOracle for AllFrozen {
            fn satisfiable(&self, _: &[(usize, bool)]) -> bool {
                true
            }
            fn frozen(&self, _: &[(usize, bool)]) -> bool {
                true
            }
        }
        let sys = parse_system("system s; vars x:int; branching 1; label p := x > 0;").unwrap();
        let t = ClassifierTemplate::initial(&sys, &AllFrozen);
        assert_eq!(t.param_depth(), 0);
        assert_eq!(t.num_classes(), 2);
        assert_eq!(t.refine().param_depth(), 1);
    }

    #[test]
    fn concrete_classification() {
        let (_, t) = nested_loop_template();
        let splits = split_2x_minus_y();
        assert_eq!(t.classify(&splits, &state(&[1, 2])), ClassId(1));
        assert_eq!(t.classify(&splits, &state(&[0, 0])), ClassId(0));
        assert_eq!(t.classify(&splits, &state(&[3, 2])), ClassId(2));
        // fixed top node decides regardless of splits
        let other = vec![AffineParams::new(vec![BigInt::from(5), BigInt::from(7)], BigInt::from(-3))];
        assert_eq!(t.classify(&other, &state(&[0, 0])), ClassId(0));
    }

    #[test]
    fn region_predicates() {
        let (sys, t) = nested_loop_template();
        let splits = split_2x_minus_y();
        let names = sys.vars();
        assert_eq!(t.region(&splits, ClassId(0)).display(names).to_string(), "x <= 0");
        assert_eq!(
            t.region(&splits, ClassId(1)).display(names).to_string(),
            "x > 0 && 2*x - y <= 0"
        );
        assert_eq!(
            t.region(&splits, ClassId(2)).display(names).to_string(),
            "x > 0 && 2*x - y > 0"
        );
    }

    #[test]
    fn rank_values() {
        let r = RankParams {
            cur: vec![BigInt::from(1), BigInt::zero()],
            other: vec![BigInt::zero(), BigInt::zero()],
            constant: BigInt::zero(),
        };
        assert_eq!(r.eval(&state(&[3, 8]), &state(&[1, 1])), BigInt::from(3));
        assert_eq!(RankParams::zero(2).eval(&state(&[3, 8]), &state(&[1, 1])), BigInt::zero());
        let r = RankParams {
            cur: vec![BigInt::from(1), BigInt::zero()],
            other: vec![BigInt::zero(), BigInt::from(1)],
            constant: BigInt::from(2),
        };
        assert_eq!(r.eval(&state(&[1, 1]), &state(&[2, 5])), BigInt::from(8));
        let s: Vec<IntExpr> = state(&[1, 1]).into_iter().map(IntExpr::Const).collect();
        let t: Vec<IntExpr> = state(&[2, 5]).into_iter().map(IntExpr::Const).collect();
        assert_eq!(r.to_expr().apply(&s, &t), IntExpr::constant(8));
    }

    #[test]
    fn json_roundtrip() {
        let (sys, t) = nested_loop_template();
        let params = ParamAssignment {
            splits: split_2x_minus_y(),
            ranking: vec![RankParams::zero(2); 3],
        };
        let doc = ClassifierDoc::new(&sys, &t, &params);
        let text = serde_json::to_string_pretty(&doc).unwrap();
        assert!(text.contains("\"kind\": \"param\""));
        let back: ClassifierDoc = serde_json::from_str(&text).unwrap();
        let (t2, p2) = back.resolve(&sys).unwrap();
        assert_eq!(t2, t);
        assert_eq!(p2, params);
    }

    #[test]
    fn json_rejects_unknown_label() {
        let (sys, t) = nested_loop_template();
        let params = ParamAssignment { splits: split_2x_minus_y(), ranking: vec![] };
        let mut doc = ClassifierDoc::new(&sys, &t, &params);
        if let NodeDoc::Fixed { label, .. } = &mut doc.tree {
            *label = "nope".into();
        }
        assert_eq!(doc.resolve(&sys).unwrap_err(), ClassifierDocError::UnknownLabel("nope".into()));
    }
}
