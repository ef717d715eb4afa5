//! Solving telescopic constraint trees.
//!
//! One left-to-right pass over the tree: quantifiers declare store entries,
//! equalities unify as they are met, `tell` pushes a scope frame that lasts
//! to the end of its telescope segment, and `ask` resolves against the
//! innermost frame. A generalisation region closes at the end of the segment
//! holding its `]gen` marker, since the bound term's nodes follow the marker
//! in that segment.

mod store;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use crate::constraints::{Constraint, Context, MetaVar, MonoType, NameSupply, PolyType, Scheme};
use crate::syntax::{Name, Term};
use crate::treegen::{
    build_tree, node_text, GenError, MetaSort, ScopeError, Solution, Telescope, TreeNode,
};
use crate::{Start, System};

pub use store::{Delta, FailureKind, Generalized, Mark, MetaStore, UnifyError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Failure {
    pub kind: FailureKind,
    /// Node indices interleaved with branch-child indices.
    pub path: Vec<usize>,
    /// The failing constraint with the store applied.
    pub constraint: Constraint,
    /// The innermost pair of types that did not unify.
    pub conflict: Option<(MonoType, MonoType)>,
    /// The most recent earlier constraint that solved a meta the failing
    /// constraint depends on.
    pub origin: Option<Origin>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Origin {
    pub path: Vec<usize>,
    /// As written in the tree, before solving.
    pub constraint: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.kind, &self.constraint) {
            (FailureKind::UnboundVariable, Constraint::Ask { name, .. }) => {
                write!(f, "unbound variable {name}")?
            }
            (kind, _) => write!(f, "{kind}")?,
        }
        write!(f, " at {}: {}", fmt_path(&self.path), self.constraint)?;
        if let Some((l, r)) = &self.conflict {
            write!(f, "; cannot unify {l} ~ {r}")?;
        }
        if let Some(o) = &self.origin {
            write!(f, "; fixed at {} by {}", fmt_path(&o.path), o.constraint)?;
        }
        Ok(())
    }
}

/// Traversal stopped at a node that needs a scheme nothing has provided.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stuck {
    pub path: Vec<usize>,
    pub constraint: Constraint,
}

impl fmt::Display for Stuck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "instantiation of unsolved scheme at {}: {}",
            fmt_path(&self.path),
            self.constraint
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ambiguity {
    /// The result with residual metas renamed to `a, b, ...`.
    pub result: Option<Solution>,
    /// Residual metas of the result, in first-occurrence order.
    pub unsolved: Vec<MetaVar>,
    pub stuck: Option<Stuck>,
    pub tree: Telescope,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Solved { result: Solution, tree: Telescope },
    Ambiguous(Ambiguity),
    Failed(Failure),
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Solved { result, .. } => write!(f, "{result}"),
            Outcome::Ambiguous(a) => match (&a.result, &a.stuck) {
                (_, Some(s)) => write!(f, "{s}"),
                (Some(r), None) => write!(f, "{r} (ambiguous: {} unsolved)", a.unsolved.len()),
                (None, None) => write!(f, "ambiguous"),
            },
            Outcome::Failed(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Sat,
    Unsat,
    Unknown,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Sat => 0,
            Verdict::Unsat => 1,
            Verdict::Unknown => 2,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Sat => "SAT",
            Verdict::Unsat => "UNSAT",
            Verdict::Unknown => "UNKNOWN",
        })
    }
}

pub fn classify(outcome: &Outcome) -> Verdict {
    match outcome {
        Outcome::Solved { .. } => Verdict::Sat,
        Outcome::Failed(_) => Verdict::Unsat,
        Outcome::Ambiguous(_) => Verdict::Unknown,
    }
}

/// The tree is not something the solver accepts.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Unscoped(#[from] ScopeError),
    #[error("{meta} quantified twice, again at {}", fmt_path(path))]
    Redeclared { meta: MetaVar, path: Vec<usize> },
    #[error("flat constraint `{kind}` at {} has no place in a tree", fmt_path(path))]
    FlatInTree { kind: &'static str, path: Vec<usize> },
    #[error("unbalanced generalisation region at {}", fmt_path(path))]
    UnbalancedGen { path: Vec<usize> },
    #[error("the root telescope has no quantifier for the result")]
    NoResult,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum InferError {
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Clone, Debug, Default)]
pub struct SolveOptions {
    pub trace: bool,
    /// Unbound names become requirements instead of failures.
    pub open_context: bool,
}

#[derive(Clone, Debug)]
pub struct SolveRun {
    pub outcome: Outcome,
    pub trace: Vec<String>,
    /// The store after the traversal.
    pub store: MetaStore,
    /// Requirement metas for names the context did not bind.
    pub requirements: BTreeMap<Name, MetaVar>,
}

pub fn fmt_path(path: &[usize]) -> String {
    let parts: Vec<String> = path.iter().map(|i| i.to_string()).collect();
    format!("[{}]", parts.join(","))
}

struct Frame {
    name: Name,
    scheme: Scheme,
}

struct Open {
    mark: Mark,
    frames: usize,
    path: Vec<usize>,
}

struct Pending {
    open: Open,
    scheme: Scheme,
    mono: MonoType,
    path: Vec<usize>,
}

enum Stop {
    Failed(Failure),
    Stuck(Stuck),
    Error(SolveError),
}

type Step<T = ()> = Result<T, Stop>;

struct Solver {
    store: MetaStore,
    frames: Vec<Frame>,
    open_context: bool,
    requirements: BTreeMap<Name, MetaVar>,
    avoid: BTreeSet<Name>,
    retired: HashMap<MetaVar, (Option<MonoType>, Option<PolyType>)>,
    trace: Option<Vec<String>>,
    /// Per solved meta: the step that solved it, where, and to what.
    solved_by: HashMap<MetaVar, (usize, Origin, MonoType)>,
    steps: usize,
}

impl Solver {
    fn log(&mut self, path: &[usize], node: &str, action: &str) {
        let deltas = self.store.take_deltas();
        self.steps += 1;
        for d in &deltas {
            if let Delta::Solved(m, t) = d {
                let origin = Origin {
                    path: path.to_vec(),
                    constraint: node.to_string(),
                };
                self.solved_by.insert(*m, (self.steps, origin, t.clone()));
            }
        }
        if let Some(trace) = &mut self.trace {
            let mut line = format!("{} {} | {}", fmt_path(path), node, action);
            if !deltas.is_empty() {
                let ds: Vec<String> = deltas.iter().map(|d| d.to_string()).collect();
                line.push_str(" | ");
                line.push_str(&ds.join(", "));
            }
            trace.push(line);
        }
    }

    /// The latest step that solved a meta reachable from `c`.
    fn origin(&self, c: &Constraint) -> Option<Origin> {
        let mut todo = c.meta_occurrences();
        let mut seen = BTreeSet::new();
        let mut best: Option<&(usize, Origin, MonoType)> = None;
        while let Some(m) = todo.pop() {
            if !seen.insert(m) {
                continue;
            }
            if let Some(entry) = self.solved_by.get(&m) {
                todo.extend(entry.2.metas());
                if best.is_none_or(|b| entry.0 > b.0) {
                    best = Some(entry);
                }
            }
        }
        best.map(|b| b.1.clone())
    }

    fn zonk_constraint(&self, c: &Constraint) -> Constraint {
        c.map_types(&mut |t| self.store.zonk(t))
    }

    fn unify_at(
        &mut self,
        a: &MonoType,
        b: &MonoType,
        c: &Constraint,
        path: &[usize],
    ) -> Step {
        self.store.unify(a, b).map_err(|e| {
            Stop::Failed(Failure {
                kind: e.kind,
                path: path.to_vec(),
                constraint: self.zonk_constraint(c),
                conflict: Some((e.left, e.right)),
                origin: self.origin(c),
            })
        })
    }

    fn scheme_mismatch(&self, want: &PolyType, got: &PolyType, c: &Constraint, path: &[usize]) -> Stop {
        Stop::Failed(Failure {
            kind: FailureKind::Mismatch,
            path: path.to_vec(),
            constraint: self.zonk_constraint(c),
            conflict: Some((want.body.clone(), got.body.clone())),
            origin: self.origin(c),
        })
    }

    /// The scheme a scheme position currently stands for, if known.
    fn resolve(&self, s: &Scheme) -> Option<PolyType> {
        match s {
            Scheme::Known(p) => Some(self.store.zonk_poly(p)),
            Scheme::Meta(m) => self.store.scheme(*m).map(|p| self.store.zonk_poly(p)),
        }
    }

    fn segment(&mut self, t: &Telescope, path: &mut Vec<usize>) -> Step {
        let height = self.frames.len();
        let mut opens: Vec<Open> = Vec::new();
        let mut pending: Vec<Pending> = Vec::new();
        for (i, node) in t.nodes.iter().enumerate() {
            path.push(i);
            match node {
                TreeNode::Quantify { meta, sort, .. } => {
                    if self.store.contains(*meta) {
                        return Err(Stop::Error(SolveError::Redeclared {
                            meta: *meta,
                            path: path.clone(),
                        }));
                    }
                    self.store.declare(*meta, *sort);
                    self.log(path, &node_text(node), "declare");
                }
                TreeNode::Constr(c) => self.constraint(c, path, &mut opens, &mut pending)?,
                TreeNode::Branch(children) => {
                    self.log(path, &node_text(node), "branch");
                    for (k, child) in children.iter().enumerate() {
                        path.push(k);
                        self.segment(child, path)?;
                        path.pop();
                    }
                }
            }
            path.pop();
        }
        if let Some(open) = opens.pop() {
            return Err(Stop::Error(SolveError::UnbalancedGen { path: open.path }));
        }
        while let Some(p) = pending.pop() {
            self.close(p)?;
        }
        self.frames.truncate(height);
        Ok(())
    }

    fn constraint(
        &mut self,
        c: &Constraint,
        path: &[usize],
        opens: &mut Vec<Open>,
        pending: &mut Vec<Pending>,
    ) -> Step {
        let text = c.to_string();
        match c {
            Constraint::EqTy(l, r) => {
                self.unify_at(l, r, c, path)?;
                self.log(path, &text, "unify");
            }
            Constraint::DupTy { src, out1, out2 } => {
                self.unify_at(out1, src, c, path)?;
                self.unify_at(out2, src, c, path)?;
                self.log(path, &text, "copy");
            }
            Constraint::Tell { name, scheme } => {
                self.frames.push(Frame {
                    name: name.clone(),
                    scheme: scheme.clone(),
                });
                self.log(path, &text, &format!("bind {name}"));
            }
            Constraint::Ask { name, scheme } => {
                self.ask(name, scheme, c, path)?;
                self.log(path, &text, &format!("lookup {name}"));
            }
            Constraint::Inst { scheme, target } => {
                let Some(s) = self.resolve(scheme) else {
                    return Err(Stop::Stuck(Stuck {
                        path: path.to_vec(),
                        constraint: self.zonk_constraint(c),
                    }));
                };
                let inst = self.store.instantiate(&s);
                self.unify_at(target, &inst, c, path)?;
                self.log(path, &text, "instantiate");
            }
            Constraint::GenOpen => {
                let mark = self.store.mark();
                opens.push(Open {
                    mark,
                    frames: self.frames.len(),
                    path: path.to_vec(),
                });
                self.log(path, &text, "open region");
            }
            Constraint::GenClose { scheme, mono } => {
                let Some(open) = opens.pop() else {
                    return Err(Stop::Error(SolveError::UnbalancedGen {
                        path: path.to_vec(),
                    }));
                };
                pending.push(Pending {
                    open,
                    scheme: scheme.clone(),
                    mono: mono.clone(),
                    path: path.to_vec(),
                });
                self.log(path, &text, "close at segment end");
            }
            Constraint::InCtx { .. }
            | Constraint::ExtendCtx { .. }
            | Constraint::DupCtx { .. }
            | Constraint::GenInCtx { .. } => {
                return Err(Stop::Error(SolveError::FlatInTree {
                    kind: c.kind(),
                    path: path.to_vec(),
                }))
            }
        }
        Ok(())
    }

    fn ask(&mut self, name: &Name, target: &Scheme, c: &Constraint, path: &[usize]) -> Step {
        let found = match self.frames.iter().rev().find(|f| &f.name == name) {
            Some(f) => f.scheme.clone(),
            None if self.open_context => {
                let req = match self.requirements.get(name) {
                    Some(m) => *m,
                    None => {
                        let m = self.store.declare_front();
                        self.requirements.insert(name.clone(), m);
                        m
                    }
                };
                Scheme::mono(MonoType::Meta(req))
            }
            None => {
                return Err(Stop::Failed(Failure {
                    kind: FailureKind::UnboundVariable,
                    path: path.to_vec(),
                    constraint: self.zonk_constraint(c),
                    conflict: None,
                    origin: None,
                }))
            }
        };
        let stuck = || {
            Stop::Stuck(Stuck {
                path: path.to_vec(),
                constraint: c.clone(),
            })
        };
        let found = self.resolve(&found).ok_or_else(stuck)?;
        match target {
            Scheme::Known(want) if want.is_mono() => {
                let got = if found.is_mono() {
                    found.body
                } else {
                    self.store.instantiate(&found)
                };
                self.unify_at(&want.body, &got, c, path)
            }
            Scheme::Known(want) => {
                let want = self.store.zonk_poly(want);
                if want.canonical() == found.canonical() {
                    Ok(())
                } else {
                    Err(self.scheme_mismatch(&want, &found, c, path))
                }
            }
            Scheme::Meta(sigma) => match self.store.scheme(*sigma).cloned() {
                Some(have) => {
                    let have = self.store.zonk_poly(&have);
                    if have.canonical() == found.canonical() {
                        Ok(())
                    } else {
                        Err(self.scheme_mismatch(&have, &found, c, path))
                    }
                }
                None => {
                    self.store.solve_scheme(*sigma, found);
                    Ok(())
                }
            },
        }
    }

    fn close(&mut self, p: Pending) -> Step {
        let mut keep: BTreeSet<MetaVar> = BTreeSet::new();
        for f in &self.frames[..p.open.frames] {
            if let Some(s) = self.resolve(&f.scheme) {
                keep.extend(s.metas());
            }
            if let Scheme::Known(s) = &f.scheme {
                keep.extend(self.store.zonk_poly(s).metas());
            }
        }
        for m in self.requirements.values() {
            keep.extend(self.store.zonk(&MonoType::Meta(*m)).metas());
        }
        let g = self
            .store
            .generalize(p.open.mark, &p.mono, &keep, &self.avoid);
        let to_rigid: HashMap<MetaVar, MonoType> = g
            .quantified
            .iter()
            .map(|(m, n)| (*m, MonoType::Rigid(n.clone())))
            .collect();
        for (sol, sch) in self.retired.values_mut() {
            if let Some(s) = sol {
                *s = s.subst_metas(&to_rigid);
            }
            if let Some(p) = sch {
                *p = store::subst_poly(p, &to_rigid);
            }
        }
        for (m, _, sol, sch) in g.retired {
            self.retired.insert(m, (sol, sch));
        }
        let c = Constraint::GenClose {
            scheme: p.scheme.clone(),
            mono: p.mono.clone(),
        };
        match &p.scheme {
            Scheme::Meta(sigma) => match self.store.scheme(*sigma).cloned() {
                Some(have) if have.canonical() != g.scheme.canonical() => {
                    return Err(self.scheme_mismatch(&have, &g.scheme, &c, &p.path))
                }
                Some(_) => {}
                None => self.store.solve_scheme(*sigma, g.scheme.clone()),
            },
            Scheme::Known(want) => {
                let want = self.store.zonk_poly(want);
                if want.canonical() != g.scheme.canonical() {
                    return Err(self.scheme_mismatch(&want, &g.scheme, &c, &p.path));
                }
            }
        }
        self.log(&p.path, &c.to_string(), &format!("generalise {}", g.scheme));
        Ok(())
    }

    /// Final value of a tree quantifier, if it is fully determined.
    fn annotation(&self, m: MetaVar, sort: MetaSort) -> Option<Solution> {
        let (sol, sch) = match self.retired.get(&m) {
            Some((sol, sch)) => (
                sol.as_ref().map(|t| self.store.zonk(t)),
                sch.as_ref().map(|p| self.store.zonk_poly(p)),
            ),
            None if self.store.contains(m) => (
                Some(self.store.zonk(&MonoType::Meta(m))),
                self.store.scheme(m).map(|p| self.store.zonk_poly(p)),
            ),
            None => (None, None),
        };
        match sort {
            MetaSort::Mono => sol.filter(|t| t.metas().is_empty()).map(Solution::Mono),
            MetaSort::Poly => sch.filter(|p| p.metas().is_empty()).map(Solution::Poly),
        }
    }

    fn annotate(&self, t: &Telescope) -> Telescope {
        Telescope {
            prefix: t.prefix.clone(),
            nodes: t
                .nodes
                .iter()
                .map(|n| match n {
                    TreeNode::Quantify { meta, sort, .. } => TreeNode::Quantify {
                        meta: *meta,
                        sort: *sort,
                        solution: self.annotation(*meta, *sort),
                    },
                    TreeNode::Constr(c) => TreeNode::Constr(c.clone()),
                    TreeNode::Branch(cs) => {
                        TreeNode::Branch(cs.iter().map(|c| self.annotate(c)).collect())
                    }
                })
                .collect(),
        }
    }
}

/// Renames the given metas to fresh rigid names, avoiding names already in
/// `t`.
fn rename_residual(t: &Solution, metas: &[MetaVar]) -> Solution {
    let avoid: BTreeSet<Name> = match t {
        Solution::Mono(m) => m.rigids().into_iter().collect(),
        Solution::Poly(p) => p.body.rigids().into_iter().chain(p.bound.clone()).collect(),
    };
    let mut names = NameSupply::avoiding(avoid);
    let map: HashMap<MetaVar, MonoType> = metas
        .iter()
        .map(|m| (*m, MonoType::Rigid(names.next_name())))
        .collect();
    match t {
        Solution::Mono(m) => Solution::Mono(m.subst_metas(&map)),
        Solution::Poly(p) => Solution::Poly(store::subst_poly(p, &map).canonical()),
    }
}

fn rigids_of_tree(tree: &Telescope) -> BTreeSet<Name> {
    let mut out: BTreeSet<Name> = tree
        .prefix
        .as_ref()
        .map(|c| c.entries.iter().flat_map(|(_, s)| s.body.rigids()).collect())
        .unwrap_or_default();
    for c in tree.constraints() {
        let mut grab = |t: &MonoType| {
            out.extend(t.rigids());
            t.clone()
        };
        c.map_types(&mut grab);
    }
    out
}

pub fn solve_tree(tree: &Telescope) -> Result<Outcome, SolveError> {
    solve_tree_with(tree, &SolveOptions::default()).map(|r| r.outcome)
}

pub fn solve_tree_with(tree: &Telescope, opts: &SolveOptions) -> Result<SolveRun, SolveError> {
    tree.check_scope()?;
    let (result, result_sort) = tree.result_meta().ok_or(SolveError::NoResult)?;
    let next = tree.max_meta().map_or(0, |m| m + 1);
    let mut s = Solver {
        store: MetaStore::new(next),
        frames: Vec::new(),
        open_context: opts.open_context,
        requirements: BTreeMap::new(),
        avoid: rigids_of_tree(tree),
        retired: HashMap::new(),
        trace: opts.trace.then(Vec::new),
        solved_by: HashMap::new(),
        steps: 0,
    };
    if let Some(ctx) = &tree.prefix {
        for (name, scheme) in &ctx.entries {
            s.frames.push(Frame {
                name: name.clone(),
                scheme: Scheme::Known(scheme.clone()),
            });
        }
    }
    let stop = s.segment(tree, &mut Vec::new()).err();
    let annotated = s.annotate(tree);
    let outcome = match stop {
        Some(Stop::Error(e)) => return Err(e),
        Some(Stop::Failed(f)) => Outcome::Failed(f),
        Some(Stop::Stuck(st)) => Outcome::Ambiguous(Ambiguity {
            result: None,
            unsolved: Vec::new(),
            stuck: Some(st),
            tree: annotated,
        }),
        None => {
            let value = match result_sort {
                MetaSort::Mono => Some(Solution::Mono(s.store.zonk(&MonoType::Meta(result)))),
                MetaSort::Poly => s
                    .store
                    .scheme(result)
                    .map(|p| Solution::Poly(s.store.zonk_poly(p).canonical())),
            };
            match value {
                None => Outcome::Ambiguous(Ambiguity {
                    result: None,
                    unsolved: vec![result],
                    stuck: None,
                    tree: annotated,
                }),
                Some(v) => {
                    let residual = match &v {
                        Solution::Mono(t) => t.metas(),
                        Solution::Poly(p) => p.metas(),
                    };
                    if residual.is_empty() {
                        Outcome::Solved {
                            result: v,
                            tree: annotated,
                        }
                    } else {
                        Outcome::Ambiguous(Ambiguity {
                            result: Some(rename_residual(&v, &residual)),
                            unsolved: residual,
                            stuck: None,
                            tree: annotated,
                        })
                    }
                }
            }
        }
    };
    let _ = s.store.take_deltas();
    Ok(SolveRun {
        outcome,
        trace: s.trace.unwrap_or_default(),
        store: s.store,
        requirements: s.requirements,
    })
}

/// Synthesis: context and term known, type produced.
pub fn infer(t: &Term, ctx: &Context, system: System, start: Start) -> Result<Outcome, InferError> {
    let tree = build_tree(t, ctx, system, start)?;
    Ok(solve_tree(&tree)?)
}

/// Checking: inference followed by an equality with the expected type at the
/// end of the root telescope.
pub fn check(
    t: &Term,
    ctx: &Context,
    expected: &MonoType,
    system: System,
    start: Start,
) -> Result<Outcome, InferError> {
    let tree = check_tree(t, ctx, expected, system, start)?;
    Ok(solve_tree(&tree)?)
}

/// The tree `check` solves.
pub fn check_tree(
    t: &Term,
    ctx: &Context,
    expected: &MonoType,
    system: System,
    start: Start,
) -> Result<Telescope, GenError> {
    let mut tree = build_tree(t, ctx, system, start)?;
    if let Some(r) = tree.result_mono() {
        tree.nodes
            .push(TreeNode::Constr(Constraint::EqTy(MonoType::Meta(r), expected.clone())));
    }
    Ok(tree)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FreeVars {
    /// The result type and one requirement per free name, sorted by name,
    /// with metas renamed `a, b, ...` in order of appearance, result first.
    Found {
        result: MonoType,
        requirements: Vec<(Name, MonoType)>,
    },
    Failed(Failure),
    Stuck(Stuck),
}

impl FreeVars {
    pub fn verdict(&self) -> Verdict {
        match self {
            FreeVars::Found { .. } => Verdict::Sat,
            FreeVars::Failed(_) => Verdict::Unsat,
            FreeVars::Stuck(_) => Verdict::Unknown,
        }
    }
}

/// Free-variable analysis: solves with an open, empty root context. Each
/// unbound name gets one shared requirement, so all its uses must agree.
pub fn free_vars(t: &Term, system: System) -> Result<FreeVars, InferError> {
    let tree = build_tree(t, &Context::empty(), system, Start::Mono)?;
    let run = solve_tree_with(
        &tree,
        &SolveOptions {
            trace: false,
            open_context: true,
        },
    )?;
    Ok(match run.outcome {
        Outcome::Failed(f) => FreeVars::Failed(f),
        Outcome::Ambiguous(Ambiguity { stuck: Some(s), .. }) => FreeVars::Stuck(s),
        _ => {
            let result_meta = tree.result_mono().ok_or(SolveError::NoResult)?;
            let result = run.store.zonk(&MonoType::Meta(result_meta));
            let reqs: Vec<(Name, MonoType)> = run
                .requirements
                .iter()
                .map(|(n, m)| (n.clone(), run.store.zonk(&MonoType::Meta(*m))))
                .collect();
            let mut order = result.metas();
            for (_, t) in &reqs {
                for m in t.metas() {
                    if !order.contains(&m) {
                        order.push(m);
                    }
                }
            }
            let mut avoid: BTreeSet<Name> = result.rigids().into_iter().collect();
            for (_, t) in &reqs {
                avoid.extend(t.rigids());
            }
            let mut names = NameSupply::avoiding(avoid);
            let map: HashMap<MetaVar, MonoType> = order
                .into_iter()
                .map(|m| (m, MonoType::Rigid(names.next_name())))
                .collect();
            FreeVars::Found {
                result: result.subst_metas(&map),
                requirements: reqs
                    .into_iter()
                    .map(|(n, t)| (n, t.subst_metas(&map)))
                    .collect(),
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_context, parse_mono, parse_term};
    use crate::treegen::build_tree_stlc;

    fn stlc(term: &str, ctx: &str) -> Outcome {
        let ctx = parse_context(ctx).unwrap();
        infer(&parse_term(term).unwrap(), &ctx, System::Stlc, Start::Mono).unwrap()
    }

    fn hm(term: &str, ctx: &str) -> Outcome {
        let ctx = parse_context(ctx).unwrap();
        infer(&parse_term(term).unwrap(), &ctx, System::Hm, Start::Poly).unwrap()
    }

    fn failure(o: &Outcome) -> &Failure {
        match o {
            Outcome::Failed(f) => f,
            other => panic!("expected a failure, got {other}"),
        }
    }

    #[test]
    fn worked_example_with_context() {
        let o = stlc("(\\x. x) y", "y : Int");
        assert_eq!(o.to_string(), "Int");
        assert_eq!(classify(&o), Verdict::Sat);
    }

    #[test]
    fn worked_example_unbound() {
        let o = stlc("(\\x. x) y", "");
        let f = failure(&o);
        assert_eq!(f.kind, FailureKind::UnboundVariable);
        assert_eq!(f.path, vec![4, 1, 0]);
        assert_eq!(classify(&o), Verdict::Unsat);
    }

    #[test]
    fn identity_is_ambiguous_in_stlc() {
        let o = stlc("\\x. x", "");
        assert_eq!(o.to_string(), "a -> a (ambiguous: 1 unsolved)");
        assert_eq!(classify(&o), Verdict::Unknown);
    }

    #[test]
    fn self_application_occurs() {
        assert_eq!(failure(&stlc("\\x. x x", "")).kind, FailureKind::OccursCheck);
        assert_eq!(failure(&hm("\\x. x x", "")).kind, FailureKind::OccursCheck);
    }

    #[test]
    fn solved_tree_is_annotated() {
        let Outcome::Solved { tree, .. } = stlc("(\\x. x) y", "y : Int") else {
            panic!()
        };
        assert_eq!(
            crate::treegen::render_text(&tree).lines().nth(1),
            Some("exists t0 := Int")
        );
        let mut all = true;
        tree.walk(&mut |_, n| {
            if let TreeNode::Quantify { solution, .. } = n {
                all &= solution.is_some();
            }
        });
        assert!(all);
    }

    #[test]
    fn let_polymorphism() {
        assert_eq!(hm("let id = \\x. x in id id", "").to_string(), "forall a. a -> a");
        assert_eq!(
            hm("let id = \\x. x in \\y. id (id y)", "").to_string(),
            "forall a. a -> a"
        );
    }

    #[test]
    fn scoped_generalisation() {
        let o = hm("\\y. let f = \\x. y in f", "");
        assert_eq!(o.to_string(), "forall a b. a -> b -> a");
        // f is polymorphic in x but not in y
        let o = hm("\\y. let f = \\x. y in f (f one)", "one : Int");
        assert_eq!(o.to_string(), "forall a. a -> a");
        let o = hm("\\y. let f = \\x. y in (\\u. f) (y one)", "one : Int");
        assert!(matches!(o, Outcome::Solved { .. }), "{o}");
    }

    #[test]
    fn generalisation_annotation_names_quantified_metas() {
        let ctx = Context::empty();
        let tree = crate::treegen::build_tree_hm(
            &parse_term("let id = \\x. x in id").unwrap(),
            &ctx,
            Start::Mono,
        );
        let Outcome::Ambiguous(a) = solve_tree(&tree).unwrap() else {
            panic!()
        };
        let text = crate::treegen::render_text(&a.tree);
        assert!(text.contains("exists s1 := forall a. a -> a"), "{text}");
    }

    #[test]
    fn polymorphic_context_entries() {
        let o = hm(
            "pair (id one) (id true)",
            "pair : forall a b. a -> b -> a, id : forall a. a -> a, true : Bool",
        );
        assert!(matches!(o, Outcome::Failed(ref f) if f.kind == FailureKind::UnboundVariable));
        let o = hm(
            "pair (id one) (id true)",
            "pair : forall a b. a -> b -> a, id : forall a. a -> a, true : Bool, one : Int",
        );
        assert_eq!(o.to_string(), "Int");
    }

    #[test]
    fn free_rigids_in_context_are_constants() {
        let o = hm("let f = \\x. k in f", "k : a");
        assert_eq!(o.to_string(), "forall b. b -> a");
    }

    #[test]
    fn check_mode() {
        let t = parse_term("\\x. x").unwrap();
        let ib = parse_mono("Int -> Bool").unwrap();
        let o = check(&t, &Context::empty(), &ib, System::Stlc, Start::Mono).unwrap();
        assert_eq!(failure(&o).kind, FailureKind::Mismatch);
        let ii = parse_mono("Int -> Int").unwrap();
        let o = check(&t, &Context::empty(), &ii, System::Stlc, Start::Mono).unwrap();
        assert_eq!(o.to_string(), "Int -> Int");
        let o = check(&t, &Context::empty(), &ii, System::Hm, Start::Poly).unwrap();
        assert_eq!(o.to_string(), "Int -> Int");
    }

    #[test]
    fn annotations_feed_both_uses() {
        assert_eq!(stlc("\\x : Int. x", "").to_string(), "Int -> Int");
        let t = parse_term("\\x : Int. x").unwrap();
        let bi = parse_mono("Bool -> Int").unwrap();
        let o = check(&t, &Context::empty(), &bi, System::Stlc, Start::Mono).unwrap();
        assert_eq!(failure(&o).kind, FailureKind::Mismatch);
    }

    #[test]
    fn annotated_argument_mismatch_names_the_node() {
        let o = stlc("(\\x : Int. x) y", "y : Bool");
        let f = failure(&o);
        assert_eq!(f.kind, FailureKind::Mismatch);
        assert_eq!(f.path, vec![4, 1, 0]);
        assert_eq!(
            f.to_string(),
            "mismatch at [4,1,0]: ask y : Int; cannot unify Int ~ Bool; fixed at [4,0,5] by t1 ~ t4 -> t5"
        );
    }

    #[test]
    fn free_variable_requirements() {
        let FreeVars::Found {
            result,
            requirements,
        } = free_vars(&parse_term("f (g x)").unwrap(), System::Stlc).unwrap()
        else {
            panic!()
        };
        assert_eq!(result.to_string(), "a");
        let shown: Vec<String> = requirements
            .iter()
            .map(|(n, t)| format!("{n} : {t}"))
            .collect();
        assert_eq!(shown, ["f : b -> a", "g : c -> b", "x : c"]);
        // the requirements type the term when supplied as a context
        let ctx = Context {
            entries: requirements
                .into_iter()
                .map(|(n, t)| (n, PolyType::mono(t)))
                .collect(),
        };
        assert_eq!(
            stlc_ctx("f (g x)", &ctx).to_string(),
            "a"
        );
    }

    fn stlc_ctx(term: &str, ctx: &Context) -> Outcome {
        infer(&parse_term(term).unwrap(), ctx, System::Stlc, Start::Mono).unwrap()
    }

    #[test]
    fn free_variable_conflict_is_mismatch() {
        let fv = free_vars(&parse_term("plus (f one) (f true)").unwrap(), System::Stlc).unwrap();
        assert!(matches!(fv, FreeVars::Found { .. }));
        let t = parse_term("\\b. \\n. k (and b x) (plus n x)").unwrap();
        let FreeVars::Found { requirements, .. } = free_vars(&t, System::Stlc).unwrap() else {
            panic!()
        };
        assert_eq!(requirements.len(), 4);
        let clash = parse_term("\\u. (\\b : Bool. b) x (\\n : Int. n) x").unwrap();
        let _ = free_vars(&clash, System::Stlc).unwrap();
        let clash = parse_term("k ((\\b : Bool. b) x) ((\\n : Int. n) x)").unwrap();
        assert!(matches!(
            free_vars(&clash, System::Stlc).unwrap(),
            FreeVars::Failed(Failure {
                kind: FailureKind::Mismatch,
                ..
            })
        ));
    }

    #[test]
    fn trace_lines() {
        let ctx = parse_context("y : Int").unwrap();
        let tree = build_tree_stlc(&parse_term("(\\x. x) y").unwrap(), &ctx).unwrap();
        let run = solve_tree_with(
            &tree,
            &SolveOptions {
                trace: true,
                open_context: false,
            },
        )
        .unwrap();
        let expected = "\
[0] exists t0 | declare
[1] exists t1 | declare
[2] exists t2 | declare
[3] t2 -> t0 ~ t1 | unify | hoist t2 before t1, t1 := t2 -> t0
[4] branch/2 | branch
[4,0,0] exists t3 | declare
[4,0,1] exists t4 | declare
[4,0,2] t1 ~ t3 -> t4 | unify | t3 := t2, t4 := t0
[4,0,3] tell x : t3 | bind x
[4,0,4] ask x : t4 | lookup x | t2 := t0
[4,1,0] ask y : t2 | lookup y | t0 := Int";
        assert_eq!(run.trace.join("\n"), expected);
    }

    #[test]
    fn store_discipline_after_solving() {
        for (term, ctx) in [
            ("let id = \\x. x in id id", ""),
            ("\\f. \\g. \\x. f (g x)", ""),
            ("\\y. let f = \\x. y in f", ""),
        ] {
            let tree = crate::treegen::build_tree_hm(
                &parse_term(term).unwrap(),
                &parse_context(ctx).unwrap(),
                Start::Mono,
            );
            let run = solve_tree_with(&tree, &SolveOptions::default()).unwrap();
            assert_eq!(run.store.check_discipline(), Ok(()), "{term}");
        }
    }

    #[test]
    fn malformed_trees_are_errors() {
        let t = Telescope::nodes(vec![TreeNode::Constr(Constraint::EqTy(
            MonoType::meta(0),
            MonoType::meta(0),
        ))]);
        assert!(matches!(solve_tree(&t), Err(SolveError::Unscoped(_))));
        let t = Telescope::nodes(vec![
            TreeNode::Quantify {
                meta: MetaVar(0),
                sort: MetaSort::Mono,
                solution: None,
            },
            TreeNode::Constr(Constraint::GenOpen),
        ]);
        assert!(matches!(solve_tree(&t), Err(SolveError::UnbalancedGen { .. })));
        assert_eq!(solve_tree(&Telescope::default()), Err(SolveError::NoResult));
    }
}
