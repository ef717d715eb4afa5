//! Telescopic constraint trees.
//!
//! A tree refines the AST into a telescope of quantifiers and constraints,
//! with branching where the typing rules duplicate their context. Context
//! constraints become situated `ask`/`tell` nodes whose meaning depends on
//! where they sit.

mod render;

use std::collections::{BTreeSet, HashMap};

use crate::constraints::{Constraint, Context, MetaSupply, MetaVar, MonoType, PolyType, Scheme};
use crate::syntax::Term;
use crate::{Start, System};

pub use render::{render_dot, render_text, to_json};
pub(crate) use render::node_text;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MetaSort {
    Mono,
    Poly,
}

/// The value a quantifier has been annotated with after solving.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Solution {
    Mono(MonoType),
    Poly(PolyType),
}

impl std::fmt::Display for Solution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Solution::Mono(t) => write!(f, "{t}"),
            Solution::Poly(p) => write!(f, "{p}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TreeNode {
    /// `∃m`, or `∃m := solution` once solved.
    Quantify {
        meta: MetaVar,
        sort: MetaSort,
        solution: Option<Solution>,
    },
    Constr(Constraint),
    /// Children are visited left to right.
    Branch(Vec<Telescope>),
}

impl TreeNode {
    fn exists(meta: MetaVar, sort: MetaSort) -> TreeNode {
        TreeNode::Quantify {
            meta,
            sort,
            solution: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Telescope {
    /// The root context; only present on the root telescope.
    pub prefix: Option<Context>,
    pub nodes: Vec<TreeNode>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("the simply typed rules have no case for `let`; use the hm system")]
    LetInStlc,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LiftError {
    #[error("lifting unsound for generalisation regions")]
    GeneralisationRegion,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{meta} used at {path:?} before it is quantified")]
pub struct ScopeError {
    pub meta: MetaVar,
    pub path: Vec<usize>,
}

struct Builder {
    supply: MetaSupply,
    system: System,
}

impl Builder {
    fn fresh(&mut self, sort: MetaSort, out: &mut Vec<TreeNode>) -> MetaVar {
        let m = self.supply.fresh();
        out.push(TreeNode::exists(m, sort));
        m
    }

    /// Appends the nodes for `t` checked against `r` to the current telescope.
    fn term(&mut self, t: &Term, r: MonoType, out: &mut Vec<TreeNode>) -> Result<(), GenError> {
        match t {
            Term::Var(x) => match self.system {
                System::Stlc => out.push(TreeNode::Constr(Constraint::Ask {
                    name: x.clone(),
                    scheme: Scheme::mono(r),
                })),
                System::Hm => {
                    let sigma = self.fresh(MetaSort::Poly, out);
                    out.push(TreeNode::Constr(Constraint::Ask {
                        name: x.clone(),
                        scheme: Scheme::Meta(sigma),
                    }));
                    out.push(TreeNode::Constr(Constraint::Inst {
                        scheme: Scheme::Meta(sigma),
                        target: r,
                    }));
                }
            },
            Term::Lam(x, body) => {
                let param = MonoType::Meta(self.fresh(MetaSort::Mono, out));
                let res = MonoType::Meta(self.fresh(MetaSort::Mono, out));
                out.push(TreeNode::Constr(Constraint::EqTy(
                    r,
                    MonoType::arrow(param.clone(), res.clone()),
                )));
                out.push(TreeNode::Constr(Constraint::Tell {
                    name: x.clone(),
                    scheme: Scheme::mono(param),
                }));
                self.term(body, res, out)?;
            }
            Term::ALam(x, ann, body) => {
                let checked = MonoType::Meta(self.fresh(MetaSort::Mono, out));
                let returned = MonoType::Meta(self.fresh(MetaSort::Mono, out));
                let res = MonoType::Meta(self.fresh(MetaSort::Mono, out));
                out.push(TreeNode::Constr(Constraint::DupTy {
                    src: ann.clone(),
                    out1: checked.clone(),
                    out2: returned.clone(),
                }));
                out.push(TreeNode::Constr(Constraint::Tell {
                    name: x.clone(),
                    scheme: Scheme::mono(checked),
                }));
                out.push(TreeNode::Constr(Constraint::EqTy(
                    r,
                    MonoType::arrow(returned, res.clone()),
                )));
                self.term(body, res, out)?;
            }
            Term::App(fun, arg) => {
                let fun_ty = MonoType::Meta(self.fresh(MetaSort::Mono, out));
                let arg_ty = MonoType::Meta(self.fresh(MetaSort::Mono, out));
                out.push(TreeNode::Constr(Constraint::EqTy(
                    MonoType::arrow(arg_ty.clone(), r),
                    fun_ty.clone(),
                )));
                let mut left = Vec::new();
                self.term(fun, fun_ty, &mut left)?;
                let mut right = Vec::new();
                self.term(arg, arg_ty, &mut right)?;
                out.push(TreeNode::Branch(vec![
                    Telescope::nodes(left),
                    Telescope::nodes(right),
                ]));
            }
            Term::Let(x, bound, body) => {
                if self.system == System::Stlc {
                    return Err(GenError::LetInStlc);
                }
                let sigma = self.fresh(MetaSort::Poly, out);
                let mut left = Vec::new();
                let bound_ty = self.region(sigma, &mut left);
                self.term(bound, bound_ty, &mut left)?;
                let mut right = vec![TreeNode::Constr(Constraint::Tell {
                    name: x.clone(),
                    scheme: Scheme::Meta(sigma),
                })];
                self.term(body, r, &mut right)?;
                out.push(TreeNode::Branch(vec![
                    Telescope::nodes(left),
                    Telescope::nodes(right),
                ]));
            }
        }
        Ok(())
    }

    /// `gen[, ∃τ, ]gen σ := τ`, returning τ.
    fn region(&mut self, sigma: MetaVar, out: &mut Vec<TreeNode>) -> MonoType {
        out.push(TreeNode::Constr(Constraint::GenOpen));
        let tau = MonoType::Meta(self.fresh(MetaSort::Mono, out));
        out.push(TreeNode::Constr(Constraint::GenClose {
            scheme: Scheme::Meta(sigma),
            mono: tau.clone(),
        }));
        tau
    }
}

impl Telescope {
    pub fn nodes(nodes: Vec<TreeNode>) -> Telescope {
        Telescope {
            prefix: None,
            nodes,
        }
    }

    /// The first quantifier of the root telescope, which binds the result.
    pub fn result_meta(&self) -> Option<(MetaVar, MetaSort)> {
        self.nodes.iter().find_map(|n| match n {
            TreeNode::Quantify { meta, sort, .. } => Some((*meta, *sort)),
            _ => None,
        })
    }

    /// The first monotype quantifier of the root telescope: the result for
    /// monomorphic starts, and the generalised type for polymorphic ones.
    pub fn result_mono(&self) -> Option<MetaVar> {
        self.nodes.iter().find_map(|n| match n {
            TreeNode::Quantify {
                meta,
                sort: MetaSort::Mono,
                ..
            } => Some(*meta),
            _ => None,
        })
    }

    /// Calls `f` on every node in pre-order with its path: node indices
    /// interleaved with branch-child indices.
    pub fn walk(&self, f: &mut impl FnMut(&[usize], &TreeNode)) {
        fn go(t: &Telescope, path: &mut Vec<usize>, f: &mut impl FnMut(&[usize], &TreeNode)) {
            for (i, node) in t.nodes.iter().enumerate() {
                path.push(i);
                f(path, node);
                if let TreeNode::Branch(children) = node {
                    for (c, child) in children.iter().enumerate() {
                        path.push(c);
                        go(child, path, f);
                        path.pop();
                    }
                }
                path.pop();
            }
        }
        go(self, &mut Vec::new(), f)
    }

    /// All constraints in pre-order.
    pub fn constraints(&self) -> Vec<Constraint> {
        let mut out = Vec::new();
        self.walk(&mut |_, n| {
            if let TreeNode::Constr(c) = n {
                out.push(c.clone())
            }
        });
        out
    }

    /// All quantified metavariables in pre-order.
    pub fn quantifiers(&self) -> Vec<(MetaVar, MetaSort)> {
        let mut out = Vec::new();
        self.walk(&mut |_, n| {
            if let TreeNode::Quantify { meta, sort, .. } = n {
                out.push((*meta, *sort))
            }
        });
        out
    }

    pub fn has_gen_markers(&self) -> bool {
        self.constraints()
            .iter()
            .any(|c| matches!(c, Constraint::GenOpen | Constraint::GenClose { .. }))
    }

    /// Largest metavariable id mentioned anywhere.
    pub fn max_meta(&self) -> Option<u32> {
        let mut max = None;
        let mut see = |m: MetaVar| max = max.max(Some(m.0));
        self.walk(&mut |_, n| match n {
            TreeNode::Quantify { meta, .. } => see(*meta),
            TreeNode::Constr(c) => c.meta_occurrences().into_iter().for_each(&mut see),
            TreeNode::Branch(_) => {}
        });
        max
    }

    /// Checks that every metavariable a constraint mentions is quantified
    /// earlier on the path from the root.
    pub fn check_scope(&self) -> Result<(), ScopeError> {
        fn go(
            t: &Telescope,
            scope: &mut BTreeSet<MetaVar>,
            path: &mut Vec<usize>,
        ) -> Result<(), ScopeError> {
            let mut added = Vec::new();
            for (i, node) in t.nodes.iter().enumerate() {
                path.push(i);
                match node {
                    TreeNode::Quantify { meta, .. } => {
                        if scope.insert(*meta) {
                            added.push(*meta);
                        }
                    }
                    TreeNode::Constr(c) => {
                        if let Some(m) = c.meta_occurrences().into_iter().find(|m| !scope.contains(m)) {
                            return Err(ScopeError {
                                meta: m,
                                path: path.clone(),
                            });
                        }
                    }
                    TreeNode::Branch(children) => {
                        for (c, child) in children.iter().enumerate() {
                            path.push(c);
                            go(child, scope, path)?;
                            path.pop();
                        }
                    }
                }
                path.pop();
            }
            for m in added {
                scope.remove(&m);
            }
            Ok(())
        }
        go(self, &mut BTreeSet::new(), &mut Vec::new())
    }

    /// Renumbers metavariables in quantifier order, so trees that differ
    /// only in fresh-name choice compare equal.
    pub fn canonicalize(&self) -> Telescope {
        let mut map: HashMap<MetaVar, MetaVar> = HashMap::new();
        for (m, _) in self.quantifiers() {
            let next = MetaVar(map.len() as u32);
            map.entry(m).or_insert(next);
        }
        let mut extra = map.len() as u32;
        self.walk(&mut |_, n| {
            if let TreeNode::Constr(c) = n {
                for m in c.meta_occurrences() {
                    map.entry(m).or_insert_with(|| {
                        extra += 1;
                        MetaVar(extra - 1)
                    });
                }
            }
        });
        self.rename(&|m| map[&m])
    }

    fn rename(&self, f: &impl Fn(MetaVar) -> MetaVar) -> Telescope {
        let rename_ty = |t: &MonoType| t.map_metas(&mut |m| Some(MonoType::Meta(f(m))));
        Telescope {
            prefix: self.prefix.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| match n {
                    TreeNode::Quantify {
                        meta,
                        sort,
                        solution,
                    } => TreeNode::Quantify {
                        meta: f(*meta),
                        sort: *sort,
                        solution: solution.as_ref().map(|s| match s {
                            Solution::Mono(t) => Solution::Mono(rename_ty(t)),
                            Solution::Poly(p) => Solution::Poly(PolyType {
                                bound: p.bound.clone(),
                                body: rename_ty(&p.body),
                            }),
                        }),
                    },
                    TreeNode::Constr(c) => TreeNode::Constr(c.rename_metas(f)),
                    TreeNode::Branch(children) => {
                        TreeNode::Branch(children.iter().map(|c| c.rename(f)).collect())
                    }
                })
                .collect(),
        }
    }
}

fn start(ctx: &Context, nodes: Vec<TreeNode>) -> Telescope {
    Telescope {
        prefix: Some(ctx.clone()),
        nodes,
    }
}

/// Simply typed tree: `Γ, {∃τ}, ⟦t⟧ τ`.
pub fn build_tree_stlc(t: &Term, ctx: &Context) -> Result<Telescope, GenError> {
    let mut b = Builder {
        supply: MetaSupply::new(),
        system: System::Stlc,
    };
    let mut nodes = Vec::new();
    let tau = MonoType::Meta(b.fresh(MetaSort::Mono, &mut nodes));
    b.term(t, tau, &mut nodes)?;
    Ok(start(ctx, nodes))
}

/// Let-polymorphic tree with a monomorphic or generalised root.
pub fn build_tree_hm(t: &Term, ctx: &Context, start_kind: Start) -> Telescope {
    let mut b = Builder {
        supply: MetaSupply::new(),
        system: System::Hm,
    };
    let mut nodes = Vec::new();
    let tau = match start_kind {
        Start::Mono => MonoType::Meta(b.fresh(MetaSort::Mono, &mut nodes)),
        Start::Poly => {
            let sigma = b.fresh(MetaSort::Poly, &mut nodes);
            b.region(sigma, &mut nodes)
        }
    };
    b.term(t, tau, &mut nodes)
        .expect("the hm rules cover every term form");
    start(ctx, nodes)
}

pub fn build_tree(
    t: &Term,
    ctx: &Context,
    system: System,
    start_kind: Start,
) -> Result<Telescope, GenError> {
    match system {
        System::Stlc => build_tree_stlc(t, ctx),
        System::Hm => Ok(build_tree_hm(t, ctx, start_kind)),
    }
}

/// Moves every quantifier to the front of the root telescope. Only sound
/// without generalisation regions, whose meaning depends on where the
/// quantifiers sit.
pub fn lift_quantifiers(tree: &Telescope) -> Result<Telescope, LiftError> {
    if tree.has_gen_markers() {
        return Err(LiftError::GeneralisationRegion);
    }
    fn strip(t: &Telescope, lifted: &mut Vec<TreeNode>) -> Telescope {
        let mut nodes = Vec::new();
        for n in &t.nodes {
            match n {
                TreeNode::Quantify { .. } => lifted.push(n.clone()),
                TreeNode::Constr(_) => nodes.push(n.clone()),
                TreeNode::Branch(children) => nodes.push(TreeNode::Branch(
                    children.iter().map(|c| strip(c, lifted)).collect(),
                )),
            }
        }
        Telescope {
            prefix: t.prefix.clone(),
            nodes,
        }
    }
    let mut lifted = Vec::new();
    let rest = strip(tree, &mut lifted);
    lifted.extend(rest.nodes);
    Ok(Telescope {
        prefix: rest.prefix,
        nodes: lifted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_context, parse_term, Name};

    fn q(id: u32) -> TreeNode {
        TreeNode::exists(MetaVar(id), MetaSort::Mono)
    }

    fn qp(id: u32) -> TreeNode {
        TreeNode::exists(MetaVar(id), MetaSort::Poly)
    }

    fn m(id: u32) -> MonoType {
        MonoType::meta(id)
    }

    fn c(c: Constraint) -> TreeNode {
        TreeNode::Constr(c)
    }

    fn ask(x: &str, t: MonoType) -> TreeNode {
        c(Constraint::Ask {
            name: Name::new(x),
            scheme: Scheme::mono(t),
        })
    }

    fn tell(x: &str, t: MonoType) -> TreeNode {
        c(Constraint::Tell {
            name: Name::new(x),
            scheme: Scheme::mono(t),
        })
    }

    fn eq(l: MonoType, r: MonoType) -> TreeNode {
        c(Constraint::EqTy(l, r))
    }

    fn arr(a: MonoType, b: MonoType) -> MonoType {
        MonoType::arrow(a, b)
    }

    /// The worked example tree for `(\x. x) y`, transcribed by hand with
    /// τ=0, τf=1, τp=2, τp'=3, τr=4.
    pub(crate) fn worked_example() -> Telescope {
        Telescope {
            prefix: Some(Context::empty()),
            nodes: vec![
                q(0),
                q(1),
                q(2),
                eq(arr(m(2), m(0)), m(1)),
                TreeNode::Branch(vec![
                    Telescope::nodes(vec![
                        q(3),
                        q(4),
                        eq(m(1), arr(m(3), m(4))),
                        tell("x", m(3)),
                        ask("x", m(4)),
                    ]),
                    Telescope::nodes(vec![ask("y", m(2))]),
                ]),
            ],
        }
    }

    #[test]
    fn worked_example_shape() {
        let t = parse_term("(\\x. x) y").unwrap();
        let tree = build_tree_stlc(&t, &Context::empty()).unwrap();
        assert_eq!(tree, worked_example());
    }

    #[test]
    fn var_row() {
        let tree = build_tree_stlc(&parse_term("x").unwrap(), &Context::empty()).unwrap();
        assert_eq!(tree.nodes, vec![q(0), ask("x", m(0))]);
    }

    #[test]
    fn lam_then_var() {
        let tree = build_tree_stlc(&parse_term("\\x. x").unwrap(), &Context::empty()).unwrap();
        assert_eq!(
            tree.nodes,
            vec![
                q(0),
                q(1),
                q(2),
                eq(m(0), arr(m(1), m(2))),
                tell("x", m(1)),
                ask("x", m(2))
            ]
        );
    }

    #[test]
    fn annotated_lambda_row() {
        let tree =
            build_tree_stlc(&parse_term("\\x : Int. x").unwrap(), &Context::empty()).unwrap();
        assert_eq!(
            tree.nodes,
            vec![
                q(0),
                q(1),
                q(2),
                q(3),
                c(Constraint::DupTy {
                    src: MonoType::base("Int"),
                    out1: m(1),
                    out2: m(2)
                }),
                tell("x", m(1)),
                eq(m(0), arr(m(2), m(3))),
                ask("x", m(3)),
            ]
        );
    }

    #[test]
    fn let_rejected_in_stlc() {
        let t = parse_term("let x = y in x").unwrap();
        assert_eq!(build_tree_stlc(&t, &Context::empty()), Err(GenError::LetInStlc));
    }

    #[test]
    fn hm_var_row() {
        let tree = build_tree_hm(&parse_term("x").unwrap(), &Context::empty(), Start::Mono);
        assert_eq!(
            tree.nodes,
            vec![
                q(0),
                qp(1),
                c(Constraint::Ask {
                    name: Name::new("x"),
                    scheme: Scheme::Meta(MetaVar(1))
                }),
                c(Constraint::Inst {
                    scheme: Scheme::Meta(MetaVar(1)),
                    target: m(0)
                }),
            ]
        );
    }

    #[test]
    fn hm_let_row() {
        let tree = build_tree_hm(
            &parse_term("let id = \\x. x in id").unwrap(),
            &Context::empty(),
            Start::Mono,
        );
        // ∃τ0, ∃σ1 | {gen[, ∃τ2, ]gen σ1 := τ2}, Lam... | {tell id : σ1}, Var...
        assert_eq!(tree.nodes.len(), 3);
        assert_eq!(tree.nodes[1], qp(1));
        let TreeNode::Branch(children) = &tree.nodes[2] else {
            panic!("expected a branch")
        };
        assert_eq!(children.len(), 2);
        assert_eq!(
            children[0].nodes[..3],
            [
                c(Constraint::GenOpen),
                q(2),
                c(Constraint::GenClose {
                    scheme: Scheme::Meta(MetaVar(1)),
                    mono: m(2)
                })
            ]
        );
        assert_eq!(
            children[1].nodes[0],
            c(Constraint::Tell {
                name: Name::new("id"),
                scheme: Scheme::Meta(MetaVar(1))
            })
        );
    }

    #[test]
    fn hm_start_poly() {
        let tree = build_tree_hm(&parse_term("\\x. x").unwrap(), &Context::empty(), Start::Poly);
        assert_eq!(
            tree.nodes[..4],
            [
                qp(0),
                c(Constraint::GenOpen),
                q(1),
                c(Constraint::GenClose {
                    scheme: Scheme::Meta(MetaVar(0)),
                    mono: m(1)
                })
            ]
        );
        // then the Lam row against τ1
        assert_eq!(tree.nodes[4..7], [q(2), q(3), eq(m(1), arr(m(2), m(3)))]);
        assert_eq!(tree.result_meta(), Some((MetaVar(0), MetaSort::Poly)));
        assert_eq!(tree.result_mono(), Some(MetaVar(1)));
    }

    #[test]
    fn lifting_worked_example() {
        let lifted = lift_quantifiers(&worked_example()).unwrap();
        assert_eq!(lifted.nodes[..5], [q(0), q(1), q(2), q(3), q(4)]);
        assert_eq!(lifted.nodes[5], eq(arr(m(2), m(0)), m(1)));
        let TreeNode::Branch(children) = &lifted.nodes[6] else {
            panic!("expected a branch")
        };
        assert_eq!(
            children[0].nodes,
            vec![eq(m(1), arr(m(3), m(4))), tell("x", m(3)), ask("x", m(4))]
        );
        assert_eq!(lift_quantifiers(&lifted).unwrap(), lifted);
    }

    #[test]
    fn lifting_rejects_regions() {
        let tree = build_tree_hm(
            &parse_term("let f = \\x. x in f").unwrap(),
            &Context::empty(),
            Start::Mono,
        );
        assert_eq!(lift_quantifiers(&tree), Err(LiftError::GeneralisationRegion));
    }

    #[test]
    fn scope_check_catches_unbound_meta() {
        assert!(worked_example().check_scope().is_ok());
        let bad = Telescope::nodes(vec![q(0), eq(m(0), m(1))]);
        assert_eq!(
            bad.check_scope(),
            Err(ScopeError {
                meta: MetaVar(1),
                path: vec![1]
            })
        );
        // sibling branches do not see each other's quantifiers
        let bad = Telescope::nodes(vec![TreeNode::Branch(vec![
            Telescope::nodes(vec![q(0)]),
            Telescope::nodes(vec![eq(m(0), m(0))]),
        ])]);
        assert!(bad.check_scope().is_err());
    }

    #[test]
    fn canonicalize_renumbers_in_quantifier_order() {
        let t = Telescope::nodes(vec![q(7), q(3), eq(m(3), m(7))]);
        assert_eq!(t.canonicalize().nodes, vec![q(0), q(1), eq(m(1), m(0))]);
    }

    #[test]
    fn prefix_holds_context() {
        let ctx = parse_context("y : Int").unwrap();
        let tree = build_tree_stlc(&parse_term("y").unwrap(), &ctx).unwrap();
        assert_eq!(tree.prefix, Some(ctx));
    }
}
