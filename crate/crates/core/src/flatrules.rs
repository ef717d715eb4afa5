//! Flat, context-explicit constraint sets read off the typing rules.
//!
//! Every AST node contributes one rule instance whose premises become
//! constraints over explicit context references. The generator also records
//! a rule trace, which [`flat_to_tree`] follows to rebuild the telescopic
//! tree for the same term.

use std::collections::BTreeMap;
use std::fmt;

use crate::constraints::{Constraint, Context, CtxRef, MetaSupply, MetaVar, MonoType, Scheme};
use crate::syntax::Term;
use crate::treegen::{GenError, MetaSort, Telescope, TreeNode};
use crate::System;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    Var,
    Lam,
    ALam,
    App,
    Let,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Var => "Var",
            Rule::Lam => "Lam",
            Rule::ALam => "ALam",
            Rule::App => "App",
            Rule::Let => "Let",
        })
    }
}

/// One rule application, in pre-order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleInstance {
    pub rule: Rule,
    /// Context and type of the judgment this instance concludes.
    pub ctx: CtxRef,
    pub ty: MetaVar,
    /// Metavariables the rule introduces, in order.
    pub fresh: Vec<(MetaVar, MetaSort)>,
    pub fresh_ctxs: Vec<CtxRef>,
    /// Indices into [`FlatDerivation::constraints`], in premise order.
    pub constraints: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlatDerivation {
    pub system: System,
    pub constraints: Vec<Constraint>,
    /// Supplied from outside the derivation.
    pub root_ctx: CtxRef,
    /// Consumed outside the derivation.
    pub result_ty: MetaVar,
    pub rule_trace: Vec<RuleInstance>,
}

struct FlatGen {
    system: System,
    metas: MetaSupply,
    next_ctx: u32,
    constraints: Vec<Constraint>,
    trace: Vec<RuleInstance>,
}

impl FlatGen {
    fn ctx(&mut self) -> CtxRef {
        self.next_ctx += 1;
        CtxRef(self.next_ctx - 1)
    }

    fn emit(&mut self, at: usize, c: Constraint) {
        self.trace[at].constraints.push(self.constraints.len());
        self.constraints.push(c);
    }

    fn judgment(&mut self, t: &Term, ctx: CtxRef, ty: MetaVar) -> Result<(), GenError> {
        let at = self.trace.len();
        let rule = match t {
            Term::Var(_) => Rule::Var,
            Term::Lam(..) => Rule::Lam,
            Term::ALam(..) => Rule::ALam,
            Term::App(..) => Rule::App,
            Term::Let(..) => Rule::Let,
        };
        self.trace.push(RuleInstance {
            rule,
            ctx,
            ty,
            fresh: Vec::new(),
            fresh_ctxs: Vec::new(),
            constraints: Vec::new(),
        });
        let fresh = |g: &mut FlatGen, sort| {
            let m = g.metas.fresh();
            g.trace[at].fresh.push((m, sort));
            m
        };
        let ctx_fresh = |g: &mut FlatGen| {
            let c = g.ctx();
            g.trace[at].fresh_ctxs.push(c);
            c
        };
        match t {
            Term::Var(x) => match self.system {
                System::Stlc => self.emit(
                    at,
                    Constraint::InCtx {
                        name: x.clone(),
                        scheme: Scheme::mono(MonoType::Meta(ty)),
                        ctx,
                    },
                ),
                System::Hm => {
                    let sigma = fresh(self, MetaSort::Poly);
                    self.emit(
                        at,
                        Constraint::InCtx {
                            name: x.clone(),
                            scheme: Scheme::Meta(sigma),
                            ctx,
                        },
                    );
                    self.emit(
                        at,
                        Constraint::Inst {
                            scheme: Scheme::Meta(sigma),
                            target: MonoType::Meta(ty),
                        },
                    );
                }
            },
            Term::Lam(x, body) => {
                let param = fresh(self, MetaSort::Mono);
                let res = fresh(self, MetaSort::Mono);
                let inner = ctx_fresh(self);
                self.emit(
                    at,
                    Constraint::ExtendCtx {
                        out: inner,
                        base: ctx,
                        name: x.clone(),
                        scheme: Scheme::mono(MonoType::Meta(param)),
                    },
                );
                self.judgment(body, inner, res)?;
                self.emit(
                    at,
                    Constraint::EqTy(
                        MonoType::Meta(ty),
                        MonoType::arrow(MonoType::Meta(param), MonoType::Meta(res)),
                    ),
                );
            }
            Term::ALam(x, ann, body) => {
                let checked = fresh(self, MetaSort::Mono);
                let returned = fresh(self, MetaSort::Mono);
                let res = fresh(self, MetaSort::Mono);
                let inner = ctx_fresh(self);
                self.emit(
                    at,
                    Constraint::DupTy {
                        src: ann.clone(),
                        out1: MonoType::Meta(checked),
                        out2: MonoType::Meta(returned),
                    },
                );
                self.emit(
                    at,
                    Constraint::ExtendCtx {
                        out: inner,
                        base: ctx,
                        name: x.clone(),
                        scheme: Scheme::mono(MonoType::Meta(checked)),
                    },
                );
                self.judgment(body, inner, res)?;
                self.emit(
                    at,
                    Constraint::EqTy(
                        MonoType::Meta(ty),
                        MonoType::arrow(MonoType::Meta(returned), MonoType::Meta(res)),
                    ),
                );
            }
            Term::App(fun, arg) => {
                let fun_ty = fresh(self, MetaSort::Mono);
                let arg_ty = fresh(self, MetaSort::Mono);
                let (fun_ctx, arg_ctx) = (ctx_fresh(self), ctx_fresh(self));
                self.emit(
                    at,
                    Constraint::DupCtx {
                        src: ctx,
                        outs: vec![fun_ctx, arg_ctx],
                    },
                );
                self.judgment(fun, fun_ctx, fun_ty)?;
                self.judgment(arg, arg_ctx, arg_ty)?;
                self.emit(
                    at,
                    Constraint::EqTy(
                        MonoType::arrow(MonoType::Meta(arg_ty), MonoType::Meta(ty)),
                        MonoType::Meta(fun_ty),
                    ),
                );
            }
            Term::Let(x, bound, body) => {
                if self.system == System::Stlc {
                    return Err(GenError::LetInStlc);
                }
                let sigma = fresh(self, MetaSort::Poly);
                let bound_ty = fresh(self, MetaSort::Mono);
                let bound_ctx = ctx_fresh(self);
                let gen_ctx = ctx_fresh(self);
                let body_base = ctx_fresh(self);
                let body_ctx = ctx_fresh(self);
                self.emit(
                    at,
                    Constraint::DupCtx {
                        src: ctx,
                        outs: vec![bound_ctx, gen_ctx, body_base],
                    },
                );
                self.judgment(bound, bound_ctx, bound_ty)?;
                self.emit(
                    at,
                    Constraint::GenInCtx {
                        scheme: Scheme::Meta(sigma),
                        mono: MonoType::Meta(bound_ty),
                        ctx: gen_ctx,
                    },
                );
                self.emit(
                    at,
                    Constraint::ExtendCtx {
                        out: body_ctx,
                        base: body_base,
                        name: x.clone(),
                        scheme: Scheme::Meta(sigma),
                    },
                );
                self.judgment(body, body_ctx, ty)?;
            }
        }
        Ok(())
    }
}

/// Instantiates the typing rules of `system` over `t`, one rule instance
/// per AST node.
pub fn generate_flat(t: &Term, system: System) -> Result<FlatDerivation, GenError> {
    let mut g = FlatGen {
        system,
        metas: MetaSupply::new(),
        next_ctx: 0,
        constraints: Vec::new(),
        trace: Vec::new(),
    };
    let result_ty = g.metas.fresh();
    let root_ctx = g.ctx();
    g.judgment(t, root_ctx, result_ty)?;
    Ok(FlatDerivation {
        system,
        constraints: g.constraints,
        root_ctx,
        result_ty,
        rule_trace: g.trace,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinearVar {
    Meta(MetaVar),
    Ctx(CtxRef),
}

impl fmt::Display for LinearVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinearVar::Meta(m) => write!(f, "{m}"),
            LinearVar::Ctx(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub var: LinearVar,
    pub occurrences: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct LinearityReport {
    pub violations: Vec<Violation>,
}

impl LinearityReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for LinearityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("linear: ok");
        }
        for v in &self.violations {
            writeln!(f, "{} occurs {} times", v.var, v.occurrences)?;
        }
        Ok(())
    }
}

/// Every metavariable and context reference must occur exactly twice: once
/// where it is produced and once where it is consumed. The root context
/// counts as produced outside, the result type as consumed outside.
pub fn check_linearity(d: &FlatDerivation) -> LinearityReport {
    let mut counts: BTreeMap<LinearVar, usize> = BTreeMap::new();
    *counts.entry(LinearVar::Ctx(d.root_ctx)).or_default() += 1;
    *counts.entry(LinearVar::Meta(d.result_ty)).or_default() += 1;
    for c in &d.constraints {
        for m in c.meta_occurrences() {
            *counts.entry(LinearVar::Meta(m)).or_default() += 1;
        }
        for g in c.ctx_occurrences() {
            *counts.entry(LinearVar::Ctx(g)).or_default() += 1;
        }
    }
    LinearityReport {
        violations: counts
            .into_iter()
            .filter(|&(_, n)| n != 2)
            .map(|(var, occurrences)| Violation { var, occurrences })
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("untraceable derivation: {0}")]
pub struct Untraceable(pub String);

struct Retrace<'a> {
    d: &'a FlatDerivation,
    pos: usize,
}

impl Retrace<'_> {
    fn quantifiers(inst: &RuleInstance, out: &mut Vec<TreeNode>) {
        for &(meta, sort) in &inst.fresh {
            out.push(TreeNode::Quantify {
                meta,
                sort,
                solution: None,
            });
        }
    }

    fn judgment(&mut self, out: &mut Vec<TreeNode>) -> Result<(), Untraceable> {
        let inst = self
            .d
            .rule_trace
            .get(self.pos)
            .ok_or_else(|| Untraceable("rule trace ends early".into()))?;
        self.pos += 1;
        let cs = inst
            .constraints
            .iter()
            .map(|&i| self.d.constraints.get(i))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Untraceable(format!("{} refers to a missing constraint", inst.rule)))?;
        let c = |c: &Constraint| TreeNode::Constr(c.clone());
        match (inst.rule, self.d.system, cs.as_slice()) {
            (Rule::Var, System::Stlc, [Constraint::InCtx { name, scheme, .. }]) => {
                out.push(TreeNode::Constr(Constraint::Ask {
                    name: name.clone(),
                    scheme: scheme.clone(),
                }));
            }
            (Rule::Var, System::Hm, [Constraint::InCtx { name, scheme, .. }, inst_c @ Constraint::Inst { .. }]) => {
                Self::quantifiers(inst, out);
                out.push(TreeNode::Constr(Constraint::Ask {
                    name: name.clone(),
                    scheme: scheme.clone(),
                }));
                out.push(c(inst_c));
            }
            (Rule::Lam, _, [Constraint::ExtendCtx { name, scheme, .. }, eq @ Constraint::EqTy(..)]) => {
                Self::quantifiers(inst, out);
                out.push(c(eq));
                out.push(TreeNode::Constr(Constraint::Tell {
                    name: name.clone(),
                    scheme: scheme.clone(),
                }));
                self.judgment(out)?;
            }
            (
                Rule::ALam,
                _,
                [dup @ Constraint::DupTy { .. }, Constraint::ExtendCtx { name, scheme, .. }, eq @ Constraint::EqTy(..)],
            ) => {
                Self::quantifiers(inst, out);
                out.push(c(dup));
                out.push(TreeNode::Constr(Constraint::Tell {
                    name: name.clone(),
                    scheme: scheme.clone(),
                }));
                out.push(c(eq));
                self.judgment(out)?;
            }
            (Rule::App, _, [Constraint::DupCtx { outs, .. }, eq @ Constraint::EqTy(..)])
                if outs.len() == 2 =>
            {
                Self::quantifiers(inst, out);
                out.push(c(eq));
                let mut left = Vec::new();
                self.judgment(&mut left)?;
                let mut right = Vec::new();
                self.judgment(&mut right)?;
                out.push(TreeNode::Branch(vec![
                    Telescope::nodes(left),
                    Telescope::nodes(right),
                ]));
            }
            (
                Rule::Let,
                System::Hm,
                [Constraint::DupCtx { outs, .. }, Constraint::GenInCtx { scheme, mono, .. }, Constraint::ExtendCtx {
                    name,
                    scheme: told,
                    ..
                }],
            ) if outs.len() == 3 && inst.fresh.len() == 2 => {
                let (sigma, sigma_sort) = inst.fresh[0];
                let (bound_ty, bound_sort) = inst.fresh[1];
                out.push(TreeNode::Quantify {
                    meta: sigma,
                    sort: sigma_sort,
                    solution: None,
                });
                let mut left = vec![
                    TreeNode::Constr(Constraint::GenOpen),
                    TreeNode::Quantify {
                        meta: bound_ty,
                        sort: bound_sort,
                        solution: None,
                    },
                    TreeNode::Constr(Constraint::GenClose {
                        scheme: scheme.clone(),
                        mono: mono.clone(),
                    }),
                ];
                self.judgment(&mut left)?;
                let mut right = vec![TreeNode::Constr(Constraint::Tell {
                    name: name.clone(),
                    scheme: told.clone(),
                })];
                self.judgment(&mut right)?;
                out.push(TreeNode::Branch(vec![
                    Telescope::nodes(left),
                    Telescope::nodes(right),
                ]));
            }
            (rule, system, cs) => {
                let kinds: Vec<_> = cs.iter().map(|c| c.kind()).collect();
                return Err(Untraceable(format!(
                    "{rule} in {system:?} cannot emit [{}]",
                    kinds.join(", ")
                )));
            }
        }
        Ok(())
    }
}

/// Rebuilds the telescopic tree for the derivation's term, following the
/// rule trace: context duplication becomes branching, extension becomes a
/// `tell`, membership an `ask`, and generalisation a region around the
/// bound term. `ctx` is the context supplied for the root reference.
pub fn flat_to_tree(d: &FlatDerivation, ctx: &Context) -> Result<Telescope, Untraceable> {
    if d.rule_trace.is_empty() {
        return Err(Untraceable("no rule trace".into()));
    }
    let mut r = Retrace { d, pos: 0 };
    let mut nodes = vec![TreeNode::Quantify {
        meta: d.result_ty,
        sort: MetaSort::Mono,
        solution: None,
    }];
    r.judgment(&mut nodes)?;
    if r.pos != d.rule_trace.len() {
        return Err(Untraceable(format!(
            "{} rule instances left over",
            d.rule_trace.len() - r.pos
        )));
    }
    Ok(Telescope {
        prefix: Some(ctx.clone()),
        nodes,
    })
}

/// One constraint per line, prefixed by the rule instance that emitted it.
pub fn render_flat(d: &FlatDerivation) -> String {
    let mut out = format!(
        "root {} |- : {}\n",
        d.root_ctx, d.result_ty
    );
    for (i, inst) in d.rule_trace.iter().enumerate() {
        for &c in &inst.constraints {
            out.push_str(&format!(
                "{}#{i} [{} |- : {}] {}\n",
                inst.rule, inst.ctx, inst.ty, d.constraints[c]
            ));
        }
    }
    out
}

/// Contexts for every reference in the derivation, given the root context
/// and values for the schemes each extension pushes.
pub fn contexts_along_trace(
    d: &FlatDerivation,
    root: &Context,
    scheme_of: &mut impl FnMut(&Scheme) -> Option<crate::constraints::PolyType>,
) -> Option<BTreeMap<CtxRef, Context>> {
    let mut ctxs = BTreeMap::new();
    ctxs.insert(d.root_ctx, root.clone());
    // Flat generation emits DupCtx/ExtendCtx before the judgments that use
    // their outputs, so one pass in constraint order suffices.
    for c in &d.constraints {
        match c {
            Constraint::DupCtx { src, outs } => {
                let src = ctxs.get(src)?.clone();
                for o in outs {
                    ctxs.insert(*o, src.clone());
                }
            }
            Constraint::ExtendCtx {
                out,
                base,
                name,
                scheme,
            } => {
                let base = ctxs.get(base)?.clone();
                ctxs.insert(*out, base.extended(name.clone(), scheme_of(scheme)?));
            }
            _ => {}
        }
    }
    Some(ctxs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_term, Name};
    use crate::treegen::{build_tree_hm, build_tree_stlc};
    use crate::Start;

    fn m(id: u32) -> MonoType {
        MonoType::meta(id)
    }

    #[test]
    fn var_rule() {
        let d = generate_flat(&parse_term("x").unwrap(), System::Stlc).unwrap();
        assert_eq!(
            d.constraints,
            vec![Constraint::InCtx {
                name: Name::new("x"),
                scheme: Scheme::mono(m(0)),
                ctx: CtxRef(0)
            }]
        );
        assert_eq!(d.result_ty, MetaVar(0));
        assert!(check_linearity(&d).is_ok());
    }

    #[test]
    fn lam_rule() {
        let d = generate_flat(&parse_term("\\x. x").unwrap(), System::Stlc).unwrap();
        // τf = t0, τp = t1, τr = t2, Γ = G0, Γf = G1
        assert_eq!(
            d.constraints,
            vec![
                Constraint::ExtendCtx {
                    out: CtxRef(1),
                    base: CtxRef(0),
                    name: Name::new("x"),
                    scheme: Scheme::mono(m(1))
                },
                Constraint::InCtx {
                    name: Name::new("x"),
                    scheme: Scheme::mono(m(2)),
                    ctx: CtxRef(1)
                },
                Constraint::EqTy(m(0), MonoType::arrow(m(1), m(2))),
            ]
        );
        assert!(check_linearity(&d).is_ok());
        assert_eq!(d.rule_trace[0].rule, Rule::Lam);
        assert_eq!(d.rule_trace[0].constraints, vec![0, 2]);
    }

    #[test]
    fn let_rule_has_ternary_dup() {
        let d = generate_flat(&parse_term("let x = y in x").unwrap(), System::Hm).unwrap();
        let lets: Vec<_> = d.rule_trace.iter().filter(|i| i.rule == Rule::Let).collect();
        assert_eq!(lets.len(), 1);
        let cs: Vec<_> = lets[0].constraints.iter().map(|&i| &d.constraints[i]).collect();
        assert_eq!(cs.len(), 3);
        assert!(matches!(cs[0], Constraint::DupCtx { outs, .. } if outs.len() == 3));
        assert!(matches!(cs[1], Constraint::GenInCtx { .. }));
        assert!(matches!(cs[2], Constraint::ExtendCtx { .. }));
        let dups = d
            .constraints
            .iter()
            .filter(|c| matches!(c, Constraint::DupCtx { .. }))
            .count();
        assert_eq!(dups, 1);
        assert!(check_linearity(&d).is_ok(), "{}", check_linearity(&d));
    }

    #[test]
    fn nonlinear_set_is_reported() {
        let d = FlatDerivation {
            system: System::Stlc,
            constraints: vec![
                Constraint::EqTy(m(0), MonoType::base("Int")),
                Constraint::EqTy(m(0), MonoType::base("Bool")),
                Constraint::EqTy(m(0), m(1)),
            ],
            root_ctx: CtxRef(0),
            result_ty: MetaVar(1),
            rule_trace: Vec::new(),
        };
        let report = check_linearity(&d);
        assert!(report.violations.contains(&Violation {
            var: LinearVar::Meta(MetaVar(0)),
            occurrences: 3
        }));
        assert!(!report
            .violations
            .iter()
            .any(|v| v.var == LinearVar::Meta(MetaVar(1))));
    }

    #[test]
    fn worked_example_round_trips_to_tree() {
        let t = parse_term("(\\x. x) y").unwrap();
        let d = generate_flat(&t, System::Stlc).unwrap();
        let tree = flat_to_tree(&d, &Context::empty()).unwrap();
        assert_eq!(tree, build_tree_stlc(&t, &Context::empty()).unwrap());
    }

    #[test]
    fn single_var_tree() {
        let d = generate_flat(&parse_term("x").unwrap(), System::Stlc).unwrap();
        let tree = flat_to_tree(&d, &Context::empty()).unwrap();
        assert_eq!(crate::treegen::render_text(&tree), "ctx {}\nexists t0\nask x : t0\n");
    }

    #[test]
    fn hm_round_trip() {
        for src in [
            "let id = \\x. x in id id",
            "\\f. let g = \\x. f x in g",
            "\\y : Int -> Int. let f = \\x. y in f",
        ] {
            let t = parse_term(src).unwrap();
            let d = generate_flat(&t, System::Hm).unwrap();
            assert!(check_linearity(&d).is_ok());
            let tree = flat_to_tree(&d, &Context::empty()).unwrap();
            assert_eq!(tree, build_tree_hm(&t, &Context::empty(), Start::Mono), "{src}");
        }
    }

    #[test]
    fn broken_trace_is_untraceable() {
        let t = parse_term("f x").unwrap();
        let mut d = generate_flat(&t, System::Stlc).unwrap();
        d.rule_trace[0].constraints.pop();
        assert!(flat_to_tree(&d, &Context::empty()).is_err());
        let mut d = generate_flat(&t, System::Stlc).unwrap();
        d.rule_trace.pop();
        assert!(flat_to_tree(&d, &Context::empty()).is_err());
        d.rule_trace.clear();
        assert_eq!(
            flat_to_tree(&d, &Context::empty()),
            Err(Untraceable("no rule trace".into()))
        );
    }

    #[test]
    fn render_lists_rule_per_line() {
        let d = generate_flat(&parse_term("\\x. x").unwrap(), System::Stlc).unwrap();
        let text = render_flat(&d);
        assert!(text.contains("Lam#0 [G0 |- : t0] G1 := G0 , x : t1"), "{text}");
        assert!(text.contains("Var#1 [G1 |- : t2] x : t2 in G1"), "{text}");
    }
}
