//! Types, contexts, metavariables and the constraint vocabulary, together
//! with the static satisfaction predicate. Satisfaction only checks a
//! candidate assignment; finding one is the solver's job.

mod types;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use crate::syntax::Name;

pub use types::{Context, MetaSupply, MetaVar, MonoType, NameSupply, PolyType};

/// A context metavariable in a flat constraint set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct CtxRef(pub u32);

impl fmt::Display for CtxRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "G{}", self.0)
    }
}

/// A scheme position in a constraint: either a known scheme or a scheme
/// metavariable (the `∃σ` of let-polymorphic trees).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Known(PolyType),
    Meta(MetaVar),
}

impl Scheme {
    pub fn mono(t: MonoType) -> Scheme {
        Scheme::Known(PolyType::mono(t))
    }

    pub fn metas(&self) -> Vec<MetaVar> {
        match self {
            Scheme::Known(p) => p.metas(),
            Scheme::Meta(m) => vec![*m],
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Known(p) => write!(f, "{p}"),
            Scheme::Meta(m) => write!(f, "s{}", m.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Constraint {
    /// `l ~ r`
    EqTy(MonoType, MonoType),
    /// Type duplication: both outputs are copies of the source.
    DupTy {
        src: MonoType,
        out1: MonoType,
        out2: MonoType,
    },
    /// `x : s in G`
    InCtx {
        name: Name,
        scheme: Scheme,
        ctx: CtxRef,
    },
    /// `out := base , x : s`
    ExtendCtx {
        out: CtxRef,
        base: CtxRef,
        name: Name,
        scheme: Scheme,
    },
    /// n-ary context duplication.
    DupCtx { src: CtxRef, outs: Vec<CtxRef> },
    /// `s <= t`: the target is an instance of the scheme.
    Inst { scheme: Scheme, target: MonoType },
    /// The scheme generalises `mono` in `ctx`.
    GenInCtx {
        scheme: Scheme,
        mono: MonoType,
        ctx: CtxRef,
    },
    Ask { name: Name, scheme: Scheme },
    Tell { name: Name, scheme: Scheme },
    GenOpen,
    GenClose { scheme: Scheme, mono: MonoType },
}

impl Constraint {
    /// Ask, Tell and the generalisation markers take their meaning from
    /// their position in a tree.
    pub fn is_situated(&self) -> bool {
        matches!(
            self,
            Constraint::Ask { .. }
                | Constraint::Tell { .. }
                | Constraint::GenOpen
                | Constraint::GenClose { .. }
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Constraint::EqTy(..) => "EqTy",
            Constraint::DupTy { .. } => "DupTy",
            Constraint::InCtx { .. } => "InCtx",
            Constraint::ExtendCtx { .. } => "ExtendCtx",
            Constraint::DupCtx { .. } => "DupCtx",
            Constraint::Inst { .. } => "Inst",
            Constraint::GenInCtx { .. } => "GenInCtx",
            Constraint::Ask { .. } => "Ask",
            Constraint::Tell { .. } => "Tell",
            Constraint::GenOpen => "GenOpen",
            Constraint::GenClose { .. } => "GenClose",
        }
    }

    /// Every metavariable occurrence, in order, with repeats. Used by the
    /// linearity check, which counts occurrences rather than variables.
    pub fn meta_occurrences(&self) -> Vec<MetaVar> {
        fn ty(t: &MonoType, out: &mut Vec<MetaVar>) {
            match t {
                MonoType::Meta(m) => out.push(*m),
                MonoType::Rigid(_) | MonoType::Base(_) => {}
                MonoType::Arrow(a, b) => {
                    ty(a, out);
                    ty(b, out);
                }
            }
        }
        fn sch(s: &Scheme, out: &mut Vec<MetaVar>) {
            match s {
                Scheme::Known(p) => ty(&p.body, out),
                Scheme::Meta(m) => out.push(*m),
            }
        }
        let mut out = Vec::new();
        match self {
            Constraint::EqTy(l, r) => {
                ty(l, &mut out);
                ty(r, &mut out);
            }
            Constraint::DupTy { src, out1, out2 } => {
                ty(src, &mut out);
                ty(out1, &mut out);
                ty(out2, &mut out);
            }
            Constraint::InCtx { scheme, .. }
            | Constraint::ExtendCtx { scheme, .. }
            | Constraint::Ask { scheme, .. }
            | Constraint::Tell { scheme, .. } => sch(scheme, &mut out),
            Constraint::DupCtx { .. } | Constraint::GenOpen => {}
            Constraint::Inst { scheme, target } => {
                sch(scheme, &mut out);
                ty(target, &mut out);
            }
            Constraint::GenInCtx { scheme, mono, .. } | Constraint::GenClose { scheme, mono } => {
                sch(scheme, &mut out);
                ty(mono, &mut out);
            }
        }
        out
    }

    /// Every context-reference occurrence, in order, with repeats.
    pub fn ctx_occurrences(&self) -> Vec<CtxRef> {
        match self {
            Constraint::InCtx { ctx, .. } | Constraint::GenInCtx { ctx, .. } => vec![*ctx],
            Constraint::ExtendCtx { out, base, .. } => vec![*out, *base],
            Constraint::DupCtx { src, outs } => {
                let mut v = vec![*src];
                v.extend(outs.iter().copied());
                v
            }
            _ => Vec::new(),
        }
    }

    pub fn map_types(&self, f: &mut impl FnMut(&MonoType) -> MonoType) -> Constraint {
        let sch = |s: &Scheme, f: &mut dyn FnMut(&MonoType) -> MonoType| match s {
            Scheme::Known(p) => Scheme::Known(PolyType {
                bound: p.bound.clone(),
                body: f(&p.body),
            }),
            Scheme::Meta(m) => Scheme::Meta(*m),
        };
        match self {
            Constraint::EqTy(l, r) => Constraint::EqTy(f(l), f(r)),
            Constraint::DupTy { src, out1, out2 } => Constraint::DupTy {
                src: f(src),
                out1: f(out1),
                out2: f(out2),
            },
            Constraint::InCtx { name, scheme, ctx } => Constraint::InCtx {
                name: name.clone(),
                scheme: sch(scheme, f),
                ctx: *ctx,
            },
            Constraint::ExtendCtx {
                out,
                base,
                name,
                scheme,
            } => Constraint::ExtendCtx {
                out: *out,
                base: *base,
                name: name.clone(),
                scheme: sch(scheme, f),
            },
            Constraint::DupCtx { .. } | Constraint::GenOpen => self.clone(),
            Constraint::Inst { scheme, target } => Constraint::Inst {
                scheme: sch(scheme, f),
                target: f(target),
            },
            Constraint::GenInCtx { scheme, mono, ctx } => Constraint::GenInCtx {
                scheme: sch(scheme, f),
                mono: f(mono),
                ctx: *ctx,
            },
            Constraint::Ask { name, scheme } => Constraint::Ask {
                name: name.clone(),
                scheme: sch(scheme, f),
            },
            Constraint::Tell { name, scheme } => Constraint::Tell {
                name: name.clone(),
                scheme: sch(scheme, f),
            },
            Constraint::GenClose { scheme, mono } => Constraint::GenClose {
                scheme: sch(scheme, f),
                mono: f(mono),
            },
        }
    }

    /// Renames metavariables, including scheme metavariables.
    pub fn rename_metas(&self, f: &impl Fn(MetaVar) -> MetaVar) -> Constraint {
        let renamed = self.map_types(&mut |t| t.map_metas(&mut |m| Some(MonoType::Meta(f(m)))));
        let fix = |s: Scheme| match s {
            Scheme::Meta(m) => Scheme::Meta(f(m)),
            known => known,
        };
        match renamed {
            Constraint::InCtx { name, scheme, ctx } => Constraint::InCtx {
                name,
                scheme: fix(scheme),
                ctx,
            },
            Constraint::ExtendCtx {
                out,
                base,
                name,
                scheme,
            } => Constraint::ExtendCtx {
                out,
                base,
                name,
                scheme: fix(scheme),
            },
            Constraint::Inst { scheme, target } => Constraint::Inst {
                scheme: fix(scheme),
                target,
            },
            Constraint::GenInCtx { scheme, mono, ctx } => Constraint::GenInCtx {
                scheme: fix(scheme),
                mono,
                ctx,
            },
            Constraint::Ask { name, scheme } => Constraint::Ask {
                name,
                scheme: fix(scheme),
            },
            Constraint::Tell { name, scheme } => Constraint::Tell {
                name,
                scheme: fix(scheme),
            },
            Constraint::GenClose { scheme, mono } => Constraint::GenClose {
                scheme: fix(scheme),
                mono,
            },
            other => other,
        }
    }
}

struct Atom<'a>(&'a MonoType);

impl fmt::Display for Atom<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt_atom(f)
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::EqTy(l, r) => write!(f, "{l} ~ {r}"),
            Constraint::DupTy { src, out1, out2 } => {
                write!(f, "dup {} -> {} {}", Atom(src), Atom(out1), Atom(out2))
            }
            Constraint::InCtx { name, scheme, ctx } => write!(f, "{name} : {scheme} in {ctx}"),
            Constraint::ExtendCtx {
                out,
                base,
                name,
                scheme,
            } => write!(f, "{out} := {base} , {name} : {scheme}"),
            Constraint::DupCtx { src, outs } => {
                write!(f, "dup {src} ->")?;
                for o in outs {
                    write!(f, " {o}")?;
                }
                Ok(())
            }
            Constraint::Inst { scheme, target } => write!(f, "{scheme} <= {target}"),
            Constraint::GenInCtx { scheme, mono, ctx } => {
                write!(f, "{scheme} gen {mono} in {ctx}")
            }
            Constraint::Ask { name, scheme } => write!(f, "ask {name} : {scheme}"),
            Constraint::Tell { name, scheme } => write!(f, "tell {name} : {scheme}"),
            Constraint::GenOpen => f.write_str("gen["),
            Constraint::GenClose { scheme, mono } => write!(f, "]gen {scheme} := {mono}"),
        }
    }
}

/// Exact set of metavariables occurring in a value.
pub trait FreeMetas {
    fn free_metas(&self) -> BTreeSet<MetaVar>;
}

impl FreeMetas for MonoType {
    fn free_metas(&self) -> BTreeSet<MetaVar> {
        self.metas().into_iter().collect()
    }
}

impl FreeMetas for PolyType {
    fn free_metas(&self) -> BTreeSet<MetaVar> {
        self.body.free_metas()
    }
}

impl FreeMetas for Scheme {
    fn free_metas(&self) -> BTreeSet<MetaVar> {
        self.metas().into_iter().collect()
    }
}

impl FreeMetas for Constraint {
    fn free_metas(&self) -> BTreeSet<MetaVar> {
        self.meta_occurrences().into_iter().collect()
    }
}

/// A candidate solution: monotypes for type metavariables, schemes for
/// scheme metavariables, and contexts for context references.
#[derive(Clone, Debug, Default)]
pub struct Assignment {
    pub metas: HashMap<MetaVar, MonoType>,
    pub schemes: HashMap<MetaVar, PolyType>,
    pub contexts: HashMap<CtxRef, Context>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SatisfyError {
    #[error("not a closed constraint: {0} is checked by its position in a tree")]
    NotClosed(&'static str),
    #[error("metavariable {0} has no assigned value")]
    UnassignedMeta(MetaVar),
    #[error("context {0} has no assigned value")]
    UnassignedCtx(CtxRef),
}

impl Assignment {
    fn mono(&self, t: &MonoType) -> Result<MonoType, SatisfyError> {
        if let Some(m) = t.metas().into_iter().find(|m| !self.metas.contains_key(m)) {
            return Err(SatisfyError::UnassignedMeta(m));
        }
        Ok(t.subst_metas(&self.metas))
    }

    fn scheme(&self, s: &Scheme) -> Result<PolyType, SatisfyError> {
        match s {
            Scheme::Known(p) => Ok(PolyType {
                bound: p.bound.clone(),
                body: self.mono(&p.body)?,
            }),
            Scheme::Meta(m) => self
                .schemes
                .get(m)
                .cloned()
                .ok_or(SatisfyError::UnassignedMeta(*m)),
        }
    }

    fn ctx(&self, r: CtxRef) -> Result<&Context, SatisfyError> {
        self.contexts.get(&r).ok_or(SatisfyError::UnassignedCtx(r))
    }
}

/// Matches `pattern` against `target`, binding the rigid variables listed in
/// `bound` consistently.
fn matches_instance(
    bound: &[Name],
    pattern: &MonoType,
    target: &MonoType,
    binding: &mut HashMap<Name, MonoType>,
) -> bool {
    match (pattern, target) {
        (MonoType::Rigid(n), _) if bound.contains(n) => match binding.get(n) {
            Some(prev) => prev == target,
            None => {
                binding.insert(n.clone(), target.clone());
                true
            }
        },
        (MonoType::Arrow(a1, b1), MonoType::Arrow(a2, b2)) => {
            matches_instance(bound, a1, a2, binding) && matches_instance(bound, b1, b2, binding)
        }
        _ => pattern == target,
    }
}

/// Whether `target` is an instance of `scheme`.
pub fn is_instance(scheme: &PolyType, target: &MonoType) -> bool {
    matches_instance(&scheme.bound, &scheme.body, target, &mut HashMap::new())
}

/// The satisfaction predicate for closed (non-situated) constraints.
pub fn satisfies(c: &Constraint, a: &Assignment) -> Result<bool, SatisfyError> {
    Ok(match c {
        Constraint::EqTy(l, r) => a.mono(l)? == a.mono(r)?,
        Constraint::DupTy { src, out1, out2 } => {
            let src = a.mono(src)?;
            a.mono(out1)? == src && a.mono(out2)? == src
        }
        Constraint::InCtx { name, scheme, ctx } => {
            let want = a.scheme(scheme)?;
            match a.ctx(*ctx)?.lookup(name) {
                Some(found) => found.canonical() == want.canonical(),
                None => false,
            }
        }
        Constraint::ExtendCtx {
            out,
            base,
            name,
            scheme,
        } => {
            let expected = a.ctx(*base)?.extended(name.clone(), a.scheme(scheme)?);
            *a.ctx(*out)? == expected
        }
        Constraint::DupCtx { src, outs } => {
            let src = a.ctx(*src)?;
            for o in outs {
                if a.ctx(*o)? != src {
                    return Ok(false);
                }
            }
            true
        }
        Constraint::Inst { scheme, target } => is_instance(&a.scheme(scheme)?, &a.mono(target)?),
        Constraint::GenInCtx { scheme, mono, ctx } => {
            let scheme = a.scheme(scheme)?;
            let mono = a.mono(mono)?;
            let in_ctx = a.ctx(*ctx)?.free_rigids();
            let expected: Vec<Name> = mono
                .rigids()
                .into_iter()
                .filter(|n| !in_ctx.contains(n))
                .collect();
            scheme.bound == expected && scheme.body == mono
        }
        situated => return Err(SatisfyError::NotClosed(situated.kind())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_scheme;

    fn int() -> MonoType {
        MonoType::base("Int")
    }

    fn bool_() -> MonoType {
        MonoType::base("Bool")
    }

    #[test]
    fn eq_reflexive_and_distinct_bases() {
        let a = Assignment::default();
        assert!(satisfies(&Constraint::EqTy(int(), int()), &a).unwrap());
        assert!(!satisfies(&Constraint::EqTy(int(), bool_()), &a).unwrap());
    }

    #[test]
    fn in_ctx_lookup() {
        let mut a = Assignment::default();
        let mut g = Context::empty();
        g.push(Name::new("y"), PolyType::mono(bool_()));
        g.push(Name::new("x"), PolyType::mono(int()));
        a.contexts.insert(CtxRef(0), g);
        let c = Constraint::InCtx {
            name: Name::new("x"),
            scheme: Scheme::mono(int()),
            ctx: CtxRef(0),
        };
        assert!(satisfies(&c, &a).unwrap());
        let c = Constraint::InCtx {
            name: Name::new("y"),
            scheme: Scheme::mono(int()),
            ctx: CtxRef(0),
        };
        assert!(!satisfies(&c, &a).unwrap());
    }

    #[test]
    fn innermost_binding_wins() {
        let mut a = Assignment::default();
        let mut g = Context::empty();
        g.push(Name::new("x"), PolyType::mono(bool_()));
        g.push(Name::new("x"), PolyType::mono(int()));
        a.contexts.insert(CtxRef(0), g);
        let c = |t| Constraint::InCtx {
            name: Name::new("x"),
            scheme: Scheme::mono(t),
            ctx: CtxRef(0),
        };
        assert!(satisfies(&c(int()), &a).unwrap());
        assert!(!satisfies(&c(bool_()), &a).unwrap());
    }

    /// Brute-force instance check: try every assignment of the bound
    /// variables to subterms of the target.
    fn instance_by_enumeration(scheme: &PolyType, target: &MonoType) -> bool {
        fn subterms(t: &MonoType, out: &mut Vec<MonoType>) {
            out.push(t.clone());
            if let MonoType::Arrow(a, b) = t {
                subterms(a, out);
                subterms(b, out);
            }
        }
        let mut subs = Vec::new();
        subterms(target, &mut subs);
        let n = scheme.bound.len();
        let total = subs.len().pow(n as u32);
        (0..total).any(|mut code| {
            let mut map = HashMap::new();
            for b in &scheme.bound {
                map.insert(b.clone(), subs[code % subs.len()].clone());
                code /= subs.len();
            }
            scheme.body.subst_rigids(&map) == *target
        })
    }

    #[test]
    fn inst_agrees_with_enumeration() {
        let id = parse_scheme("forall a. a -> a").unwrap();
        let ii = MonoType::arrow(int(), int());
        assert!(instance_by_enumeration(&id, &ii));
        let c = Constraint::Inst {
            scheme: Scheme::Known(id.clone()),
            target: ii,
        };
        assert!(satisfies(&c, &Assignment::default()).unwrap());

        let cases = [
            ("forall a. a -> a", "Int -> Bool"),
            ("forall a b. a -> b", "Int -> Bool"),
            ("forall a b. a -> b -> a", "Int -> Bool -> Int"),
            ("forall a b. a -> b -> a", "Int -> Bool -> Bool"),
            ("forall a. (a -> a) -> a", "(Int -> Int) -> Int"),
            ("forall a. a", "(Int -> Int) -> Int"),
            ("Int -> Int", "Int -> Int"),
            ("Int -> Int", "Bool -> Int"),
        ];
        for (s, t) in cases {
            let s = parse_scheme(s).unwrap();
            let t = crate::syntax::parse_mono(t).unwrap();
            assert_eq!(is_instance(&s, &t), instance_by_enumeration(&s, &t), "{s} <= {t}");
        }
    }

    #[test]
    fn mono_scheme_instance_is_equality() {
        let s = PolyType::mono(int());
        assert!(is_instance(&s, &int()));
        assert!(!is_instance(&s, &bool_()));
    }

    #[test]
    fn dup_outputs_are_equal_copies() {
        let mut a = Assignment::default();
        a.metas.insert(MetaVar(0), int());
        a.metas.insert(MetaVar(1), int());
        let dup = Constraint::DupTy {
            src: int(),
            out1: MonoType::meta(0),
            out2: MonoType::meta(1),
        };
        assert!(satisfies(&dup, &a).unwrap());
        assert!(satisfies(&Constraint::EqTy(MonoType::meta(0), MonoType::meta(1)), &a).unwrap());
        a.metas.insert(MetaVar(1), bool_());
        assert!(!satisfies(&dup, &a).unwrap());
    }

    #[test]
    fn situated_constraints_are_not_closed() {
        let ask = Constraint::Ask {
            name: Name::new("x"),
            scheme: Scheme::mono(int()),
        };
        assert_eq!(
            satisfies(&ask, &Assignment::default()),
            Err(SatisfyError::NotClosed("Ask"))
        );
        assert!(satisfies(&Constraint::GenOpen, &Assignment::default()).is_err());
    }

    #[test]
    fn unassigned_meta_is_reported() {
        let c = Constraint::EqTy(MonoType::meta(3), int());
        assert_eq!(
            satisfies(&c, &Assignment::default()),
            Err(SatisfyError::UnassignedMeta(MetaVar(3)))
        );
    }

    #[test]
    fn gen_in_ctx_requires_canonical_order() {
        let mut a = Assignment::default();
        let mut g = Context::empty();
        g.push(Name::new("y"), PolyType::mono(MonoType::rigid("c")));
        a.contexts.insert(CtxRef(0), g);
        let mono = crate::syntax::parse_mono("a -> b -> c").unwrap();
        let mk = |s: &str| Constraint::GenInCtx {
            scheme: Scheme::Known(parse_scheme(s).unwrap()),
            mono: mono.clone(),
            ctx: CtxRef(0),
        };
        assert!(satisfies(&mk("forall a b. a -> b -> c"), &a).unwrap());
        assert!(!satisfies(&mk("forall b a. a -> b -> c"), &a).unwrap());
        assert!(!satisfies(&mk("forall a b c. a -> b -> c"), &a).unwrap());
    }

    #[test]
    fn extend_and_dup_ctx() {
        let mut a = Assignment::default();
        let base = Context::empty();
        let ext = base.extended(Name::new("x"), PolyType::mono(int()));
        a.contexts.insert(CtxRef(0), base.clone());
        a.contexts.insert(CtxRef(1), ext);
        a.contexts.insert(CtxRef(2), base);
        let e = Constraint::ExtendCtx {
            out: CtxRef(1),
            base: CtxRef(0),
            name: Name::new("x"),
            scheme: Scheme::mono(int()),
        };
        assert!(satisfies(&e, &a).unwrap());
        let d = Constraint::DupCtx {
            src: CtxRef(0),
            outs: vec![CtxRef(2), CtxRef(0)],
        };
        assert!(satisfies(&d, &a).unwrap());
        let d = Constraint::DupCtx {
            src: CtxRef(0),
            outs: vec![CtxRef(1)],
        };
        assert!(!satisfies(&d, &a).unwrap());
    }

    #[test]
    fn free_metas_examples() {
        let t = MonoType::arrow(MonoType::meta(0), int());
        assert_eq!(t.free_metas(), BTreeSet::from([MetaVar(0)]));
        assert!(int().free_metas().is_empty());
        let c = Constraint::EqTy(MonoType::meta(1), MonoType::meta(1));
        assert_eq!(c.free_metas(), BTreeSet::from([MetaVar(1)]));
    }

    #[test]
    fn fresh_meta_is_monotone() {
        let mut s = MetaSupply::new();
        assert_eq!(s.fresh(), MetaVar(0));
        assert_eq!(s.fresh(), MetaVar(1));
        let ids: BTreeSet<_> = (0..100).map(|_| s.fresh()).collect();
        assert_eq!(ids.len(), 100);
        assert!(ids.iter().all(|m| m.0 >= 2));
    }

    #[test]
    fn rendering() {
        let c = Constraint::EqTy(
            MonoType::meta(0),
            MonoType::arrow(MonoType::meta(1), MonoType::meta(2)),
        );
        assert_eq!(c.to_string(), "t0 ~ t1 -> t2");
        let d = Constraint::DupCtx {
            src: CtxRef(0),
            outs: vec![CtxRef(1), CtxRef(2)],
        };
        assert_eq!(d.to_string(), "dup G0 -> G1 G2");
        let g = Constraint::GenClose {
            scheme: Scheme::Meta(MetaVar(3)),
            mono: MonoType::meta(4),
        };
        assert_eq!(g.to_string(), "]gen s3 := t4");
        let i = Constraint::Inst {
            scheme: Scheme::Meta(MetaVar(3)),
            target: MonoType::meta(0),
        };
        assert_eq!(i.to_string(), "s3 <= t0");
    }
}
