//! Reference inference by Algorithm W, for differential testing.
//!
//! Deliberately independent of the solver: its own type representation,
//! explicit substitutions composed as it goes, no store.

pub mod corpus;
pub mod differential;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::constraints::{Context, MonoType, PolyType};
use crate::syntax::{Name, Term};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WType {
    Var(u32),
    Base(String),
    /// A type constant written with a lowercase name in the context.
    Rigid(String),
    Fun(Box<WType>, Box<WType>),
}

impl WType {
    fn fun(a: WType, b: WType) -> WType {
        WType::Fun(Box::new(a), Box::new(b))
    }

    fn ftv(&self, out: &mut BTreeSet<u32>) {
        match self {
            WType::Var(v) => {
                out.insert(*v);
            }
            WType::Base(_) | WType::Rigid(_) => {}
            WType::Fun(a, b) => {
                a.ftv(out);
                b.ftv(out);
            }
        }
    }

    fn vars_in_order(&self, out: &mut Vec<u32>) {
        match self {
            WType::Var(v) => {
                if !out.contains(v) {
                    out.push(*v)
                }
            }
            WType::Base(_) | WType::Rigid(_) => {}
            WType::Fun(a, b) => {
                a.vars_in_order(out);
                b.vars_in_order(out);
            }
        }
    }

    fn occurs(&self, v: u32) -> bool {
        match self {
            WType::Var(u) => *u == v,
            WType::Base(_) | WType::Rigid(_) => false,
            WType::Fun(a, b) => a.occurs(v) || b.occurs(v),
        }
    }
}

impl fmt::Display for WType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WType::Var(v) => write!(f, "'{v}"),
            WType::Base(n) | WType::Rigid(n) => f.write_str(n),
            WType::Fun(a, b) => match **a {
                WType::Fun(..) => write!(f, "({a}) -> {b}"),
                _ => write!(f, "{a} -> {b}"),
            },
        }
    }
}

#[derive(Clone, Debug)]
struct WScheme {
    vars: Vec<u32>,
    ty: WType,
}

/// A substitution from type variables to types.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Subst(BTreeMap<u32, WType>);

impl Subst {
    pub fn empty() -> Subst {
        Subst::default()
    }

    pub fn single(v: u32, t: WType) -> Subst {
        Subst(BTreeMap::from([(v, t)]))
    }

    pub fn apply(&self, t: &WType) -> WType {
        match t {
            WType::Var(v) => match self.0.get(v) {
                Some(u) => u.clone(),
                None => t.clone(),
            },
            WType::Base(_) | WType::Rigid(_) => t.clone(),
            WType::Fun(a, b) => WType::fun(self.apply(a), self.apply(b)),
        }
    }

    fn apply_scheme(&self, s: &WScheme) -> WScheme {
        let mut inner = self.clone();
        for v in &s.vars {
            inner.0.remove(v);
        }
        WScheme {
            vars: s.vars.clone(),
            ty: inner.apply(&s.ty),
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Subst) -> Subst {
        let mut out: BTreeMap<u32, WType> =
            other.0.iter().map(|(v, t)| (*v, self.apply(t))).collect();
        for (v, t) in &self.0 {
            out.entry(*v).or_insert_with(|| t.clone());
        }
        Subst(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WError {
    Mismatch(WType, WType),
    Occurs(u32, WType),
    Unbound(Name),
}

impl fmt::Display for WError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WError::Mismatch(a, b) => write!(f, "cannot unify {a} with {b}"),
            WError::Occurs(v, t) => write!(f, "'{v} occurs in {t}"),
            WError::Unbound(x) => write!(f, "unbound variable {x}"),
        }
    }
}

fn unify(a: &WType, b: &WType) -> Result<Subst, WError> {
    match (a, b) {
        (WType::Var(u), WType::Var(v)) if u == v => Ok(Subst::empty()),
        (WType::Var(v), t) | (t, WType::Var(v)) => {
            if t.occurs(*v) {
                Err(WError::Occurs(*v, t.clone()))
            } else {
                Ok(Subst::single(*v, t.clone()))
            }
        }
        (WType::Fun(a1, b1), WType::Fun(a2, b2)) => {
            let s1 = unify(a1, a2)?;
            let s2 = unify(&s1.apply(b1), &s1.apply(b2))?;
            Ok(s2.compose(&s1))
        }
        (WType::Base(x), WType::Base(y)) | (WType::Rigid(x), WType::Rigid(y)) if x == y => {
            Ok(Subst::empty())
        }
        _ => Err(WError::Mismatch(a.clone(), b.clone())),
    }
}

type Env = Vec<(Name, WScheme)>;

struct W {
    next: u32,
}

impl W {
    fn fresh(&mut self) -> WType {
        self.next += 1;
        WType::Var(self.next - 1)
    }

    fn instantiate(&mut self, s: &WScheme) -> WType {
        let mut sub = Subst::empty();
        for v in &s.vars {
            let f = self.fresh();
            sub.0.insert(*v, f);
        }
        sub.apply(&s.ty)
    }

    fn from_mono(&mut self, t: &MonoType, bound: &BTreeMap<Name, u32>) -> WType {
        match t {
            MonoType::Base(n) => WType::Base(n.as_str().to_string()),
            MonoType::Rigid(n) => match bound.get(n) {
                Some(v) => WType::Var(*v),
                None => WType::Rigid(n.as_str().to_string()),
            },
            MonoType::Arrow(a, b) => WType::fun(self.from_mono(a, bound), self.from_mono(b, bound)),
            MonoType::Meta(m) => panic!("oracle input contains metavariable {m}"),
        }
    }

    fn from_poly(&mut self, p: &PolyType) -> WScheme {
        let bound: BTreeMap<Name, u32> = p
            .bound
            .iter()
            .map(|n| {
                self.next += 1;
                (n.clone(), self.next - 1)
            })
            .collect();
        WScheme {
            vars: bound.values().copied().collect(),
            ty: self.from_mono(&p.body, &bound),
        }
    }

    fn infer(&mut self, env: &Env, t: &Term) -> Result<(Subst, WType), WError> {
        match t {
            Term::Var(x) => {
                let s = env
                    .iter()
                    .rev()
                    .find(|(n, _)| n == x)
                    .map(|(_, s)| s.clone())
                    .ok_or_else(|| WError::Unbound(x.clone()))?;
                Ok((Subst::empty(), self.instantiate(&s)))
            }
            Term::Lam(x, body) => {
                let b = self.fresh();
                let mut env2 = env.clone();
                env2.push((
                    x.clone(),
                    WScheme {
                        vars: vec![],
                        ty: b.clone(),
                    },
                ));
                let (s1, t1) = self.infer(&env2, body)?;
                Ok((s1.clone(), WType::fun(s1.apply(&b), t1)))
            }
            Term::ALam(x, ann, body) => {
                let b = self.fresh();
                let a = self.from_mono(ann, &BTreeMap::new());
                let s0 = unify(&b, &a)?;
                let mut env2: Env = env.iter().map(|(n, s)| (n.clone(), s0.apply_scheme(s))).collect();
                env2.push((
                    x.clone(),
                    WScheme {
                        vars: vec![],
                        ty: s0.apply(&b),
                    },
                ));
                let (s1, t1) = self.infer(&env2, body)?;
                let s = s1.compose(&s0);
                Ok((s.clone(), WType::fun(s.apply(&b), t1)))
            }
            Term::App(f, a) => {
                let (s1, t1) = self.infer(env, f)?;
                let env1: Env = env.iter().map(|(n, s)| (n.clone(), s1.apply_scheme(s))).collect();
                let (s2, t2) = self.infer(&env1, a)?;
                let b = self.fresh();
                let s3 = unify(&s2.apply(&t1), &WType::fun(t2, b.clone()))?;
                Ok((s3.compose(&s2).compose(&s1), s3.apply(&b)))
            }
            Term::Let(x, bound, body) => {
                let (s1, t1) = self.infer(env, bound)?;
                let env1: Env = env.iter().map(|(n, s)| (n.clone(), s1.apply_scheme(s))).collect();
                let scheme = generalize(&env1, &t1);
                let mut env2 = env1;
                env2.push((x.clone(), scheme));
                let (s2, t2) = self.infer(&env2, body)?;
                Ok((s2.compose(&s1), t2))
            }
        }
    }
}

fn env_ftv(env: &Env) -> BTreeSet<u32> {
    let mut out = BTreeSet::new();
    for (_, s) in env {
        let mut ftv = BTreeSet::new();
        s.ty.ftv(&mut ftv);
        for v in &s.vars {
            ftv.remove(v);
        }
        out.extend(ftv);
    }
    out
}

fn generalize(env: &Env, t: &WType) -> WScheme {
    let free = env_ftv(env);
    let mut vars = Vec::new();
    t.vars_in_order(&mut vars);
    vars.retain(|v| !free.contains(v));
    WScheme {
        vars,
        ty: t.clone(),
    }
}

/// Converts a closed scheme back to surface types, naming bound variables
/// in first-occurrence order and avoiding rigid constants in the body.
fn to_poly(s: &WScheme) -> PolyType {
    fn rigids(t: &WType, out: &mut BTreeSet<Name>) {
        match t {
            WType::Rigid(n) => {
                out.insert(Name::new(n.as_str()));
            }
            WType::Fun(a, b) => {
                rigids(a, out);
                rigids(b, out);
            }
            _ => {}
        }
    }
    let mut avoid = BTreeSet::new();
    rigids(&s.ty, &mut avoid);
    let mut names = crate::constraints::NameSupply::avoiding(avoid);
    let mut order = Vec::new();
    s.ty.vars_in_order(&mut order);
    let named: BTreeMap<u32, Name> = order.iter().map(|v| (*v, names.next_name())).collect();
    fn go(t: &WType, named: &BTreeMap<u32, Name>) -> MonoType {
        match t {
            WType::Var(v) => MonoType::Rigid(named[v].clone()),
            WType::Base(n) => MonoType::base(n),
            WType::Rigid(n) => MonoType::rigid(n),
            WType::Fun(a, b) => MonoType::arrow(go(a, named), go(b, named)),
        }
    }
    PolyType {
        bound: order
            .iter()
            .filter(|v| s.vars.contains(v))
            .map(|v| named[v].clone())
            .collect(),
        body: go(&s.ty, &named),
    }
}

/// Principal scheme of `t` under `ctx`, generalised at the root.
pub fn algorithm_w(ctx: &Context, t: &Term) -> Result<PolyType, WError> {
    let mut w = W { next: 0 };
    let env: Env = ctx
        .entries
        .iter()
        .map(|(n, p)| (n.clone(), w.from_poly(p)))
        .collect();
    let (s, ty) = w.infer(&env, t)?;
    let env: Env = env.iter().map(|(n, sc)| (n.clone(), s.apply_scheme(sc))).collect();
    Ok(to_poly(&generalize(&env, &ty)))
}

/// Alpha-equivalence of schemes after canonical renaming.
pub fn equiv_scheme(a: &PolyType, b: &PolyType) -> bool {
    a.canonical() == b.canonical()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_context, parse_scheme, parse_term};

    fn w(term: &str, ctx: &str) -> Result<PolyType, WError> {
        algorithm_w(&parse_context(ctx).unwrap(), &parse_term(term).unwrap())
    }

    #[test]
    fn applied_identity() {
        assert_eq!(w("(\\x. x) y", "y : Int").unwrap().to_string(), "Int");
    }

    #[test]
    fn let_bound_identity_applied_to_itself() {
        assert_eq!(
            w("let id = \\x. x in id id", "").unwrap().to_string(),
            "forall a. a -> a"
        );
    }

    #[test]
    fn self_application() {
        assert!(matches!(w("\\x. x x", ""), Err(WError::Occurs(..))));
    }

    #[test]
    fn unbound_and_mismatch() {
        assert!(matches!(w("y", ""), Err(WError::Unbound(_))));
        assert!(matches!(
            w("(\\x : Int. x) y", "y : Bool"),
            Err(WError::Mismatch(..))
        ));
    }

    #[test]
    fn lambda_bound_variables_stay_monomorphic() {
        assert_eq!(
            w("\\y. let f = \\x. y in f", "").unwrap().to_string(),
            "forall a b. a -> b -> a"
        );
        assert!(w("\\f. pair (f one) (f true)", "pair : forall a b. a -> b -> a, one : Int, true : Bool").is_err());
    }

    #[test]
    fn context_rigids_are_constants() {
        assert_eq!(
            w("let f = \\x. k in f", "k : a").unwrap().to_string(),
            "forall b. b -> a"
        );
    }

    #[test]
    fn compose_is_idempotent() {
        let s = Subst::single(0, WType::fun(WType::Var(1), WType::Base("Int".into())));
        let s = Subst::single(1, WType::Base("Bool".into())).compose(&s);
        let t = WType::fun(WType::Var(0), WType::Var(1));
        assert_eq!(s.apply(&s.apply(&t)), s.apply(&t));
    }

    #[test]
    fn scheme_equivalence() {
        let p = |s: &str| parse_scheme(s).unwrap();
        assert!(equiv_scheme(&p("forall a. a -> a"), &p("forall b. b -> b")));
        assert!(!equiv_scheme(&p("forall a. a -> a"), &p("Int -> Int")));
        assert!(equiv_scheme(&p("forall a b. a -> b"), &p("forall b a. a -> b")));
    }
}
