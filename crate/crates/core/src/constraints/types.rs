use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use crate::syntax::Name;

/// A type metavariable. Ids come from a [`MetaSupply`] and are never reused
/// within one session.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct MetaVar(pub u32);

impl fmt::Display for MetaVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// Monotone source of fresh metavariables.
#[derive(Clone, Debug, Default)]
pub struct MetaSupply {
    next: u32,
}

impl MetaSupply {
    pub fn new() -> MetaSupply {
        MetaSupply::default()
    }

    /// Starts issuing at `next`, for sessions that extend an existing tree.
    pub fn starting_at(next: u32) -> MetaSupply {
        MetaSupply { next }
    }

    pub fn fresh(&mut self) -> MetaVar {
        let m = MetaVar(self.next);
        self.next += 1;
        m
    }

    pub fn peek(&self) -> u32 {
        self.next
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum MonoType {
    Meta(MetaVar),
    Rigid(Name),
    Base(Name),
    Arrow(Box<MonoType>, Box<MonoType>),
}

impl MonoType {
    pub fn arrow(param: MonoType, result: MonoType) -> MonoType {
        MonoType::Arrow(Box::new(param), Box::new(result))
    }

    pub fn base(name: &str) -> MonoType {
        MonoType::Base(Name::new(name))
    }

    pub fn rigid(name: &str) -> MonoType {
        MonoType::Rigid(Name::new(name))
    }

    pub fn meta(id: u32) -> MonoType {
        MonoType::Meta(MetaVar(id))
    }

    /// Metavariables in left-to-right first-occurrence order, without repeats.
    pub fn metas(&self) -> Vec<MetaVar> {
        let mut out = Vec::new();
        self.collect_metas(&mut out);
        out
    }

    fn collect_metas(&self, out: &mut Vec<MetaVar>) {
        match self {
            MonoType::Meta(m) => {
                if !out.contains(m) {
                    out.push(*m)
                }
            }
            MonoType::Rigid(_) | MonoType::Base(_) => {}
            MonoType::Arrow(a, b) => {
                a.collect_metas(out);
                b.collect_metas(out);
            }
        }
    }

    pub fn occurs(&self, m: MetaVar) -> bool {
        match self {
            MonoType::Meta(n) => *n == m,
            MonoType::Rigid(_) | MonoType::Base(_) => false,
            MonoType::Arrow(a, b) => a.occurs(m) || b.occurs(m),
        }
    }

    /// Rigid variables in first-occurrence order, without repeats.
    pub fn rigids(&self) -> Vec<Name> {
        fn go(t: &MonoType, out: &mut Vec<Name>) {
            match t {
                MonoType::Rigid(n) => {
                    if !out.contains(n) {
                        out.push(n.clone())
                    }
                }
                MonoType::Meta(_) | MonoType::Base(_) => {}
                MonoType::Arrow(a, b) => {
                    go(a, out);
                    go(b, out);
                }
            }
        }
        let mut out = Vec::new();
        go(self, &mut out);
        out
    }

    pub fn is_ground(&self) -> bool {
        match self {
            MonoType::Meta(_) => false,
            MonoType::Rigid(_) | MonoType::Base(_) => true,
            MonoType::Arrow(a, b) => a.is_ground() && b.is_ground(),
        }
    }

    /// Replaces metavariables for which `f` returns a type.
    pub fn map_metas(&self, f: &mut impl FnMut(MetaVar) -> Option<MonoType>) -> MonoType {
        match self {
            MonoType::Meta(m) => f(*m).unwrap_or_else(|| self.clone()),
            MonoType::Rigid(_) | MonoType::Base(_) => self.clone(),
            MonoType::Arrow(a, b) => MonoType::arrow(a.map_metas(f), b.map_metas(f)),
        }
    }

    pub fn subst_metas(&self, map: &HashMap<MetaVar, MonoType>) -> MonoType {
        self.map_metas(&mut |m| map.get(&m).cloned())
    }

    pub fn subst_rigids(&self, map: &HashMap<Name, MonoType>) -> MonoType {
        match self {
            MonoType::Rigid(n) => map.get(n).cloned().unwrap_or_else(|| self.clone()),
            MonoType::Meta(_) | MonoType::Base(_) => self.clone(),
            MonoType::Arrow(a, b) => {
                MonoType::arrow(a.subst_rigids(map), b.subst_rigids(map))
            }
        }
    }

    pub(crate) fn fmt_atom(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MonoType::Arrow(..) => write!(f, "({self})"),
            _ => write!(f, "{self}"),
        }
    }
}

impl fmt::Display for MonoType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MonoType::Meta(m) => write!(f, "{m}"),
            MonoType::Rigid(n) | MonoType::Base(n) => write!(f, "{n}"),
            MonoType::Arrow(a, b) => {
                a.fmt_atom(f)?;
                write!(f, " -> {b}")
            }
        }
    }
}

/// An n-ary type scheme `forall bound. body`. With no bound variables it is
/// the embedding of a monotype.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PolyType {
    pub bound: Vec<Name>,
    pub body: MonoType,
}

impl PolyType {
    pub fn mono(body: MonoType) -> PolyType {
        PolyType {
            bound: Vec::new(),
            body,
        }
    }

    pub fn is_mono(&self) -> bool {
        self.bound.is_empty()
    }

    pub fn metas(&self) -> Vec<MetaVar> {
        self.body.metas()
    }

    /// Rigid variables occurring free in the body.
    pub fn free_rigids(&self) -> Vec<Name> {
        self.body
            .rigids()
            .into_iter()
            .filter(|n| !self.bound.contains(n))
            .collect()
    }

    pub fn map_metas(&self, f: &mut impl FnMut(MetaVar) -> Option<MonoType>) -> PolyType {
        PolyType {
            bound: self.bound.clone(),
            body: self.body.map_metas(f),
        }
    }

    /// Renames bound variables to `a, b, ...` in first-occurrence order and
    /// drops bound variables that do not occur. Names free in the body are
    /// skipped when picking new names.
    pub fn canonical(&self) -> PolyType {
        let occurring: Vec<Name> = self
            .body
            .rigids()
            .into_iter()
            .filter(|n| self.bound.contains(n))
            .collect();
        let avoid: BTreeSet<Name> = self.free_rigids().into_iter().collect();
        let mut names = NameSupply::avoiding(avoid);
        let mut map = HashMap::new();
        let mut bound = Vec::new();
        for old in occurring {
            let new = names.next_name();
            map.insert(old, MonoType::Rigid(new.clone()));
            bound.push(new);
        }
        PolyType {
            bound,
            body: self.body.subst_rigids(&map),
        }
    }
}

impl fmt::Display for PolyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.bound.is_empty() {
            f.write_str("forall")?;
            for b in &self.bound {
                write!(f, " {b}")?;
            }
            f.write_str(". ")?;
        }
        write!(f, "{}", self.body)
    }
}

/// Produces `a, b, ..., z, a1, b1, ...`, skipping names in the avoid set.
#[derive(Clone, Debug, Default)]
pub struct NameSupply {
    next: usize,
    avoid: BTreeSet<Name>,
}

impl NameSupply {
    pub fn avoiding(avoid: BTreeSet<Name>) -> NameSupply {
        NameSupply { next: 0, avoid }
    }

    pub fn next_name(&mut self) -> Name {
        loop {
            let i = self.next;
            self.next += 1;
            let letter = (b'a' + (i % 26) as u8) as char;
            let name = if i < 26 {
                Name::new(letter.to_string())
            } else {
                Name::new(format!("{letter}{}", i / 26))
            };
            if !self.avoid.contains(&name) {
                return name;
            }
        }
    }
}

/// Ordered typing context. Lookup finds the rightmost binding.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Context {
    pub entries: Vec<(Name, PolyType)>,
}

impl Context {
    pub fn empty() -> Context {
        Context::default()
    }

    pub fn push(&mut self, name: Name, scheme: PolyType) {
        self.entries.push((name, scheme));
    }

    pub fn extended(&self, name: Name, scheme: PolyType) -> Context {
        let mut out = self.clone();
        out.push(name, scheme);
        out
    }

    pub fn lookup(&self, name: &Name) -> Option<&PolyType> {
        self.entries
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rigid variables free in any binding.
    pub fn free_rigids(&self) -> BTreeSet<Name> {
        self.entries
            .iter()
            .flat_map(|(_, s)| s.free_rigids())
            .collect()
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (n, s)) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{n} : {s}")?;
        }
        Ok(())
    }
}
