use std::collections::{BTreeSet, HashMap};

use crate::constraints::{MetaSupply, MetaVar, MonoType, NameSupply, PolyType};
use crate::syntax::Name;
use crate::treegen::MetaSort;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Item {
    Entry(MetaVar),
    Mark(u32),
}

/// Opaque handle to a generalisation-region mark.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mark(u32);

#[derive(Clone, Debug)]
struct Info {
    sort: MetaSort,
    solution: Option<MonoType>,
    scheme: Option<PolyType>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Mismatch,
    OccursCheck,
    UnboundVariable,
}

impl std::fmt::Display for FailureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FailureKind::Mismatch => "mismatch",
            FailureKind::OccursCheck => "occurs check",
            FailureKind::UnboundVariable => "unbound variable",
        })
    }
}

/// The innermost pair of types that could not be made equal.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{kind}: {left} ~ {right}")]
pub struct UnifyError {
    pub kind: FailureKind,
    pub left: MonoType,
    pub right: MonoType,
}

/// One change made to the store, for traces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Delta {
    Solved(MetaVar, MonoType),
    SchemeSolved(MetaVar, PolyType),
    Hoisted(Vec<MetaVar>, MetaVar),
    Fresh(MetaVar),
}

impl std::fmt::Display for Delta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Delta::Solved(m, t) => write!(f, "{m} := {t}"),
            Delta::SchemeSolved(m, p) => write!(f, "s{} := {p}", m.0),
            Delta::Hoisted(ms, before) => {
                f.write_str("hoist")?;
                for m in ms {
                    write!(f, " {m}")?;
                }
                write!(f, " before {before}")
            }
            Delta::Fresh(m) => write!(f, "fresh {m}"),
        }
    }
}

/// Result of closing a generalisation region.
#[derive(Clone, Debug)]
pub struct Generalized {
    pub scheme: PolyType,
    /// Region metas that became bound variables, with their names.
    pub quantified: Vec<(MetaVar, Name)>,
    /// Unsolved region metas referenced from outside, moved out of the region.
    pub escaped: Vec<MetaVar>,
    /// Final values of the discarded region entries, with quantified metas
    /// replaced by their names.
    pub retired: Vec<(MetaVar, MetaSort, Option<MonoType>, Option<PolyType>)>,
}

/// Ordered metavariable store. Entries appear in declaration order, except
/// that solving may move unsolved metas earlier so that every solution only
/// mentions entries before it. Solutions are kept fully substituted.
#[derive(Clone, Debug)]
pub struct MetaStore {
    order: Vec<Item>,
    info: HashMap<MetaVar, Info>,
    supply: MetaSupply,
    marks: u32,
    deltas: Vec<Delta>,
}

impl MetaStore {
    /// A store whose fresh metas start at `next`.
    pub fn new(next: u32) -> MetaStore {
        MetaStore {
            order: Vec::new(),
            info: HashMap::new(),
            supply: MetaSupply::starting_at(next),
            marks: 0,
            deltas: Vec::new(),
        }
    }

    pub fn contains(&self, m: MetaVar) -> bool {
        self.info.contains_key(&m)
    }

    pub fn declare(&mut self, m: MetaVar, sort: MetaSort) {
        self.order.push(Item::Entry(m));
        self.info.insert(
            m,
            Info {
                sort,
                solution: None,
                scheme: None,
            },
        );
    }

    /// Declares a fresh monotype meta at the very start of the store, outside
    /// every region.
    pub fn declare_front(&mut self) -> MetaVar {
        let m = self.supply.fresh();
        self.order.insert(0, Item::Entry(m));
        self.info.insert(
            m,
            Info {
                sort: MetaSort::Mono,
                solution: None,
                scheme: None,
            },
        );
        self.deltas.push(Delta::Fresh(m));
        m
    }

    pub fn fresh(&mut self) -> MetaVar {
        let m = self.supply.fresh();
        self.declare(m, MetaSort::Mono);
        self.deltas.push(Delta::Fresh(m));
        m
    }

    pub fn mark(&mut self) -> Mark {
        self.marks += 1;
        self.order.push(Item::Mark(self.marks));
        Mark(self.marks)
    }

    pub fn solution(&self, m: MetaVar) -> Option<&MonoType> {
        self.info.get(&m).and_then(|i| i.solution.as_ref())
    }

    pub fn scheme(&self, m: MetaVar) -> Option<&PolyType> {
        self.info.get(&m).and_then(|i| i.scheme.as_ref())
    }

    /// Metas in store order.
    pub fn entries(&self) -> Vec<MetaVar> {
        self.order
            .iter()
            .filter_map(|i| match i {
                Item::Entry(m) => Some(*m),
                Item::Mark(_) => None,
            })
            .collect()
    }

    pub fn take_deltas(&mut self) -> Vec<Delta> {
        std::mem::take(&mut self.deltas)
    }

    fn pos(&self, m: MetaVar) -> usize {
        self.order
            .iter()
            .position(|i| *i == Item::Entry(m))
            .unwrap_or_else(|| panic!("{m} is not in the store"))
    }

    fn mark_pos(&self, mark: Mark) -> Option<usize> {
        self.order.iter().position(|i| *i == Item::Mark(mark.0))
    }

    /// Applies the current solutions.
    pub fn zonk(&self, t: &MonoType) -> MonoType {
        t.map_metas(&mut |m| self.solution(m).cloned())
    }

    pub fn zonk_poly(&self, p: &PolyType) -> PolyType {
        p.map_metas(&mut |m| self.solution(m).cloned())
    }

    /// Moves the listed metas that sit after `anchor` to just before it,
    /// keeping their relative order.
    fn hoist_before(&mut self, anchor: usize, metas: &[MetaVar]) -> Vec<MetaVar> {
        let moving: Vec<MetaVar> = self.order[anchor..]
            .iter()
            .filter_map(|i| match i {
                Item::Entry(m) if metas.contains(m) => Some(*m),
                _ => None,
            })
            .collect();
        if moving.is_empty() {
            return moving;
        }
        let anchor_item = self.order[anchor];
        self.order
            .retain(|i| !matches!(i, Item::Entry(m) if moving.contains(m)));
        let at = self
            .order
            .iter()
            .position(|i| *i == anchor_item)
            .expect("anchor stays in the store");
        for (k, m) in moving.iter().enumerate() {
            self.order.insert(at + k, Item::Entry(*m));
        }
        moving
    }

    /// Records `m := t`. `t` must be zonked and must not mention `m`.
    fn solve(&mut self, m: MetaVar, t: MonoType) {
        let at = self.pos(m);
        let moved = self.hoist_before(at, &t.metas());
        if !moved.is_empty() {
            self.deltas.push(Delta::Hoisted(moved, m));
        }
        for info in self.info.values_mut() {
            if let Some(s) = &info.solution {
                if s.occurs(m) {
                    info.solution = Some(s.map_metas(&mut |n| (n == m).then(|| t.clone())));
                }
            }
            if let Some(p) = &info.scheme {
                if p.body.occurs(m) {
                    info.scheme = Some(p.map_metas(&mut |n| (n == m).then(|| t.clone())));
                }
            }
        }
        self.deltas.push(Delta::Solved(m, t.clone()));
        self.info.get_mut(&m).expect("declared").solution = Some(t);
    }

    /// Records a scheme solution for a scheme meta, hoisting any metas it
    /// mentions that are declared later.
    pub fn solve_scheme(&mut self, m: MetaVar, p: PolyType) {
        let p = self.zonk_poly(&p);
        let at = self.pos(m);
        let moved = self.hoist_before(at, &p.metas());
        if !moved.is_empty() {
            self.deltas.push(Delta::Hoisted(moved, m));
        }
        self.deltas.push(Delta::SchemeSolved(m, p.clone()));
        self.info.get_mut(&m).expect("declared").scheme = Some(p);
    }

    /// Most general unifier, extending the store in place.
    pub fn unify(&mut self, a: &MonoType, b: &MonoType) -> Result<(), UnifyError> {
        let a = self.zonk(a);
        let b = self.zonk(b);
        match (&a, &b) {
            (MonoType::Meta(x), MonoType::Meta(y)) if x == y => Ok(()),
            (MonoType::Meta(x), MonoType::Meta(y)) => {
                // the later entry is defined as the earlier one
                if self.pos(*x) < self.pos(*y) {
                    self.solve(*y, a.clone());
                } else {
                    self.solve(*x, b.clone());
                }
                Ok(())
            }
            (MonoType::Meta(x), t) | (t, MonoType::Meta(x)) => {
                if t.occurs(*x) {
                    return Err(UnifyError {
                        kind: FailureKind::OccursCheck,
                        left: a.clone(),
                        right: b.clone(),
                    });
                }
                self.solve(*x, t.clone());
                Ok(())
            }
            (MonoType::Arrow(a1, r1), MonoType::Arrow(a2, r2)) => {
                self.unify(a1, a2)?;
                self.unify(r1, r2)
            }
            (MonoType::Base(n), MonoType::Base(m)) | (MonoType::Rigid(n), MonoType::Rigid(m))
                if n == m =>
            {
                Ok(())
            }
            _ => Err(UnifyError {
                kind: FailureKind::Mismatch,
                left: a,
                right: b,
            }),
        }
    }

    /// Replaces each bound variable with a fresh meta at the end of the store.
    pub fn instantiate(&mut self, s: &PolyType) -> MonoType {
        let map: HashMap<Name, MonoType> = s
            .bound
            .iter()
            .map(|n| (n.clone(), MonoType::Meta(self.fresh())))
            .collect();
        self.zonk(&s.body).subst_rigids(&map)
    }

    /// Closes the region opened at `mark`: quantifies the unsolved region
    /// metas of `body` that are not in `keep`, moves the region metas that
    /// are in `keep` out of the region, and discards the rest of it. Bound
    /// names avoid `avoid`.
    pub fn generalize(
        &mut self,
        mark: Mark,
        body: &MonoType,
        keep: &BTreeSet<MetaVar>,
        avoid: &BTreeSet<Name>,
    ) -> Generalized {
        let body = self.zonk(body);
        let start = self.mark_pos(mark).expect("region mark is in the store");
        let region: Vec<MetaVar> = self.order[start + 1..]
            .iter()
            .filter_map(|i| match i {
                Item::Entry(m) => Some(*m),
                Item::Mark(_) => None,
            })
            .collect();
        let unsolved = |s: &MetaStore, m: &MetaVar| s.info[m].solution.is_none();
        let escaped: Vec<MetaVar> = region
            .iter()
            .filter(|m| unsolved(self, m) && keep.contains(m))
            .copied()
            .collect();
        let mut names = NameSupply::avoiding(avoid.clone());
        let quantified: Vec<(MetaVar, Name)> = body
            .metas()
            .into_iter()
            .filter(|m| region.contains(m) && !keep.contains(m))
            .map(|m| (m, names.next_name()))
            .collect();
        let to_rigid: HashMap<MetaVar, MonoType> = quantified
            .iter()
            .map(|(m, n)| (*m, MonoType::Rigid(n.clone())))
            .collect();
        let scheme = PolyType {
            bound: quantified.iter().map(|(_, n)| n.clone()).collect(),
            body: body.subst_metas(&to_rigid),
        };
        let moved = self.hoist_before(start, &escaped);
        if !moved.is_empty() {
            if let Some(Item::Entry(anchor)) = self.order.get(start + moved.len()).copied() {
                self.deltas.push(Delta::Hoisted(moved, anchor));
            }
        }
        let start = self.mark_pos(mark).expect("region mark is in the store");
        let mut retired = Vec::new();
        for item in self.order.drain(start..) {
            if let Item::Entry(m) = item {
                let info = self.info.remove(&m).expect("declared");
                let solution = match (&info.solution, to_rigid.get(&m)) {
                    (Some(s), _) => Some(s.subst_metas(&to_rigid)),
                    (None, Some(r)) => Some(r.clone()),
                    (None, None) => None,
                };
                let scheme = info.scheme.map(|p| subst_poly(&p, &to_rigid));
                retired.push((m, info.sort, solution, scheme));
            }
        }
        Generalized {
            scheme,
            quantified,
            escaped,
            retired,
        }
    }

    /// Checks that every solution mentions only unsolved entries declared
    /// earlier. Returns the first offending meta.
    pub fn check_discipline(&self) -> Result<(), MetaVar> {
        let mut seen: BTreeSet<MetaVar> = BTreeSet::new();
        for m in self.entries() {
            let info = &self.info[&m];
            let mentioned = info
                .solution
                .iter()
                .flat_map(|s| s.metas())
                .chain(info.scheme.iter().flat_map(|p| p.metas()));
            for n in mentioned {
                if !seen.contains(&n) || self.info[&n].solution.is_some() {
                    return Err(m);
                }
            }
            seen.insert(m);
        }
        Ok(())
    }

    pub fn sort(&self, m: MetaVar) -> Option<MetaSort> {
        self.info.get(&m).map(|i| i.sort)
    }
}

/// Substitutes metas inside a scheme, renaming bound variables that would
/// capture a rigid name brought in by the substitution.
pub(crate) fn subst_poly(p: &PolyType, map: &HashMap<MetaVar, MonoType>) -> PolyType {
    let incoming: BTreeSet<Name> = p
        .metas()
        .iter()
        .filter_map(|m| map.get(m))
        .flat_map(|t| t.rigids())
        .collect();
    let mut avoid = incoming.clone();
    avoid.extend(p.body.rigids());
    let mut names = NameSupply::avoiding(avoid);
    let mut rename = HashMap::new();
    let bound = p
        .bound
        .iter()
        .map(|b| {
            if incoming.contains(b) {
                let n = names.next_name();
                rename.insert(b.clone(), MonoType::Rigid(n.clone()));
                n
            } else {
                b.clone()
            }
        })
        .collect();
    PolyType {
        bound,
        body: p.body.subst_rigids(&rename).subst_metas(map),
    }
}
