//! Which input/output patterns each constraint supports.
//!
//! Reconstructed for deterministic dataflow without search. `-` marks a
//! position the constraint consumes and `+` one it produces.

use std::collections::BTreeMap;

use super::rules::ConstraintKind;
use super::Polarity::{self, Minus as M, Plus as P};

/// A positional pattern. `rest` covers any positions past `fixed`, for the
/// n-ary context duplication.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pattern {
    pub name: &'static str,
    pub fixed: Vec<Polarity>,
    pub rest: Option<Polarity>,
}

impl Pattern {
    fn new(name: &'static str, fixed: &[Polarity]) -> Pattern {
        Pattern {
            name,
            fixed: fixed.to_vec(),
            rest: None,
        }
    }

    fn with_rest(name: &'static str, fixed: &[Polarity], rest: Polarity) -> Pattern {
        Pattern {
            name,
            fixed: fixed.to_vec(),
            rest: Some(rest),
        }
    }

    /// The polarities for a constraint with `arity` positions.
    pub fn expand(&self, arity: usize) -> Option<Vec<Polarity>> {
        if arity < self.fixed.len() || (arity > self.fixed.len() && self.rest.is_none()) {
            return None;
        }
        let mut out = self.fixed.clone();
        out.resize(arity, self.rest.unwrap_or(M));
        Some(out)
    }
}

/// Which structural moves equality may make. One side is the source, all
/// of whose variables are inputs; arrows on it are constructed. Arrows on
/// the other side are destructed and its variables are either produced
/// (copy) or checked against what is already known (verify).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EqualityModes {
    pub copy: bool,
    pub verify: bool,
    pub construct: bool,
    pub destruct: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintModeTable {
    pub label: &'static str,
    pub patterns: BTreeMap<ConstraintKind, Vec<Pattern>>,
    pub equality: EqualityModes,
}

impl Default for ConstraintModeTable {
    fn default() -> ConstraintModeTable {
        use ConstraintKind::*;
        let mut patterns = BTreeMap::new();
        // name, scheme, context
        patterns.insert(
            InCtx,
            vec![
                Pattern::new("lookup", &[M, P, M]),
                Pattern::new("lookup and check", &[M, M, M]),
                Pattern::new("require", &[M, P, P]),
                Pattern::new("require checked", &[M, M, P]),
            ],
        );
        // extended, base, name, scheme
        patterns.insert(
            ExtendCtx,
            vec![
                Pattern::new("extend with fresh", &[P, M, M, P]),
                Pattern::new("extend", &[P, M, M, M]),
                Pattern::new("discharge", &[M, P, M, P]),
                Pattern::new("discharge checked", &[M, P, M, M]),
            ],
        );
        // source, copies...
        patterns.insert(
            DupCtx,
            vec![
                Pattern::with_rest("copy", &[M], P),
                Pattern::with_rest("merge", &[P], M),
            ],
        );
        patterns.insert(
            DupTy,
            vec![
                Pattern::with_rest("copy", &[M], P),
                Pattern::with_rest("merge", &[P], M),
            ],
        );
        // scheme, type
        patterns.insert(
            Inst,
            vec![
                Pattern::new("instantiate", &[M, P]),
                Pattern::new("check instance", &[M, M]),
            ],
        );
        // scheme, type, context
        patterns.insert(
            GenInCtx,
            vec![
                Pattern::new("generalise", &[P, M, M]),
                Pattern::new("generalise open", &[P, M, P]),
            ],
        );
        ConstraintModeTable {
            label: "reconstructed deterministic dataflow table (no search)",
            patterns,
            equality: EqualityModes {
                copy: true,
                verify: true,
                construct: true,
                destruct: true,
            },
        }
    }
}

impl ConstraintModeTable {
    /// A copy with the named pattern of `kind` removed.
    pub fn without(&self, kind: ConstraintKind, name: &str) -> ConstraintModeTable {
        let mut t = self.clone();
        if let Some(ps) = t.patterns.get_mut(&kind) {
            ps.retain(|p| p.name != name);
        }
        t
    }

    /// A copy with an extra pattern for `kind`.
    pub fn with(&self, kind: ConstraintKind, name: &'static str, fixed: &[Polarity]) -> ConstraintModeTable {
        let mut t = self.clone();
        t.patterns.entry(kind).or_default().push(Pattern::new(name, fixed));
        t
    }
}
