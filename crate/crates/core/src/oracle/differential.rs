//! Side-by-side runs of the solver and Algorithm W.

use serde::Serialize;

use super::{algorithm_w, equiv_scheme, WError};
use crate::constraints::{Context, PolyType};
use crate::solver::{infer, FailureKind, InferError, Outcome};
use crate::syntax::Term;
use crate::treegen::Solution;
use crate::{Start, System};

/// What the solver said, reduced to what W can also say.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Answer {
    /// A type, generalised over whatever the solver left open.
    Typed(PolyType),
    Failed(FailureKind),
    /// An instantiation stalled on an unsolved scheme.
    Stuck,
}

impl std::fmt::Display for Answer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Answer::Typed(p) => write!(f, "{p}"),
            Answer::Failed(k) => write!(f, "{k}"),
            Answer::Stuck => write!(f, "stuck"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Disagreement {
    /// One side typed the term and the other did not.
    Verdict,
    /// Both failed, for different reasons.
    FailureKind,
    /// Both typed the term, with schemes that are not alpha-equivalent.
    Scheme,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Comparison {
    pub solver: Answer,
    pub oracle: Answer,
    pub disagreement: Option<Disagreement>,
}

fn w_kind(e: &WError) -> FailureKind {
    match e {
        WError::Mismatch(..) => FailureKind::Mismatch,
        WError::Occurs(..) => FailureKind::OccursCheck,
        WError::Unbound(_) => FailureKind::UnboundVariable,
    }
}

fn generalised(ctx: &Context, s: &Solution) -> PolyType {
    match s {
        Solution::Poly(p) => p.clone(),
        Solution::Mono(t) => {
            let fixed = ctx.free_rigids();
            let mut bound = Vec::new();
            for r in t.rigids() {
                if !fixed.contains(&r) && !bound.contains(&r) {
                    bound.push(r);
                }
            }
            PolyType {
                bound,
                body: t.clone(),
            }
        }
    }
}

/// Reduces an outcome. A result with residual metas counts as the scheme
/// quantifying them, which is what W reports.
pub fn answer(ctx: &Context, outcome: Outcome) -> Answer {
    match outcome {
        Outcome::Solved { result, .. } => Answer::Typed(generalised(ctx, &result)),
        Outcome::Failed(f) => Answer::Failed(f.kind),
        Outcome::Ambiguous(a) => match (a.stuck, a.result) {
            (None, Some(r)) => Answer::Typed(generalised(ctx, &r)),
            _ => Answer::Stuck,
        },
    }
}

/// Equal up to renaming of quantified variables.
pub fn same_answer(a: &Answer, b: &Answer) -> bool {
    match (a, b) {
        (Answer::Typed(x), Answer::Typed(y)) => equiv_scheme(x, y),
        _ => a == b,
    }
}

pub fn solver_answer(ctx: &Context, t: &Term, system: System) -> Result<Answer, InferError> {
    Ok(answer(ctx, infer(t, ctx, system, Start::Poly)?))
}

pub fn compare(ctx: &Context, t: &Term, system: System) -> Result<Comparison, InferError> {
    let solver = solver_answer(ctx, t, system)?;
    let oracle = match algorithm_w(ctx, t) {
        Ok(p) => Answer::Typed(p),
        Err(e) => Answer::Failed(w_kind(&e)),
    };
    let disagreement = match (&solver, &oracle) {
        (Answer::Typed(a), Answer::Typed(b)) => (!equiv_scheme(a, b)).then_some(Disagreement::Scheme),
        (Answer::Failed(a), Answer::Failed(b)) => (a != b).then_some(Disagreement::FailureKind),
        _ => Some(Disagreement::Verdict),
    };
    Ok(Comparison {
        solver,
        oracle,
        disagreement,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub index: usize,
    pub term: String,
    pub disagreement: Disagreement,
    pub solver: String,
    pub oracle: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DiffReport {
    pub total: usize,
    pub typed: usize,
    pub failed: usize,
    pub verdict_disagreements: usize,
    pub kind_disagreements: usize,
    pub scheme_disagreements: usize,
    /// Terms the solver rejected as malformed input.
    pub errors: usize,
    pub counterexamples: Vec<Counterexample>,
}

impl DiffReport {
    pub fn agreed(&self) -> usize {
        self.total
            - self.verdict_disagreements
            - self.kind_disagreements
            - self.scheme_disagreements
            - self.errors
    }

    /// Folds results in index order.
    pub fn from_results<'a>(
        results: impl IntoIterator<Item = (usize, &'a Term, Result<Comparison, InferError>)>,
    ) -> DiffReport {
        let mut r = DiffReport::default();
        for (index, term, c) in results {
            r.total += 1;
            let c = match c {
                Ok(c) => c,
                Err(_) => {
                    r.errors += 1;
                    continue;
                }
            };
            match c.oracle {
                Answer::Typed(_) => r.typed += 1,
                _ => r.failed += 1,
            }
            let Some(d) = c.disagreement else { continue };
            match d {
                Disagreement::Verdict => r.verdict_disagreements += 1,
                Disagreement::FailureKind => r.kind_disagreements += 1,
                Disagreement::Scheme => r.scheme_disagreements += 1,
            }
            r.counterexamples.push(Counterexample {
                index,
                term: term.to_string(),
                disagreement: d,
                solver: c.solver.to_string(),
                oracle: c.oracle.to_string(),
            });
        }
        r
    }
}

/// Compares every term, sequentially.
pub fn run(ctx: &Context, terms: &[Term], system: System) -> DiffReport {
    DiffReport::from_results(
        terms
            .iter()
            .enumerate()
            .map(|(i, t)| (i, t, compare(ctx, t, system))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_context, parse_term};

    fn cmp(term: &str, ctx: &str, system: System) -> Comparison {
        compare(
            &parse_context(ctx).unwrap(),
            &parse_term(term).unwrap(),
            system,
        )
        .unwrap()
    }

    #[test]
    fn agreeing_terms() {
        for (term, system) in [
            ("let id = \\x. x in id id", System::Hm),
            ("\\x. x x", System::Hm),
            ("\\x. x", System::Stlc),
            ("(\\x : Int. x) y", System::Stlc),
            ("nope", System::Hm),
        ] {
            let c = cmp(term, "y : Bool", system);
            assert_eq!(c.disagreement, None, "{term}: {c:?}");
        }
    }

    #[test]
    fn residual_metas_read_as_quantified() {
        let c = cmp("\\x. \\y. x", "", System::Stlc);
        assert_eq!(c.solver.to_string(), "forall a b. a -> b -> a");
        assert_eq!(c.disagreement, None);
    }

    #[test]
    fn reports_kind_disagreement() {
        // the argument's arrow expectation reaches the function first
        let c = cmp("one (\\f. f f)", "one : Int", System::Hm);
        assert_eq!(c.solver, Answer::Failed(FailureKind::Mismatch));
        assert_eq!(c.oracle, Answer::Failed(FailureKind::OccursCheck));
        assert_eq!(c.disagreement, Some(Disagreement::FailureKind));
    }

    #[test]
    fn report_counts() {
        let ctx = parse_context("one : Int").unwrap();
        let terms: Vec<Term> = ["one", "one one", "one (\\f. f f)"]
            .into_iter()
            .map(|t| parse_term(t).unwrap())
            .collect();
        let r = run(&ctx, &terms, System::Hm);
        assert_eq!((r.total, r.typed, r.failed), (3, 1, 2));
        assert_eq!(r.kind_disagreements, 1);
        assert_eq!(r.agreed(), 2);
        assert_eq!(r.counterexamples[0].index, 2);
    }
}
