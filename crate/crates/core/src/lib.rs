//! Constraint-based typechecking for the lambda calculus.
//!
//! A term becomes a constraint problem in one of two equivalent shapes:
//! a flat, context-explicit constraint set read off the typing rules
//! ([`flatrules`]), or a telescopic constraint tree whose situated
//! constraints get their meaning from where they sit ([`treegen`]). The
//! [`solver`] walks a tree once, left to right, unifying as it goes.
//! [`modes`] analyses which directions the rules can run in, and
//! [`oracle`] is an independent Algorithm W used for differential testing.

pub mod constraints;
pub mod flatrules;
pub mod modes;
pub mod oracle;
pub mod solver;
pub mod syntax;
pub mod treegen;

use serde::Serialize;

/// Which typing rules to generate constraints from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    /// Simply typed, with annotated lambdas.
    Stlc,
    /// Hindley-Milner let-polymorphism.
    Hm,
}

/// Root of a let-polymorphic tree: a monotype result, or a generalised one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Start {
    Mono,
    Poly,
}
