//! Built-in rule schemas.

use std::collections::BTreeMap;
use std::fmt;

use crate::System;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintKind {
    InCtx,
    ExtendCtx,
    DupCtx,
    DupTy,
    Inst,
    GenInCtx,
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintKind::InCtx => "InCtx",
            ConstraintKind::ExtendCtx => "ExtendCtx",
            ConstraintKind::DupCtx => "DupCtx",
            ConstraintKind::DupTy => "DupTy",
            ConstraintKind::Inst => "Inst",
            ConstraintKind::GenInCtx => "GenInCtx",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TypeTemplate {
    Var(String),
    Arrow(Box<TypeTemplate>, Box<TypeTemplate>),
}

impl TypeTemplate {
    fn arrow(a: TypeTemplate, b: TypeTemplate) -> TypeTemplate {
        TypeTemplate::Arrow(Box::new(a), Box::new(b))
    }

    /// Variable leaves, left to right.
    pub fn leaves(&self) -> Vec<&str> {
        match self {
            TypeTemplate::Var(v) => vec![v.as_str()],
            TypeTemplate::Arrow(a, b) => {
                let mut out = a.leaves();
                out.extend(b.leaves());
                out
            }
        }
    }

    pub fn arrow_count(&self) -> usize {
        match self {
            TypeTemplate::Var(_) => 0,
            TypeTemplate::Arrow(a, b) => 1 + a.arrow_count() + b.arrow_count(),
        }
    }
}

fn v(name: &str) -> TypeTemplate {
    TypeTemplate::Var(name.to_string())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PremiseTemplate {
    Constraint {
        kind: ConstraintKind,
        args: Vec<String>,
    },
    Equality(TypeTemplate, TypeTemplate),
    Judgment {
        ctx: String,
        term: String,
        ty: String,
    },
}

impl PremiseTemplate {
    /// Metavariables in position order.
    pub fn positions(&self) -> Vec<&str> {
        match self {
            PremiseTemplate::Constraint { args, .. } => args.iter().map(|s| s.as_str()).collect(),
            PremiseTemplate::Equality(l, r) => {
                let mut out = l.leaves();
                out.extend(r.leaves());
                out
            }
            PremiseTemplate::Judgment { ctx, term, ty } => vec![ctx, term, ty],
        }
    }

    /// Short label used in firing orders.
    pub fn label(&self) -> String {
        match self {
            PremiseTemplate::Constraint { kind, .. } => kind.to_string(),
            PremiseTemplate::Equality(..) => "EqTy".to_string(),
            PremiseTemplate::Judgment { term, .. } => format!("{term} judgment"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TermTemplate {
    Var(String),
    Lam(String, String),
    ALam(String, String, String),
    App(String, String),
    Let(String, String, String),
}

impl TermTemplate {
    pub fn vars(&self) -> Vec<&str> {
        match self {
            TermTemplate::Var(x) => vec![x],
            TermTemplate::Lam(x, t) | TermTemplate::App(x, t) => vec![x, t],
            TermTemplate::ALam(x, a, t) | TermTemplate::Let(x, a, t) => vec![x, a, t],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conclusion {
    pub ctx: String,
    pub term: TermTemplate,
    pub ty: String,
}

impl Conclusion {
    pub fn positions(&self) -> Vec<&str> {
        let mut out = vec![self.ctx.as_str()];
        out.extend(self.term.vars());
        out.push(&self.ty);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleSchema {
    pub name: String,
    pub conclusion: Conclusion,
    pub premises: Vec<PremiseTemplate>,
}

impl RuleSchema {
    /// Occurrence counts of each metavariable.
    pub fn occurrences(&self) -> BTreeMap<&str, usize> {
        let mut out = BTreeMap::new();
        for v in self.conclusion.positions() {
            *out.entry(v).or_insert(0) += 1;
        }
        for p in &self.premises {
            for v in p.positions() {
                *out.entry(v).or_insert(0) += 1;
            }
        }
        out
    }

    /// Every metavariable must occur exactly twice.
    pub fn check_linearity(&self) -> Result<(), String> {
        match self.occurrences().into_iter().find(|(_, n)| *n != 2) {
            Some((v, n)) => Err(format!("{v} occurs {n} times in {}", self.name)),
            None => Ok(()),
        }
    }
}

fn c(kind: ConstraintKind, args: &[&str]) -> PremiseTemplate {
    PremiseTemplate::Constraint {
        kind,
        args: args.iter().map(|s| s.to_string()).collect(),
    }
}

fn j(ctx: &str, term: &str, ty: &str) -> PremiseTemplate {
    PremiseTemplate::Judgment {
        ctx: ctx.into(),
        term: term.into(),
        ty: ty.into(),
    }
}

fn rule(name: &str, ctx: &str, term: TermTemplate, ty: &str, premises: Vec<PremiseTemplate>) -> RuleSchema {
    RuleSchema {
        name: name.into(),
        conclusion: Conclusion {
            ctx: ctx.into(),
            term,
            ty: ty.into(),
        },
        premises,
    }
}

pub fn var_rule() -> RuleSchema {
    rule(
        "Var",
        "G",
        TermTemplate::Var("x".into()),
        "t",
        vec![c(ConstraintKind::InCtx, &["x", "t", "G"])],
    )
}

pub fn lam_rule() -> RuleSchema {
    rule(
        "Lam",
        "G",
        TermTemplate::Lam("x".into(), "T".into()),
        "tf",
        vec![
            c(ConstraintKind::ExtendCtx, &["Gf", "G", "x", "tp"]),
            j("Gf", "T", "tr"),
            PremiseTemplate::Equality(v("tf"), TypeTemplate::arrow(v("tp"), v("tr"))),
        ],
    )
}

pub fn app_rule() -> RuleSchema {
    rule(
        "App",
        "G",
        TermTemplate::App("Tf".into(), "Tp".into()),
        "tr",
        vec![
            c(ConstraintKind::DupCtx, &["G", "Gf", "Gp"]),
            j("Gf", "Tf", "tf"),
            j("Gp", "Tp", "tp"),
            PremiseTemplate::Equality(TypeTemplate::arrow(v("tp"), v("tr")), v("tf")),
        ],
    )
}

pub fn alam_rule() -> RuleSchema {
    rule(
        "ALam",
        "G",
        TermTemplate::ALam("x".into(), "ta".into(), "T".into()),
        "tf",
        vec![
            c(ConstraintKind::DupTy, &["ta", "tap", "taf"]),
            c(ConstraintKind::ExtendCtx, &["Gf", "G", "x", "tap"]),
            j("Gf", "T", "tr"),
            PremiseTemplate::Equality(v("tf"), TypeTemplate::arrow(v("taf"), v("tr"))),
        ],
    )
}

pub fn hm_var_rule() -> RuleSchema {
    rule(
        "Var",
        "G",
        TermTemplate::Var("x".into()),
        "t",
        vec![
            c(ConstraintKind::InCtx, &["x", "s", "G"]),
            c(ConstraintKind::Inst, &["s", "t"]),
        ],
    )
}

pub fn let_rule() -> RuleSchema {
    rule(
        "Let",
        "G",
        TermTemplate::Let("x".into(), "Tb".into(), "Tt".into()),
        "t",
        vec![
            c(ConstraintKind::DupCtx, &["G", "Gb", "Gg", "Gt"]),
            j("Gb", "Tb", "tb"),
            c(ConstraintKind::GenInCtx, &["s", "tb", "Gg"]),
            c(ConstraintKind::ExtendCtx, &["Gx", "Gt", "x", "s"]),
            j("Gx", "Tt", "t"),
        ],
    )
}

/// Var, Lam and App of the simply typed system.
pub fn stlc_rules() -> Vec<RuleSchema> {
    vec![var_rule(), lam_rule(), app_rule()]
}

/// The simply typed rules plus the annotated lambda.
pub fn annotated_rules() -> Vec<RuleSchema> {
    vec![var_rule(), lam_rule(), app_rule(), alam_rule()]
}

/// The let-polymorphic rules. Lam and App have the same shape as in the
/// simply typed system, with monotypes embedded as schemes.
pub fn hm_rules() -> Vec<RuleSchema> {
    vec![hm_var_rule(), lam_rule(), app_rule(), let_rule()]
}

pub fn rules_for(system: System) -> Vec<RuleSchema> {
    match system {
        System::Stlc => annotated_rules(),
        System::Hm => hm_rules(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_schema_is_linear() {
        for r in annotated_rules().into_iter().chain(hm_rules()) {
            assert_eq!(r.check_linearity(), Ok(()), "{}", r.name);
        }
    }

    #[test]
    fn nonlinear_schema_is_rejected() {
        let mut r = var_rule();
        r.premises.push(c(ConstraintKind::Inst, &["t", "t"]));
        assert!(r.check_linearity().is_err());
    }
}
