//! Surface syntax: names, terms, and the parser/printer for terms, types,
//! schemes and contexts.
//!
//! ```text
//! term    := lam | let | app
//! lam     := "\" NAME [":" type] "." term
//! let     := "let" NAME "=" term "in" term
//! app     := atom { atom }
//! atom    := NAME | "(" term ")"
//! type    := atype ["->" type]
//! atype   := NAME | "(" type ")"
//! scheme  := ["forall" NAME {NAME} "."] type
//! context := [binding {"," binding}]
//! binding := NAME ":" scheme
//! ```
//!
//! Uppercase-initial type names are base types, lowercase ones are rigid
//! type variables. Term variables are lowercase-initial.

mod lexer;
mod parser;
mod pretty;

use std::fmt;

use serde::Serialize;

use crate::constraints::MonoType;

pub use parser::{parse_context, parse_mono, parse_scheme, parse_term, ParseError};

/// An identifier. Never empty.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Name(String);

impl Name {
    pub fn new(text: impl Into<String>) -> Name {
        let text = text.into();
        debug_assert!(!text.is_empty(), "empty name");
        Name(text)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_upper(&self) -> bool {
        self.0.starts_with(|c: char| c.is_ascii_uppercase())
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Name {
    fn from(s: &str) -> Name {
        Name::new(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Var(Name),
    Lam(Name, Box<Term>),
    /// `\x : T. body`
    ALam(Name, MonoType, Box<Term>),
    App(Box<Term>, Box<Term>),
    /// `let x = bound in body`
    Let(Name, Box<Term>, Box<Term>),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(Name::new(name))
    }

    pub fn lam(binder: &str, body: Term) -> Term {
        Term::Lam(Name::new(binder), Box::new(body))
    }

    pub fn alam(binder: &str, annotation: MonoType, body: Term) -> Term {
        Term::ALam(Name::new(binder), annotation, Box::new(body))
    }

    pub fn app(fun: Term, arg: Term) -> Term {
        Term::App(Box::new(fun), Box::new(arg))
    }

    pub fn let_in(binder: &str, bound: Term, body: Term) -> Term {
        Term::Let(Name::new(binder), Box::new(bound), Box::new(body))
    }

    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        match self {
            Term::Var(_) => 1,
            Term::Lam(_, b) | Term::ALam(_, _, b) => 1 + b.size(),
            Term::App(f, a) => 1 + f.size() + a.size(),
            Term::Let(_, b, t) => 1 + b.size() + t.size(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Term::Var(_) => 1,
            Term::Lam(_, b) | Term::ALam(_, _, b) => 1 + b.depth(),
            Term::App(f, a) => 1 + f.depth().max(a.depth()),
            Term::Let(_, b, t) => 1 + b.depth().max(t.depth()),
        }
    }

    pub fn contains_let(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Lam(_, b) | Term::ALam(_, _, b) => b.contains_let(),
            Term::App(f, a) => f.contains_let() || a.contains_let(),
            Term::Let(..) => true,
        }
    }

    pub fn contains_annotation(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::ALam(..) => true,
            Term::Lam(_, b) => b.contains_annotation(),
            Term::App(f, a) | Term::Let(_, f, a) => {
                f.contains_annotation() || a.contains_annotation()
            }
        }
    }

    /// Number of variable occurrences.
    pub fn var_occurrences(&self) -> usize {
        match self {
            Term::Var(_) => 1,
            Term::Lam(_, b) | Term::ALam(_, _, b) => b.var_occurrences(),
            Term::App(f, a) | Term::Let(_, f, a) => f.var_occurrences() + a.var_occurrences(),
        }
    }
}
