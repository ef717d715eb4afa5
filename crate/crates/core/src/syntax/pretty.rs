use std::fmt;

use super::Term;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Top,
    Fun,
    Arg,
}

fn write_term(t: &Term, prec: Prec, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let binder_like = matches!(t, Term::Lam(..) | Term::ALam(..) | Term::Let(..));
    let parens = match t {
        Term::Var(_) => false,
        Term::App(..) => prec == Prec::Arg,
        _ => binder_like && prec > Prec::Top,
    };
    if parens {
        f.write_str("(")?;
    }
    match t {
        Term::Var(x) => write!(f, "{x}")?,
        Term::Lam(x, body) => {
            write!(f, "\\{x}. ")?;
            write_term(body, Prec::Top, f)?;
        }
        Term::ALam(x, ann, body) => {
            write!(f, "\\{x} : {ann}. ")?;
            write_term(body, Prec::Top, f)?;
        }
        Term::App(fun, arg) => {
            write_term(fun, Prec::Fun, f)?;
            f.write_str(" ")?;
            write_term(arg, Prec::Arg, f)?;
        }
        Term::Let(x, bound, body) => {
            write!(f, "let {x} = ")?;
            write_term(bound, Prec::Top, f)?;
            f.write_str(" in ")?;
            write_term(body, Prec::Top, f)?;
        }
    }
    if parens {
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_term(self, Prec::Top, f)
    }
}
