use std::fmt;

use super::lexer::{lex, Spanned, Tok};
use super::{Name, Term};
use crate::constraints::{Context, MonoType, PolyType};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    /// Tokens that would have been accepted at this point.
    pub expected: Vec<String>,
    pub found: String,
    /// Set for errors that are not about an unexpected token.
    pub message: Option<String>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.line, self.column)?;
        if let Some(msg) = &self.message {
            return f.write_str(msg);
        }
        match self.expected.as_slice() {
            [] => write!(f, "unexpected {}", self.found),
            [one] => write!(f, "expected {one}, found {}", self.found),
            many => write!(f, "expected one of {}, found {}", many.join(", "), self.found),
        }
    }
}

pub fn parse_term(text: &str) -> Result<Term, ParseError> {
    let mut p = Parser::new(text)?;
    let t = p.term()?;
    p.finish()?;
    Ok(t)
}

pub fn parse_mono(text: &str) -> Result<MonoType, ParseError> {
    let mut p = Parser::new(text)?;
    let t = p.ty()?;
    p.finish()?;
    Ok(t)
}

pub fn parse_scheme(text: &str) -> Result<PolyType, ParseError> {
    let mut p = Parser::new(text)?;
    let s = p.scheme()?;
    p.finish()?;
    Ok(s)
}

pub fn parse_context(text: &str) -> Result<Context, ParseError> {
    let mut p = Parser::new(text)?;
    let mut ctx = Context::empty();
    if p.peek() != &Tok::Eof {
        loop {
            let name = p.lower("a term variable")?;
            p.expect(Tok::Colon)?;
            let scheme = p.scheme()?;
            ctx.push(name, scheme);
            if p.peek() == &Tok::Comma {
                p.bump();
            } else {
                break;
            }
        }
    }
    p.finish()?;
    Ok(ctx)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Parser, ParseError> {
        let toks = lex(text).map_err(|e| ParseError {
            line: e.line,
            column: e.column,
            expected: Vec::new(),
            found: format!("character `{}`", e.found),
            message: None,
        })?;
        Ok(Parser { toks, pos: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let here = &self.toks[self.pos];
        ParseError {
            line: here.line,
            column: here.column,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: here.tok.to_string(),
            message: None,
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[&tok.to_string()]))
        }
    }

    fn finish(&self) -> Result<(), ParseError> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            Err(self.error(&["end of input"]))
        }
    }

    fn lower(&mut self, what: &str) -> Result<Name, ParseError> {
        match self.peek() {
            Tok::Lower(_) => match self.bump() {
                Tok::Lower(s) => Ok(Name::new(s)),
                _ => unreachable!(),
            },
            _ => Err(self.error(&[what])),
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        match self.peek() {
            Tok::Lambda => {
                self.bump();
                let binder = self.lower("a term variable")?;
                let annotation = if *self.peek() == Tok::Colon {
                    self.bump();
                    Some(self.ty()?)
                } else {
                    None
                };
                if annotation.is_none() && *self.peek() != Tok::Dot {
                    return Err(self.error(&["`.`", "`:`"]));
                }
                self.expect(Tok::Dot)?;
                let body = Box::new(self.term()?);
                Ok(match annotation {
                    Some(ann) => Term::ALam(binder, ann, body),
                    None => Term::Lam(binder, body),
                })
            }
            Tok::Let => {
                self.bump();
                let binder = self.lower("a term variable")?;
                self.expect(Tok::Equals)?;
                let bound = self.term()?;
                self.expect(Tok::In)?;
                let body = self.term()?;
                Ok(Term::Let(binder, Box::new(bound), Box::new(body)))
            }
            _ => self.app(),
        }
    }

    fn app(&mut self) -> Result<Term, ParseError> {
        let mut t = self.atom()?;
        while matches!(self.peek(), Tok::Lower(_) | Tok::LParen) {
            let arg = self.atom()?;
            t = Term::App(Box::new(t), Box::new(arg));
        }
        Ok(t)
    }

    fn atom(&mut self) -> Result<Term, ParseError> {
        match self.peek() {
            Tok::Lower(_) => Ok(Term::Var(self.lower("a term variable")?)),
            Tok::LParen => {
                self.bump();
                let t = self.term()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            _ => Err(self.error(&["a term variable", "`(`", "`\\`", "`let`"])),
        }
    }

    fn ty(&mut self) -> Result<MonoType, ParseError> {
        let lhs = self.atype()?;
        if *self.peek() == Tok::Arrow {
            self.bump();
            let rhs = self.ty()?;
            Ok(MonoType::arrow(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn atype(&mut self) -> Result<MonoType, ParseError> {
        if !matches!(self.peek(), Tok::Upper(_) | Tok::Lower(_) | Tok::LParen) {
            return Err(self.error(&["a type name", "`(`"]));
        }
        match self.bump() {
            Tok::Upper(s) => Ok(MonoType::Base(Name::new(s))),
            Tok::Lower(s) => Ok(MonoType::Rigid(Name::new(s))),
            _ => {
                let t = self.ty()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
        }
    }

    fn scheme(&mut self) -> Result<PolyType, ParseError> {
        let mut bound: Vec<Name> = Vec::new();
        if *self.peek() == Tok::Forall {
            self.bump();
            loop {
                let here = &self.toks[self.pos];
                let (line, column) = (here.line, here.column);
                let name = self.lower("a type variable")?;
                if bound.contains(&name) {
                    return Err(ParseError {
                        line,
                        column,
                        expected: Vec::new(),
                        found: name.to_string(),
                        message: Some(format!("type variable `{name}` bound twice")),
                    });
                }
                bound.push(name);
                if *self.peek() == Tok::Dot {
                    self.bump();
                    break;
                }
            }
        }
        let body = self.ty()?;
        Ok(PolyType { bound, body })
    }
}
