use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    Lambda,
    Dot,
    Colon,
    Comma,
    Equals,
    Arrow,
    LParen,
    RParen,
    Let,
    In,
    Forall,
    Lower(String),
    Upper(String),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Lambda => f.write_str("`\\`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Equals => f.write_str("`=`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Let => f.write_str("`let`"),
            Tok::In => f.write_str("`in`"),
            Tok::Forall => f.write_str("`forall`"),
            Tok::Lower(s) | Tok::Upper(s) => write!(f, "`{s}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug)]
pub(crate) struct LexError {
    pub line: usize,
    pub column: usize,
    pub found: char,
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

pub(crate) fn lex(src: &str) -> Result<Vec<Spanned>, LexError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let (mut line, mut column) = (1, 1);

    while let Some(&c) = chars.peek() {
        let (start_line, start_col) = (line, column);
        let push = |out: &mut Vec<Spanned>, tok| {
            out.push(Spanned {
                tok,
                line: start_line,
                column: start_col,
            })
        };
        if c == '\n' {
            chars.next();
            line += 1;
            column = 1;
            continue;
        }
        if c.is_whitespace() {
            chars.next();
            column += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut word = String::new();
            while let Some(&c) = chars.peek() {
                if !is_ident_char(c) {
                    break;
                }
                word.push(c);
                chars.next();
                column += 1;
            }
            let tok = match word.as_str() {
                "let" => Tok::Let,
                "in" => Tok::In,
                "forall" => Tok::Forall,
                _ if word.starts_with(|c: char| c.is_ascii_uppercase()) => Tok::Upper(word),
                _ => Tok::Lower(word),
            };
            push(&mut out, tok);
            continue;
        }
        chars.next();
        column += 1;
        let tok = match c {
            '\\' => Tok::Lambda,
            '.' => Tok::Dot,
            ':' => Tok::Colon,
            ',' => Tok::Comma,
            '=' => Tok::Equals,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '-' if chars.peek() == Some(&'>') => {
                chars.next();
                column += 1;
                Tok::Arrow
            }
            _ => {
                return Err(LexError {
                    line: start_line,
                    column: start_col,
                    found: c,
                })
            }
        };
        push(&mut out, tok);
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column,
    });
    Ok(out)
}
