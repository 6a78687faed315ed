//! Recursive-descent parser.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | base ('^' ['+' | '-'] number)?
//! base   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Unary minus binds looser than `^`, so `-t^2` is `-(t^2)`.

use std::fmt;

use thiserror::Error;

use super::{Expr, UnaryOp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {}, found {found}", .expected.join(" or "))]
    Syntax {
        offset: usize,
        expected: Vec<&'static str>,
        found: String,
    },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownFunction { offset, .. } => {
                *offset
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Sym(char),
    End,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Number(v) => write!(f, "number {v}"),
            Token::Ident(s) => write!(f, "identifier `{s}`"),
            Token::Sym(c) => write!(f, "`{c}`"),
            Token::End => f.write_str("end of input"),
        }
    }
}

pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        src: source.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    let (tok, at) = p.peek()?;
    if tok != Token::End {
        return Err(ParseError::Syntax {
            offset: at,
            expected: vec!["operator", "end of input"],
            found: tok.to_string(),
        });
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Returns the next token and its byte offset without consuming it.
    fn peek(&mut self) -> Result<(Token, usize), ParseError> {
        let save = self.pos;
        let out = self.lex();
        self.pos = save;
        out
    }

    fn lex(&mut self) -> Result<(Token, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok((Token::End, start));
        };
        if c.is_ascii_digit() || c == b'.' {
            return self.number().map(|v| (Token::Number(v), start));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self
                .src
                .get(self.pos)
                .is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_')
            {
                self.pos += 1;
            }
            let name = std::str::from_utf8(&self.src[start..self.pos])
                .expect("ascii identifier")
                .to_string();
            return Ok((Token::Ident(name), start));
        }
        if b"+-*/^()".contains(&c) {
            self.pos += 1;
            return Ok((Token::Sym(c as char), start));
        }
        Err(ParseError::Syntax {
            offset: start,
            expected: vec!["number", "identifier", "operator", "`(`", "`)`"],
            found: format!("`{}`", String::from_utf8_lossy(&self.src[start..start + 1])),
        })
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.src.get(p.pos).is_some_and(u8::is_ascii_digit) {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            return Err(ParseError::Syntax {
                offset: start,
                expected: vec!["digit"],
                found: "`.`".into(),
            });
        }
        // exponent only when followed by digits, so `2e` stays `2` then `e`
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        Ok(text.parse::<f64>().expect("validated float literal"))
    }

    fn expect_sym(&mut self, sym: char, label: &'static str) -> Result<(), ParseError> {
        let (tok, at) = self.lex()?;
        if tok == Token::Sym(sym) {
            Ok(())
        } else {
            Err(ParseError::Syntax {
                offset: at,
                expected: vec![label],
                found: tok.to_string(),
            })
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek()?.0 {
                Token::Sym('+') => {
                    self.lex()?;
                    lhs = Expr::add(lhs, self.term()?);
                }
                Token::Sym('-') => {
                    self.lex()?;
                    lhs = Expr::sub(lhs, self.term()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek()?.0 {
                Token::Sym('*') => {
                    self.lex()?;
                    lhs = Expr::mul(lhs, self.factor()?);
                }
                Token::Sym('/') => {
                    self.lex()?;
                    lhs = Expr::div(lhs, self.factor()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.peek()?.0 == Token::Sym('-') {
            self.lex()?;
            return Ok(Expr::neg(self.factor()?));
        }
        let base = self.base()?;
        if self.peek()?.0 != Token::Sym('^') {
            return Ok(base);
        }
        self.lex()?;
        let (mut tok, mut at) = self.lex()?;
        let mut sign = 1.0;
        if let Token::Sym(c @ ('+' | '-')) = tok {
            if c == '-' {
                sign = -1.0;
            }
            (tok, at) = self.lex()?;
        }
        match tok {
            Token::Number(v) => Ok(Expr::pow(base, sign * v)),
            other => Err(ParseError::Syntax {
                offset: at,
                expected: vec!["number"],
                found: other.to_string(),
            }),
        }
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        let (tok, at) = self.lex()?;
        match tok {
            Token::Number(v) => Ok(Expr::Const(v)),
            Token::Sym('(') => {
                let inner = self.expr()?;
                self.expect_sym(')', "`)`")?;
                Ok(inner)
            }
            Token::Ident(name) => {
                if self.peek()?.0 == Token::Sym('(') {
                    let op = UnaryOp::from_name(&name).ok_or(ParseError::UnknownFunction {
                        name: name.clone(),
                        offset: at,
                    })?;
                    self.lex()?;
                    let arg = self.expr()?;
                    self.expect_sym(')', "`)`")?;
                    return Ok(Expr::unary(op, arg));
                }
                Ok(match name.as_str() {
                    "pi" => Expr::Const(std::f64::consts::PI),
                    "e" => Expr::Const(std::f64::consts::E),
                    _ => Expr::Var(name),
                })
            }
            other => Err(ParseError::Syntax {
                offset: at,
                expected: vec!["number", "identifier", "`(`", "`-`"],
                found: other.to_string(),
            }),
        }
    }
}
