//! Recursive-descent parser.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' exponent)*
//! exponent:= ['-' | '+'] INT | '(' ['-' | '+'] INT ')'
//! primary := NUMBER | IDENT | FUNC '(' sum ')' | '(' sum ')'
//! ```
//!
//! Positions in errors are one-based character columns; a position one past
//! the last character means "end of input".

use super::{Expr, ExprError, Func, Var};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, bool),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Lexer {
    toks: Vec<(Tok, usize)>,
}

fn lex(text: &str) -> Result<Lexer, ExprError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            let mut integral = true;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                integral = false;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    integral = false;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let literal: String = chars[start..i].iter().collect();
            let value: f64 = literal.parse().map_err(|_| ExprError::Syntax {
                position: pos,
                message: format!("malformed number `{literal}`"),
            })?;
            if !value.is_finite() {
                return Err(ExprError::Syntax {
                    position: pos,
                    message: format!("number `{literal}` is out of range"),
                });
            }
            toks.push((Tok::Num(value, integral), pos));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            toks.push((Tok::Ident(chars[start..i].iter().collect()), pos));
            continue;
        }
        let tok = match c {
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            other => {
                return Err(ExprError::Syntax {
                    position: pos,
                    message: format!("unexpected character `{other}`"),
                })
            }
        };
        toks.push((tok, pos));
        i += 1;
    }
    toks.push((Tok::End, chars.len() + 1));
    Ok(Lexer { toks })
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            position: self.pos(),
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ExprError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.product()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.product()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let mut base = self.primary()?;
        while *self.peek() == Tok::Caret {
            self.bump();
            let k = self.exponent()?;
            base = Expr::Pow(Box::new(base), k);
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<i32, ExprError> {
        let parenthesized = *self.peek() == Tok::LParen;
        if parenthesized {
            self.bump();
        }
        let mut sign = 1;
        match self.peek() {
            Tok::Minus => {
                sign = -1;
                self.bump();
            }
            Tok::Plus => {
                self.bump();
            }
            _ => {}
        }
        let pos = self.pos();
        let k = match self.bump() {
            Tok::Num(v, true) if v <= i32::MAX as f64 => sign * v as i32,
            Tok::End => {
                return Err(ExprError::Syntax {
                    position: pos,
                    message: "expected an integer exponent".into(),
                })
            }
            _ => return Err(ExprError::NonIntegerExponent { position: pos }),
        };
        if parenthesized {
            if *self.peek() != Tok::RParen {
                return Err(ExprError::NonIntegerExponent { position: self.pos() });
            }
            self.bump();
        }
        Ok(k)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Num(v, _) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let inner = self.sum()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    self.expect(Tok::LParen, "`(` after function name")?;
                    let arg = self.sum()?;
                    self.expect(Tok::RParen, "`)`")?;
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                identifier(&name)
                    .map(Expr::Var)
                    .or_else(|| (name == "pi").then_some(Expr::Const(std::f64::consts::PI)))
                    .ok_or(ExprError::UnknownIdentifier { position: pos, name })
            }
            Tok::End => Err(ExprError::Syntax {
                position: pos,
                message: "unexpected end of input".into(),
            }),
            tok => Err(ExprError::Syntax {
                position: pos,
                message: format!("unexpected token {tok:?}"),
            }),
        }
    }
}

fn identifier(name: &str) -> Option<Var> {
    match name {
        "t" => return Some(Var::T),
        "eps" => return Some(Var::Eps),
        _ => {}
    }
    let (head, digits) = name.split_at(1);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    let index: usize = digits.parse().ok()?;
    match head {
        "x" => Some(Var::X(index - 1)),
        "y" => Some(Var::Y(index - 1)),
        _ => None,
    }
}

pub(super) fn parse(text: &str) -> Result<Expr, ExprError> {
    let lexer = lex(text)?;
    let mut p = Parser {
        toks: lexer.toks,
        at: 0,
    };
    let e = p.sum()?;
    if *p.peek() != Tok::End {
        return p.error("unexpected trailing input");
    }
    Ok(e)
}
