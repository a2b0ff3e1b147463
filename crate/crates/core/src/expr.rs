//! Scalar expressions in the spatial variables and time, used for initial
//! data, boundary data and PDE coefficients.
//!
//! Grammar (extends the polynomial grammar with parentheses, division and a
//! few functions):
//!
//! ```text
//! expr   := [sign] term (("+" | "-") term)*
//! term   := pow (("*" | "/") pow)*
//! pow    := atom ("^" uint)?
//! atom   := number | var | "t" | func "(" expr ")" | "(" expr ")"
//! func   := exp | sin | cos | sqrt | abs | max0
//! ```
//!
//! `max0(e)` is the positive part, handy for compactly supported bumps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::var_index;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Time,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u16),
    Neg(Box<Expr>),
    Exp(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Sqrt(Box<Expr>),
    Abs(Box<Expr>),
    Max0(Box<Expr>),
}

impl Expr {
    pub fn parse(input: &str, nvars: usize) -> Result<Expr> {
        let mut p = Parser { src: input.as_bytes(), pos: 0, nvars };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(Error::Parse { pos: p.pos, msg: format!("unexpected character '{}'", p.src[p.pos] as char) });
        }
        Ok(e)
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Time => t,
            Expr::Add(a, b) => a.eval(x, t) + b.eval(x, t),
            Expr::Sub(a, b) => a.eval(x, t) - b.eval(x, t),
            Expr::Mul(a, b) => a.eval(x, t) * b.eval(x, t),
            Expr::Div(a, b) => a.eval(x, t) / b.eval(x, t),
            Expr::Pow(a, e) => a.eval(x, t).powi(i32::from(*e)),
            Expr::Neg(a) => -a.eval(x, t),
            Expr::Exp(a) => a.eval(x, t).exp(),
            Expr::Sin(a) => a.eval(x, t).sin(),
            Expr::Cos(a) => a.eval(x, t).cos(),
            Expr::Sqrt(a) => a.eval(x, t).sqrt(),
            Expr::Abs(a) => a.eval(x, t).abs(),
            Expr::Max0(a) => a.eval(x, t).max(0.0),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    nvars: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { pos: self.pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Expr::Neg(Box::new(self.term()?))
            }
            Some(b'+') => {
                self.pos += 1;
                self.term()?
            }
            _ => self.term()?,
        };
        while let Some(c) = self.peek() {
            if c != b'+' && c != b'-' {
                break;
            }
            self.pos += 1;
            let t = self.term()?;
            acc = if c == b'+' {
                Expr::Add(Box::new(acc), Box::new(t))
            } else {
                Expr::Sub(Box::new(acc), Box::new(t))
            };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.pow()?;
        while let Some(c) = self.peek() {
            if c != b'*' && c != b'/' {
                break;
            }
            self.pos += 1;
            let p = self.pow()?;
            acc = if c == b'*' {
                Expr::Mul(Box::new(acc), Box::new(p))
            } else {
                Expr::Div(Box::new(acc), Box::new(p))
            };
        }
        Ok(acc)
    }

    fn pow(&mut self) -> Result<Expr> {
        let a = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return self.err("expected an integer exponent");
            }
            let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            let e: u16 = text
                .parse()
                .map_err(|_| Error::Parse { pos: start, msg: format!("exponent '{text}' out of range") })?;
            return Ok(Expr::Pow(Box::new(a), e));
        }
        Ok(a)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => self.err("expected an expression"),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return self.err("expected ')'");
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
                {
                    self.pos += 1;
                }
                if self.pos < self.src.len() && (self.src[self.pos] == b'e' || self.src[self.pos] == b'E') {
                    let mut k = self.pos + 1;
                    if k < self.src.len() && (self.src[k] == b'+' || self.src[k] == b'-') {
                        k += 1;
                    }
                    if k < self.src.len() && self.src[k].is_ascii_digit() {
                        self.pos = k;
                        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                            self.pos += 1;
                        }
                    }
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                match text.parse::<f64>() {
                    Ok(v) => Ok(Expr::Const(v)),
                    Err(_) => {
                        self.pos = start;
                        self.err(format!("invalid number '{text}'"))
                    }
                }
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
                if self.peek() == Some(b'(') {
                    self.pos += 1;
                    let arg = Box::new(self.expr()?);
                    if self.peek() != Some(b')') {
                        return self.err("expected ')'");
                    }
                    self.pos += 1;
                    return match name.as_str() {
                        "exp" => Ok(Expr::Exp(arg)),
                        "sin" => Ok(Expr::Sin(arg)),
                        "cos" => Ok(Expr::Cos(arg)),
                        "sqrt" => Ok(Expr::Sqrt(arg)),
                        "abs" => Ok(Expr::Abs(arg)),
                        "max0" => Ok(Expr::Max0(arg)),
                        _ => {
                            self.pos = start;
                            self.err(format!("unknown function '{name}'"))
                        }
                    };
                }
                if name == "t" {
                    return Ok(Expr::Time);
                }
                match var_index(&name, self.nvars) {
                    Some(i) => Ok(Expr::Var(i)),
                    None => {
                        self.pos = start;
                        self.err(format!("unknown variable '{name}' in dimension {}", self.nvars))
                    }
                }
            }
            Some(c) => self.err(format!("unexpected character '{}'", c as char)),
        }
    }
}
