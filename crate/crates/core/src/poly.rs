//! Multivariate polynomials with real coefficients in canonical form.
//!
//! These carry the coefficients of the vector fields, so brackets and
//! determinant coefficients stay exact: differentiation and arithmetic act on
//! stored coefficients, and evaluation is plain arithmetic over them.
//!
//! String grammar (used by frame files and the CLI):
//!
//! ```text
//! expr   := [sign] term (("+" | "-") term)*
//! term   := factor ("*" factor)*
//! factor := number | var ("^" uint)?
//! var    := x1..xn, or the aliases x, y, z, w for the first four axes
//! ```
//!
//! Examples: `"1"`, `"-0.5*y"`, `"x^2*z"`, `"2*x1 - 3*x2^2"`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One monomial: coefficient times a product of variable powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub exps: Vec<u16>,
}

/// Polynomial in `nvars` variables. Terms are sorted by exponent tuple,
/// exponent tuples are unique, and zero coefficients are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    nvars: usize,
    terms: Vec<Term>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial { nvars, terms: Vec::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(nvars);
        if c != 0.0 {
            p.terms.push(Term { coeff: c, exps: vec![0; nvars] });
        }
        p
    }

    /// The coordinate variable `x_{index}`.
    pub fn var(nvars: usize, index: usize) -> Self {
        assert!(index < nvars);
        let mut exps = vec![0u16; nvars];
        exps[index] = 1;
        Polynomial { nvars, terms: vec![Term { coeff: 1.0, exps }] }
    }

    pub fn from_terms(nvars: usize, raw: impl IntoIterator<Item = (f64, Vec<u16>)>) -> Self {
        let mut p = Polynomial::zero(nvars);
        for (coeff, exps) in raw {
            assert_eq!(exps.len(), nvars);
            p.add_term(coeff, &exps);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .map(|t| t.exps.iter().map(|&e| e as usize).sum())
            .max()
            .unwrap_or(0)
    }

    fn add_term(&mut self, coeff: f64, exps: &[u16]) {
        if coeff == 0.0 {
            return;
        }
        match self.terms.binary_search_by(|t| t.exps.as_slice().cmp(exps)) {
            Ok(i) => {
                self.terms[i].coeff += coeff;
                if self.terms[i].coeff == 0.0 {
                    self.terms.remove(i);
                }
            }
            Err(i) => self.terms.insert(i, Term { coeff, exps: exps.to_vec() }),
        }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for t in &other.terms {
            out.add_term(t.coeff, &t.exps);
        }
        out
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> Polynomial {
        if c == 0.0 {
            return Polynomial::zero(self.nvars);
        }
        Polynomial {
            nvars: self.nvars,
            terms: self.terms.iter().map(|t| Term { coeff: t.coeff * c, exps: t.exps.clone() }).collect(),
        }
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, other.nvars);
        let mut out = Polynomial::zero(self.nvars);
        let mut exps = vec![0u16; self.nvars];
        for a in &self.terms {
            for b in &other.terms {
                for i in 0..self.nvars {
                    exps[i] = a.exps[i] + b.exps[i];
                }
                out.add_term(a.coeff * b.coeff, &exps);
            }
        }
        out
    }

    /// Partial derivative along axis `axis`.
    pub fn diff(&self, axis: usize) -> Polynomial {
        assert!(axis < self.nvars);
        let mut out = Polynomial::zero(self.nvars);
        for t in &self.terms {
            let e = t.exps[axis];
            if e == 0 {
                continue;
            }
            let mut exps = t.exps.clone();
            exps[axis] = e - 1;
            out.add_term(t.coeff * f64::from(e), &exps);
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nvars);
        let mut acc = 0.0;
        for t in &self.terms {
            let mut m = t.coeff;
            for (xi, &e) in x.iter().zip(&t.exps) {
                if e > 0 {
                    m *= xi.powi(i32::from(e));
                }
            }
            acc += m;
        }
        acc
    }

    /// Parse a polynomial string over `nvars` variables.
    pub fn parse(input: &str, nvars: usize) -> Result<Polynomial> {
        Parser::new(input, nvars).parse()
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, t) in self.terms.iter().enumerate() {
            let c = t.coeff;
            if k == 0 {
                if c < 0.0 {
                    write!(f, "-")?;
                }
            } else if c < 0.0 {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let mag = c.abs();
            let has_vars = t.exps.iter().any(|&e| e > 0);
            let mut wrote = false;
            if mag != 1.0 || !has_vars {
                write!(f, "{mag}")?;
                wrote = true;
            }
            for (i, &e) in t.exps.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                if wrote {
                    write!(f, "*")?;
                }
                write!(f, "{}", var_name(i, self.nvars))?;
                if e > 1 {
                    write!(f, "^{e}")?;
                }
                wrote = true;
            }
        }
        Ok(())
    }
}

pub(crate) fn var_name(index: usize, nvars: usize) -> String {
    if nvars <= 4 {
        match index {
            0 => "x".into(),
            1 => "y".into(),
            2 => "z".into(),
            3 => "w".into(),
            _ => unreachable!(),
        }
    } else {
        format!("x{}", index + 1)
    }
}

/// Resolve a variable name to an axis index, if it is one.
pub(crate) fn var_index(name: &str, nvars: usize) -> Option<usize> {
    let alias = match name {
        "x" => Some(0),
        "y" => Some(1),
        "z" => Some(2),
        "w" => Some(3),
        _ => None,
    };
    if let Some(i) = alias {
        return (i < nvars).then_some(i);
    }
    if let Some(rest) = name.strip_prefix('x') {
        if let Ok(k) = rest.parse::<usize>() {
            if k >= 1 && k <= nvars {
                return Some(k - 1);
            }
        }
    }
    None
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    nvars: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, nvars: usize) -> Self {
        Parser { src: src.as_bytes(), pos: 0, nvars }
    }

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

    fn parse(mut self) -> Result<Polynomial> {
        let p = self.expr()?;
        self.skip_ws();
        if self.pos != self.src.len() {
            return self.err(format!("unexpected character '{}'", self.src[self.pos] as char));
        }
        Ok(p)
    }

    fn expr(&mut self) -> Result<Polynomial> {
        let mut sign = 1.0;
        if let Some(c) = self.peek() {
            if c == b'+' || c == b'-' {
                self.pos += 1;
                if c == b'-' {
                    sign = -1.0;
                }
            }
        }
        let mut acc = self.term()?.scale(sign);
        while let Some(c) = self.peek() {
            if c != b'+' && c != b'-' {
                break;
            }
            self.pos += 1;
            let t = self.term()?;
            acc = if c == b'+' { acc.add(&t) } else { acc.sub(&t) };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Polynomial> {
        let mut acc = self.factor()?;
        while let Some(c) = self.peek() {
            if c != b'*' {
                break;
            }
            self.pos += 1;
            let f = self.factor()?;
            acc = acc.mul(&f);
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Polynomial> {
        match self.peek() {
            None => self.err("expected a number or variable"),
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let n = self.number()?;
                Ok(Polynomial::constant(self.nvars, n))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let Some(axis) = var_index(name, self.nvars) else {
                    self.pos = start;
                    return self.err(format!("unknown variable '{name}' in dimension {}", self.nvars));
                };
                let mut p = Polynomial::var(self.nvars, axis);
                if self.peek() == Some(b'^') {
                    self.pos += 1;
                    let e = self.uint()?;
                    let base = p.clone();
                    p = Polynomial::constant(self.nvars, 1.0);
                    for _ in 0..e {
                        p = p.mul(&base);
                    }
                }
                Ok(p)
            }
            Some(c) => self.err(format!("unexpected character '{}'", c as char)),
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
        {
            self.pos += 1;
        }
        // exponent notation: 1.5e-3
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
            Ok(v) => Ok(v),
            Err(_) => {
                self.pos = start;
                self.err(format!("invalid number '{text}'"))
            }
        }
    }

    fn uint(&mut self) -> Result<u16> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected an integer exponent");
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<u16>().map_err(|_| Error::Parse { pos: start, msg: format!("exponent '{text}' out of range") })
    }
}
