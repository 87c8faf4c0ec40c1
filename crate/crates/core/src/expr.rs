//! Scalar potential expressions in one variable.
//!
//! Grammar (whitespace is ignored):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | factor
//! factor := atom ('^' exponent)?
//! exponent := '-'? number | '(' '-'? number ')'
//! atom   := number | 'x' | 'r' | '|x|' | '|r|' | fn '(' expr ')' | '(' expr ')'
//! fn     := 'ln' | 'exp' | 'sqrt' | 'abs'
//! ```
//!
//! `r` is accepted as a synonym for `x` so radial potentials read naturally.
//! Printing is fully parenthesized, so `parse(print(parse(s)))` equals
//! `parse(s)`.

use std::fmt;

use crate::dual::Dual2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Ln,
    Exp,
    Sqrt,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Ln => "ln",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    AbsVar,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser { src: src.as_bytes(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    /// Evaluate with derivatives. Domain violations show up as NaN.
    pub fn eval_dual(&self, x: Dual2) -> Dual2 {
        match self {
            Expr::Num(c) => Dual2::constant(*c),
            Expr::Var => x,
            Expr::AbsVar => x.abs(),
            Expr::Neg(a) => -a.eval_dual(x),
            Expr::Add(a, b) => a.eval_dual(x) + b.eval_dual(x),
            Expr::Sub(a, b) => a.eval_dual(x) - b.eval_dual(x),
            Expr::Mul(a, b) => a.eval_dual(x) * b.eval_dual(x),
            Expr::Div(a, b) => a.eval_dual(x) / b.eval_dual(x),
            Expr::Pow(a, p) => a.eval_dual(x).powf(*p),
            Expr::Call(f, a) => {
                let u = a.eval_dual(x);
                match f {
                    Func::Ln => {
                        if u.v <= 0.0 {
                            Dual2::new(f64::NAN, f64::NAN, f64::NAN)
                        } else {
                            u.ln()
                        }
                    }
                    Func::Exp => u.exp(),
                    Func::Sqrt => {
                        if u.v < 0.0 {
                            Dual2::new(f64::NAN, f64::NAN, f64::NAN)
                        } else {
                            u.sqrt()
                        }
                    }
                    Func::Abs => u.abs(),
                }
            }
        }
    }

    /// Plain value, with a `Domain` error when the result is not a number.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let v = self.eval_dual(Dual2::constant(x)).v;
        if v.is_nan() {
            Err(Error::Domain { expr: self.to_string(), x })
        } else {
            Ok(v)
        }
    }

    /// True when the expression never mentions the variable.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::Var | Expr::AbsVar => false,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.is_constant(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => a.is_constant() && b.is_constant(),
        }
    }
}

fn fmt_num(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    if c < 0.0 || (c == 0.0 && c.is_sign_negative()) {
        write!(f, "(-{:?})", -c)
    } else {
        write!(f, "{c:?}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => fmt_num(f, *c),
            Expr::Var => write!(f, "x"),
            Expr::AbsVar => write!(f, "|x|"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a}+{b})"),
            Expr::Sub(a, b) => write!(f, "({a}-{b})"),
            Expr::Mul(a, b) => write!(f, "({a}*{b})"),
            Expr::Div(a, b) => write!(f, "({a}/{b})"),
            Expr::Pow(a, p) => {
                write!(f, "({a}^")?;
                fmt_num(f, *p)?;
                write!(f, ")")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Syntax { offset: self.pos, message: msg.to_string() }
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

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Num(c) => Expr::Num(-c),
                other => Expr::Neg(Box::new(other)),
            });
        }
        self.factor()
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let p = self.exponent()?;
            return Ok(Expr::Pow(Box::new(base), p));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<f64> {
        if self.eat(b'(') {
            let neg = self.eat(b'-');
            let v = self.number()?;
            self.expect(b')')?;
            return Ok(if neg { -v } else { v });
        }
        let neg = self.eat(b'-');
        let v = self.number()?;
        Ok(if neg { -v } else { v })
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        let digits = |i: &mut usize| {
            let b = *i;
            while *i < s.len() && s[*i].is_ascii_digit() {
                *i += 1;
            }
            *i > b
        };
        let int = digits(&mut i);
        let mut frac = false;
        if i < s.len() && s[i] == b'.' {
            i += 1;
            frac = digits(&mut i);
        }
        if !int && !frac {
            return Err(self.err("expected a number"));
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            if digits(&mut j) {
                i = j;
            }
        }
        let text = std::str::from_utf8(&s[start..i]).map_err(|_| self.err("invalid utf-8"))?;
        let v: f64 = text.parse().map_err(|_| self.err("malformed number"))?;
        self.pos = i;
        Ok(v)
    }

    fn atom(&mut self) -> Result<Expr> {
        let c = match self.peek() {
            Some(c) => c,
            None => return Err(self.err("unexpected end of input")),
        };
        if c.is_ascii_digit() || c == b'.' {
            return Ok(Expr::Num(self.number()?));
        }
        if c == b'(' {
            self.pos += 1;
            let e = self.expr()?;
            self.expect(b')')?;
            return Ok(e);
        }
        if c == b'|' {
            self.pos += 1;
            match self.peek() {
                Some(b'x') | Some(b'r') => self.pos += 1,
                _ => return Err(self.err("expected 'x' inside '|...|'")),
            }
            self.expect(b'|')?;
            return Ok(Expr::AbsVar);
        }
        if c.is_ascii_alphabetic() {
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                self.pos += 1;
            }
            let word = &self.src[start..self.pos];
            let func = match word {
                b"x" | b"r" => return Ok(Expr::Var),
                b"ln" => Func::Ln,
                b"exp" => Func::Exp,
                b"sqrt" => Func::Sqrt,
                b"abs" => Func::Abs,
                _ => {
                    self.pos = start;
                    return Err(self.err("unknown identifier"));
                }
            };
            self.expect(b'(')?;
            let arg = self.expr()?;
            self.expect(b')')?;
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        Err(self.err(&format!("unexpected character '{}'", c as char)))
    }
}
