//! Small arithmetic-expression language for user coefficients.
//!
//! Operators `+ - * / ^`, functions `sin cos sqrt abs pos exp`, variables `t`, `x` (= `x1`), `x2`,
//! constants `pi` and `e`.

use crate::error::{Error, Result};
use std::f64::consts::{E, PI};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Time,
    State(usize),
    Neg(Box<Expr>),
    Bin(Op, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Func {
    Sin,
    Cos,
    Sqrt,
    Abs,
    Pos,
    Exp,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>> {
    let b = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let st = i;
            while i < b.len() && ((b[i] as char).is_ascii_digit() || b[i] == b'.') {
                i += 1;
            }
            if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                let mut j = i + 1;
                if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                    j += 1;
                }
                if j < b.len() && (b[j] as char).is_ascii_digit() {
                    i = j;
                    while i < b.len() && (b[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let v: f64 = src[st..i].parse().map_err(|_| Error::Parse {
                pos: st,
                msg: format!("bad number '{}'", &src[st..i]),
            })?;
            out.push((st, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let st = i;
            while i < b.len() && ((b[i] as char).is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            out.push((st, Tok::Ident(src[st..i].to_string())));
        } else if "+-*/^()".contains(c) {
            out.push((i, Tok::Sym(c)));
            i += 1;
        } else {
            return Err(Error::Parse { pos: i, msg: format!("unexpected character '{c}'") });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.1)
    }
    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |t| t.0)
    }
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { pos: self.pos(), msg: msg.into() })
    }
    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                Op::Add
            } else if self.eat('-') {
                Op::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                Op::Mul
            } else if self.eat('/') {
                Op::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    // right-associative, binds tighter than unary minus on the left: -x^2 = -(x^2)
    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Expr::Bin(Op::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.at += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::Sym('(')) => {
                self.at += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return self.err("expected ')'");
                }
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.at += 1;
                let func = match name.as_str() {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "sqrt" => Some(Func::Sqrt),
                    "abs" => Some(Func::Abs),
                    "pos" => Some(Func::Pos),
                    "exp" => Some(Func::Exp),
                    _ => None,
                };
                if let Some(f) = func {
                    if !self.eat('(') {
                        return self.err(format!("expected '(' after {name}"));
                    }
                    let arg = self.expr()?;
                    if !self.eat(')') {
                        return self.err("expected ')'");
                    }
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                match name.as_str() {
                    "t" => Ok(Expr::Time),
                    "x" | "x1" => Ok(Expr::State(0)),
                    "x2" => Ok(Expr::State(1)),
                    "pi" => Ok(Expr::Num(PI)),
                    "e" => Ok(Expr::Num(E)),
                    _ => {
                        self.at -= 1;
                        self.err(format!("unknown identifier '{name}'"))
                    }
                }
            }
            Some(Tok::Sym(c)) => self.err(format!("unexpected '{c}'")),
            None => self.err("unexpected end of expression"),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let toks = lex(src)?;
        let mut p = Parser { toks, at: 0, end: src.len() };
        let e = p.expr()?;
        if p.at != p.toks.len() {
            return p.err("trailing input");
        }
        Ok(e)
    }

    /// Largest state index referenced plus one.
    pub fn state_dim(&self) -> usize {
        match self {
            Expr::State(i) => i + 1,
            Expr::Neg(a) | Expr::Call(_, a) => a.state_dim(),
            Expr::Bin(_, a, b) => a.state_dim().max(b.state_dim()),
            _ => 0,
        }
    }

    pub fn depends_on_state(&self) -> bool {
        self.state_dim() > 0
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Time => t,
            Expr::State(i) => x[*i],
            Expr::Neg(a) => -a.eval(t, x),
            Expr::Bin(op, a, b) => {
                let (u, v) = (a.eval(t, x), b.eval(t, x));
                match op {
                    Op::Add => u + v,
                    Op::Sub => u - v,
                    Op::Mul => u * v,
                    Op::Div => u / v,
                    Op::Pow => {
                        if v.fract() == 0.0 && v.abs() < 64.0 {
                            u.powi(v as i32)
                        } else {
                            u.powf(v)
                        }
                    }
                }
            }
            Expr::Call(f, a) => {
                let u = a.eval(t, x);
                match f {
                    Func::Sin => u.sin(),
                    Func::Cos => u.cos(),
                    Func::Sqrt => u.sqrt(),
                    Func::Abs => u.abs(),
                    Func::Pos => u.max(0.0),
                    Func::Exp => u.exp(),
                }
            }
        }
    }
}
