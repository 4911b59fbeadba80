//! Closed-form scalar expressions for coordinate-dependent generators.
//!
//! The grammar is deliberately small: decimal literals, the constant `pi`,
//! the variables `x` (base coordinate) and `s` (height inside a suspension),
//! `+ - * / ^`, parentheses and the functions `sin`, `cos`, `exp`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("unexpected character `{ch}` at offset {pos}")]
    UnexpectedChar { ch: char, pos: usize },
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("unknown identifier `{0}` (allowed: x, s, pi, sin, cos, exp)")]
    UnknownIdent(String),
    #[error("invalid number `{0}`")]
    BadNumber(String),
    #[error("trailing input at offset {0}")]
    Trailing(usize),
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Const(f64),
    X,
    S,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Sin(Box<Node>),
    Cos(Box<Node>),
    Exp(Box<Node>),
}

impl Node {
    fn eval(&self, x: f64, s: f64) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::X => x,
            Node::S => s,
            Node::Neg(a) => -a.eval(x, s),
            Node::Add(a, b) => a.eval(x, s) + b.eval(x, s),
            Node::Sub(a, b) => a.eval(x, s) - b.eval(x, s),
            Node::Mul(a, b) => a.eval(x, s) * b.eval(x, s),
            Node::Div(a, b) => a.eval(x, s) / b.eval(x, s),
            Node::Pow(a, b) => {
                let base = a.eval(x, s);
                let e = b.eval(x, s);
                if e.fract() == 0.0 && e.abs() < i32::MAX as f64 {
                    base.powi(e as i32)
                } else {
                    base.powf(e)
                }
            }
            Node::Sin(a) => a.eval(x, s).sin(),
            Node::Cos(a) => a.eval(x, s).cos(),
            Node::Exp(a) => a.eval(x, s).exp(),
        }
    }

    fn is_const(&self) -> bool {
        match self {
            Node::Const(_) => true,
            Node::X | Node::S => false,
            Node::Neg(a) | Node::Sin(a) | Node::Cos(a) | Node::Exp(a) => a.is_const(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.is_const() && b.is_const()
            }
        }
    }
}

/// A parsed expression together with its source text.
#[derive(Clone, Debug)]
pub struct Expr {
    source: String,
    root: Node,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self, ExprError> {
        let mut p = Parser {
            chars: source.char_indices().collect(),
            pos: 0,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(ExprError::Trailing(p.chars[p.pos].0));
        }
        Ok(Expr {
            source: source.to_string(),
            root,
        })
    }

    /// Evaluate at base coordinate `x` and suspension height `s`.
    pub fn eval(&self, x: f64, s: f64) -> f64 {
        self.root.eval(x, s)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// True when the expression references neither `x` nor `s`.
    pub fn is_constant(&self) -> bool {
        self.root.is_const()
    }

    /// True when the expression is the literal zero after constant folding.
    pub fn is_zero(&self) -> bool {
        self.is_constant() && self.eval(0.0, 0.0) == 0.0
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

struct Parser {
    chars: Vec<(usize, char)>,
    pos: usize,
}

impl Parser {
    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].1.is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn expect(&mut self, want: char) -> Result<(), ExprError> {
        match self.bump() {
            Some(c) if c == want => Ok(()),
            Some(c) => Err(ExprError::UnexpectedChar {
                ch: c,
                pos: self.chars[self.pos - 1].0,
            }),
            None => Err(ExprError::UnexpectedEnd),
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some('+') => {
                    self.bump();
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some('-') => {
                    self.bump();
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some('*') => {
                    self.bump();
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some('/') => {
                    self.bump();
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some('-') => {
                self.bump();
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some('^') {
            self.bump();
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            None => Err(ExprError::UnexpectedEnd),
            Some('(') => {
                self.bump();
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.chars.len() && self.chars[self.pos].1.is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let ident: String = self.chars[start..self.pos].iter().map(|&(_, c)| c).collect();
                match ident.as_str() {
                    "x" => Ok(Node::X),
                    "s" => Ok(Node::S),
                    "pi" => Ok(Node::Const(std::f64::consts::PI)),
                    "sin" | "cos" | "exp" => {
                        self.expect('(')?;
                        let arg = Box::new(self.expr()?);
                        self.expect(')')?;
                        Ok(match ident.as_str() {
                            "sin" => Node::Sin(arg),
                            "cos" => Node::Cos(arg),
                            _ => Node::Exp(arg),
                        })
                    }
                    _ => Err(ExprError::UnknownIdent(ident)),
                }
            }
            Some(c) => Err(ExprError::UnexpectedChar {
                ch: c,
                pos: self.chars[self.pos].0,
            }),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        let mut seen_exp = false;
        while self.pos < self.chars.len() {
            let c = self.chars[self.pos].1;
            let prev = if self.pos > start { Some(self.chars[self.pos - 1].1) } else { None };
            let ok = c.is_ascii_digit()
                || c == '.'
                || ((c == 'e' || c == 'E') && !seen_exp)
                || ((c == '+' || c == '-') && matches!(prev, Some('e') | Some('E')));
            if !ok {
                break;
            }
            if c == 'e' || c == 'E' {
                seen_exp = true;
            }
            self.pos += 1;
        }
        let text: String = self.chars[start..self.pos].iter().map(|&(_, c)| c).collect();
        text.parse::<f64>()
            .map(Node::Const)
            .map_err(|_| ExprError::BadNumber(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn evaluates_whitelisted_grammar() {
        let e = Expr::parse("exp(-1 + 0.5*cos(2*pi*x))").unwrap();
        let x = 0.3;
        assert_eq!(e.eval(x, 0.0), (-1.0 + 0.5 * (2.0 * PI * x).cos()).exp());
        let p = Expr::parse("1 - 2*x^2 + x^3/4").unwrap();
        assert!((p.eval(0.5, 0.0) - (1.0 - 0.5 + 0.125 / 4.0)).abs() < 1e-15);
        let f = Expr::parse("sin(2*pi*(x + 0.1*s))").unwrap();
        assert!((f.eval(0.2, 1.0) - (2.0 * PI * 0.3).sin()).abs() < 1e-15);
        assert_eq!(Expr::parse("-2^2").unwrap().eval(0.0, 0.0), -4.0);
        assert_eq!(Expr::parse("1.5e-1").unwrap().eval(0.0, 0.0), 0.15);
    }

    #[test]
    fn constant_detection() {
        assert!(Expr::parse("-1").unwrap().is_constant());
        assert!(Expr::parse("0").unwrap().is_zero());
        assert!(!Expr::parse("x*0 + 1").unwrap().is_constant());
    }

    #[test]
    fn rejects_non_whitelisted_input() {
        assert_eq!(
            Expr::parse("log(x)").unwrap_err(),
            ExprError::UnknownIdent("log".into())
        );
        assert!(matches!(Expr::parse("x +"), Err(ExprError::UnexpectedEnd)));
        assert!(matches!(Expr::parse("x ) "), Err(ExprError::Trailing(2))));
        assert!(matches!(Expr::parse("x; y"), Err(ExprError::Trailing(_))));
    }
}
