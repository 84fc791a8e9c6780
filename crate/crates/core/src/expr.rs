//! Arithmetic expressions in `x1`, `x2`, `t` for closed-form data.
//!
//! Grammar: numbers, `+ - * / ^` (with `^` right-associative and binding
//! tighter than unary minus), parentheses, the constant `pi`, and the
//! functions `sin cos exp abs sqrt min max`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
    Sqrt,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<(Self, usize)> {
        Some(match name {
            "sin" => (Self::Sin, 1),
            "cos" => (Self::Cos, 1),
            "exp" => (Self::Exp, 1),
            "abs" => (Self::Abs, 1),
            "sqrt" => (Self::Sqrt, 1),
            "min" => (Self::Min, 2),
            "max" => (Self::Max, 2),
            _ => return None,
        })
    }
}

const VARS: [&str; 3] = ["x1", "x2", "t"];

/// A parsed expression; cheap to evaluate repeatedly.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse()
                .map_err(|_| Error::Expr(format!("bad number {text:?}")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            return Err(Error::Expr(format!("unexpected character {c:?} in {src:?}")));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.eat(op) {
            Ok(())
        } else {
            Err(Error::Expr(format!("expected {op:?} at token {}", self.pos)))
        }
    }

    fn sum(&mut self) -> Result<Node> {
        let mut lhs = self.product()?;
        loop {
            let op = if self.eat('+') {
                '+'
            } else if self.eat('-') {
                '-'
            } else {
                return Ok(lhs);
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.product()?));
        }
    }

    fn product(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                '*'
            } else if self.eat('/') {
                '/'
            } else {
                return Ok(lhs);
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            Ok(Node::Neg(Box::new(self.unary()?)))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            Ok(Node::Bin('^', Box::new(base), Box::new(exp)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Node> {
        match self.toks.get(self.pos).cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Node::Num(v))
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.sum()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if let Some(k) = VARS.iter().position(|v| *v == name) {
                    return Ok(Node::Var(k));
                }
                if name == "pi" {
                    return Ok(Node::Num(std::f64::consts::PI));
                }
                let (func, arity) = Func::lookup(&name)
                    .ok_or_else(|| Error::Expr(format!("unknown name {name:?}")))?;
                self.expect('(')?;
                let mut args = vec![self.sum()?];
                while self.eat(',') {
                    args.push(self.sum()?);
                }
                self.expect(')')?;
                if args.len() != arity {
                    return Err(Error::Expr(format!(
                        "{name} takes {arity} argument(s), got {}",
                        args.len()
                    )));
                }
                Ok(Node::Call(func, args))
            }
            other => Err(Error::Expr(format!("unexpected token {other:?}"))),
        }
    }
}

fn eval(node: &Node, vars: &[f64; 3]) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::Var(k) => vars[*k],
        Node::Neg(a) => -eval(a, vars),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, vars), eval(b, vars));
            match op {
                '+' => a + b,
                '-' => a - b,
                '*' => a * b,
                '/' => a / b,
                _ => {
                    if b == 2.0 {
                        a * a
                    } else {
                        a.powf(b)
                    }
                }
            }
        }
        Node::Call(f, args) => {
            let a = eval(&args[0], vars);
            match f {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Exp => a.exp(),
                Func::Abs => a.abs(),
                Func::Sqrt => a.sqrt(),
                Func::Min => a.min(eval(&args[1], vars)),
                Func::Max => a.max(eval(&args[1], vars)),
            }
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let toks = tokenize(src)?;
        if toks.is_empty() {
            return Err(Error::Expr("empty expression".into()));
        }
        let mut p = Parser { toks, pos: 0 };
        let root = p.sum()?;
        if p.pos != p.toks.len() {
            return Err(Error::Expr(format!(
                "trailing input after token {} in {src:?}",
                p.pos
            )));
        }
        Ok(Self {
            source: src.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Evaluates at `x = (x1, x2)` and time `t`; `x2` is ignored in 1D.
    pub fn eval(&self, x: [f64; 2], t: f64) -> f64 {
        eval(&self.root, &[x[0], x[1], t])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(src: &str, x1: f64, x2: f64, t: f64) -> f64 {
        Expr::parse(src).unwrap().eval([x1, x2], t)
    }

    #[test]
    fn precedence() {
        assert_eq!(at("1 + 2 * 3", 0.0, 0.0, 0.0), 7.0);
        assert_eq!(at("2 ^ 3 ^ 2", 0.0, 0.0, 0.0), 512.0);
        assert_eq!(at("-2 ^ 2", 0.0, 0.0, 0.0), -4.0);
        assert_eq!(at("(1 + 2) * 3 - 4 / 8", 0.0, 0.0, 0.0), 8.5);
        assert_eq!(at("2 * x1 - x2 + t", 1.5, 0.5, 4.0), 6.5);
        assert_eq!(at("1e-3 * 2.5E2", 0.0, 0.0, 0.0), 0.25);
    }

    #[test]
    fn functions() {
        assert!((at("exp(-2*t) * sin(x1) * sin(x2)", 1.0, 2.0, 0.5) - (-1f64).exp() * 1f64.sin() * 2f64.sin()).abs() < 1e-15);
        assert_eq!(at("max(abs(x1), min(3, x2))", -4.0, 9.0, 0.0), 4.0);
        assert_eq!(at("sqrt(16) + cos(0)", 0.0, 0.0, 0.0), 5.0);
        assert_eq!(at("pi", 0.0, 0.0, 0.0), std::f64::consts::PI);
    }

    #[test]
    fn errors() {
        for bad in ["", "1 +", "sin(1, 2)", "foo(1)", "x3", "(1", "1 $ 2", "2 3"] {
            assert!(matches!(Expr::parse(bad), Err(Error::Expr(_))), "{bad}");
        }
    }
}
