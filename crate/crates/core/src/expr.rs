//! Small arithmetic expression language for user-supplied charts, densities
//! and fields.
//!
//! Expressions are parsed once into an [`Expr`] tree and evaluated on any
//! [`Scalar`], so a user chart gets exact jets just like a built-in one.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numeric literals, the
//! constants `pi` and `e`, named variables, and the functions `sin cos tan
//! exp ln log sqrt abs acos atan2 pow`.

use std::collections::BTreeMap;

use crate::error::{Result, WstabError};
use crate::jet::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Acos,
    Atan2,
    Pow,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "tan" => (Func::Tan, 1),
            "exp" => (Func::Exp, 1),
            "ln" | "log" => (Func::Ln, 1),
            "sqrt" => (Func::Sqrt, 1),
            "abs" => (Func::Abs, 1),
            "acos" => (Func::Acos, 1),
            "atan2" => (Func::Atan2, 2),
            "pow" => (Func::Pow, 2),
            _ => return None,
        })
    }
}

impl Expr {
    /// Parses `src` with the given variable names; `params` are substituted
    /// as constants.
    pub fn parse(src: &str, vars: &[&str], params: &BTreeMap<String, f64>) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            vars,
            params,
            src,
        };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval<S: Scalar>(&self, vars: &[S]) -> S {
        match self {
            Expr::Num(c) => S::cst(*c),
            Expr::Var(i) => vars[*i],
            Expr::Neg(a) => -a.eval(vars),
            Expr::Add(a, b) => a.eval(vars) + b.eval(vars),
            Expr::Sub(a, b) => a.eval(vars) - b.eval(vars),
            Expr::Mul(a, b) => a.eval(vars) * b.eval(vars),
            Expr::Div(a, b) => a.eval(vars) / b.eval(vars),
            Expr::Pow(a, b) => pow(a.eval(vars), b, vars),
            Expr::Call(f, args) => {
                let x = args[0].eval(vars);
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tan => x.tan(),
                    Func::Exp => x.exp(),
                    Func::Ln => x.ln(),
                    Func::Sqrt => x.sqrt(),
                    Func::Abs => x.abs(),
                    Func::Acos => x.acos(),
                    Func::Atan2 => x.atan2(args[1].eval(vars)),
                    Func::Pow => pow(x, &args[1], vars),
                }
            }
        }
    }
}

fn pow<S: Scalar>(base: S, exponent: &Expr, vars: &[S]) -> S {
    if let Expr::Num(c) = exponent {
        if c.fract() == 0.0 && c.abs() <= 64.0 {
            return base.powi(*c as i32);
        }
        return base.powf(*c);
    }
    (exponent.eval(vars) * base.ln()).exp()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>> {
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
            let v = text.parse::<f64>().map_err(|_| {
                WstabError::Config(format!("bad number '{text}' in expression '{src}'"))
            })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((start, Tok::Ident(chars[start..i].iter().collect())));
        } else if "+-*/^(),".contains(c) {
            out.push((i, Tok::Op(c)));
            i += 1;
        } else {
            return Err(WstabError::Config(format!(
                "unexpected character '{c}' at column {} in expression '{src}'",
                i + 1
            )));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    vars: &'a [&'a str],
    params: &'a BTreeMap<String, f64>,
    src: &'a str,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> WstabError {
        let col = self
            .tokens
            .get(self.pos)
            .map(|t| t.0 + 1)
            .unwrap_or(self.src.len() + 1);
        WstabError::Config(format!(
            "{msg} at column {col} in expression '{}'",
            self.src
        ))
    }

    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some((_, Tok::Op(c))) => Some(*c),
            _ => None,
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek_op() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected '{c}'")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(fold_constant(exp))));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let Some((_, tok)) = self.tokens.get(self.pos).cloned() else {
            return Err(self.error("unexpected end of expression"));
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Tok::Op('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if self.peek_op() == Some('(') {
                    let (func, arity) = Func::lookup(&name)
                        .ok_or_else(|| self.error(&format!("unknown function '{name}'")))?;
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while self.peek_op() == Some(',') {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    if args.len() != arity {
                        return Err(self.error(&format!(
                            "function '{name}' takes {arity} argument(s), got {}",
                            args.len()
                        )));
                    }
                    if func == Func::Pow {
                        let e = args.pop().map(fold_constant).unwrap_or(Expr::Num(1.0));
                        let b = args.pop().unwrap_or(Expr::Num(0.0));
                        return Ok(Expr::Pow(Box::new(b), Box::new(e)));
                    }
                    return Ok(Expr::Call(func, args));
                }
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Expr::Var(i));
                }
                if let Some(v) = self.params.get(&name) {
                    return Ok(Expr::Num(*v));
                }
                match name.as_str() {
                    "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                    "e" => Ok(Expr::Num(std::f64::consts::E)),
                    _ => {
                        self.pos -= 1;
                        Err(self.error(&format!("unknown identifier '{name}'")))
                    }
                }
            }
            Tok::Op(c) => Err(self.error(&format!("unexpected '{c}'"))),
        }
    }
}

/// Collapses a variable-free subtree to a literal so that `x^(-2)` hits the
/// integer-power path.
fn fold_constant(e: Expr) -> Expr {
    fn has_var(e: &Expr) -> bool {
        match e {
            Expr::Num(_) => false,
            Expr::Var(_) => true,
            Expr::Neg(a) => has_var(a),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => has_var(a) || has_var(b),
            Expr::Call(_, args) => args.iter().any(has_var),
        }
    }
    if has_var(&e) {
        e
    } else {
        Expr::Num(e.eval::<f64>(&[]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Jet2;

    fn parse(s: &str) -> Result<Expr> {
        Expr::parse(s, &["x", "y"], &BTreeMap::from([("k".to_string(), -2.0)]))
    }

    #[test]
    fn precedence_and_functions() {
        let e = parse("1 + 2*x^2 - y/4 + k*sin(pi*x) + pow(y, 3) + atan2(y, x)").unwrap();
        let (x, y) = (0.3_f64, 1.7_f64);
        let want = 1.0 + 2.0 * x * x - y / 4.0 - 2.0 * (std::f64::consts::PI * x).sin()
            + y.powi(3)
            + y.atan2(x);
        assert!((e.eval(&[x, y]) - want).abs() < 1e-14);
    }

    #[test]
    fn unary_minus_and_power_bind_like_math() {
        let e = parse("-x^2").unwrap();
        assert_eq!(e.eval(&[3.0, 0.0]), -9.0);
        let e = parse("2^-1").unwrap();
        assert_eq!(e.eval::<f64>(&[0.0, 0.0]), 0.5);
        let e = parse("1e-3*x + 2.5E2").unwrap();
        assert!((e.eval(&[1000.0, 0.0]) - 251.0).abs() < 1e-12);
    }

    #[test]
    fn derivatives_flow_through_jets() {
        let e = parse("x*y^2 + exp(x)").unwrap();
        let j = e.eval(&[Jet2::var(0.5, 0), Jet2::var(2.0, 1)]);
        assert!((j.d[0] - (4.0 + 0.5f64.exp())).abs() < 1e-13);
        assert!((j.d[1] - 2.0).abs() < 1e-13);
        assert!((j.h[1][1] - 1.0).abs() < 1e-13);
        assert!((j.h[0][1] - 4.0).abs() < 1e-13);
    }

    #[test]
    fn errors_name_the_problem() {
        let msg = parse("x + q").unwrap_err().to_string();
        assert!(msg.contains("unknown identifier 'q'"), "{msg}");
        let msg = parse("sin(x, y)").unwrap_err().to_string();
        assert!(msg.contains("takes 1"), "{msg}");
        assert!(parse("(x + 1").is_err());
        assert!(parse("x $ y").is_err());
        assert!(parse("x y").is_err());
    }
}
