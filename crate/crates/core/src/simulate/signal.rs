//! Time signals written as small arithmetic expressions in `t`, e.g.
//! `1+0.5*sin(pi*t)`.
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := ['-'] atom
//! atom   := number | 't' | 'pi' | func '(' expr ')' | '(' expr ')'
//! func   := 'sin' | 'cos' | 'exp'
//! ```
//!
//! Numbers are decimal literals without exponent. Whitespace is ignored.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => libm::sin(v),
            Func::Cos => libm::cos(v),
            Func::Exp => libm::exp(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignalExpr {
    Const(f64),
    Time,
    Pi,
    Neg(Box<SignalExpr>),
    Add(Box<SignalExpr>, Box<SignalExpr>),
    Sub(Box<SignalExpr>, Box<SignalExpr>),
    Mul(Box<SignalExpr>, Box<SignalExpr>),
    Div(Box<SignalExpr>, Box<SignalExpr>),
    Call(Func, Box<SignalExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// Byte offset into the parsed text.
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at offset {}: {}", self.offset, self.message)
    }
}

impl core::error::Error for ParseError {}

impl SignalExpr {
    pub fn parse(src: &str) -> Result<SignalExpr, ParseError> {
        parse_at(src, 0)
    }

    pub fn constant(c: f64) -> SignalExpr {
        SignalExpr::Const(c)
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            SignalExpr::Const(c) => *c,
            SignalExpr::Time => t,
            SignalExpr::Pi => PI,
            SignalExpr::Neg(a) => -a.eval(t),
            SignalExpr::Add(a, b) => a.eval(t) + b.eval(t),
            SignalExpr::Sub(a, b) => a.eval(t) - b.eval(t),
            SignalExpr::Mul(a, b) => a.eval(t) * b.eval(t),
            SignalExpr::Div(a, b) => a.eval(t) / b.eval(t),
            SignalExpr::Call(f, a) => f.apply(a.eval(t)),
        }
    }

    /// Symbolic time derivative with trivial zero/one folding.
    pub fn derivative(&self) -> SignalExpr {
        use SignalExpr::*;
        match self {
            Const(_) | Pi => Const(0.0),
            Time => Const(1.0),
            Neg(a) => neg(a.derivative()),
            Add(a, b) => add(a.derivative(), b.derivative()),
            Sub(a, b) => sub(a.derivative(), b.derivative()),
            Mul(a, b) => add(mul(a.derivative(), (**b).clone()), mul((**a).clone(), b.derivative())),
            Div(a, b) => div(
                sub(mul(a.derivative(), (**b).clone()), mul((**a).clone(), b.derivative())),
                mul((**b).clone(), (**b).clone()),
            ),
            Call(f, a) => {
                let outer = match f {
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => neg(Call(Func::Sin, a.clone())),
                    Func::Exp => Call(Func::Exp, a.clone()),
                };
                mul(outer, a.derivative())
            }
        }
    }

    fn is_atom(&self) -> bool {
        matches!(
            self,
            SignalExpr::Const(c) if *c >= 0.0 || c.is_nan()
        ) || matches!(self, SignalExpr::Time | SignalExpr::Pi | SignalExpr::Call(..))
    }
}

fn is_zero(e: &SignalExpr) -> bool {
    matches!(e, SignalExpr::Const(c) if *c == 0.0)
}

fn is_one(e: &SignalExpr) -> bool {
    matches!(e, SignalExpr::Const(c) if *c == 1.0)
}

pub(crate) fn add(a: SignalExpr, b: SignalExpr) -> SignalExpr {
    if is_zero(&a) {
        b
    } else if is_zero(&b) {
        a
    } else {
        SignalExpr::Add(Box::new(a), Box::new(b))
    }
}

pub(crate) fn sub(a: SignalExpr, b: SignalExpr) -> SignalExpr {
    if is_zero(&b) {
        a
    } else if is_zero(&a) {
        neg(b)
    } else {
        SignalExpr::Sub(Box::new(a), Box::new(b))
    }
}

pub(crate) fn mul(a: SignalExpr, b: SignalExpr) -> SignalExpr {
    if is_zero(&a) || is_zero(&b) {
        SignalExpr::Const(0.0)
    } else if is_one(&a) {
        b
    } else if is_one(&b) {
        a
    } else {
        SignalExpr::Mul(Box::new(a), Box::new(b))
    }
}

fn div(a: SignalExpr, b: SignalExpr) -> SignalExpr {
    if is_zero(&a) {
        SignalExpr::Const(0.0)
    } else {
        SignalExpr::Div(Box::new(a), Box::new(b))
    }
}

fn neg(a: SignalExpr) -> SignalExpr {
    match a {
        SignalExpr::Const(c) if c == 0.0 => SignalExpr::Const(0.0),
        SignalExpr::Neg(inner) => *inner,
        a => SignalExpr::Neg(Box::new(a)),
    }
}

impl fmt::Display for SignalExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use SignalExpr::*;
        let additive = |e: &SignalExpr| matches!(e, Add(..) | Sub(..));
        let multiplicative = |e: &SignalExpr| matches!(e, Add(..) | Sub(..) | Mul(..) | Div(..));
        match self {
            Const(c) if *c < 0.0 => write!(f, "-{}", -c),
            Const(c) => write!(f, "{c}"),
            Time => f.write_str("t"),
            Pi => f.write_str("pi"),
            Neg(a) if a.is_atom() => write!(f, "-{a}"),
            Neg(a) => write!(f, "-({a})"),
            Add(a, b) | Sub(a, b) => {
                let op = if matches!(self, Add(..)) { '+' } else { '-' };
                if additive(b) {
                    write!(f, "{a}{op}({b})")
                } else {
                    write!(f, "{a}{op}{b}")
                }
            }
            Mul(a, b) | Div(a, b) => {
                let op = if matches!(self, Mul(..)) { '*' } else { '/' };
                if additive(a) {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                if multiplicative(b) {
                    write!(f, "{op}({b})")
                } else {
                    write!(f, "{op}{b}")
                }
            }
            Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

/// Parses `src`, reporting error offsets shifted by `base`.
pub fn parse_at(src: &str, base: usize) -> Result<SignalExpr, ParseError> {
    let mut p = Parser { src: src.as_bytes(), pos: 0, base };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

/// Parses comma-separated channels; offsets refer to the whole string.
pub fn parse_channels(src: &str) -> Result<Vec<SignalExpr>, ParseError> {
    let mut out = Vec::new();
    let mut start = 0;
    for piece in src.split(',') {
        out.push(parse_at(piece, start)?);
        start += piece.len() + 1;
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    base: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ParseError {
        ParseError {
            offset: self.base + self.pos,
            message: message.to_string(),
        }
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

    fn expr(&mut self) -> Result<SignalExpr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == b'+' {
                SignalExpr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                SignalExpr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<SignalExpr, ParseError> {
        let mut lhs = self.factor()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = if c == b'*' {
                SignalExpr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                SignalExpr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<SignalExpr, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(SignalExpr::Neg(Box::new(self.atom()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<SignalExpr, ParseError> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
                    self.pos += 1;
                }
                let ident = &self.src[start..self.pos];
                let func = match ident {
                    b"t" => return Ok(SignalExpr::Time),
                    b"pi" => return Ok(SignalExpr::Pi),
                    b"sin" => Func::Sin,
                    b"cos" => Func::Cos,
                    b"exp" => Func::Exp,
                    _ => {
                        self.pos = start;
                        return Err(self.error("unknown identifier"));
                    }
                };
                if self.peek() != Some(b'(') {
                    return Err(self.error("expected '(' after function name"));
                }
                self.pos += 1;
                let arg = self.expr()?;
                self.close()?;
                Ok(SignalExpr::Call(func, Box::new(arg)))
            }
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.close()?;
                Ok(e)
            }
            Some(_) => Err(self.error("expected a number, 't', 'pi', a function or '('")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn close(&mut self) -> Result<(), ParseError> {
        if self.peek() == Some(b')') {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error("expected ')'"))
        }
    }

    fn number(&mut self) -> Result<SignalExpr, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut count = digits(self);
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            count += digits(self);
        }
        if count == 0 {
            self.pos = start;
            return Err(self.error("malformed number"));
        }
        // only ASCII digits and '.' were consumed
        let text = core::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        text.parse::<f64>().map(SignalExpr::Const).map_err(|_| {
            self.pos = start;
            self.error("malformed number")
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;
    use proptest::prelude::*;

    #[test]
    fn evaluates_figure_inputs() {
        let e = SignalExpr::parse("1+0.5*sin(pi*t)").unwrap();
        assert!((e.eval(0.5) - 1.5).abs() < 1e-15);
        let e = SignalExpr::parse(" 2 + sin( 2*pi*t ) ").unwrap();
        assert!((e.eval(0.25) - 3.0).abs() < 1e-15);
        assert_eq!(SignalExpr::parse("-t").unwrap().eval(2.0), -2.0);
        assert_eq!(SignalExpr::parse("exp(0)").unwrap().eval(9.0), 1.0);
        assert_eq!(SignalExpr::parse("6/3/2").unwrap().eval(0.0), 1.0);
        assert_eq!(SignalExpr::parse("1-2-3").unwrap().eval(0.0), -4.0);
        assert_eq!(SignalExpr::parse(".5").unwrap().eval(0.0), 0.5);
    }

    #[test]
    fn error_offsets() {
        let e = SignalExpr::parse("1+*sin(t)").unwrap_err();
        assert_eq!(e.offset, 2);
        assert_eq!(SignalExpr::parse("sin t").unwrap_err().offset, 4);
        assert_eq!(SignalExpr::parse("foo(t)").unwrap_err().offset, 0);
        assert_eq!(SignalExpr::parse("(t").unwrap_err().offset, 2);
        assert_eq!(SignalExpr::parse("1e3").unwrap_err().offset, 1);
        assert_eq!(SignalExpr::parse("--t").unwrap_err().offset, 1);
        assert_eq!(SignalExpr::parse("").unwrap_err().offset, 0);
        assert_eq!(parse_channels("t,1+*t").unwrap_err().offset, 4);
        assert_eq!(parse_channels("0.3*sin(t), 0.2*cos(t)").unwrap().len(), 2);
    }

    #[test]
    fn printing() {
        let cases = [
            ("1+0.5*sin(pi*t)", "1+0.5*sin(pi*t)"),
            ("1-(2-t)", "1-(2-t)"),
            ("(1-2)-t", "1-2-t"),
            ("(1+t)*2", "(1+t)*2"),
            ("2/(t*3)", "2/(t*3)"),
            ("-(t+1)", "-(t+1)"),
            ("-(-t)", "-(-t)"),
            ("t*-2", "t*-2"),
        ];
        for (src, printed) in cases {
            assert_eq!(SignalExpr::parse(src).unwrap().to_string(), printed);
        }
    }

    #[test]
    fn symbolic_derivative() {
        let d = SignalExpr::parse("3*sin(pi*t)").unwrap().derivative();
        for t in [0.0, 0.3, 1.7] {
            assert!((d.eval(t) - 3.0 * PI * libm::cos(PI * t)).abs() < 1e-12);
        }
        let e = SignalExpr::parse("exp(-t)/(1+t*t)-cos(2*t)").unwrap();
        let d = e.derivative();
        for t in [0.1, 0.9, 2.5] {
            let h = 1e-6;
            let fd = (e.eval(t + h) - e.eval(t - h)) / (2.0 * h);
            assert!((d.eval(t) - fd).abs() < 1e-8);
        }
        assert_eq!(SignalExpr::parse("5").unwrap().derivative(), SignalExpr::Const(0.0));
    }

    fn arb_expr() -> impl Strategy<Value = SignalExpr> {
        let leaf = prop_oneof![
            (0u32..1000, 0u32..4).prop_map(|(m, s)| SignalExpr::Const(m as f64 / 10f64.powi(s as i32))),
            Just(SignalExpr::Time),
            Just(SignalExpr::Pi),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| SignalExpr::Neg(Box::new(a))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| SignalExpr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| SignalExpr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| SignalExpr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| SignalExpr::Div(Box::new(a), Box::new(b))),
                (inner, 0usize..3).prop_map(|(a, k)| SignalExpr::Call([Func::Sin, Func::Cos, Func::Exp][k], Box::new(a))),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let printed = e.to_string();
            let reparsed = SignalExpr::parse(&printed).map_err(|err| TestCaseError::fail(format!("{printed}: {err}")))?;
            prop_assert_eq!(&reparsed, &e, "{}", printed);
            prop_assert_eq!(reparsed.to_string(), printed);
        }
    }
}
