//! Potentials `Φ(ξ, η)` written in null coordinates.
//!
//! ```text
//! expr   := term (("+"|"-") term)* ;
//! term   := factor (("*"|"/") factor)* ;
//! factor := atom ("^" INT)? | "-" factor ;
//! atom   := NUMBER | VAR | "(" expr ")" | "exp" "(" expr ")" | "log" "(" expr ")"
//!         | "bump" "(" expr "," INT ")" ;
//! VAR    := ("xi"|"eta") INT ;
//! ```
//!
//! Variables are 1-based in the text (`xi1`, `eta2`) and 0-based in the tree.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{PkError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Num(f64),
    Xi(usize),
    Eta(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    /// `bump(x, i) = exp(−1/(x−i)^{i+1})` for `x > i`, else `0`.
    Bump(Box<Expr>, u32),
}

/// A parsed potential over `n` para-complex variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialExpr {
    ast: Expr,
    nvars: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseErrorKind {
    Syntax,
    Arity,
    UnknownVariable,
}

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{kind:?} error at line {line}, column {column}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl PotentialExpr {
    pub fn parse(text: &str, nvars: usize) -> Result<Self> {
        let ast = Parser::new(text, nvars).parse_all()?;
        Ok(Self { ast, nvars })
    }

    /// Wraps a tree built in code; variable indices are checked against `nvars`.
    pub fn from_ast(ast: Expr, nvars: usize) -> Result<Self> {
        let max = max_var(&ast);
        if let Some(m) = max {
            if m >= nvars {
                return Err(PkError::InvalidInput(format!(
                    "variable index {} exceeds nvars = {nvars}",
                    m + 1
                )));
            }
        }
        Ok(Self { ast, nvars })
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    /// The potential with the roles of `ξ` and `η` exchanged.
    pub fn swap_blocks(&self) -> Self {
        Self { ast: swap(&self.ast), nvars: self.nvars }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn eval(&self, xi: &[f64], eta: &[f64]) -> Result<f64> {
        if xi.len() != self.nvars || eta.len() != self.nvars {
            return Err(PkError::DimensionMismatch {
                expected: self.nvars,
                found: if xi.len() != self.nvars { xi.len() } else { eta.len() },
            });
        }
        eval_expr(&self.ast, xi, eta)
    }

    /// `self + other`, as a new potential over the same variables.
    pub fn plus(&self, other: &PotentialExpr) -> Result<Self> {
        if self.nvars != other.nvars {
            return Err(PkError::DimensionMismatch { expected: self.nvars, found: other.nvars });
        }
        Ok(Self {
            ast: Expr::Add(Box::new(self.ast.clone()), Box::new(other.ast.clone())),
            nvars: self.nvars,
        })
    }
}

impl fmt::Display for PotentialExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.ast)
    }
}

fn swap(e: &Expr) -> Expr {
    let b = |a: &Expr| Box::new(swap(a));
    match e {
        Expr::Num(x) => Expr::Num(*x),
        Expr::Xi(i) => Expr::Eta(*i),
        Expr::Eta(i) => Expr::Xi(*i),
        Expr::Neg(a) => Expr::Neg(b(a)),
        Expr::Add(x, y) => Expr::Add(b(x), b(y)),
        Expr::Sub(x, y) => Expr::Sub(b(x), b(y)),
        Expr::Mul(x, y) => Expr::Mul(b(x), b(y)),
        Expr::Div(x, y) => Expr::Div(b(x), b(y)),
        Expr::Pow(a, k) => Expr::Pow(b(a), *k),
        Expr::Exp(a) => Expr::Exp(b(a)),
        Expr::Log(a) => Expr::Log(b(a)),
        Expr::Bump(a, i) => Expr::Bump(b(a), *i),
    }
}

fn max_var(e: &Expr) -> Option<usize> {
    match e {
        Expr::Num(_) => None,
        Expr::Xi(i) | Expr::Eta(i) => Some(*i),
        Expr::Neg(a) | Expr::Pow(a, _) | Expr::Exp(a) | Expr::Log(a) | Expr::Bump(a, _) => max_var(a),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            match (max_var(a), max_var(b)) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            }
        }
    }
}

/// `bump(x, i)` as a plain real function.
pub fn bump(x: f64, i: u32) -> f64 {
    let t = x - i as f64;
    if t <= 0.0 {
        0.0
    } else {
        (-t.powi(-(i as i32 + 1))).exp()
    }
}

fn eval_expr(e: &Expr, xi: &[f64], eta: &[f64]) -> Result<f64> {
    let v = match e {
        Expr::Num(x) => *x,
        Expr::Xi(i) => xi[*i],
        Expr::Eta(i) => eta[*i],
        Expr::Neg(a) => -eval_expr(a, xi, eta)?,
        Expr::Add(a, b) => eval_expr(a, xi, eta)? + eval_expr(b, xi, eta)?,
        Expr::Sub(a, b) => eval_expr(a, xi, eta)? - eval_expr(b, xi, eta)?,
        Expr::Mul(a, b) => eval_expr(a, xi, eta)? * eval_expr(b, xi, eta)?,
        Expr::Div(a, b) => {
            let d = eval_expr(b, xi, eta)?;
            if d == 0.0 {
                return Err(PkError::DivisionByZero);
            }
            eval_expr(a, xi, eta)? / d
        }
        Expr::Pow(a, k) => eval_expr(a, xi, eta)?.powi(*k as i32),
        Expr::Exp(a) => eval_expr(a, xi, eta)?.exp(),
        Expr::Log(a) => {
            let x = eval_expr(a, xi, eta)?;
            if x <= 0.0 {
                return Err(PkError::LogDomain { value: x });
            }
            x.ln()
        }
        Expr::Bump(a, i) => bump(eval_expr(a, xi, eta)?, *i),
    };
    if !v.is_finite() {
        return Err(PkError::NonFinite { context: "potential" });
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// Printing. Output re-parses to the identical tree.

const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_FACTOR: u8 = 3;
const PREC_ATOM: u8 = 4;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => PREC_SUM,
        Expr::Mul(..) | Expr::Div(..) => PREC_PRODUCT,
        Expr::Neg(_) | Expr::Pow(..) => PREC_FACTOR,
        _ => PREC_ATOM,
    }
}

fn write_at(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if prec(e) < min_prec {
        write!(f, "(")?;
        write!(f, "{e}")?;
        write!(f, ")")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => write!(f, "{x}"),
            Expr::Xi(i) => write!(f, "xi{}", i + 1),
            Expr::Eta(i) => write!(f, "eta{}", i + 1),
            Expr::Neg(a) => {
                write!(f, "-")?;
                write_at(f, a, PREC_FACTOR)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                write_at(f, a, PREC_SUM)?;
                write!(f, " {} ", if matches!(self, Expr::Add(..)) { "+" } else { "-" })?;
                write_at(f, b, PREC_PRODUCT)
            }
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                write_at(f, a, PREC_PRODUCT)?;
                write!(f, "{}", if matches!(self, Expr::Mul(..)) { "*" } else { "/" })?;
                write_at(f, b, PREC_FACTOR)
            }
            Expr::Pow(a, k) => {
                write_at(f, a, PREC_ATOM)?;
                write!(f, "^{k}")
            }
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Log(a) => write!(f, "log({a})"),
            Expr::Bump(a, i) => write!(f, "bump({a},{i})"),
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer + recursive descent.

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Int(u64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    nvars: usize,
    lex_error: Option<ParseError>,
}

fn err(kind: ParseErrorKind, line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError { kind, line, column, message: message.into() }
}

fn lex(text: &str) -> std::result::Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (1usize, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            col += 1;
            i += 1;
            continue;
        }
        let single = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Spanned { tok, line: l0, column: c0 });
            i += 1;
            col += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut is_int = true;
            if i < chars.len() && chars[i] == '.' {
                is_int = false;
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
                    is_int = false;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            let tok = if is_int {
                match s.parse::<u64>() {
                    Ok(v) => Tok::Int(v),
                    Err(_) => Tok::Num(s.parse::<f64>().unwrap_or(f64::INFINITY)),
                }
            } else {
                match s.parse::<f64>() {
                    Ok(v) => Tok::Num(v),
                    Err(_) => {
                        return Err(err(ParseErrorKind::Syntax, l0, c0, format!("malformed number '{s}'")))
                    }
                }
            };
            if let Tok::Num(v) = tok {
                if !v.is_finite() {
                    return Err(err(ParseErrorKind::Syntax, l0, c0, format!("number '{s}' is not finite")));
                }
            }
            out.push(Spanned { tok, line: l0, column: c0 });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            out.push(Spanned { tok: Tok::Ident(s), line: l0, column: c0 });
            continue;
        }
        return Err(err(ParseErrorKind::Syntax, l0, c0, format!("unexpected character '{c}'")));
    }
    out.push(Spanned { tok: Tok::End, line, column: col });
    Ok(out)
}

impl Parser {
    fn new(text: &str, nvars: usize) -> Self {
        match lex(text) {
            Ok(toks) => Self { toks, pos: 0, nvars, lex_error: None },
            Err(e) => Self { toks: Vec::new(), pos: 0, nvars, lex_error: Some(e) },
        }
    }

    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn bump_tok(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax(&self, message: impl Into<String>) -> ParseError {
        let t = self.peek();
        err(ParseErrorKind::Syntax, t.line, t.column, message)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> std::result::Result<(), ParseError> {
        if self.peek().tok == tok {
            self.bump_tok();
            Ok(())
        } else {
            Err(self.syntax(format!("expected {what}")))
        }
    }

    fn parse_all(mut self) -> std::result::Result<Expr, ParseError> {
        if let Some(e) = self.lex_error.take() {
            return Err(e);
        }
        let e = self.expr()?;
        if self.peek().tok != Tok::End {
            return Err(self.syntax("unexpected trailing input"));
        }
        Ok(e)
    }

    fn expr(&mut self) -> std::result::Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.bump_tok();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump_tok();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> std::result::Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek().tok {
                Tok::Star => {
                    self.bump_tok();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Tok::Slash => {
                    self.bump_tok();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> std::result::Result<Expr, ParseError> {
        if self.peek().tok == Tok::Minus {
            self.bump_tok();
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        let base = self.atom()?;
        if self.peek().tok == Tok::Caret {
            self.bump_tok();
            let k = self.int_literal("integer exponent")?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn int_literal(&mut self, what: &str) -> std::result::Result<u32, ParseError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Int(v) if v <= u32::MAX as u64 => {
                self.bump_tok();
                Ok(v as u32)
            }
            _ => Err(err(ParseErrorKind::Syntax, t.line, t.column, format!("expected {what}"))),
        }
    }

    fn call_args(&mut self, name: &str, arity: usize) -> std::result::Result<Vec<Expr>, ParseError> {
        let open = self.peek().clone();
        self.expect(Tok::LParen, "'(' after function name")?;
        let mut args = vec![self.expr()?];
        while self.peek().tok == Tok::Comma {
            self.bump_tok();
            if name == "bump" && args.len() == 1 {
                // second argument of bump is an INT literal, handled by caller
                return Ok(args);
            }
            args.push(self.expr()?);
        }
        if args.len() != arity {
            return Err(err(
                ParseErrorKind::Arity,
                open.line,
                open.column,
                format!("{name} takes {arity} argument(s), got {}", args.len()),
            ));
        }
        self.expect(Tok::RParen, "')'")?;
        Ok(args)
    }

    fn atom(&mut self) -> std::result::Result<Expr, ParseError> {
        let t = self.bump_tok();
        match t.tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Int(v) => Ok(Expr::Num(v as f64)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "exp" | "log" => {
                    let mut args = self.call_args(&name, 1)?;
                    let a = Box::new(args.remove(0));
                    Ok(if name == "exp" { Expr::Exp(a) } else { Expr::Log(a) })
                }
                "bump" => {
                    let mut args = self.call_args("bump", 2)?;
                    if args.len() != 1 {
                        return Err(err(ParseErrorKind::Arity, t.line, t.column, "bump takes 2 arguments"));
                    }
                    let shift = self.int_literal("integer shift as second bump argument")?;
                    if self.peek().tok == Tok::Comma {
                        return Err(err(ParseErrorKind::Arity, t.line, t.column, "bump takes 2 arguments"));
                    }
                    self.expect(Tok::RParen, "')'")?;
                    Ok(Expr::Bump(Box::new(args.remove(0)), shift))
                }
                _ => self.variable(&name, t.line, t.column),
            },
            Tok::End => Err(err(ParseErrorKind::Syntax, t.line, t.column, "unexpected end of input")),
            other => Err(err(
                ParseErrorKind::Syntax,
                t.line,
                t.column,
                format!("unexpected token {other:?}"),
            )),
        }
    }

    fn variable(&self, name: &str, line: usize, column: usize) -> std::result::Result<Expr, ParseError> {
        let (prefix, digits) = if let Some(d) = name.strip_prefix("xi") {
            ("xi", d)
        } else if let Some(d) = name.strip_prefix("eta") {
            ("eta", d)
        } else {
            return Err(err(
                ParseErrorKind::UnknownVariable,
                line,
                column,
                format!("unknown identifier '{name}'"),
            ));
        };
        let idx: usize = match digits.parse() {
            Ok(v) if !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()) => v,
            _ => {
                return Err(err(
                    ParseErrorKind::UnknownVariable,
                    line,
                    column,
                    format!("unknown identifier '{name}'"),
                ))
            }
        };
        if idx == 0 || idx > self.nvars {
            return Err(err(
                ParseErrorKind::UnknownVariable,
                line,
                column,
                format!("variable '{name}' out of range for n = {}", self.nvars),
            ));
        }
        Ok(if prefix == "xi" { Expr::Xi(idx - 1) } else { Expr::Eta(idx - 1) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str, n: usize) -> PotentialExpr {
        PotentialExpr::parse(s, n).unwrap()
    }

    #[test]
    fn model_potentials_parse() {
        let flat = p("4*(xi1*eta1 + xi2*eta2)", 2);
        assert_eq!(flat.eval(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 4.0 * (3.0 + 8.0));
        let proj = p("(8/4)*log(1+2*xi1*eta1)", 1);
        assert!((proj.eval(&[1.0], &[1.0]).unwrap() - 2.0 * 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn unknown_variable_is_reported() {
        let e = PotentialExpr::parse("xi3*eta1", 2).unwrap_err();
        match e {
            PkError::Parse(pe) => {
                assert_eq!(pe.kind, ParseErrorKind::UnknownVariable);
                assert_eq!((pe.line, pe.column), (1, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(PotentialExpr::parse("zeta1", 1).is_err());
        assert!(PotentialExpr::parse("xi0", 1).is_err());
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let e = PotentialExpr::parse("xi1 +\n  * eta1", 1).unwrap_err();
        let PkError::Parse(pe) = e else { panic!() };
        assert_eq!(pe.kind, ParseErrorKind::Syntax);
        assert_eq!((pe.line, pe.column), (2, 3));
        assert!(PotentialExpr::parse("xi1^1.5", 1).is_err());
        assert!(PotentialExpr::parse("xi1^-1", 1).is_err());
        assert!(PotentialExpr::parse("(xi1", 1).is_err());
        assert!(PotentialExpr::parse("", 1).is_err());
    }

    #[test]
    fn arity_errors() {
        for bad in ["exp(xi1, eta1)", "bump(xi1)", "bump(xi1, 0, 1)", "log(xi1,2)"] {
            match PotentialExpr::parse(bad, 1).unwrap_err() {
                PkError::Parse(pe) => assert!(
                    pe.kind == ParseErrorKind::Arity || pe.kind == ParseErrorKind::Syntax,
                    "{bad}: {pe:?}"
                ),
                other => panic!("{other:?}"),
            }
        }
        let PkError::Parse(pe) = PotentialExpr::parse("exp(xi1, eta1)", 1).unwrap_err() else {
            panic!()
        };
        assert_eq!(pe.kind, ParseErrorKind::Arity);
    }

    #[test]
    fn eval_examples() {
        assert_eq!(p("4*xi1*eta1", 1).eval(&[1.0], &[2.0]).unwrap(), 8.0);
        assert!((bump(0.5, 0) - (-2.0f64).exp()).abs() < 1e-15);
        assert!((bump(0.5, 0) - 0.135335).abs() < 1e-6);
        assert_eq!(bump(-1.0, 0), 0.0);
        assert_eq!(p("bump(xi1,0)", 1).eval(&[-1.0], &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn eval_errors() {
        assert!(matches!(
            p("log(xi1)", 1).eval(&[-1.0], &[0.0]),
            Err(PkError::LogDomain { .. })
        ));
        assert!(matches!(
            p("1/xi1", 1).eval(&[0.0], &[0.0]),
            Err(PkError::DivisionByZero)
        ));
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        let e = p("-xi1^2", 1);
        assert_eq!(e.eval(&[3.0], &[0.0]).unwrap(), -9.0);
        assert_eq!(p("2*-xi1", 1).eval(&[3.0], &[0.0]).unwrap(), -6.0);
        assert_eq!(p("1 - 2 - 3", 1).eval(&[0.0], &[0.0]).unwrap(), -4.0);
        assert_eq!(p("8/4/2", 1).eval(&[0.0], &[0.0]).unwrap(), 1.0);
        assert_eq!(p("1.5e1 + .5", 1).eval(&[0.0], &[0.0]).unwrap(), 15.5);
    }

    #[test]
    fn bump_decays_monotonically_at_gluing_point() {
        for i in 0..3 {
            let vals: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|h| bump(i as f64 + h, i)).collect();
            assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
            assert!(vals[0] < 1e-10 || i == 0);
            assert!(vals[2] < 1e-100);
        }
        let vals: Vec<f64> = [1e-1, 1e-2, 1e-3].iter().map(|&h| bump(h, 0)).collect();
        assert!(vals[0] > vals[1] && vals[1] > vals[2]);
    }

    fn arb_expr(n: usize) -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0..100.0f64).prop_map(Expr::Num),
            (0..n).prop_map(Expr::Xi),
            (0..n).prop_map(Expr::Eta),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
                (inner.clone(), 0u32..4).prop_map(|(a, k)| Expr::Pow(Box::new(a), k)),
                inner.clone().prop_map(|a| Expr::Exp(Box::new(a))),
                inner.clone().prop_map(|a| Expr::Log(Box::new(a))),
                (inner, 0u32..3).prop_map(|(a, k)| Expr::Bump(Box::new(a), k)),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr(2)) {
            let text = e.to_string();
            let back = PotentialExpr::parse(&text, 2).unwrap();
            prop_assert_eq!(back.ast(), &e);
        }

        #[test]
        fn reparsed_trees_evaluate_identically(e in arb_expr(2), x in -1.0..1.0f64, y in -1.0..1.0f64) {
            let pe = PotentialExpr::from_ast(e, 2).unwrap();
            let back = PotentialExpr::parse(&pe.to_string(), 2).unwrap();
            let (a, b) = (pe.eval(&[x, y], &[y, x]), back.eval(&[x, y], &[y, x]));
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0)),
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "mismatch {:?}", other),
            }
        }

        #[test]
        fn parser_never_panics(s in "[-+*/^(),.0-9a-z \n]{0,40}") {
            let _ = PotentialExpr::parse(&s, 2);
        }

        #[test]
        fn parser_handles_token_soup(toks in proptest::collection::vec(
            prop_oneof![Just("xi1"), Just("eta2"), Just("+"), Just("-"), Just("*"), Just("/"),
                        Just("^"), Just("("), Just(")"), Just(","), Just("exp"), Just("log"),
                        Just("bump"), Just("2"), Just("0.5"), Just("1e-3")], 0..16)) {
            let _ = PotentialExpr::parse(&toks.join(" "), 2);
        }
    }
}
