//! Recursive-descent parser and evaluator for the term language.
//!
//! Expressions are evaluated eagerly into [`Value`]s: a polynomial of
//! degree ≤ 2 in `q, p` with complex coefficients plus a linear combination
//! of brackets. Products that would leave that space are rejected.

use std::collections::HashMap;

use num_complex::Complex64;

use super::lexer::{tokenize, Tok, Token};
use super::{DslError, DslErrorKind, Pos, TermKind};

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Num(f64),
    Ident(String, Pos),
    Call { name: String, args: Vec<Expr>, pos: Pos },
    Neg(Box<Expr>),
    Bin { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr>, pos: Pos },
    Pow { base: Box<Expr>, exp: i32, pos: Pos },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
enum Stmt {
    Term(Expr, Pos),
    HDef(Expr, Pos),
}

struct Parser {
    toks: Vec<Token>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.at]
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.at + k).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token, DslError> {
        if self.peek().tok == tok {
            Ok(self.bump())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn unexpected(&self, what: &str) -> DslError {
        let t = self.peek();
        let found = match &t.tok {
            Tok::Eof => "end of input".to_string(),
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("'{s}'"),
            other => format!("{other:?}"),
        };
        DslError::new(DslErrorKind::Syntax, t.pos, format!("expected {what}, found {found}"))
    }

    fn program(&mut self) -> Result<Vec<Stmt>, DslError> {
        let mut stmts = Vec::new();
        loop {
            while self.peek().tok == Tok::Semi {
                self.bump();
            }
            if self.peek().tok == Tok::Eof {
                break;
            }
            stmts.push(self.stmt()?);
            match self.peek().tok {
                Tok::Semi | Tok::Eof => {}
                _ => return Err(self.unexpected("';' or end of input")),
            }
        }
        Ok(stmts)
    }

    fn stmt(&mut self) -> Result<Stmt, DslError> {
        let pos = self.peek().pos;
        if matches!(&self.peek().tok, Tok::Ident(s) if s == "H") && *self.peek_at(1) == Tok::Eq {
            self.bump();
            self.bump();
            return Ok(Stmt::HDef(self.expr()?, pos));
        }
        Ok(Stmt::Term(self.expr()?, pos))
    }

    fn expr(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let pos = self.bump().pos;
            let rhs = self.product()?;
            lhs = Expr::Bin { op, lhs: Box::new(lhs), rhs: Box::new(rhs), pos };
        }
    }

    fn product(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            let pos = self.bump().pos;
            let rhs = self.unary()?;
            lhs = Expr::Bin { op, lhs: Box::new(lhs), rhs: Box::new(rhs), pos };
        }
    }

    fn unary(&mut self) -> Result<Expr, DslError> {
        match self.peek().tok {
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

    fn power(&mut self) -> Result<Expr, DslError> {
        let base = self.primary()?;
        if self.peek().tok != Tok::Caret {
            return Ok(base);
        }
        let pos = self.bump().pos;
        let negative = if self.peek().tok == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let t = self.bump();
        let exp = match t.tok {
            Tok::Num(v) if v.fract() == 0.0 && v.abs() <= 64.0 => v as i32,
            _ => {
                return Err(DslError::new(DslErrorKind::Syntax, t.pos, "exponent must be a small integer literal"))
            }
        };
        Ok(Expr::Pow { base: Box::new(base), exp: if negative { -exp } else { exp }, pos })
    }

    fn primary(&mut self) -> Result<Expr, DslError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::Ident(name) => {
                self.bump();
                if self.peek().tok != Tok::LParen {
                    return Ok(Expr::Ident(name, t.pos));
                }
                self.bump();
                let mut args = Vec::new();
                if self.peek().tok != Tok::RParen {
                    args.push(self.expr()?);
                    while self.peek().tok == Tok::Comma {
                        self.bump();
                        args.push(self.expr()?);
                    }
                }
                self.expect(Tok::RParen, "')' or ','")?;
                Ok(Expr::Call { name, args, pos: t.pos })
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            _ => Err(self.unexpected("a number, name or '('")),
        }
    }
}

/// Polynomial of degree ≤ 2: `[1, q, p, q², qp, p²]` coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Poly(pub [Complex64; 6]);

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
/// Exponents `(deg_q, deg_p)` of each slot.
const MONOMIALS: [(u8, u8); 6] = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)];

impl Poly {
    fn constant(c: Complex64) -> Self {
        let mut a = [ZERO; 6];
        a[0] = c;
        Poly(a)
    }

    fn var(slot: usize) -> Self {
        let mut a = [ZERO; 6];
        a[slot] = Complex64::new(1.0, 0.0);
        Poly(a)
    }

    fn is_zero(&self) -> bool {
        self.0.iter().all(|c| *c == ZERO)
    }

    fn degree(&self) -> u8 {
        self.0
            .iter()
            .zip(MONOMIALS)
            .filter(|(c, _)| **c != ZERO)
            .map(|(_, (a, b))| a + b)
            .max()
            .unwrap_or(0)
    }

    fn as_constant(&self) -> Option<Complex64> {
        (self.degree() == 0).then_some(self.0[0])
    }

    fn add(&self, o: &Poly) -> Poly {
        let mut a = self.0;
        for (x, y) in a.iter_mut().zip(o.0) {
            *x += y;
        }
        Poly(a)
    }

    fn scale(&self, c: Complex64) -> Poly {
        Poly(self.0.map(|x| x * c))
    }

    fn mul(&self, o: &Poly, pos: Pos) -> Result<Poly, DslError> {
        // Constant factors keep the arithmetic of the other operand exact.
        if let Some(c) = o.as_constant() {
            return Ok(self.scale(c));
        }
        if let Some(c) = self.as_constant() {
            return Ok(o.scale(c));
        }
        let mut out = [ZERO; 6];
        for (i, &(qa, pa)) in MONOMIALS.iter().enumerate() {
            for (j, &(qb, pb)) in MONOMIALS.iter().enumerate() {
                let prod = self.0[i] * o.0[j];
                if prod == ZERO {
                    continue;
                }
                let target = (qa + qb, pa + pb);
                match MONOMIALS.iter().position(|&m| m == target) {
                    Some(k) => out[k] += prod,
                    None => {
                        return Err(DslError::new(
                            DslErrorKind::OutsideQuadratic,
                            pos,
                            "polynomial of degree > 2 in q, p is outside quadratic vocabulary",
                        ))
                    }
                }
            }
        }
        Ok(Poly(out))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Value {
    poly: Poly,
    brackets: Vec<(TermKind, Complex64)>,
}

impl Value {
    fn scalar(poly: Poly) -> Self {
        Value { poly, brackets: Vec::new() }
    }

    fn has_brackets(&self) -> bool {
        !self.brackets.is_empty()
    }

    fn scale_brackets(&self, c: Complex64) -> Vec<(TermKind, Complex64)> {
        self.brackets.iter().map(|(k, x)| (*k, *x * c)).collect()
    }
}

/// Result of evaluating a whole source text.
pub(crate) struct Evaluated {
    /// Bracket terms in source order, not yet merged.
    pub terms: Vec<(TermKind, Complex64)>,
    /// Hamiltonian polynomial, if `H = ...` appeared.
    pub hamiltonian: Option<(Poly, Pos)>,
    pub first_hamiltonian_use: Option<Pos>,
}

struct Evaluator<'a> {
    bindings: &'a HashMap<String, f64>,
}

fn outside(pos: Pos, msg: &str) -> DslError {
    DslError::new(DslErrorKind::OutsideQuadratic, pos, format!("{msg}: outside quadratic vocabulary"))
}

fn expr_pos(e: &Expr) -> Pos {
    match e {
        Expr::Num(_) => Pos::default(),
        Expr::Ident(_, p) | Expr::Call { pos: p, .. } | Expr::Bin { pos: p, .. } | Expr::Pow { pos: p, .. } => *p,
        Expr::Neg(inner) => expr_pos(inner),
    }
}

impl Evaluator<'_> {
    fn eval(&self, e: &Expr, hamiltonian_uses: &mut Vec<Pos>) -> Result<Value, DslError> {
        match e {
            Expr::Num(v) => Ok(Value::scalar(Poly::constant(Complex64::new(*v, 0.0)))),
            Expr::Ident(name, pos) => match name.as_str() {
                "i" => Ok(Value::scalar(Poly::constant(Complex64::new(0.0, 1.0)))),
                "q" => Ok(Value::scalar(Poly::var(1))),
                "p" => Ok(Value::scalar(Poly::var(2))),
                "H" | "rho" => Err(DslError::new(
                    DslErrorKind::Syntax,
                    *pos,
                    format!("'{name}' may only appear as an argument of comm(H, rho)"),
                )),
                _ => self
                    .bindings
                    .get(name)
                    .map(|v| Value::scalar(Poly::constant(Complex64::new(*v, 0.0))))
                    .ok_or_else(|| {
                        DslError::new(DslErrorKind::UnboundParameter, *pos, format!("unbound parameter '{name}'"))
                    }),
            },
            Expr::Neg(inner) => {
                let v = self.eval(inner, hamiltonian_uses)?;
                Ok(Value { poly: v.poly.scale(Complex64::new(-1.0, 0.0)), brackets: v.scale_brackets(Complex64::new(-1.0, 0.0)) })
            }
            Expr::Bin { op, lhs, rhs, pos } => {
                let a = self.eval(lhs, hamiltonian_uses)?;
                let b = self.eval(rhs, hamiltonian_uses)?;
                self.binary(*op, a, b, *pos)
            }
            Expr::Pow { base, exp, pos } => {
                let b = self.eval(base, hamiltonian_uses)?;
                if b.has_brackets() {
                    return Err(outside(*pos, "powers of brackets"));
                }
                if *exp < 0 {
                    let c = b.poly.as_constant().ok_or_else(|| outside(*pos, "negative powers of q or p"))?;
                    return Ok(Value::scalar(Poly::constant(c.powi(*exp))));
                }
                let mut acc = Poly::constant(Complex64::new(1.0, 0.0));
                for _ in 0..*exp {
                    acc = acc.mul(&b.poly, *pos)?;
                }
                Ok(Value::scalar(acc))
            }
            Expr::Call { name, args, pos } => self.call(name, args, *pos, hamiltonian_uses),
        }
    }

    fn binary(&self, op: BinOp, a: Value, b: Value, pos: Pos) -> Result<Value, DslError> {
        match op {
            BinOp::Add | BinOp::Sub => {
                let sign = Complex64::new(if op == BinOp::Add { 1.0 } else { -1.0 }, 0.0);
                let mut brackets = a.brackets.clone();
                brackets.extend(b.scale_brackets(sign));
                let rhs = if op == BinOp::Add { b.poly } else { b.poly.scale(sign) };
                Ok(Value { poly: a.poly.add(&rhs), brackets })
            }
            BinOp::Mul => {
                if a.has_brackets() && b.has_brackets() {
                    return Err(outside(pos, "products of two brackets"));
                }
                let (with, other) = if a.has_brackets() { (&a, &b) } else { (&b, &a) };
                let brackets = if with.has_brackets() {
                    let c = other
                        .poly
                        .as_constant()
                        .ok_or_else(|| outside(pos, "operator-valued coefficients of a bracket"))?;
                    with.scale_brackets(c)
                } else {
                    Vec::new()
                };
                Ok(Value { poly: a.poly.mul(&b.poly, pos)?, brackets })
            }
            BinOp::Div => {
                if b.has_brackets() {
                    return Err(outside(pos, "division by a bracket"));
                }
                let c = b.poly.as_constant().ok_or_else(|| outside(pos, "division by q or p"))?;
                if c == ZERO {
                    return Err(DslError::new(DslErrorKind::Syntax, pos, "division by zero"));
                }
                let inv = Complex64::new(1.0, 0.0) / c;
                // Divide instead of multiplying by the inverse: keeps 1/(2*m) exact.
                Ok(Value { poly: Poly(a.poly.0.map(|x| x / c)), brackets: a.scale_brackets(inv) })
            }
        }
    }

    fn call(&self, name: &str, args: &[Expr], pos: Pos, hamiltonian_uses: &mut Vec<Pos>) -> Result<Value, DslError> {
        match name {
            "comm" | "dcomm" | "comm_anticomm" => {}
            "acomm" => {
                return Err(DslError::new(
                    DslErrorKind::UnsupportedBracket,
                    pos,
                    "a bare anticommutator is not a generator term; put {q,p}-type terms in H",
                ))
            }
            _ => return Err(DslError::new(DslErrorKind::Syntax, pos, format!("unknown function '{name}'"))),
        }
        if args.len() != 2 {
            return Err(DslError::new(
                DslErrorKind::Syntax,
                pos,
                format!("{name} takes exactly 2 arguments, found {}", args.len()),
            ));
        }
        let one = Complex64::new(1.0, 0.0);
        if name == "comm" {
            let is = |e: &Expr, s: &str| matches!(e, Expr::Ident(n, _) if n == s);
            if is(&args[0], "H") && is(&args[1], "rho") {
                hamiltonian_uses.push(pos);
                return Ok(Value { poly: Poly::constant(ZERO), brackets: vec![(TermKind::HamiltonianQuadratic, one)] });
            }
            self.operator_arg(&args[0])?;
            return Err(DslError::new(
                DslErrorKind::UnsupportedBracket,
                pos,
                "commutators are supported only as comm(H, rho); define H = ...",
            ));
        }
        let x = self.operator_arg(&args[0])?;
        let y = self.operator_arg(&args[1])?;
        let kind = match (name, x, y) {
            ("dcomm", 'q', 'q') => TermKind::DcommQQ,
            ("dcomm", 'p', 'p') => TermKind::DcommPP,
            ("dcomm", 'q', 'p') => TermKind::DcommQP,
            ("dcomm", 'p', 'q') => TermKind::DcommPQ,
            ("comm_anticomm", 'q', 'p') => TermKind::CommQAnticommP,
            ("comm_anticomm", 'p', 'q') => TermKind::CommPAnticommQ,
            _ => {
                return Err(DslError::new(
                    DslErrorKind::UnsupportedBracket,
                    pos,
                    format!("{name}({x}, {y}) is not in the conversion table; [x,{{x,rho}}] = [x^2, rho] belongs in H"),
                ))
            }
        };
        Ok(Value { poly: Poly::constant(ZERO), brackets: vec![(kind, one)] })
    }

    /// Bracket argument: exactly `q` or `p`.
    fn operator_arg(&self, e: &Expr) -> Result<char, DslError> {
        let pos = expr_pos(e);
        if let Expr::Ident(n, _) = e {
            match n.as_str() {
                "q" => return Ok('q'),
                "p" => return Ok('p'),
                "rho" | "H" => {
                    return Err(DslError::new(
                        DslErrorKind::UnsupportedBracket,
                        pos,
                        format!("'{n}' is not allowed in this bracket position"),
                    ))
                }
                _ => {}
            }
        }
        let v = self.eval(e, &mut Vec::new())?;
        if v.has_brackets() {
            return Err(outside(pos, "nested brackets"));
        }
        if v.poly.degree() >= 2 {
            return Err(outside(pos, "Lindblad operators must be linear in q and p"));
        }
        Err(DslError::new(
            DslErrorKind::UnsupportedBracket,
            pos,
            "bracket arguments must be the bare operators q or p",
        ))
    }
}

pub(crate) fn evaluate(src: &str, bindings: &HashMap<String, f64>) -> Result<Evaluated, DslError> {
    let toks = tokenize(src)?;
    let stmts = Parser { toks, at: 0 }.program()?;
    let ev = Evaluator { bindings };
    let mut terms = Vec::new();
    let mut hamiltonian: Option<(Poly, Pos)> = None;
    let mut uses = Vec::new();
    for stmt in &stmts {
        match stmt {
            Stmt::HDef(e, pos) => {
                if hamiltonian.is_some() {
                    return Err(DslError::new(DslErrorKind::Semantic, *pos, "H is defined more than once"));
                }
                let v = ev.eval(e, &mut uses)?;
                if v.has_brackets() {
                    return Err(DslError::new(DslErrorKind::Semantic, *pos, "H must be a polynomial in q and p"));
                }
                hamiltonian = Some((v.poly, *pos));
            }
            Stmt::Term(e, pos) => {
                let v = ev.eval(e, &mut uses)?;
                if !v.poly.is_zero() || !v.has_brackets() {
                    return Err(DslError::new(
                        DslErrorKind::Syntax,
                        *pos,
                        "every term must have the form coefficient * bracket",
                    ));
                }
                terms.extend(v.brackets);
            }
        }
    }
    Ok(Evaluated { terms, hamiltonian, first_hamiltonian_use: uses.first().copied() })
}
