//! A small language for quadratic master equations.
//!
//! A source text is a `;`-separated list of statements. Each statement is
//! either a Hamiltonian definition `H = <polynomial in q, p of degree ≤ 2>`
//! or a sum of `coefficient * bracket` terms, where a bracket is one of
//!
//! | syntax                 | operator             |
//! |------------------------|----------------------|
//! | `comm(H, rho)`         | `[H, ρ]`             |
//! | `dcomm(X, Y)`          | `[X, [Y, ρ]]`        |
//! | `comm_anticomm(X, Y)`  | `[X, {Y, ρ}]`        |
//!
//! with `X, Y ∈ {q, p}`. Coefficients are complex arithmetic over decimal
//! literals, `i`, and the parameters `hbar m omega eta beta Dqp mu pi`
//! (`mu` defaults to `2*eta`). `#` starts a comment.
//!
//! ```text
//! # Caldeira–Leggett
//! -(i/hbar)*comm(H, rho)
//!   - (eta*m/(hbar^2*beta))*dcomm(q,q)
//!   - (i*eta/(2*hbar))*comm_anticomm(q,p);
//! H = p^2/(2*m) + (1/2)*m*omega^2*q^2
//! ```

mod lexer;
mod lower;
mod parser;

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phasespace::{ModelKind, SystemParams};

pub use lower::{check_cp, check_cp_with, lower_to_fp, CPReport, GammaConvention};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DslErrorKind {
    Syntax,
    UnboundParameter,
    OutsideQuadratic,
    UnsupportedBracket,
    Semantic,
    NonHermitian,
    NoTerms,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct DslError {
    pub kind: DslErrorKind,
    /// Source position; line 0 when the error is not tied to one.
    pub pos: Pos,
    pub message: String,
}

impl DslError {
    pub(crate) fn new(kind: DslErrorKind, pos: Pos, message: impl Into<String>) -> Self {
        DslError { kind, pos, message: message.into() }
    }
}

impl fmt::Display for DslError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pos.line > 0 {
            write!(f, "line {}, column {}: {}", self.pos.line, self.pos.col, self.message)
        } else {
            f.write_str(&self.message)
        }
    }
}

/// Row of the master-equation → Fokker–Planck conversion table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    /// `[H, ρ]` with `H` the spec's quadratic Hamiltonian.
    HamiltonianQuadratic,
    /// `[q, {p, ρ}]`
    CommQAnticommP,
    /// `[p, {q, ρ}]`
    CommPAnticommQ,
    /// `[q, [q, ρ]]`
    DcommQQ,
    /// `[p, [p, ρ]]`
    DcommPP,
    /// `[q, [p, ρ]]`
    DcommQP,
    /// `[p, [q, ρ]]`
    DcommPQ,
}

impl TermKind {
    fn bracket_text(self) -> &'static str {
        match self {
            TermKind::HamiltonianQuadratic => "comm(H, rho)",
            TermKind::CommQAnticommP => "comm_anticomm(q, p)",
            TermKind::CommPAnticommQ => "comm_anticomm(p, q)",
            TermKind::DcommQQ => "dcomm(q, q)",
            TermKind::DcommPP => "dcomm(p, p)",
            TermKind::DcommQP => "dcomm(q, p)",
            TermKind::DcommPQ => "dcomm(p, q)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct METerm {
    pub kind: TermKind,
    pub coeff: Complex64,
}

/// Real quadratic Hamiltonian `H = ½ xᵀ G x + hᵀ x` in `x = (q, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hamiltonian {
    pub quadratic: [[f64; 2]; 2],
    pub linear: [f64; 2],
}

/// Canonical parsed form: one term per kind, in [`TermKind`] order.
///
/// `hamiltonian` is present exactly when a
/// [`TermKind::HamiltonianQuadratic`] term is.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterEquationSpec {
    pub terms: Vec<METerm>,
    pub hamiltonian: Option<Hamiltonian>,
    pub params: SystemParams,
    pub source_text: String,
}

/// Names visible to coefficient expressions.
pub fn bindings(params: &SystemParams) -> HashMap<String, f64> {
    [
        ("hbar", params.hbar),
        ("m", params.m),
        ("omega", params.omega),
        ("eta", params.eta),
        ("beta", params.beta),
        ("Dqp", params.dqp),
        ("mu", 2.0 * params.eta),
        ("pi", std::f64::consts::PI),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), *v))
    .collect()
}

/// Parses and canonicalizes a master-equation text.
pub fn parse(text: &str, params: &SystemParams) -> Result<MasterEquationSpec, DslError> {
    parse_with(text, params, &[])
}

/// As [`parse`], with extra or overriding parameter bindings (e.g. `mu`).
pub fn parse_with(text: &str, params: &SystemParams, extra: &[(&str, f64)]) -> Result<MasterEquationSpec, DslError> {
    let mut env = bindings(params);
    for (k, v) in extra {
        env.insert(k.to_string(), *v);
    }
    let ev = parser::evaluate(text, &env)?;
    if ev.terms.is_empty() {
        return Err(DslError::new(DslErrorKind::NoTerms, Pos::default(), "no terms: the master equation is empty"));
    }

    let mut merged: Vec<METerm> = Vec::new();
    for (kind, coeff) in ev.terms {
        match merged.iter_mut().find(|t| t.kind == kind) {
            Some(t) => t.coeff += coeff,
            None => merged.push(METerm { kind, coeff }),
        }
    }
    merged.sort_by_key(|t| t.kind);

    let uses_h = merged.iter().any(|t| t.kind == TermKind::HamiltonianQuadratic);
    let hamiltonian = match (ev.hamiltonian, uses_h) {
        (Some((poly, pos)), true) => Some(hamiltonian_from_poly(&poly, pos)?),
        (None, true) => {
            return Err(DslError::new(
                DslErrorKind::Semantic,
                ev.first_hamiltonian_use.unwrap_or_default(),
                "comm(H, rho) is used but H is not defined",
            ))
        }
        (Some((_, pos)), false) => {
            return Err(DslError::new(DslErrorKind::Semantic, pos, "H is defined but comm(H, rho) never appears"))
        }
        (None, false) => None,
    };
    Ok(MasterEquationSpec { terms: merged, hamiltonian, params: *params, source_text: text.to_string() })
}

fn hamiltonian_from_poly(poly: &parser::Poly, pos: Pos) -> Result<Hamiltonian, DslError> {
    let c = poly.0;
    for z in &c[1..] {
        if z.im.abs() > 1e-12 * z.re.abs().max(1.0) {
            return Err(DslError::new(DslErrorKind::NonHermitian, pos, "H has complex coefficients (not Hermitian)"));
        }
    }
    // slots: [1, q, p, q², qp, p²]
    Ok(Hamiltonian {
        quadratic: [[2.0 * c[3].re, c[4].re], [c[4].re, 2.0 * c[5].re]],
        linear: [c[1].re, c[2].re],
    })
}

fn fmt_f64(v: f64) -> String {
    // Debug formatting is the shortest representation that round-trips.
    format!("{v:?}")
}

/// Canonical pretty-printer. `parse(render(spec))` reproduces `spec.terms`
/// and `spec.hamiltonian` exactly.
pub fn render(spec: &MasterEquationSpec) -> String {
    let mut out = String::new();
    for (k, t) in spec.terms.iter().enumerate() {
        let sep = if k == 0 { "" } else { "\n  + " };
        out.push_str(&format!(
            "{sep}({} + {}*i)*{}",
            fmt_f64(t.coeff.re),
            fmt_f64(t.coeff.im),
            t.kind.bracket_text()
        ));
    }
    if let Some(h) = &spec.hamiltonian {
        out.push_str(&format!(
            ";\nH = ({})*q^2 + ({})*q*p + ({})*p^2 + ({})*q + ({})*p",
            fmt_f64(h.quadratic[0][0] / 2.0),
            fmt_f64(h.quadratic[0][1]),
            fmt_f64(h.quadratic[1][1] / 2.0),
            fmt_f64(h.linear[0]),
            fmt_f64(h.linear[1]),
        ));
    }
    out.push('\n');
    out
}

/// Source text of the named models' master equations.
pub fn standard_text(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::CaldeiraLeggett => CALDEIRA_LEGGETT,
        ModelKind::CpCorrected => CP_CORRECTED,
        ModelKind::TranslationCovariantFree => TRANSLATION_COVARIANT,
    }
}

const CALDEIRA_LEGGETT: &str = "\
# Caldeira-Leggett master equation (high temperature, weak coupling)
-(i/hbar)*comm(H, rho)
  - (eta*m/(hbar^2*beta))*dcomm(q, q)
  - (i*eta/(2*hbar))*comm_anticomm(q, p);
H = p^2/(2*m) + (1/2)*m*omega^2*q^2
";

const CP_CORRECTED: &str = "\
# Caldeira-Leggett plus the minimal position diffusion restoring complete positivity
-(i/hbar)*comm(H, rho)
  - (eta*m/(hbar^2*beta))*dcomm(q, q)
  - (i*eta/(2*hbar))*comm_anticomm(q, p)
  - (eta*beta/(16*m))*dcomm(p, p);
H = p^2/(2*m) + (1/2)*m*omega^2*q^2
";

// GKSL form with X1 = p, X2 = -q and
// Gamma = (2/hbar^2) [[Dqq, Dqp - i hbar eta/4], [Dqp + i hbar eta/4, Dpp]],
// expanded into double commutators (real part of Gamma) and
// commutator-anticommutators (imaginary part).
const TRANSLATION_COVARIANT: &str = "\
# Translation-covariant GKSL generator of a free particle
-(i/hbar)*comm(H, rho)
  - ((hbar^2*eta*beta/(16*m) + beta*Dqp^2/(eta*m))/hbar^2)*dcomm(p, p)
  - ((m*eta/beta)/hbar^2)*dcomm(q, q)
  + (Dqp/hbar^2)*dcomm(p, q)
  + (Dqp/hbar^2)*dcomm(q, p)
  - (i*eta/(4*hbar))*comm_anticomm(q, p)
  + (i*eta/(4*hbar))*comm_anticomm(p, q);
H = p^2/(2*m) + (eta/2)*q*p + (mu - 2*eta)*q*p
";
