//! Lowering to a Fokker–Planck generator and the complete-positivity check.
//!
//! Wigner-transform table used here, for a coefficient `c` multiplying the
//! bracket (`W` the Wigner function, `x = (q, p)`):
//!
//! | bracket        | contribution to `∂ₜW`      |
//! |----------------|----------------------------|
//! | `[H, ρ]`       | `iħ {H, W}` (Moyal = Poisson for quadratic `H`) |
//! | `[q, {p, ρ}]`  | `2iħ ∂_p(pW)`              |
//! | `[p, {q, ρ}]`  | `−2iħ ∂_q(qW)`             |
//! | `[q, [q, ρ]]`  | `−ħ² ∂²_p W`               |
//! | `[p, [p, ρ]]`  | `−ħ² ∂²_q W`               |
//! | `[q, [p, ρ]]`, `[p, [q, ρ]]` | `ħ² ∂_q∂_p W` |

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{DslError, DslErrorKind, MasterEquationSpec, Pos, TermKind};
use crate::linalg::{Mat, Vect};
use crate::phasespace::{PhaseSpaceModel, TimeReversalSignature};
use crate::Result;

/// Real part of `z`, rejecting an imaginary part that is not rounding noise.
fn real_part(z: Complex64, kind: TermKind) -> std::result::Result<f64, DslError> {
    if z.im.abs() > 1e-12 * z.re.abs().max(1.0) {
        return Err(DslError::new(
            DslErrorKind::NonHermitian,
            Pos::default(),
            format!(
                "coefficient of {kind:?} produces an imaginary phase-space generator (im = {:e}); \
                 the master equation is not Hermiticity-preserving",
                z.im
            ),
        ));
    }
    Ok(z.re)
}

/// Converts a parsed master equation into `(A, B, f)` on `x = (q, p)`.
///
/// The diffusion matrix may come out indefinite, which is recorded in
/// [`PhaseSpaceModel::diffusion_is_psd`] rather than rejected.
pub fn lower_to_fp(spec: &MasterEquationSpec) -> Result<PhaseSpaceModel> {
    let hbar = spec.params.hbar;
    let h2 = hbar * hbar;
    let i_hbar = Complex64::new(0.0, hbar);
    let omega = Matrix2::new(0.0, 1.0, -1.0, 0.0);

    let mut a = Matrix2::<f64>::zeros();
    let mut b = Matrix2::<f64>::zeros();
    let mut f = nalgebra::Vector2::<f64>::zeros();

    for term in &spec.terms {
        let c = term.coeff;
        match term.kind {
            TermKind::HamiltonianQuadratic => {
                let s = real_part(c * i_hbar, term.kind)?;
                let h = spec.hamiltonian.as_ref().expect("canonical spec carries H with comm(H, rho)");
                let g = Matrix2::new(h.quadratic[0][0], h.quadratic[0][1], h.quadratic[1][0], h.quadratic[1][1]);
                a += s * omega * g;
                f += s * omega * nalgebra::Vector2::new(h.linear[0], h.linear[1]);
            }
            TermKind::CommQAnticommP => a[(1, 1)] -= real_part(2.0 * i_hbar * c, term.kind)?,
            TermKind::CommPAnticommQ => a[(0, 0)] -= real_part(-2.0 * i_hbar * c, term.kind)?,
            TermKind::DcommQQ => b[(1, 1)] += real_part(-2.0 * h2 * c, term.kind)?,
            TermKind::DcommPP => b[(0, 0)] += real_part(-2.0 * h2 * c, term.kind)?,
            TermKind::DcommQP | TermKind::DcommPQ => {
                let v = real_part(h2 * c, term.kind)?;
                b[(0, 1)] += v;
                b[(1, 0)] += v;
            }
        }
    }

    let drift = Mat::from_iterator(2, 2, a.iter().copied());
    let diffusion = Mat::from_iterator(2, 2, b.iter().copied());
    let model = PhaseSpaceModel::with_indefinite_diffusion(
        "master_equation",
        drift,
        diffusion,
        TimeReversalSignature::positions_then_momenta(1),
    )?
    .with_params(spec.params);
    if f.iter().any(|v| *v != 0.0) {
        return model.with_force(Vect::from_column_slice(f.as_slice()));
    }
    Ok(model)
}

/// Off-diagonal imaginary part of the Kossakowski matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaConvention {
    /// `ħη/4`: what the commutator-anticommutator term of a friction `η`
    /// actually contributes in units where `[q, p] = iħ`.
    #[default]
    HbarEta,
    /// `η/4`, i.e. the `ħ = 1` form.
    Eta,
}

/// Positivity of the Kossakowski matrix
/// `Γ = (2/ħ²) [[D_qq, D_qp − i·s], [D_qp + i·s, D_pp]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CPReport {
    pub gamma_re: [[f64; 2]; 2],
    pub gamma_im: [[f64; 2]; 2],
    pub min_eig: f64,
    pub is_cptp: bool,
    /// `D_qq D_pp − D_qp² − s²`; nonnegative iff the generator is CP.
    pub dekker_margin: f64,
}

pub fn check_cp(spec: &MasterEquationSpec) -> Result<CPReport> {
    check_cp_with(spec, GammaConvention::default())
}

pub fn check_cp_with(spec: &MasterEquationSpec, convention: GammaConvention) -> Result<CPReport> {
    let model = lower_to_fp(spec)?;
    let (a, b) = (model.drift(), model.diffusion());
    let eta = -a.trace();
    let s = match convention {
        GammaConvention::HbarEta => spec.params.hbar * eta / 4.0,
        GammaConvention::Eta => eta / 4.0,
    };
    let (dqq, dqp, dpp) = (b[(0, 0)] / 2.0, b[(0, 1)] / 2.0, b[(1, 1)] / 2.0);
    let k = 2.0 / (spec.params.hbar * spec.params.hbar);

    let margin = dqq * dpp - dqp * dqp - s * s;
    // Eigenvalues of the Hermitian [[a, z̄], [z, d]]: mean ± radius.
    let mean = 0.5 * (dqq + dpp);
    let radius = (0.25 * (dqq - dpp).powi(2) + dqp * dqp + s * s).sqrt();
    let lmax = mean + radius;
    // det / λmax avoids cancellation when the smaller eigenvalue is ≈ 0.
    let lmin = if lmax > 0.0 { margin / lmax } else { mean - radius };
    let min_eig = k * lmin;
    let norm = k * lmax.abs().max(lmin.abs());

    Ok(CPReport {
        gamma_re: [[k * dqq, k * dqp], [k * dqp, k * dpp]],
        gamma_im: [[0.0, -k * s], [k * s, 0.0]],
        min_eig,
        is_cptp: min_eig >= -1e-12 * norm,
        dekker_margin: margin,
    })
}
