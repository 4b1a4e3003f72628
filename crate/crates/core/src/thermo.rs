//! Wigner entropy, entropy production rate `Π` and entropy flux `Φ`.
//!
//! Conventions: `dS/dt = Π − Φ` with `Φ` the outflow to the environment.
//! For a Gaussian `P` with mean `μ`, precision `Q` and covariance `V`, the
//! irreversible current is `J^I = (M (x − μ) + c) P` with
//! `M = A_I + ½ B_I Q` and `c = A_I μ + f_I`, which gives
//!
//! ```text
//! Π     = 2 tr[Mᵀ B_I⁺ M V] + 2 cᵀ B_I⁺ c
//! Φ     = 2 tr[A_Iᵀ B_I⁺ M V] + 2 cᵀ B_I⁺ c − ½ tr[B_R Q]
//! dS/dt = tr A + ½ tr[B Q]
//! ```
//!
//! `B_I⁺` is the eigendecomposition pseudo-inverse. When `B_I` is singular
//! the functionals are finite only if `M` and `c` map into its range;
//! otherwise `Π` (and `Φ`) are `+∞`.

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::linalg::{self, Mat, SymPseudoInverse, Vect};
use crate::phasespace::{irreversible_current_matrix, irreversible_force, GaussianState, PhaseSpaceModel};
use crate::quadrature::GaussHermite;
use crate::{Error, Result};

/// Eigenvalues of `B_I` below this fraction of `‖B_I‖` are zero.
pub const PINV_REL_CUTOFF: f64 = 1e-12;
/// Relative tolerance for "the current lies in the range of `B_I`".
pub const RANGE_REL_TOL: f64 = 1e-9;

/// One row of a thermodynamic time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoSample {
    pub t: f64,
    #[serde(rename = "Sw")]
    pub s_w: f64,
    #[serde(rename = "Pi")]
    pub pi: f64,
    #[serde(rename = "Phi")]
    pub phi: f64,
    #[serde(rename = "dSdt")]
    pub ds_dt: f64,
    pub cov: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

impl ThermoSample {
    /// `|dS/dt − (Π − Φ)|` relative to `max(1, |Π|, |Φ|)`; `None` when a rate diverges.
    pub fn balance_error(&self) -> Option<f64> {
        (self.pi.is_finite() && self.phi.is_finite()).then(|| {
            (self.ds_dt - (self.pi - self.phi)).abs() / 1f64.max(self.pi.abs()).max(self.phi.abs())
        })
    }
}

/// Differential entropy of a proper Gaussian Wigner function:
/// `(n/2)(1 + ln 2π) + ½ ln det V`.
pub fn wigner_entropy(state: &GaussianState) -> Result<f64> {
    let v = state
        .cov()
        .ok_or_else(|| Error::ImproperState("Wigner entropy of a translation-invariant state is infinite".into()))?;
    let n = state.dim() as f64;
    let log_det = linalg::spd_log_det(v).ok_or_else(|| Error::InvalidParameter("covariance not positive definite".into()))?;
    Ok(0.5 * n * (1.0 + (2.0 * std::f64::consts::PI).ln()) + 0.5 * log_det)
}

/// `dS/dt = tr A + ½ tr[B Q]` from the moment equations.
pub fn entropy_rate(model: &PhaseSpaceModel, state: &GaussianState) -> Result<f64> {
    check_dims(model, state)?;
    Ok(model.drift().trace() + 0.5 * (model.diffusion() * state.precision()).trace())
}

struct Pieces {
    m: Mat,
    c: Vect,
    v: Mat,
    b_pinv: Mat,
    a_irr: Mat,
    b_rev: Mat,
    finite: bool,
}

fn pieces(model: &PhaseSpaceModel, state: &GaussianState) -> Result<Pieces> {
    check_dims(model, state)?;
    let d = model.decomposition();
    let cur = irreversible_current_matrix(model, state)?;
    let pinv = SymPseudoInverse::new(&d.diffusion_irr, PINV_REL_CUTOFF);
    let (v, null) = state.effective_cov();

    let scale = 1f64.max(cur.matrix.norm()).max(cur.offset.norm());
    let c_mat = Mat::from_column_slice(cur.offset.len(), 1, cur.offset.as_slice());
    let mut finite = pinv.out_of_range(&cur.matrix) <= RANGE_REL_TOL * scale
        && pinv.out_of_range(&c_mat) <= RANGE_REL_TOL * scale;
    if let Some(null) = null {
        // Improper state: the current must not grow along the flat directions.
        finite &= (&cur.matrix * null).norm() <= RANGE_REL_TOL * scale;
    }
    Ok(Pieces {
        m: cur.matrix,
        c: cur.offset,
        v,
        b_pinv: pinv.pinv,
        a_irr: d.drift_irr,
        b_rev: d.diffusion_rev,
        finite,
    })
}

/// Entropy production rate `Π ≥ 0`, or `+∞` when the irreversible current
/// leaves the range of `B_I`. For improper states the value is a density per
/// unit length along the flat directions.
pub fn entropy_production_rate(model: &PhaseSpaceModel, state: &GaussianState) -> Result<f64> {
    let p = pieces(model, state)?;
    if !p.finite {
        return Ok(f64::INFINITY);
    }
    let quad = 2.0 * (p.m.transpose() * &p.b_pinv * &p.m * &p.v).trace();
    let offset = 2.0 * (p.c.transpose() * &p.b_pinv * &p.c)[(0, 0)];
    Ok(quad + offset)
}

/// Entropy flux `Φ` (outflow). Diverges together with `Π`.
pub fn entropy_flux_rate(model: &PhaseSpaceModel, state: &GaussianState) -> Result<f64> {
    let p = pieces(model, state)?;
    if !p.finite {
        return Ok(f64::INFINITY);
    }
    let drift_part = 2.0 * (p.a_irr.transpose() * &p.b_pinv * &p.m * &p.v).trace();
    let offset = 2.0 * (p.c.transpose() * &p.b_pinv * &p.c)[(0, 0)];
    let reversible = 0.5 * (&p.b_rev * state.precision()).trace();
    Ok(drift_part + offset - reversible)
}

pub fn thermo_sample(model: &PhaseSpaceModel, t: f64, state: &GaussianState) -> Result<ThermoSample> {
    Ok(ThermoSample {
        t,
        s_w: wigner_entropy(state)?,
        pi: entropy_production_rate(model, state)?,
        phi: entropy_flux_rate(model, state)?,
        ds_dt: entropy_rate(model, state)?,
        cov: linalg::to_rows(state.cov().expect("wigner_entropy checked properness")),
        mean: state.mean().iter().copied().collect(),
    })
}

/// `Π` by direct Gauss–Hermite integration of `2 J^I·B_I⁺J^I / P`.
///
/// The current is evaluated pointwise from its definition
/// `J^I/P = A_I x + f_I − ½ B_I ∇ln P` with `∇ln P = −Q (x − μ)`.
pub fn epr_quadrature(model: &PhaseSpaceModel, state: &GaussianState, order: usize, exec: Execution) -> Result<f64> {
    check_dims(model, state)?;
    if order < 10 {
        return Err(Error::InvalidParameter(format!("quadrature order must be >= 10, got {order}")));
    }
    let v = state
        .cov()
        .ok_or_else(|| Error::ImproperState("quadrature needs a normalizable density".into()))?;
    let d = model.decomposition();
    let pinv = SymPseudoInverse::new(&d.diffusion_irr, PINV_REL_CUTOFF);
    let q = state.precision();
    let mu = state.mean();
    let f_irr = irreversible_force(model);
    let a_irr = &d.drift_irr;
    let b_irr = &d.diffusion_irr;

    let gh = GaussHermite::new(order)?;
    gh.expectation(mu, v, exec, |x| {
        let grad_log_p = -(q * (x - mu));
        let j = a_irr * x + &f_irr - b_irr * grad_log_p * 0.5;
        let jm = Mat::from_column_slice(j.len(), 1, j.as_slice());
        if pinv.out_of_range(&jm) > RANGE_REL_TOL * 1f64.max(j.norm()) {
            return f64::INFINITY;
        }
        2.0 * j.dot(&(&pinv.pinv * &j))
    })
}

/// Inputs of the closed-form steady-state production rate of the
/// position-diffusion-corrected oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaperSteadyInputs {
    pub dqq: f64,
    pub dpp: f64,
    pub m: f64,
    pub omega: f64,
    pub eta: f64,
}

impl PaperSteadyInputs {
    /// `D_qq = ħ²ηβ/(16m)`, `D_pp = mη/β`.
    pub fn from_params(p: &crate::SystemParams) -> Self {
        PaperSteadyInputs { dqq: p.minimal_dqq(), dpp: p.einstein_dpp(), m: p.m, omega: p.omega, eta: p.eta }
    }
}

/// Closed-form steady-state `Π∞ = D_qq η m²ω² (1/D_pp + 3 D_qq η² m² / 𝒟)`
/// with `𝒟 = (D_pp + D_qq m²ω²)² + D_qq m² η² (D_pp − 3 D_qq m²ω²)`.
///
/// This is a reference value: it is the trace formula evaluated at a
/// covariance with `σ_pq = −2mD_qq`, which is not the stationary covariance
/// of the model (that one has `σ_pq = −mD_qq`). See the report's
/// `Pi_infinity_comparison`.
pub fn epr_steady_paper_formula(inputs: &PaperSteadyInputs) -> Result<f64> {
    let PaperSteadyInputs { dqq, dpp, m, omega, eta } = *inputs;
    if dpp <= 0.0 {
        return Err(Error::InvalidParameter(format!("D_pp must be > 0, got {dpp}")));
    }
    let m2 = m * m;
    let w2 = omega * omega;
    let denom = (dpp + dqq * m2 * w2).powi(2) + dqq * m2 * eta * eta * (dpp - 3.0 * dqq * m2 * w2);
    if denom == 0.0 {
        return Err(Error::SingularFormula("denominator (D_pp + D_qq m²ω²)² + ... vanishes".into()));
    }
    Ok(dqq * eta * m2 * w2 * (1.0 / dpp + 3.0 * dqq * eta * eta * m2 / denom))
}

fn check_dims(model: &PhaseSpaceModel, state: &GaussianState) -> Result<()> {
    if model.dim() != state.dim() {
        return Err(Error::Shape(format!("model dim {} vs state dim {}", model.dim(), state.dim())));
    }
    Ok(())
}
