//! Gaussian steady states, moment dynamics and detailed-balance checks.

use nalgebra::LU;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, Mat, Vect};
use crate::phasespace::{GaussianState, PhaseSpaceModel};
use crate::{Error, Result};

/// Eigenvalue real parts must lie below this for `A` to count as Hurwitz.
pub const HURWITZ_MARGIN: f64 = -1e-10;

/// Relative tolerance of [`DBReport::holds`].
pub const DB_REL_TOL: f64 = 1e-9;

pub fn is_hurwitz(a: &Mat) -> bool {
    a.clone().complex_eigenvalues().iter().all(|l| l.re < HURWITZ_MARGIN)
}

/// `A V + V Aᵀ + B`.
pub fn lyapunov_residual(model: &PhaseSpaceModel, cov: &Mat) -> Mat {
    let a = model.drift();
    a * cov + cov * a.transpose() + model.diffusion()
}

/// Stationary covariance of a Hurwitz model.
///
/// Solves `A V + V Aᵀ + B = 0` as the dense Kronecker-sum system
/// `(I⊗A + A⊗I) vec V = −vec B`, with one step of iterative refinement when
/// the first solve misses `1e-10·‖B‖`. The mean solves `A μ + f = 0`.
pub fn solve_lyapunov(model: &PhaseSpaceModel) -> Result<GaussianState> {
    let a = model.drift();
    if !is_hurwitz(a) {
        return Err(Error::NoSteadyState(format!(
            "drift of '{}' is not Hurwitz; marginal directions need analyze_translation_invariant",
            model.label()
        )));
    }
    let n = model.dim();
    let id = Mat::identity(n, n);
    let k = id.kronecker(a) + a.kronecker(&id);
    let lu = LU::new(k);
    let solve = |rhs: &Mat| -> Result<Mat> {
        let v = Vect::from_column_slice(rhs.as_slice());
        let x = lu
            .solve(&(-v))
            .ok_or_else(|| Error::NoSteadyState("singular Lyapunov operator".into()))?;
        Ok(Mat::from_column_slice(n, n, x.as_slice()))
    };

    let mut cov = linalg::symmetrize(&solve(model.diffusion())?);
    let b_norm = model.diffusion().norm();
    let res = lyapunov_residual(model, &cov);
    if res.norm() > 1e-10 * b_norm {
        // Correction solves A δ + δ Aᵀ = −residual.
        let delta = solve(&res)?;
        cov = linalg::symmetrize(&(cov + delta));
    }

    let mean = if model.has_force() {
        LU::new(a.clone())
            .solve(&(-model.force()))
            .ok_or_else(|| Error::NoSteadyState("singular drift".into()))?
    } else {
        Vect::zeros(n)
    };
    GaussianState::proper(mean, cov).map_err(|_| {
        Error::NoSteadyState(format!(
            "stationary covariance of '{}' is singular (noise does not reach every coordinate)",
            model.label()
        ))
    })
}

fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidParameter(format!("t_final must be >= 0, got {t_final}")));
    }
    Ok((t_final / dt - 1e-9).ceil().max(0.0) as usize)
}

/// Number of fixed steps and their size for an integration up to `t_final`
/// with nominal step `dt`. The step is shrunk so that it divides `t_final`.
pub fn time_grid(t_final: f64, dt: f64) -> Result<(usize, f64)> {
    let n = step_count(t_final, dt)?;
    Ok(if n == 0 { (0, dt) } else { (n, t_final / n as f64) })
}

/// Integrates `dμ/dt = Aμ + f`, `dV/dt = AV + VAᵀ + B` with classical RK4.
///
/// Returns the initial state followed by one snapshot per step.
pub fn evolve_covariance(
    model: &PhaseSpaceModel,
    initial: &GaussianState,
    t_final: f64,
    dt: f64,
) -> Result<Vec<(f64, GaussianState)>> {
    let cov0 = initial
        .cov()
        .ok_or_else(|| Error::ImproperState("covariance evolution needs a proper initial state".into()))?;
    if initial.dim() != model.dim() {
        return Err(Error::Shape("initial state and model dimensions differ".into()));
    }
    let (steps, h) = time_grid(t_final, dt)?;
    let a = model.drift();
    let at = a.transpose();
    let b = model.diffusion();
    let f = model.force();
    let cov_rate = |v: &Mat| a * v + v * &at + b;
    let mean_rate = |m: &Vect| a * m + f;

    let mut out = Vec::with_capacity(steps + 1);
    out.push((0.0, initial.clone()));
    let mut v = cov0.clone();
    let mut mu = initial.mean().clone();
    for k in 1..=steps {
        let k1 = cov_rate(&v);
        let k2 = cov_rate(&(&v + &k1 * (h / 2.0)));
        let k3 = cov_rate(&(&v + &k2 * (h / 2.0)));
        let k4 = cov_rate(&(&v + &k3 * h));
        v = linalg::symmetrize(&(&v + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)));

        let m1 = mean_rate(&mu);
        let m2 = mean_rate(&(&mu + &m1 * (h / 2.0)));
        let m3 = mean_rate(&(&mu + &m2 * (h / 2.0)));
        let m4 = mean_rate(&(&mu + &m3 * h));
        mu += (m1 + m2 * 2.0 + m3 * 2.0 + m4) * (h / 6.0);

        let t = k as f64 * h;
        let state = GaussianState::proper(mu.clone(), v.clone()).map_err(|_| Error::IntegrationInstability { t })?;
        out.push((t, state));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DbCondition {
    /// `ε A ε + A + B_I Q = 0`.
    DriftCondition,
    /// `ε B ε = B`.
    DiffusionSymmetry,
}

/// Outcome of the two detailed-balance conditions for a Gaussian state.
///
/// The drift residual is taken with the time-even diffusion `B_I`, so it
/// equals twice the norm of the irreversible current matrix. When the
/// diffusion condition holds `B_I = B` and this is the usual
/// `ε A ε = −A − B Q`; when it fails the two residuals stay separately
/// attributable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DBReport {
    pub holds: bool,
    pub cond1_residual: f64,
    pub cond2_residual: f64,
    #[serde(rename = "violated")]
    pub violated_conditions: Vec<DbCondition>,
    /// Distance from stationarity. A verdict on a non-stationary state is meaningless.
    pub stationarity_residual: f64,
    /// Threshold applied to `cond1_residual / 2` (the norm of the current
    /// matrix) and to `cond2_residual`.
    pub tolerance: f64,
}

/// Stationarity residual of a Gaussian state under `model`.
///
/// Proper states: `‖AV + VAᵀ + B‖`. Improper states are checked in
/// precision form, `‖AᵀQ + QA + QBQ‖ + |tr A + ½ tr BQ|`, which is the
/// condition for `exp(−½xᵀQx)` to be annihilated by the generator.
pub fn stationarity_residual(model: &PhaseSpaceModel, state: &GaussianState) -> f64 {
    match state.cov() {
        Some(v) => lyapunov_residual(model, v).norm(),
        None => {
            let a = model.drift();
            let q = state.precision();
            let b = model.diffusion();
            let quad = a.transpose() * q + q * a + q * b * q;
            let trace = a.trace() + 0.5 * (b * q).trace();
            quad.norm() + trace.abs()
        }
    }
}

pub fn check_detailed_balance(model: &PhaseSpaceModel, state: &GaussianState) -> Result<DBReport> {
    if model.dim() != state.dim() {
        return Err(Error::Shape("model and state dimensions differ".into()));
    }
    let mean_norm = state.mean().norm();
    if mean_norm > 0.0 {
        return Err(Error::NonzeroMean(mean_norm));
    }
    let eps = model.eps();
    let a = model.drift();
    let b = model.diffusion();
    let q = state.precision();
    let d = model.decomposition();

    let bq = &d.diffusion_irr * q;
    let cond1 = eps.conjugate(a) + a + &bq;
    let cond2 = eps.conjugate(b) - b;
    let tolerance = DB_REL_TOL * a.norm().max((b * q).norm()).max(1.0);

    let cond1_residual = cond1.norm();
    let cond2_residual = cond2.norm();
    let mut violated = Vec::new();
    // cond1 = 2M, so the drift verdict is a threshold on the current matrix itself.
    if 0.5 * cond1_residual > tolerance {
        violated.push(DbCondition::DriftCondition);
    }
    if cond2_residual > tolerance {
        violated.push(DbCondition::DiffusionSymmetry);
    }
    Ok(DBReport {
        holds: violated.is_empty(),
        cond1_residual,
        cond2_residual,
        violated_conditions: violated,
        stationarity_residual: stationarity_residual(model, state),
        tolerance,
    })
}

/// Improper stationary state of a free particle, uniform in position.
///
/// The model must have the shape `A = [[0, a], [0, −γ]]` with `γ > 0`, for
/// which the momentum is an Ornstein–Uhlenbeck process with stationary
/// variance `B_pp / (2γ)` and the position carries no restoring force.
pub fn analyze_translation_invariant(model: &PhaseSpaceModel) -> Result<(GaussianState, DBReport)> {
    let a = model.drift();
    let free_shape = model.dim() == 2 && a[(0, 0)] == 0.0 && a[(1, 0)] == 0.0 && a[(1, 1)] < 0.0;
    if !free_shape {
        return Err(Error::UnsupportedModel(format!(
            "'{}' is not a free particle (expected A = [[0, a], [0, -gamma]] with gamma > 0)",
            model.label()
        )));
    }
    if model.has_force() {
        return Err(Error::UnsupportedModel("free-particle analysis does not support constant forces".into()));
    }
    let gamma = -a[(1, 1)];
    let b_pp = model.diffusion()[(1, 1)];
    if b_pp <= 0.0 {
        return Err(Error::NoSteadyState("momentum diffusion is zero".into()));
    }
    let var_p = b_pp / (2.0 * gamma);
    let precision = Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0 / var_p]);
    let state = GaussianState::improper(Vect::zeros(2), precision)?;
    let report = check_detailed_balance(model, &state)?;
    Ok((state, report))
}
