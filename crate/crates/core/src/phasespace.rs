//! Fokker–Planck generators as `(A, B, ε)` triples and Gaussian states.
//!
//! The generator convention is `∂ₜP = −∇·(A x P) + ½ ∇·B∇P`, so `B` is the
//! full diffusion matrix: a term `D ∂²_p P` in a Kramers equation appears as
//! `B_pp = 2D`.

use serde::{Deserialize, Serialize};

use crate::linalg::{self, Mat, SymPseudoInverse, Vect};
use crate::{Error, Result};

/// Relative tolerance for the PSD check on diffusion matrices.
pub const PSD_REL_TOL: f64 = 1e-12;

/// Physical parameters of a one-dimensional Brownian particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub hbar: f64,
    pub m: f64,
    /// Oscillator frequency; zero is a free particle.
    pub omega: f64,
    /// Friction rate.
    pub eta: f64,
    /// Inverse temperature.
    pub beta: f64,
    /// Cross-diffusion coefficient of the translation-covariant model.
    #[serde(rename = "Dqp", default)]
    pub dqp: f64,
}

impl SystemParams {
    pub fn new(hbar: f64, m: f64, omega: f64, eta: f64, beta: f64, dqp: f64) -> Result<Self> {
        let p = SystemParams { hbar, m, omega, eta, beta, dqp };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("hbar", self.hbar), ("m", self.m), ("eta", self.eta), ("beta", self.beta)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(self.omega.is_finite() && self.omega >= 0.0) {
            return Err(Error::InvalidParameter(format!("omega must be finite and >= 0, got {}", self.omega)));
        }
        if !self.dqp.is_finite() {
            return Err(Error::InvalidParameter("Dqp must be finite".into()));
        }
        Ok(())
    }

    /// Momentum diffusion fixed by the Einstein relation, `mη/β`.
    pub fn einstein_dpp(&self) -> f64 {
        self.m * self.eta / self.beta
    }

    /// Position diffusion of the minimal complete-positivity correction, `ħ²ηβ/(16m)`.
    pub fn minimal_dqq(&self) -> f64 {
        self.hbar * self.hbar * self.eta * self.beta / (16.0 * self.m)
    }

    /// Position diffusion of the translation-covariant model,
    /// `ħ²ηβ/(16m) + βD_qp²/(ηm)`.
    pub fn translation_covariant_dqq(&self) -> f64 {
        self.minimal_dqq() + self.beta * self.dqp * self.dqp / (self.eta * self.m)
    }
}

/// Parity of each phase-space coordinate under time reversal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct TimeReversalSignature(Vec<i8>);

impl TimeReversalSignature {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidParameter("time-reversal signs must be +1 or -1".into()));
        }
        Ok(TimeReversalSignature(signs))
    }

    /// `(q₁..qₙ, p₁..pₙ)` ordering: positions even, momenta odd.
    pub fn positions_then_momenta(dof: usize) -> Self {
        let mut s = vec![1; dof];
        s.extend(std::iter::repeat_n(-1, dof));
        TimeReversalSignature(s)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn signs(&self) -> &[i8] {
        &self.0
    }

    pub fn sign(&self, i: usize) -> f64 {
        f64::from(self.0[i])
    }

    /// `ε M εᵀ`, computed entrywise as `εᵢεⱼ Mᵢⱼ` (exact).
    pub fn conjugate(&self, m: &Mat) -> Mat {
        Mat::from_fn(m.nrows(), m.ncols(), |i, j| self.sign(i) * self.sign(j) * m[(i, j)])
    }

    pub fn apply(&self, x: &Vect) -> Vect {
        Vect::from_fn(x.len(), |i, _| self.sign(i) * x[i])
    }
}

impl TryFrom<Vec<i8>> for TimeReversalSignature {
    type Error = Error;
    fn try_from(v: Vec<i8>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TimeReversalSignature> for Vec<i8> {
    fn from(s: TimeReversalSignature) -> Self {
        s.0
    }
}

/// Splits `M` into its time-reversal odd and even parts,
/// `M_R = (M − εMε)/2` and `M_I = (M + εMε)/2`.
pub fn decompose_time_reversal(m: &Mat, eps: &TimeReversalSignature) -> Result<(Mat, Mat)> {
    if !m.is_square() || m.nrows() != eps.len() {
        return Err(Error::Shape(format!(
            "matrix is {}x{} but signature has length {}",
            m.nrows(),
            m.ncols(),
            eps.len()
        )));
    }
    // Entrywise: the even part keeps entries with εᵢεⱼ = +1, the odd part the rest.
    let mut rev = Mat::zeros(m.nrows(), m.ncols());
    let mut irr = Mat::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if eps.signs()[i] == eps.signs()[j] {
                irr[(i, j)] = m[(i, j)];
            } else {
                rev[(i, j)] = m[(i, j)];
            }
        }
    }
    Ok((rev, irr))
}

/// Reversible and irreversible parts of drift and diffusion.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentDecomposition {
    pub drift_rev: Mat,
    pub drift_irr: Mat,
    pub diffusion_rev: Mat,
    pub diffusion_irr: Mat,
}

/// Fokker–Planck generator with linear drift and constant diffusion.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceModel {
    drift: Mat,
    diffusion: Mat,
    /// Constant drift term (from linear Hamiltonian terms). Usually zero.
    force: Vect,
    eps: TimeReversalSignature,
    params: Option<SystemParams>,
    label: String,
    diffusion_psd: bool,
}

impl PhaseSpaceModel {
    /// Validated constructor: `B` must be symmetric and positive semidefinite.
    pub fn new(label: impl Into<String>, drift: Mat, diffusion: Mat, eps: TimeReversalSignature) -> Result<Self> {
        let model = Self::with_indefinite_diffusion(label, drift, diffusion, eps)?;
        if !model.diffusion_psd {
            let min = linalg::sym_eigenvalues(&model.diffusion)[0];
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
        }
        Ok(model)
    }

    /// Like [`PhaseSpaceModel::new`] but accepts an indefinite `B`, recording
    /// the fact in [`PhaseSpaceModel::diffusion_is_psd`]. Master-equation
    /// lowering uses this: a generator that is not completely positive can
    /// still be a meaningful Fokker–Planck operator.
    pub fn with_indefinite_diffusion(
        label: impl Into<String>,
        drift: Mat,
        diffusion: Mat,
        eps: TimeReversalSignature,
    ) -> Result<Self> {
        let dim = eps.len();
        if dim < 2 || !dim.is_multiple_of(2) {
            return Err(Error::Shape(format!("phase-space dimension must be even and >= 2, got {dim}")));
        }
        for (name, m) in [("A", &drift), ("B", &diffusion)] {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::Shape(format!("{name} is {}x{}, expected {dim}x{dim}", m.nrows(), m.ncols())));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} has non-finite entries")));
            }
        }
        if !linalg::is_symmetric(&diffusion, 1e-12) {
            return Err(Error::InvalidParameter("diffusion matrix B must be symmetric".into()));
        }
        let diffusion = linalg::symmetrize(&diffusion);
        let diffusion_psd = linalg::check_psd(&diffusion, PSD_REL_TOL).is_ok();
        Ok(PhaseSpaceModel {
            drift,
            diffusion,
            force: Vect::zeros(dim),
            eps,
            params: None,
            label: label.into(),
            diffusion_psd,
        })
    }

    pub fn with_params(mut self, params: SystemParams) -> Self {
        self.params = Some(params);
        self
    }

    pub fn with_force(mut self, force: Vect) -> Result<Self> {
        if force.len() != self.dim() {
            return Err(Error::Shape(format!("force has length {}, expected {}", force.len(), self.dim())));
        }
        self.force = force;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.eps.len()
    }
    pub fn drift(&self) -> &Mat {
        &self.drift
    }
    pub fn diffusion(&self) -> &Mat {
        &self.diffusion
    }
    pub fn force(&self) -> &Vect {
        &self.force
    }
    pub fn has_force(&self) -> bool {
        self.force.iter().any(|&f| f != 0.0)
    }
    pub fn eps(&self) -> &TimeReversalSignature {
        &self.eps
    }
    pub fn params(&self) -> Option<&SystemParams> {
        self.params.as_ref()
    }
    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn diffusion_is_psd(&self) -> bool {
        self.diffusion_psd
    }

    pub fn decomposition(&self) -> CurrentDecomposition {
        // Shapes were validated at construction.
        let (drift_rev, drift_irr) = decompose_time_reversal(&self.drift, &self.eps).expect("validated shape");
        let (diffusion_rev, diffusion_irr) =
            decompose_time_reversal(&self.diffusion, &self.eps).expect("validated shape");
        CurrentDecomposition { drift_rev, drift_irr, diffusion_rev, diffusion_irr }
    }

    pub fn to_json(&self) -> ModelJson {
        ModelJson {
            dim: self.dim(),
            a: linalg::to_rows(&self.drift),
            b: linalg::to_rows(&self.diffusion),
            eps: self.eps.clone(),
            label: self.label.clone(),
            force: self.has_force().then(|| self.force.iter().copied().collect()),
            params: self.params,
            diffusion_psd: (!self.diffusion_psd).then_some(false),
        }
    }

    pub fn from_json(json: &ModelJson) -> Result<Self> {
        if json.dim != json.eps.len() {
            return Err(Error::Shape(format!("dim = {} but eps has length {}", json.dim, json.eps.len())));
        }
        let label = if json.label.is_empty() { "custom" } else { json.label.as_str() };
        let mut model = PhaseSpaceModel::new(
            label,
            linalg::from_rows(&json.a)?,
            linalg::from_rows(&json.b)?,
            json.eps.clone(),
        )?;
        if let Some(f) = &json.force {
            model = model.with_force(Vect::from_vec(f.clone()))?;
        }
        if let Some(p) = json.params {
            p.validate()?;
            model = model.with_params(p);
        }
        Ok(model)
    }
}

/// Wire format of a model: row-major matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelJson {
    pub dim: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub eps: TimeReversalSignature,
    #[serde(default)]
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<SystemParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion_psd: Option<bool>,
}

/// The named one-particle models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Kramers equation with Einstein momentum diffusion.
    CaldeiraLeggett,
    /// Caldeira–Leggett plus the minimal position diffusion `ħ²ηβ/(16m)`.
    CpCorrected,
    /// Free particle under the translation-covariant Lindblad generator.
    TranslationCovariantFree,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::CaldeiraLeggett => "caldeira_leggett",
            ModelKind::CpCorrected => "cp_corrected",
            ModelKind::TranslationCovariantFree => "translation_covariant_free",
        }
    }
}

/// Builds one of the named models in `(q, p)` coordinates.
pub fn build_model(kind: ModelKind, params: &SystemParams) -> Result<PhaseSpaceModel> {
    params.validate()?;
    let SystemParams { m, omega, eta, .. } = *params;
    let dpp = params.einstein_dpp();
    let (drift, diffusion) = match kind {
        ModelKind::CaldeiraLeggett => (
            Mat::from_row_slice(2, 2, &[0.0, 1.0 / m, -m * omega * omega, -eta]),
            Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0 * dpp]),
        ),
        ModelKind::CpCorrected => (
            Mat::from_row_slice(2, 2, &[0.0, 1.0 / m, -m * omega * omega, -eta]),
            Mat::from_row_slice(2, 2, &[2.0 * params.minimal_dqq(), 0.0, 0.0, 2.0 * dpp]),
        ),
        ModelKind::TranslationCovariantFree => {
            if omega != 0.0 {
                return Err(Error::UnsupportedModel(
                    "the translation-covariant generator requires a free particle (omega = 0); \
                     a confining potential does not give a unique steady state"
                        .into(),
                ));
            }
            let dqq = params.translation_covariant_dqq();
            let dqp = params.dqp;
            (
                Mat::from_row_slice(2, 2, &[0.0, 1.0 / m, 0.0, -eta]),
                Mat::from_row_slice(2, 2, &[2.0 * dqq, 2.0 * dqp, 2.0 * dqp, 2.0 * dpp]),
            )
        }
    };
    Ok(PhaseSpaceModel::new(kind.label(), drift, diffusion, TimeReversalSignature::positions_then_momenta(1))?
        .with_params(*params))
}

/// A Gaussian Wigner function.
///
/// Proper states carry a positive-definite covariance and its inverse.
/// Improper (translation-invariant) states carry only a singular precision
/// matrix; they are uniform along its null space.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    mean: Vect,
    cov: Option<Mat>,
    precision: Mat,
}

impl GaussianState {
    pub fn proper(mean: Vect, cov: Mat) -> Result<Self> {
        if !cov.is_square() || cov.nrows() != mean.len() {
            return Err(Error::Shape("covariance and mean dimensions differ".into()));
        }
        if !linalg::is_symmetric(&cov, 1e-10) {
            return Err(Error::InvalidParameter("covariance must be symmetric".into()));
        }
        let cov = linalg::symmetrize(&cov);
        let precision = linalg::spd_inverse(&cov)
            .ok_or_else(|| Error::InvalidParameter("covariance must be positive definite".into()))?;
        Ok(GaussianState { mean, cov: Some(cov), precision })
    }

    pub fn centered(cov: Mat) -> Result<Self> {
        let n = cov.nrows();
        Self::proper(Vect::zeros(n), cov)
    }

    /// A state known only through its (possibly singular) precision matrix.
    pub fn improper(mean: Vect, precision: Mat) -> Result<Self> {
        if !precision.is_square() || precision.nrows() != mean.len() {
            return Err(Error::Shape("precision and mean dimensions differ".into()));
        }
        if !linalg::is_symmetric(&precision, 1e-10) {
            return Err(Error::InvalidParameter("precision must be symmetric".into()));
        }
        let precision = linalg::symmetrize(&precision);
        linalg::check_psd(&precision, PSD_REL_TOL)?;
        Ok(GaussianState { mean, cov: None, precision })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
    pub fn mean(&self) -> &Vect {
        &self.mean
    }
    pub fn cov(&self) -> Option<&Mat> {
        self.cov.as_ref()
    }
    pub fn precision(&self) -> &Mat {
        &self.precision
    }
    pub fn is_proper(&self) -> bool {
        self.cov.is_some()
    }

    /// Covariance for trace formulas: the true covariance for proper states,
    /// the pseudo-inverse of the precision (covariance of the normalizable
    /// directions) for improper ones.
    pub(crate) fn effective_cov(&self) -> (Mat, Option<Mat>) {
        match &self.cov {
            Some(v) => (v.clone(), None),
            None => {
                let p = SymPseudoInverse::new(&self.precision, 1e-12);
                let n = self.dim();
                let null = Mat::identity(n, n) - &p.range_projector;
                (p.pinv, Some(null))
            }
        }
    }
}

/// Irreversible probability current of a Gaussian state:
/// `J^I(x) = (M (x − μ) + A_I μ) P(x)` with `M = A_I + ½ B_I Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct IrreversibleCurrent {
    pub matrix: Mat,
    pub offset: Vect,
}

pub fn irreversible_current_matrix(model: &PhaseSpaceModel, state: &GaussianState) -> Result<IrreversibleCurrent> {
    if model.dim() != state.dim() {
        return Err(Error::Shape(format!("model dim {} vs state dim {}", model.dim(), state.dim())));
    }
    let d = model.decomposition();
    let matrix = &d.drift_irr + &d.diffusion_irr * state.precision() * 0.5;
    let offset = &d.drift_irr * state.mean() + irreversible_force(model);
    Ok(IrreversibleCurrent { matrix, offset })
}

/// Time-even part of the constant force.
pub(crate) fn irreversible_force(model: &PhaseSpaceModel) -> Vect {
    let f = model.force();
    (f + model.eps().apply(f)) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p0() -> SystemParams {
        SystemParams::new(1.0, 1.0, 1.0, 0.5, 1.0, 0.2).unwrap()
    }

    fn eps2() -> TimeReversalSignature {
        TimeReversalSignature::positions_then_momenta(1)
    }

    #[test]
    fn decompose_kramers_drift() {
        let (m, omega, eta) = (2.0, 3.0, 0.5);
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0 / m, -m * omega * omega, -eta]);
        let (ar, ai) = decompose_time_reversal(&a, &eps2()).unwrap();
        assert_eq!(ar, Mat::from_row_slice(2, 2, &[0.0, 1.0 / m, -m * omega * omega, 0.0]));
        assert_eq!(ai, Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -eta]));
    }

    #[test]
    fn decompose_diffusion() {
        let b = Mat::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 1.0]);
        let (br, bi) = decompose_time_reversal(&b, &eps2()).unwrap();
        assert_eq!(br, Mat::zeros(2, 2));
        assert_eq!(bi, b);

        let b = Mat::from_row_slice(2, 2, &[0.3, 0.4, 0.4, 1.0]);
        let (br, bi) = decompose_time_reversal(&b, &eps2()).unwrap();
        assert_eq!(br, Mat::from_row_slice(2, 2, &[0.0, 0.4, 0.4, 0.0]));
        assert_eq!(bi, Mat::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn decompose_rejects_shape_mismatch() {
        let m = Mat::zeros(3, 3);
        assert!(matches!(decompose_time_reversal(&m, &eps2()), Err(Error::Shape(_))));
    }

    #[test]
    fn signature_rejects_bad_entries() {
        assert!(TimeReversalSignature::new(vec![1, 0]).is_err());
        assert!(serde_json::from_str::<TimeReversalSignature>("[1,2]").is_err());
    }

    #[test]
    fn builders_at_reference_parameters() {
        let cl = build_model(ModelKind::CaldeiraLeggett, &p0()).unwrap();
        assert_eq!(cl.diffusion(), &Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        assert_eq!(cl.drift(), &Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.5]));

        let cp = build_model(ModelKind::CpCorrected, &p0()).unwrap();
        assert_eq!(cp.diffusion(), &Mat::from_row_slice(2, 2, &[0.0625, 0.0, 0.0, 1.0]));

        let free = SystemParams { omega: 0.0, ..p0() };
        let tc = build_model(ModelKind::TranslationCovariantFree, &free).unwrap();
        assert!((free.translation_covariant_dqq() - 0.11125).abs() < 1e-15);
        let expected = Mat::from_row_slice(2, 2, &[0.2225, 0.4, 0.4, 1.0]);
        assert!((tc.diffusion() - expected).amax() < 1e-15);
        assert_eq!(tc.drift(), &Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -0.5]));
    }

    #[test]
    fn translation_covariant_needs_free_particle() {
        assert!(matches!(
            build_model(ModelKind::TranslationCovariantFree, &p0()),
            Err(Error::UnsupportedModel(_))
        ));
    }

    #[test]
    fn builder_diffusion_structure() {
        let cl = build_model(ModelKind::CaldeiraLeggett, &p0()).unwrap().decomposition();
        assert_eq!(cl.diffusion_rev, Mat::zeros(2, 2));
        let free = SystemParams { omega: 0.0, ..p0() };
        let tc = build_model(ModelKind::TranslationCovariantFree, &free).unwrap().decomposition();
        assert!(tc.diffusion_rev.amax() > 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(SystemParams::new(0.0, 1.0, 1.0, 0.5, 1.0, 0.0).is_err());
        assert!(SystemParams::new(1.0, 1.0, -1.0, 0.5, 1.0, 0.0).is_err());
        assert!(SystemParams::new(1.0, 1.0, 0.0, 0.5, 1.0, -3.0).is_ok());
    }

    #[test]
    fn model_rejects_indefinite_or_asymmetric_diffusion() {
        let a = Mat::identity(2, 2) * -1.0;
        let b = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            PhaseSpaceModel::new("x", a.clone(), b.clone(), eps2()),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
        let lenient = PhaseSpaceModel::with_indefinite_diffusion("x", a.clone(), b, eps2()).unwrap();
        assert!(!lenient.diffusion_is_psd());
        let asym = Mat::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(PhaseSpaceModel::new("x", a, asym, eps2()).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let model = build_model(ModelKind::CpCorrected, &p0()).unwrap();
        let text = serde_json::to_string(&model.to_json()).unwrap();
        assert!(text.contains("\"A\":[[0.0,1.0],[-1.0,-0.5]]"));
        let back: ModelJson = serde_json::from_str(&text).unwrap();
        assert_eq!(PhaseSpaceModel::from_json(&back).unwrap(), model);
    }

    #[test]
    fn current_matrix_vanishes_for_caldeira_leggett_gibbs_state() {
        let cl = build_model(ModelKind::CaldeiraLeggett, &p0()).unwrap();
        let state = GaussianState::centered(Mat::identity(2, 2)).unwrap();
        let cur = irreversible_current_matrix(&cl, &state).unwrap();
        assert!(cur.matrix.amax() < 1e-15);
    }

    #[test]
    fn current_matrix_for_cp_corrected_steady_state() {
        let cp = build_model(ModelKind::CpCorrected, &p0()).unwrap();
        let v = Mat::from_row_slice(2, 2, &[1.078125, -0.03125, -0.03125, 1.0625]);
        let cur = irreversible_current_matrix(&cp, &GaussianState::centered(v).unwrap()).unwrap();
        // Hand arithmetic: Q = adj(V)/det V with det V = 1.14453125.
        let det = 1.078125 * 1.0625 - 0.03125 * 0.03125;
        let expected = Mat::from_row_slice(
            2,
            2,
            &[0.5 * 0.0625 * 1.0625 / det, 0.5 * 0.0625 * 0.03125 / det, 0.5 * 0.03125 / det, -0.5 + 0.5 * 1.078125 / det],
        );
        assert!((cur.matrix.clone() - expected).amax() < 1e-14);
        assert!((cur.matrix[(0, 0)] - 0.02901).abs() < 1e-5);
        assert!((cur.matrix[(1, 0)] - 0.01365).abs() < 1e-5);
    }

    #[test]
    fn current_matrix_vanishes_for_free_particle_with_einstein_relation() {
        let free = SystemParams { omega: 0.0, ..p0() };
        let tc = build_model(ModelKind::TranslationCovariantFree, &free).unwrap();
        let q = Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, free.beta / free.m]);
        let state = GaussianState::improper(Vect::zeros(2), q).unwrap();
        let cur = irreversible_current_matrix(&tc, &state).unwrap();
        assert!(cur.matrix.amax() < 1e-15);
    }

    #[test]
    fn state_precision_inverts_covariance() {
        let v = Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
        let s = GaussianState::centered(v.clone()).unwrap();
        assert!((v * s.precision() - Mat::identity(2, 2)).amax() < 1e-10);
        assert!(GaussianState::centered(Mat::zeros(2, 2)).is_err());
    }

    fn matrix_strategy(n: usize) -> impl Strategy<Value = Mat> {
        prop::collection::vec(-5.0f64..5.0, n * n).prop_map(move |v| Mat::from_row_slice(n, n, &v))
    }

    fn signature_strategy(n: usize) -> impl Strategy<Value = TimeReversalSignature> {
        prop::collection::vec(prop::bool::ANY, n)
            .prop_map(|v| TimeReversalSignature::new(v.into_iter().map(|b| if b { 1 } else { -1 }).collect()).unwrap())
    }

    proptest! {
        #[test]
        fn decomposition_round_trip(
            (m, eps) in (1usize..6).prop_flat_map(|n| (matrix_strategy(n), signature_strategy(n)))
        ) {
            let (r, i) = decompose_time_reversal(&m, &eps).unwrap();
            prop_assert_eq!(&r + &i, m.clone());
            prop_assert_eq!(eps.conjugate(&r), -r.clone());
            prop_assert_eq!(eps.conjugate(&i), i.clone());
            // Matches the (M ∓ εMε)/2 formulas.
            prop_assert!((&r - (&m - eps.conjugate(&m)) * 0.5).amax() == 0.0);
            prop_assert!((&i - (&m + eps.conjugate(&m)) * 0.5).amax() == 0.0);
        }

        #[test]
        fn builders_emit_psd_diffusion(
            hbar in 0.1f64..3.0, m in 0.1f64..3.0, omega in 0.0f64..3.0,
            eta in 0.05f64..3.0, beta in 0.1f64..5.0, dqp in -2.0f64..2.0
        ) {
            let p = SystemParams::new(hbar, m, omega, eta, beta, dqp).unwrap();
            let mut kinds = vec![ModelKind::CaldeiraLeggett, ModelKind::CpCorrected];
            let free = SystemParams { omega: 0.0, ..p };
            for kind in kinds.drain(..) {
                let b = build_model(kind, &p).unwrap();
                prop_assert!(b.diffusion_is_psd());
            }
            let tc = build_model(ModelKind::TranslationCovariantFree, &free).unwrap();
            let min = crate::linalg::sym_eigenvalues(tc.diffusion())[0];
            prop_assert!(min >= -1e-12 * crate::linalg::sym_spectral_norm(tc.diffusion()));
        }

        #[test]
        fn current_vanishes_iff_half_bq_cancels_drift(
            l in prop::collection::vec(-2.0f64..2.0, 4),
            b_diag in prop::collection::vec(0.0f64..2.0, 2),
            a in prop::collection::vec(-2.0f64..2.0, 4),
            matched in prop::bool::ANY,
        ) {
            // Random SPD Q = L Lᵀ + I/10.
            let lm = Mat::from_row_slice(2, 2, &l);
            let q = &lm * lm.transpose() + Mat::identity(2, 2) * 0.1;
            let b = Mat::from_diagonal(&Vect::from_vec(b_diag));
            let mut drift = Mat::from_row_slice(2, 2, &a);
            if matched {
                // Force A_I = −½ B_I Q on the even entries.
                let target = -(&b * &q) * 0.5;
                drift[(0, 0)] = target[(0, 0)];
                drift[(1, 1)] = target[(1, 1)];
                if target[(0, 1)].abs() > 1e-12 || target[(1, 0)].abs() > 1e-12 {
                    // ½B_I Q has odd entries that A_I cannot cancel.
                    return Ok(());
                }
            }
            let model = PhaseSpaceModel::new("r", drift, b, eps2()).unwrap();
            let state = GaussianState::improper(Vect::zeros(2), q).unwrap();
            let d = model.decomposition();
            let cur = irreversible_current_matrix(&model, &state).unwrap();
            let cancels = (&d.diffusion_irr * state.precision() * 0.5 + &d.drift_irr).amax() <= 1e-12;
            prop_assert_eq!(cur.matrix.amax() <= 1e-12, cancels);
        }
    }
}
