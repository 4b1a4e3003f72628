//! Scenario execution: model construction, steady state, time series, ensemble.

use std::fmt::Write as _;

use qbm_core::mcsim::{simulate, EnsembleStats, SimOptions};
use qbm_core::meqdsl::{self, check_cp, lower_to_fp, CPReport};
use qbm_core::steadystate::is_hurwitz;
use qbm_core::{
    analyze_translation_invariant, build_model, check_detailed_balance, entropy_flux_rate, entropy_production_rate,
    epr_quadrature, epr_steady_paper_formula, evolve_covariance, linalg, thermo_sample, Error, Execution,
    GaussianState, ModelKind, PaperSteadyInputs, PhaseSpaceModel, ThermoSample,
};
use serde_json::{json, Value};

use crate::config::{RunConfig, Scenario};
use crate::fail::CliError;

pub struct Prepared {
    pub model: PhaseSpaceModel,
    pub cp: Option<CPReport>,
}

fn named_kind(s: Scenario) -> Option<ModelKind> {
    match s {
        Scenario::Cl => Some(ModelKind::CaldeiraLeggett),
        Scenario::CpCorrected => Some(ModelKind::CpCorrected),
        Scenario::TranslationCovariant => Some(ModelKind::TranslationCovariantFree),
        Scenario::Custom | Scenario::Dsl => None,
    }
}

pub fn scenario_name(s: Scenario) -> &'static str {
    match s {
        Scenario::Cl => "cl",
        Scenario::CpCorrected => "cp-corrected",
        Scenario::TranslationCovariant => "translation-covariant",
        Scenario::Custom => "custom",
        Scenario::Dsl => "dsl",
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    if let Some(kind) = named_kind(cfg.scenario) {
        let params = cfg.params.expect("validated");
        let model = build_model(kind, &params)?;
        let cp = check_cp(&meqdsl::parse(meqdsl::standard_text(kind), &params)?)?;
        return Ok(Prepared { model, cp: Some(cp) });
    }
    match cfg.scenario {
        Scenario::Custom => {
            let json = cfg.model.as_ref().expect("validated");
            let model = PhaseSpaceModel::from_json(json)?;
            Ok(Prepared { model, cp: None })
        }
        _ => {
            let path = cfg.dsl_file().expect("validated");
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
            let spec = meqdsl::parse(&text, &cfg.params.expect("validated"))?;
            let model = lower_to_fp(&spec)?;
            let cp = check_cp(&spec)?;
            Ok(Prepared { model, cp: Some(cp) })
        }
    }
}

pub fn initial_state(cfg: &RunConfig, dim: usize) -> Result<GaussianState, CliError> {
    let cov = match &cfg.initial_cov {
        Some(rows) => linalg::from_rows(rows).map_err(|e| CliError::config(format!("initial_cov: {e}")))?,
        None => linalg::Mat::identity(dim, dim) * 2.0,
    };
    let mean = match &cfg.initial_mean {
        Some(m) => linalg::Vect::from_vec(m.clone()),
        None => linalg::Vect::zeros(dim),
    };
    if cov.nrows() != dim || mean.len() != dim {
        return Err(CliError::config(format!("initial state must have dimension {dim}")));
    }
    GaussianState::proper(mean, cov).map_err(|e| CliError::config(format!("initial state: {e}")))
}

/// `null` for non-finite values, which JSON cannot carry.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn state_json(s: &GaussianState) -> Value {
    json!({
        "proper": s.is_proper(),
        "mean": s.mean().as_slice(),
        "cov": s.cov().map(linalg::to_rows),
        "precision": linalg::to_rows(s.precision()),
    })
}

/// Steady state and its thermodynamics, as the `steady` part of the report.
pub fn steady_report(cfg: &RunConfig, prep: &Prepared) -> Result<Value, CliError> {
    let model = &prep.model;
    let (state, db) = if is_hurwitz(model.drift()) {
        let state = qbm_core::solve_lyapunov(model)?;
        // Detailed balance is defined for centred states only.
        let db = if state.mean().norm() == 0.0 { Some(check_detailed_balance(model, &state)?) } else { None };
        (state, db)
    } else {
        match analyze_translation_invariant(model) {
            Ok((state, db)) => (state, Some(db)),
            Err(Error::UnsupportedModel(why)) => {
                return Err(Error::NoSteadyState(format!("drift is not Hurwitz and {why}")).into())
            }
            Err(e) => return Err(e.into()),
        }
    };

    let pi = entropy_production_rate(model, &state)?;
    let phi = entropy_flux_rate(model, &state)?;
    let order = if model.dim() == 2 { 40 } else { 10 };
    let quad = if state.is_proper() && model.dim() <= 4 {
        Some(epr_quadrature(model, &state, order, Execution::default())?)
    } else {
        None
    };
    let comparison = match (cfg.scenario, cfg.params) {
        (Scenario::CpCorrected, Some(p)) => {
            let closed = epr_steady_paper_formula(&PaperSteadyInputs::from_params(&p))?;
            json!({
                "pipeline": num(pi),
                "closed_form": num(closed),
                "relative_difference": if pi.is_finite() && pi != 0.0 { num((closed - pi) / pi) } else { Value::Null },
                "note": "closed form assumes sigma_pq = -2 m D_qq; the Lyapunov steady state has sigma_pq = -m D_qq",
            })
        }
        _ => Value::Null,
    };

    Ok(json!({
        "scenario": scenario_name(cfg.scenario),
        "model": model.to_json(),
        "steady_state": state_json(&state),
        "db": db,
        "cp": prep.cp,
        "Pi_infinity": num(pi),
        "Pi_infinity_is_infinite": pi.is_infinite(),
        "Pi_infinity_per_unit_length": !state.is_proper(),
        "Phi_infinity": num(phi),
        "Pi_infinity_quadrature": quad.map(num).unwrap_or(Value::Null),
        "quadrature_order": if quad.is_some() { json!(order) } else { Value::Null },
        "Pi_infinity_comparison": comparison,
    }))
}

pub fn series(cfg: &RunConfig, prep: &Prepared) -> Result<Vec<ThermoSample>, CliError> {
    let init = initial_state(cfg, prep.model.dim())?;
    let traj = evolve_covariance(&prep.model, &init, cfg.t_final, cfg.dt)?;
    let last = traj.len() - 1;
    traj.iter()
        .enumerate()
        .filter(|(k, _)| k % cfg.stride == 0 || *k == last)
        .map(|(_, (t, s))| thermo_sample(&prep.model, *t, s).map_err(CliError::from))
        .collect()
}

pub fn ensemble(cfg: &RunConfig, prep: &Prepared) -> Result<Option<Vec<EnsembleStats>>, CliError> {
    let Some(mc) = &cfg.mc else { return Ok(None) };
    let init = initial_state(cfg, prep.model.dim())?;
    let opts = SimOptions {
        n_traj: mc.n_traj,
        dt: cfg.dt,
        t_final: cfg.t_final,
        seed: mc.seed,
        stride: mc.stride.unwrap_or(cfg.stride),
        exec: Execution::default(),
    };
    Ok(Some(simulate(&prep.model, &init, &opts)?))
}

/// Column names for a `dim`-dimensional state: `(q, p)` in 2D, indexed otherwise.
fn coord_names(dim: usize) -> Vec<String> {
    if dim == 2 {
        vec!["q".into(), "p".into()]
    } else {
        (1..=dim).map(|i| i.to_string()).collect()
    }
}

fn upper_pairs(dim: usize) -> Vec<(usize, usize)> {
    (0..dim).flat_map(|i| (i..dim).map(move |j| (i, j))).collect()
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        // Debug formatting is the shortest decimal that round-trips.
        let _ = write!(out, "{v:?}");
    }
    out.push('\n');
}

pub fn series_csv(rows: &[ThermoSample], dim: usize) -> String {
    let names = coord_names(dim);
    let pairs = upper_pairs(dim);
    let mut out = String::from("t,Sw,Pi,Phi,dSdt");
    for &(i, j) in &pairs {
        let _ = write!(out, ",V{}{}", names[i], names[j]);
    }
    for n in &names {
        let _ = write!(out, ",m{n}");
    }
    out.push('\n');
    for r in rows {
        let head = [r.t, r.s_w, r.pi, r.phi, r.ds_dt];
        let cov = pairs.iter().map(|&(i, j)| r.cov[i][j]);
        push_row(&mut out, head.into_iter().chain(cov).chain(r.mean.iter().copied()));
    }
    out
}

pub fn ensemble_csv(rows: &[EnsembleStats], dim: usize) -> String {
    let names = coord_names(dim);
    let pairs = upper_pairs(dim);
    let mut out = String::from("t");
    for n in &names {
        let _ = write!(out, ",m{n}");
    }
    for prefix in ["V", "se_V"] {
        for &(i, j) in &pairs {
            let _ = write!(out, ",{prefix}{}{}", names[i], names[j]);
        }
    }
    out.push('\n');
    for r in rows {
        let cov = pairs.iter().map(|&(i, j)| r.cov[(i, j)]);
        let se = pairs.iter().map(|&(i, j)| r.stderr_cov[(i, j)]);
        push_row(&mut out, std::iter::once(r.t).chain(r.mean.iter().copied()).chain(cov).chain(se));
    }
    out
}
