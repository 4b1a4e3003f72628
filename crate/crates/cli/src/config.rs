//! Run configuration: one JSON file per run.

use std::path::{Path, PathBuf};

use qbm_core::phasespace::ModelJson;
use qbm_core::SystemParams;
use serde::Deserialize;

use crate::fail::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Cl,
    CpCorrected,
    TranslationCovariant,
    Custom,
    Dsl,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_traj: usize,
    #[serde(default)]
    pub seed: u64,
    /// Snapshot stride in steps; defaults to the run's `stride`.
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub params: Option<SystemParams>,
    /// Inline model for `custom`.
    pub model: Option<ModelJson>,
    /// Master-equation file for `dsl`, relative to the config file.
    pub dsl_path: Option<PathBuf>,
    /// Initial covariance; defaults to `2·I`.
    pub initial_cov: Option<Vec<Vec<f64>>>,
    pub initial_mean: Option<Vec<f64>>,
    pub t_final: f64,
    pub dt: f64,
    #[serde(default = "one")]
    pub stride: usize,
    pub mc: Option<McConfig>,
    /// Output directory, relative to the working directory.
    pub out_dir: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn one() -> usize {
    1
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub t_final: Option<f64>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path, ov: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if let Some(out) = &ov.out {
            cfg.out_dir = Some(out.clone());
        }
        if let Some(t) = ov.t_final {
            cfg.t_final = t;
        }
        if let Some(dt) = ov.dt {
            cfg.dt = dt;
        }
        if let (Some(seed), Some(mc)) = (ov.seed, cfg.mc.as_mut()) {
            mc.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let need_params = !matches!(self.scenario, Scenario::Custom);
        match (&self.params, need_params) {
            (None, true) => return Err(CliError::config("'params' is required for this scenario")),
            (Some(p), _) => p.validate().map_err(CliError::from)?,
            _ => {}
        }
        if self.scenario == Scenario::Custom && self.model.is_none() {
            return Err(CliError::config("scenario 'custom' requires an inline 'model' block (A, B, eps)"));
        }
        if self.scenario != Scenario::Custom && self.model.is_some() {
            return Err(CliError::config("'model' is only allowed with scenario 'custom'"));
        }
        if self.scenario == Scenario::Dsl && self.dsl_path.is_none() {
            return Err(CliError::config("scenario 'dsl' requires 'dsl_path'"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(CliError::config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(CliError::config(format!("t_final must be >= 0, got {}", self.t_final)));
        }
        if self.stride == 0 {
            return Err(CliError::config("stride must be >= 1"));
        }
        if let Some(mc) = &self.mc {
            if mc.n_traj < 2 {
                return Err(CliError::config("mc.n_traj must be >= 2"));
            }
            if mc.stride == Some(0) {
                return Err(CliError::config("mc.stride must be >= 1"));
            }
        }
        Ok(())
    }

    pub fn dsl_file(&self) -> Option<PathBuf> {
        self.dsl_path.as_ref().map(|p| self.base_dir.join(p))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("qbm-out"))
    }
}
