//! `qbm`: run the Brownian-motion thermodynamics scenarios from a JSON config.

mod config;
mod fail;
mod pipeline;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qbm_core::meqdsl::{self, check_cp, lower_to_fp};
use qbm_core::SystemParams;
use serde_json::{json, Value};

use config::{Overrides, RunConfig};
use fail::CliError;

#[derive(Parser)]
#[command(name = "qbm", version, about = "Entropy production of Gaussian quantum Brownian motion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write series.csv, report.json and (with `mc`) ensemble.csv.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Parse a master-equation file and print the lowered model and CP report.
    Parse {
        file: PathBuf,
        /// JSON file with the parameter values (`hbar`, `m`, `omega`, `eta`, `beta`, `Dqp`).
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Print the steady-state part of the report.
    Steady { config: PathBuf },
    /// Run only the Monte-Carlo ensemble and write ensemble.csv.
    Mc {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
}

#[derive(Args, Clone, Default)]
struct OverrideArgs {
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Monte-Carlo seed (overrides `mc.seed`).
    #[arg(long)]
    seed: Option<u64>,
}

impl From<OverrideArgs> for Overrides {
    fn from(a: OverrideArgs) -> Self {
        Overrides { out: a.out, t_final: a.t_final, dt: a.dt, seed: a.seed }
    }
}

/// Reference parameters used by `parse` when none are given.
fn reference_params() -> SystemParams {
    SystemParams { hbar: 1.0, m: 1.0, omega: 1.0, eta: 0.5, beta: 1.0, dqp: 0.0 }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("QBM_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| CliError::config(format!("QBM_THREADS must be a positive integer, got '{raw}'")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(format!("cannot configure thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn run(config: &Path, ov: Overrides) -> Result<(), CliError> {
    let cfg = RunConfig::load(config, &ov)?;
    let prep = pipeline::prepare(&cfg)?;
    let dim = prep.model.dim();
    let mut report = pipeline::steady_report(&cfg, &prep)?;
    let series = pipeline::series(&cfg, &prep)?;
    let ensemble = pipeline::ensemble(&cfg, &prep)?;

    let dir = prepare_out(&cfg)?;
    let mut written = vec![write_file(&dir, "series.csv", &pipeline::series_csv(&series, dim))?];
    report["series"] = json!({ "file": "series.csv", "rows": series.len(), "t_final": cfg.t_final, "dt": cfg.dt, "stride": cfg.stride });
    report["ensemble"] = match (&ensemble, &cfg.mc) {
        (Some(rows), Some(mc)) => {
            written.push(write_file(&dir, "ensemble.csv", &pipeline::ensemble_csv(rows, dim))?);
            json!({ "file": "ensemble.csv", "rows": rows.len(), "n_traj": mc.n_traj, "seed": mc.seed })
        }
        _ => Value::Null,
    };
    written.push(write_file(&dir, "report.json", &pretty(&report))?);
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn steady(config: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(config, &Overrides::default())?;
    let prep = pipeline::prepare(&cfg)?;
    print!("{}", pretty(&pipeline::steady_report(&cfg, &prep)?));
    Ok(())
}

fn mc(config: &Path, ov: Overrides) -> Result<(), CliError> {
    let cfg = RunConfig::load(config, &ov)?;
    if cfg.mc.is_none() {
        return Err(CliError::config("the config has no 'mc' block"));
    }
    let prep = pipeline::prepare(&cfg)?;
    let rows = pipeline::ensemble(&cfg, &prep)?.expect("mc block present");
    let dir = prepare_out(&cfg)?;
    let path = write_file(&dir, "ensemble.csv", &pipeline::ensemble_csv(&rows, prep.model.dim()))?;
    println!("{}", path.display());
    Ok(())
}

fn parse(file: &Path, params: Option<&Path>) -> Result<(), CliError> {
    let params = match params {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))?;
            let params: SystemParams =
                serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
            params.validate()?;
            params
        }
        None => reference_params(),
    };
    let text = std::fs::read_to_string(file)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", file.display())))?;
    let spec = meqdsl::parse(&text, &params)?;
    let model = lower_to_fp(&spec)?;
    let cp = check_cp(&spec)?;
    let mut warnings = Vec::new();
    if !model.diffusion_is_psd() {
        warnings.push("diffusion matrix B is not positive semidefinite");
    }
    if !cp.is_cptp {
        warnings.push("generator is not completely positive");
    }
    let out = json!({
        "model": model.to_json(),
        "cp": cp,
        "canonical": meqdsl::render(&spec),
        "warnings": warnings,
    });
    print!("{}", pretty(&out));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Run { config, overrides } => run(&config, overrides.into()),
        Command::Parse { file, params } => parse(&file, params.as_deref()),
        Command::Steady { config } => steady(&config),
        Command::Mc { config, overrides } => mc(&config, overrides.into()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code as u8)
        }
    }
}
