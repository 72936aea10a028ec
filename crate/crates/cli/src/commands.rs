use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use popinv::critical::{
    generate_critical_data, noise_rate_experiment, perturbed_reconstruction, CriticalExperiment, RateTable, ScoredEntry,
};
use popinv::h1::H1Machinery;
use popinv::io::{self, IoResult, SweepRow};
use popinv::observations::{add_l2_noise, extract_critical_points, PopulationMeasurement};
use popinv::rate::loglog_slope;
use popinv::tikhonov::{construct_source_p0, irgn_minimize, ForwardOperator, IrgnConfig, IrgnResult, OperatorVariant};
use popinv::{solve_forward, ParameterField};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Prior};
use crate::error::CliError;

fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut Vec<u8>) -> IoResult<()>) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::io(&path, e))?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    fs::write(&path, buf).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// `forward.csv` and, when snapshots are requested, `density.csv`.
pub fn run_forward(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let sol = solve_forward(&cfg.model, &cfg.time, &cfg.settings)?;
    let mut files = vec![write_file(&cfg.out_dir, "forward.csv", |w| io::write_forward(w, &sol))?];
    if !cfg.snapshots.is_empty() {
        files.push(write_file(&cfg.out_dir, "density.csv", |w| {
            io::write_density(w, &sol, &cfg.snapshots)
        })?);
    }
    Ok(files)
}

/// `forward.csv`, `measurement.csv` (noise level `noise.delta`) and `critical_points.csv`.
pub fn run_make_data(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let sol = solve_forward(&cfg.model, &cfg.time, &cfg.settings)?;
    let m = add_l2_noise(sol.rho(), &cfg.time, cfg.noise.delta, cfg.noise.seed)?;
    let cps = extract_critical_points(&sol);
    Ok(vec![
        write_file(&cfg.out_dir, "forward.csv", |w| io::write_forward(w, &sol))?,
        write_file(&cfg.out_dir, "measurement.csv", |w| io::write_measurement(w, &m))?,
        write_file(&cfg.out_dir, "critical_points.csv", |w| {
            io::write_critical_points(w, &cps)
        })?,
    ])
}

/// Objects shared by every inversion of one configuration.
pub struct InversionSetup {
    pub h1: H1Machinery,
    pub full: ForwardOperator,
    pub p_true: ParameterField,
    pub p0: ParameterField,
    /// Exact data `F(p_true)`.
    pub rho: Vec<f64>,
}

impl InversionSetup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let h1 = H1Machinery::new(&cfg.grid)?;
        let m = &cfg.model;
        let full = ForwardOperator::full(m.d.clone(), m.n0.clone(), cfg.time, cfg.settings)?;
        let p_true = m.p.clone();
        let rho = full.apply(&p_true)?;
        let p0 = match &cfg.inversion.prior {
            Prior::Source => {
                let w: Vec<f64> = cfg.time.nodes().iter().map(|t| (-t).exp()).collect();
                construct_source_p0(&p_true, &w, &full, &h1)?
            }
            Prior::Profile(pr) => pr.sample(&cfg.grid),
        };
        Ok(Self {
            h1,
            full,
            p_true,
            p0,
            rho,
        })
    }

    /// IRGN for one measurement with the configured variant and stopping rule.
    pub fn invert(&self, cfg: &ExperimentConfig, data: &PopulationMeasurement) -> Result<IrgnResult, CliError> {
        let alpha = cfg.inversion.alpha.alpha(data.delta);
        if !(alpha > 0.0) {
            return Err(CliError::Config {
                key: "inversion.alpha".into(),
                reason: "alpha = delta needs a positive noise level".into(),
            });
        }
        let irgn = IrgnConfig {
            alpha,
            tau: cfg.inversion.tau,
            max_iter: cfg.inversion.max_iter,
            ..IrgnConfig::for_noise_level(data.delta)
        };
        let perturbed;
        let op = match cfg.inversion.variant {
            OperatorVariant::Full => &self.full,
            OperatorVariant::Perturbed => {
                let m = &cfg.model;
                perturbed = ForwardOperator::perturbed(m.d.clone(), m.n0.clone(), data)?;
                &perturbed
            }
        };
        Ok(irgn_minimize(op, data, &self.p0, &irgn, &self.h1, Some(&self.p_true))?)
    }

    pub fn measurement(
        &self,
        cfg: &ExperimentConfig,
        delta: f64,
        seed: u64,
    ) -> Result<PopulationMeasurement, CliError> {
        Ok(add_l2_noise(&self.rho, &cfg.time, delta, seed)?)
    }
}

fn sweep_row(delta: f64, res: &IrgnResult) -> SweepRow {
    SweepRow {
        delta,
        h1_error: res.final_error().unwrap_or(f64::NAN),
        residual: res.final_residual(),
        iterations: res.iterations,
    }
}

/// Reads `inversion.data` when set, otherwise adds noise of level `noise.delta` to `F(p_true)`.
pub fn load_or_generate(cfg: &ExperimentConfig, setup: &InversionSetup) -> Result<PopulationMeasurement, CliError> {
    let Some(path) = &cfg.inversion.data else {
        return setup.measurement(cfg, cfg.noise.delta, cfg.noise.seed);
    };
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let m = io::read_measurement(BufReader::new(file), cfg.noise.delta, cfg.noise.seed)
        .map_err(|e| CliError::io(path, e))?;
    if m.time != cfg.time {
        return Err(CliError::Config {
            key: "inversion.data".into(),
            reason: format!("{} does not match the configured time grid", path.display()),
        });
    }
    Ok(m)
}

/// Single inversion: `reconstruction.csv`, `history.csv` and a one-row `report.csv`.
pub fn run_invert(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let setup = InversionSetup::new(cfg)?;
    let data = load_or_generate(cfg, &setup)?;
    let res = setup.invert(cfg, &data)?;
    let dir = &cfg.out_dir;
    Ok(vec![
        write_file(dir, "reconstruction.csv", |w| {
            io::write_reconstruction(w, &res.p_rec, Some(&setup.p_true))
        })?,
        write_file(dir, "history.csv", |w| io::write_irgn_history(w, &res))?,
        write_file(dir, "report.csv", |w| {
            io::write_sweep_report(w, &[sweep_row(data.delta, &res)], None)
        })?,
    ])
}

/// Result of a noise sweep: one row per `(delta, seed)` in configuration order, and the
/// least-squares log-log slope of `h1_error` against `delta` over all rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub slope: Option<f64>,
}

/// Runs every `(delta, seed)` entry concurrently; row order does not depend on scheduling.
pub fn sweep(cfg: &ExperimentConfig) -> Result<SweepReport, CliError> {
    if cfg.noise.deltas.is_empty() {
        return Err(CliError::Config {
            key: "noise.deltas".into(),
            reason: "sweep needs at least one noise level".into(),
        });
    }
    if cfg.inversion.data.is_some() {
        return Err(CliError::Config {
            key: "inversion.data".into(),
            reason: "sweep generates its own data".into(),
        });
    }
    let setup = InversionSetup::new(cfg)?;
    let entries: Vec<(f64, u64)> = cfg
        .noise
        .deltas
        .iter()
        .flat_map(|&d| cfg.noise.seeds().into_iter().map(move |s| (d, s)))
        .collect();
    let rows = entries
        .par_iter()
        .map(|&(delta, seed)| {
            let data = setup.measurement(cfg, delta, seed)?;
            Ok(sweep_row(delta, &setup.invert(cfg, &data)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows.iter().map(|r| (r.delta, r.h1_error)).unzip();
    Ok(SweepReport {
        slope: loglog_slope(&xs, &ys),
        rows,
    })
}

/// `report.csv` with one row per `(delta, seed)` and the fitted slope as footer.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let report = sweep(cfg)?;
    Ok(vec![write_file(&cfg.out_dir, "report.csv", |w| {
        io::write_sweep_report(w, &report.rows, report.slope)
    })?])
}

pub fn critical_experiment(cfg: &ExperimentConfig) -> Result<CriticalExperiment, CliError> {
    let exp = CriticalExperiment {
        p: cfg.p,
        d: cfg.d,
        n0: cfg.n0,
        model: cfg.model.clone(),
        time: cfg.time,
        settings: cfg.settings,
        dedupe: cfg.critical.dedupe,
    };
    exp.target().map_err(|e| CliError::Config {
        key: "model".into(),
        reason: e.to_string(),
    })?;
    Ok(exp)
}

#[derive(Debug, Clone)]
pub struct CriticalReport {
    pub clean: Vec<ScoredEntry>,
    /// Reconstruction from locations perturbed with `critical.delta`, when positive.
    pub noisy: Option<Vec<ScoredEntry>>,
    /// Noise-rate table over `critical.deltas`, when given.
    pub rate: Option<RateTable>,
}

pub fn sup_error(rows: &[ScoredEntry]) -> f64 {
    rows.iter().map(ScoredEntry::abs_error).fold(0.0, f64::max)
}

pub fn recon_critical(cfg: &ExperimentConfig) -> Result<CriticalReport, CliError> {
    let exp = critical_experiment(cfg)?;
    let data = generate_critical_data(&exp)?;
    let clean = perturbed_reconstruction(&exp, &data, 0.0, cfg.noise.seed)?;
    let noisy = if cfg.critical.delta > 0.0 {
        Some(perturbed_reconstruction(
            &exp,
            &data,
            cfg.critical.delta,
            cfg.noise.seed,
        )?)
    } else {
        None
    };
    let rate = if cfg.critical.deltas.is_empty() {
        None
    } else {
        let seeds: Vec<u64> = (0..cfg.critical.repeats)
            .map(|r| cfg.noise.seed.wrapping_add(r))
            .collect();
        Some(noise_rate_experiment(&exp, &cfg.critical.deltas, &seeds)?)
    };
    Ok(CriticalReport { clean, noisy, rate })
}

/// `pointwise.csv`, plus `pointwise_noisy.csv` and `rate.csv` when configured.
pub fn run_recon_critical(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let report = recon_critical(cfg)?;
    let dir = &cfg.out_dir;
    let mut files = vec![write_file(dir, "pointwise.csv", |w| {
        io::write_pointwise(w, &report.clean)
    })?];
    if let Some(noisy) = &report.noisy {
        files.push(write_file(dir, "pointwise_noisy.csv", |w| {
            io::write_pointwise(w, noisy)
        })?);
    }
    if let Some(rate) = &report.rate {
        files.push(write_file(dir, "rate.csv", |w| io::write_rate_table(w, rate))?);
    }
    Ok(files)
}

/// Applies command-line overrides.
pub fn with_overrides(mut cfg: ExperimentConfig, out: Option<PathBuf>, seed: Option<u64>) -> ExperimentConfig {
    if let Some(out) = out {
        cfg.out_dir = out;
    }
    if let Some(seed) = seed {
        cfg.noise.seed = seed;
    }
    cfg
}
