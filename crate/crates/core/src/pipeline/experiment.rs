//! Command orchestration, artifact bookkeeping and the replication studies.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Dgp, RunConfig};
use super::ingest::ingest_file;
use super::io::{read_fit, read_panel, read_rv, render, write_eval, write_panel, write_rv, write_summary, write_truth};
use crate::error::{Error, Result};
use crate::estimation::{fit_qmle, FitResult, LowFreqSeries};
use crate::forecast::{forecast_fraction, rolling_eval, EvalReport, ForecastTask, Metrics};
use crate::model::{initial_variance, ParamName, THETA0};
use crate::rv::{rv_panel, window_returns, RvSeries};
use crate::simulate::{add_noise, simulate_gqarch_ito, simulate_heston, simulate_jump_diffusion, JumpParams, SimConfig, TickPanel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Rv,
    Fit,
    Forecast,
    Evaluate,
    #[serde(rename = "replicate-4.1")]
    Replicate41,
    #[serde(rename = "replicate-4.2")]
    Replicate42,
    Run,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Rv => "rv",
            Command::Fit => "fit",
            Command::Forecast => "forecast",
            Command::Evaluate => "evaluate",
            Command::Replicate41 => "replicate-4.1",
            Command::Replicate42 => "replicate-4.2",
            Command::Run => "run",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: Option<u64>,
    pub config: RunConfig,
    /// `"ok"` or `"failed"`.
    pub status: String,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub outputs: Vec<OutputFile>,
    pub warnings: Vec<String>,
    pub wall_time_secs: f64,
}

pub const MANIFEST_FILE: &str = "manifest.json";

struct Artifacts {
    dir: PathBuf,
    outputs: Vec<OutputFile>,
    warnings: Vec<String>,
    stage: &'static str,
}

impl Artifacts {
    fn put(&mut self, name: &str, bytes: Vec<u8>) -> Result<()> {
        std::fs::write(self.dir.join(name), &bytes)?;
        self.outputs.push(OutputFile {
            file: name.to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn stage(&mut self, stage: &'static str) {
        log::info!("stage: {stage}");
        self.stage = stage;
    }

    /// Moves everything written so far to `<name>.partial`.
    fn mark_partial(&mut self) {
        for out in &mut self.outputs {
            let from = self.dir.join(&out.file);
            let name = format!("{}.partial", out.file);
            if std::fs::rename(&from, self.dir.join(&name)).is_ok() {
                out.file = name;
            }
        }
    }
}

/// Per-replication seed derived from the master seed, independent of thread count.
pub fn replication_seed(master: u64, rep: u64) -> u64 {
    // splitmix64 finalizer over a golden-ratio stride
    let mut z = master.wrapping_add(rep.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulates a panel from the configured generator, with optional noise.
pub fn simulate_panel(cfg: &RunConfig, seed: u64) -> Result<TickPanel> {
    let sim = SimConfig { seed, ..cfg.sim.clone() };
    let clean = match cfg.dgp {
        Dgp::Gqarch => simulate_gqarch_ito(&cfg.params, &sim)?,
        Dgp::Heston => simulate_heston(&cfg.heston, &sim)?,
        Dgp::Jump => simulate_jump_diffusion(
            &JumpParams {
                heston: cfg.heston,
                lambda: cfg.jump.lambda,
                sigma_j: cfg.jump.sigma_j,
            },
            &sim,
        )?,
    };
    match &cfg.noise {
        Some(noise) => add_noise(&clean, noise, seed),
        None => Ok(clean),
    }
}

/// Panel from, in order of preference, a panel CSV, a raw tick CSV, or the simulator.
pub fn load_panel(cfg: &RunConfig) -> Result<TickPanel> {
    if let Some(path) = &cfg.panel {
        return read_panel(std::fs::File::open(path)?);
    }
    if let Some(path) = &cfg.input {
        return ingest_file(path, &cfg.calendar);
    }
    simulate_panel(cfg, cfg.require_seed()?)
}

fn rv_horizons(cfg: &RunConfig) -> Vec<u32> {
    let mut hs = cfg.horizons.clone();
    if !hs.contains(&1) {
        hs.insert(0, 1);
    }
    hs
}

/// Realized variance at the daily and every configured horizon.
pub fn compute_rv(panel: &TickPanel, cfg: &RunConfig) -> Result<RvSeries> {
    let parts = rv_horizons(cfg)
        .into_iter()
        .map(|j| rv_panel(panel, &cfg.rv, j))
        .collect::<Result<Vec<_>>>()?;
    RvSeries::merge(parts).ok_or_else(|| Error::config("no horizons configured"))
}

pub fn load_rv(panel: &TickPanel, cfg: &RunConfig) -> Result<RvSeries> {
    match &cfg.rv_file {
        Some(path) => read_rv(std::fs::File::open(path)?, cfg.rv),
        None => compute_rv(panel, cfg),
    }
}

/// Quasi-likelihood fit on the first `days` days at horizon `j`.
pub fn fit_span(panel: &TickPanel, rv: &RvSeries, cfg: &RunConfig, days: usize, j: u32) -> Result<FitResult> {
    let series = LowFreqSeries::from_panel(&panel.truncated(days), rv, j, cfg.demean)?;
    fit_qmle(&series, &cfg.bounds, &cfg.fit)
}

fn load_or_fit(panel: &TickPanel, rv: &RvSeries, cfg: &RunConfig, days: usize) -> Result<FitResult> {
    match &cfg.fit_file {
        Some(path) => read_fit(std::fs::File::open(path)?),
        None => fit_span(panel, rv, cfg, days, 1),
    }
}

/// Rolling out-of-sample evaluation at every configured horizon.
pub fn evaluate_horizons(panel: &TickPanel, rv: &RvSeries, daily: &FitResult, cfg: &RunConfig) -> Result<Vec<EvalReport>> {
    let (ins, out) = cfg.split(panel.n_days())?;
    cfg.horizons
        .iter()
        .map(|&j| {
            let fit = if cfg.refit_per_horizon && j > 1 {
                fit_span(panel, rv, cfg, ins, j)?
            } else {
                daily.clone()
            };
            rolling_eval(
                &ForecastTask {
                    fit,
                    horizon_j: j,
                    in_sample_days: ins,
                    out_sample_days: out,
                },
                panel,
                rv,
            )
        })
        .collect()
}

/// Forecast of the first window after the panel at every configured horizon.
pub fn forecast_next(panel: &TickPanel, rv: &RvSeries, fit: &FitResult, cfg: &RunConfig) -> Result<Vec<(u32, f64)>> {
    cfg.horizons
        .iter()
        .map(|&j| {
            let mu = fit.mu_hat * fit.horizon_j as f64 / j as f64;
            let history: Vec<f64> = panel.days.iter().flat_map(|d| window_returns(d, j)).map(|z| z - mu).collect();
            let values: Vec<f64> = rv.values(j).into_iter().flatten().collect();
            let g0 = initial_variance(&values).ok_or_else(|| Error::domain(format!("no realized variance at horizon {j}")))?;
            Ok((j, forecast_fraction(fit, &history, g0, j)?))
        })
        .collect()
}

fn write_forecasts(rows: &[(u32, f64)], out: &mut Vec<u8>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["horizon", "forecast"])?;
    for (j, f) in rows {
        w.write_record([j.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn fit_json(fit: &FitResult) -> Result<Vec<u8>> {
    Ok(fit.to_json()?.into_bytes())
}

fn put_panel(art: &mut Artifacts, panel: &TickPanel) -> Result<()> {
    art.put("panel.csv", render(|b| write_panel(panel, b))?)?;
    if panel.has_truth() {
        art.put("truth.csv", render(|b| write_truth(panel, b))?)?;
    }
    art.warnings.extend(panel.meta.warnings.iter().cloned());
    Ok(())
}

fn run_stages(cmd: Command, cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    match cmd {
        Command::Simulate => {
            art.stage("simulate");
            let panel = simulate_panel(cfg, cfg.require_seed()?)?;
            art.stage("write");
            put_panel(art, &panel)?;
        }
        Command::Rv => {
            art.stage("load");
            let panel = load_panel(cfg)?;
            art.stage("rv");
            let rv = compute_rv(&panel, cfg)?;
            art.stage("write");
            art.put("rv.csv", render(|b| write_rv(&rv, b))?)?;
        }
        Command::Fit => {
            art.stage("load");
            let panel = load_panel(cfg)?;
            art.stage("rv");
            let rv = load_rv(&panel, cfg)?;
            art.stage("fit");
            let days = cfg.in_sample_days.unwrap_or(panel.n_days()).min(panel.n_days());
            let fit = fit_span(&panel, &rv, cfg, days, 1)?;
            art.warnings.extend(fit.warnings.iter().cloned());
            art.stage("write");
            art.put("fit.json", fit_json(&fit)?)?;
        }
        Command::Forecast => {
            art.stage("load");
            let panel = load_panel(cfg)?;
            art.stage("rv");
            let rv = load_rv(&panel, cfg)?;
            art.stage("fit");
            let fit = load_or_fit(&panel, &rv, cfg, panel.n_days())?;
            art.stage("forecast");
            let rows = forecast_next(&panel, &rv, &fit, cfg)?;
            art.stage("write");
            art.put("forecast.csv", render(|b| write_forecasts(&rows, b))?)?;
        }
        Command::Evaluate | Command::Run => {
            art.stage("load");
            let panel = load_panel(cfg)?;
            if cmd == Command::Run {
                put_panel(art, &panel)?;
            }
            art.stage("rv");
            let rv = load_rv(&panel, cfg)?;
            if cmd == Command::Run {
                art.put("rv.csv", render(|b| write_rv(&rv, b))?)?;
            }
            art.stage("fit");
            let (ins, _) = cfg.split(panel.n_days())?;
            let fit = load_or_fit(&panel, &rv, cfg, ins)?;
            art.warnings.extend(fit.warnings.iter().cloned());
            if cmd == Command::Run {
                art.put("fit.json", fit_json(&fit)?)?;
            }
            art.stage("evaluate");
            let reports = evaluate_horizons(&panel, &rv, &fit, cfg)?;
            art.stage("write");
            art.put("eval.csv", render(|b| write_eval(&reports, b))?)?;
            art.put("summary.csv", render(|b| write_summary(&reports, b))?)?;
        }
        Command::Replicate41 => {
            art.stage("replicate");
            let study = replicate_recovery(cfg, cfg.require_seed()?, cfg.replications)?;
            art.stage("write");
            art.put("recovery.csv", render(|b| study.write_rows(b))?)?;
            art.put("recovery_summary.csv", render(|b| study.write_summary(b))?)?;
        }
        Command::Replicate42 => {
            art.stage("replicate");
            let study = replicate_forecast(cfg, cfg.require_seed()?, cfg.replications)?;
            art.stage("write");
            art.put("forecast_reps.csv", render(|b| study.write_rows(b))?)?;
            art.put("table.csv", render(|b| study.write_table(b))?)?;
        }
    }
    Ok(())
}

/// Runs one command, writing its artifacts and a manifest into `out_dir`.
///
/// On failure the manifest records the failing stage and every file written
/// so far is renamed with a `.partial` suffix; the error is still returned.
pub fn execute(cmd: Command, cfg: &RunConfig, out_dir: &Path) -> Result<Manifest> {
    let start = Instant::now();
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut art = Artifacts {
        dir: out_dir.to_path_buf(),
        outputs: Vec::new(),
        warnings: Vec::new(),
        stage: "init",
    };
    let result = run_stages(cmd, cfg, &mut art);
    if result.is_err() {
        art.mark_partial();
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: cmd,
        seed: cfg.seed,
        config: cfg.clone(),
        status: if result.is_ok() { "ok" } else { "failed" }.to_string(),
        failed_stage: result.as_ref().err().map(|_| art.stage.to_string()),
        error: result.as_ref().err().map(|e| e.to_string()),
        outputs: art.outputs,
        warnings: art.warnings,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    std::fs::write(out_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    result.map(|_| manifest)
}

/// Full pipeline: load or simulate, realized variance, fit, evaluate.
pub fn run_experiment(cfg: &RunConfig, out_dir: &Path) -> Result<Manifest> {
    execute(Command::Run, cfg, out_dir)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub rep: usize,
    pub seed: u64,
    pub theta: [f64; 4],
    pub std_errors: Option<Vec<f64>>,
    pub loglik: f64,
    pub converged: bool,
    pub hessian_pd: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryStudy {
    pub truth: [f64; 4],
    pub rows: Vec<RecoveryRow>,
}

/// Type-7 (linear interpolation) sample quantile.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

impl RecoveryStudy {
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.theta[k]).collect()
    }

    pub fn median(&self, k: usize) -> f64 {
        quantile(&self.column(k), 0.5)
    }

    pub fn iqr(&self, k: usize) -> f64 {
        let c = self.column(k);
        quantile(&c, 0.75) - quantile(&c, 0.25)
    }

    /// Boxplot-ready long table: one row per replication.
    pub fn write_rows(&self, out: &mut Vec<u8>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["rep".to_string(), "seed".to_string()];
        header.extend(ParamName::ALL.iter().map(|p| p.as_str().to_string()));
        header.extend(ParamName::ALL.iter().map(|p| format!("se_{}", p.as_str())));
        header.extend(["loglik", "converged", "hessian_pd"].map(String::from));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.rep.to_string(), r.seed.to_string()];
            rec.extend(r.theta.iter().map(f64::to_string));
            for k in 0..4 {
                rec.push(r.std_errors.as_ref().and_then(|s| s.get(k)).map_or(String::new(), f64::to_string));
            }
            rec.extend([r.loglik.to_string(), r.converged.to_string(), r.hessian_pd.to_string()]);
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary(&self, out: &mut Vec<u8>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["param", "truth", "median", "q1", "q3", "iqr", "median_bias"])?;
        for p in ParamName::ALL {
            let k = p.index();
            let c = self.column(k);
            let med = quantile(&c, 0.5);
            w.write_record([
                p.as_str().to_string(),
                self.truth[k].to_string(),
                med.to_string(),
                quantile(&c, 0.25).to_string(),
                quantile(&c, 0.75).to_string(),
                self.iqr(k).to_string(),
                (med - self.truth[k]).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulates one panel at `seed` and fits the daily model on its first `days` days.
pub fn recovery_fit(cfg: &RunConfig, seed: u64, days: usize) -> Result<FitResult> {
    let panel = simulate_panel(cfg, seed)?;
    let rv = rv_panel(&panel, &cfg.rv, 1)?;
    fit_span(&panel, &rv, cfg, days, 1)
}

/// Parameter-recovery study over `reps` independent panels.
pub fn replicate_recovery(cfg: &RunConfig, master_seed: u64, reps: usize) -> Result<RecoveryStudy> {
    let rows = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = replication_seed(master_seed, rep as u64);
            let fit = recovery_fit(cfg, seed, cfg.sim.n_days)
                .map_err(|e| Error::domain(format!("replication {rep}: {e}")))?;
            Ok(RecoveryRow {
                rep,
                seed,
                theta: fit.params.theta(),
                std_errors: fit.std_errors.clone(),
                loglik: fit.loglik,
                converged: fit.converged,
                hessian_pd: fit.hessian_pd(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let truth = if cfg.dgp == Dgp::Gqarch { cfg.params.theta() } else { THETA0.theta() };
    Ok(RecoveryStudy { truth, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub rep: usize,
    pub seed: u64,
    pub horizon: u32,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastStudy {
    pub horizons: Vec<u32>,
    pub rows: Vec<ForecastRow>,
}

impl ForecastStudy {
    fn metrics_of(&self, rep: usize, j: u32) -> Option<&Metrics> {
        self.rows.iter().find(|r| r.rep == rep && r.horizon == j).map(|r| &r.metrics)
    }

    fn reps(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.rows.iter().map(|r| r.rep).collect();
        r.dedup();
        r
    }

    /// Share of replications in which horizon `j` has both lower MAE and
    /// lower MSE than the daily horizon.
    pub fn share_beating_daily(&self, j: u32) -> f64 {
        let reps = self.reps();
        let wins = reps
            .iter()
            .filter(|&&rep| match (self.metrics_of(rep, j), self.metrics_of(rep, 1)) {
                (Some(m), Some(d)) => m.mae < d.mae && m.mse < d.mse,
                _ => false,
            })
            .count();
        wins as f64 / reps.len().max(1) as f64
    }

    /// Metrics averaged over replications.
    pub fn mean_metrics(&self, j: u32) -> Metrics {
        let rows: Vec<&Metrics> = self.rows.iter().filter(|r| r.horizon == j).map(|r| &r.metrics).collect();
        let n = rows.len().max(1) as f64;
        Metrics {
            mae: rows.iter().map(|m| m.mae).sum::<f64>() / n,
            mse: rows.iter().map(|m| m.mse).sum::<f64>() / n,
            amape: rows.iter().map(|m| m.amape).sum::<f64>() / n,
            ll: rows.iter().map(|m| m.ll).sum::<f64>() / n,
            n: rows.iter().map(|m| m.n).sum(),
        }
    }

    pub fn write_rows(&self, out: &mut Vec<u8>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rep", "seed", "horizon", "n_windows", "mae", "mse", "amape", "ll"])?;
        for r in &self.rows {
            let m = &r.metrics;
            w.write_record([
                r.rep.to_string(),
                r.seed.to_string(),
                r.horizon.to_string(),
                m.n.to_string(),
                m.mae.to_string(),
                m.mse.to_string(),
                m.amape.to_string(),
                m.ll.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per horizon: replication-averaged metrics and the share of
    /// replications beating the daily horizon on both MAE and MSE.
    pub fn write_table(&self, out: &mut Vec<u8>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["horizon", "mae", "mse", "amape", "ll", "share_beating_daily"])?;
        for &j in &self.horizons {
            let m = self.mean_metrics(j);
            let share = if j == 1 { String::new() } else { self.share_beating_daily(j).to_string() };
            w.write_record([j.to_string(), m.mae.to_string(), m.mse.to_string(), m.amape.to_string(), m.ll.to_string(), share])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Forecasting study: simulate, fit on the in-sample days, score the rest
/// at every horizon, repeated over `reps` panels.
pub fn replicate_forecast(cfg: &RunConfig, master_seed: u64, reps: usize) -> Result<ForecastStudy> {
    let per_rep = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = replication_seed(master_seed, rep as u64);
            let run = || -> Result<Vec<ForecastRow>> {
                let panel = simulate_panel(cfg, seed)?;
                let rv = compute_rv(&panel, cfg)?;
                let (ins, _) = cfg.split(panel.n_days())?;
                let fit = fit_span(&panel, &rv, cfg, ins, 1)?;
                Ok(evaluate_horizons(&panel, &rv, &fit, cfg)?
                    .into_iter()
                    .map(|r| ForecastRow {
                        rep,
                        seed,
                        horizon: r.horizon_j,
                        metrics: r.metrics,
                    })
                    .collect())
            };
            run().map_err(|e| Error::domain(format!("replication {rep}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForecastStudy {
        horizons: cfg.horizons.clone(),
        rows: per_rep.into_iter().flatten().collect(),
    })
}
