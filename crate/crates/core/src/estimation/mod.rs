//! Quasi-likelihood, box-constrained maximization and sandwich standard errors.

pub mod optimizer;
mod sandwich;

pub use sandwich::{sandwich_se, sandwich_se_free, Sandwich};

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_horizon, derive_coeffs, derive_coeffs_unchecked, initial_variance, GqarchCoeffs, ModelParams, ParamBox, ParamName};
use crate::rv::{window_returns, RvSeries, RV_FLOOR};
use crate::simulate::TickPanel;
use optimizer::{from_box, nelder_mead, to_box, NmOptions};

/// Minimum number of observations accepted by the likelihood.
pub const MIN_OBS: usize = 10;

/// Demeaned returns and realized variances on a common grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowFreqSeries {
    pub returns: Vec<f64>,
    pub rv: Vec<f64>,
    pub mu_hat: f64,
    /// Number of windows per day the series is sampled on (1 = daily).
    pub horizon_j: u32,
}

impl LowFreqSeries {
    /// Builds a series from raw returns; with `demean` the sample mean is
    /// removed and kept in `mu_hat`.
    pub fn new(raw_returns: &[f64], rv: &[f64], demean: bool, horizon_j: u32) -> Result<Self> {
        check_horizon(horizon_j)?;
        if raw_returns.len() != rv.len() {
            return Err(Error::domain(format!(
                "returns ({}) and rv ({}) differ in length",
                raw_returns.len(),
                rv.len()
            )));
        }
        if rv.len() < MIN_OBS {
            return Err(Error::domain(format!("need at least {MIN_OBS} observations, got {}", rv.len())));
        }
        if raw_returns.iter().any(|r| !r.is_finite()) {
            return Err(Error::domain("returns must be finite"));
        }
        if rv.iter().any(|v| !(v.is_finite() && *v >= RV_FLOOR)) {
            return Err(Error::domain("realized variances must be finite and >= rv floor"));
        }
        let mu_hat = if demean {
            raw_returns.iter().sum::<f64>() / raw_returns.len() as f64
        } else {
            0.0
        };
        Ok(Self {
            returns: raw_returns.iter().map(|r| r - mu_hat).collect(),
            rv: rv.to_vec(),
            mu_hat,
            horizon_j,
        })
    }

    /// Window returns and realized variances of `panel` at horizon `j`.
    /// Every window of every panel day must carry a realized variance.
    pub fn from_panel(panel: &TickPanel, rv: &RvSeries, j: u32, demean: bool) -> Result<Self> {
        let lookup: HashMap<(usize, usize), Option<f64>> =
            rv.horizon(j).into_iter().map(|e| ((e.day, e.window), e.rv)).collect();
        let mut returns = Vec::new();
        let mut values = Vec::new();
        for day in &panel.days {
            for (w, z) in window_returns(day, j).into_iter().enumerate() {
                let v = lookup.get(&(day.index, w + 1)).copied().flatten().ok_or_else(|| {
                    Error::domain(format!("realized variance missing for day {} window {}", day.index, w + 1))
                })?;
                returns.push(z);
                values.push(v);
            }
        }
        Self::new(&returns, &values, demean, j)
    }

    pub fn n(&self) -> usize {
        self.rv.len()
    }

    pub fn initial_g(&self) -> f64 {
        initial_variance(&self.rv).expect("series is non-empty")
    }

    /// First `n` observations with the same drift estimate.
    pub fn head(&self, n: usize) -> Result<Self> {
        let n = n.min(self.n());
        if n < MIN_OBS {
            return Err(Error::domain(format!("need at least {MIN_OBS} observations, got {n}")));
        }
        Ok(Self {
            returns: self.returns[..n].to_vec(),
            rv: self.rv[..n].to_vec(),
            mu_hat: self.mu_hat,
            horizon_j: self.horizon_j,
        })
    }
}

/// Conditional-variance path `g_1..g_{n+1}` and the number of floor hits.
pub(crate) fn g_path(coeffs: &GqarchCoeffs, g_init: f64, returns: &[f64]) -> (Vec<f64>, u64) {
    let mut path = Vec::with_capacity(returns.len() + 1);
    let mut g = g_init;
    let mut hits = 0u64;
    path.push(g);
    for &z in returns {
        let (next, floored) = coeffs.step(g, z);
        hits += u64::from(floored);
        g = next;
        path.push(g);
    }
    (path, hits)
}

/// Per-observation terms `-(log g_i + RV_i / g_i) / 2`.
pub(crate) fn loglik_terms(series: &LowFreqSeries, params: &ModelParams) -> Vec<f64> {
    let coeffs = derive_coeffs_unchecked(params, series.horizon_j);
    let (path, _) = g_path(&coeffs, series.initial_g(), &series.returns);
    path.iter()
        .zip(&series.rv)
        .map(|(g, rv)| -0.5 * (g.ln() + rv / g))
        .collect()
}

fn mean_loglik(series: &LowFreqSeries, coeffs: &GqarchCoeffs) -> (f64, u64) {
    let mut g = series.initial_g();
    let mut hits = 0u64;
    let mut acc = 0.0;
    let n = series.n();
    for i in 0..n {
        acc += g.ln() + series.rv[i] / g;
        if i + 1 < n {
            let (next, floored) = coeffs.step(g, series.returns[i]);
            hits += u64::from(floored);
            g = next;
        }
    }
    (-acc / (2.0 * n as f64), hits)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLik {
    pub value: f64,
    pub floor_hits: u64,
}

/// `-(1/2n) sum_i (log g_i + RV_i / g_i)` with the recursion started from
/// the mean of the leading realized variances.
pub fn quasi_loglik(series: &LowFreqSeries, params: &ModelParams) -> Result<LogLik> {
    let coeffs = derive_coeffs(params, series.horizon_j)?;
    let (value, floor_hits) = mean_loglik(series, &coeffs);
    if !value.is_finite() {
        return Err(Error::domain(format!("quasi-likelihood is not finite at {params:?}")));
    }
    Ok(LogLik { value, floor_hits })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_evals_per_start: usize,
    /// Simplex diameter in transformed coordinates at which a start converges.
    pub tol: f64,
    /// Additional starting points on top of the fixed design.
    pub extra_starts: Vec<[f64; 4]>,
    /// Holds `alpha` at this value (`Some(0.0)` gives the symmetric model).
    pub fixed_alpha: Option<f64>,
    pub sandwich: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_evals_per_start: 20_000,
            tol: 1e-8,
            extra_starts: Vec::new(),
            fixed_alpha: None,
            sandwich: true,
        }
    }
}

impl FitOptions {
    pub fn garch_ito() -> Self {
        Self {
            fixed_alpha: Some(0.0),
            ..Default::default()
        }
    }

    pub fn free_params(&self) -> Vec<ParamName> {
        if self.fixed_alpha.is_some() {
            vec![ParamName::Omega, ParamName::Beta, ParamName::Gamma]
        } else {
            ParamName::ALL.to_vec()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub start: [f64; 4],
    pub theta: [f64; 4],
    pub loglik: f64,
    pub converged: bool,
    pub evals: usize,
    #[serde(skip)]
    pub trace: Vec<f64>,
    #[serde(skip)]
    x: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub bounds: ParamBox,
    pub free_params: Vec<ParamName>,
    pub loglik: f64,
    /// Aligned with `free_params`; absent when the Hessian is not positive definite.
    pub std_errors: Option<Vec<f64>>,
    pub score_cov: Option<Vec<Vec<f64>>>,
    pub hessian: Option<Vec<Vec<f64>>>,
    pub hessian_eigenvalues: Option<Vec<f64>>,
    pub converged: bool,
    pub n_restarts_used: usize,
    pub starts: Vec<StartSummary>,
    pub g_init: f64,
    pub g_path: Vec<f64>,
    /// One-step-ahead conditional variance after the last observation.
    pub g_next: f64,
    pub floor_hits: u64,
    pub horizon_j: u32,
    pub n_obs: usize,
    pub mu_hat: f64,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn std_error(&self, name: ParamName) -> Option<f64> {
        let pos = self.free_params.iter().position(|&p| p == name)?;
        self.std_errors.as_ref().map(|se| se[pos])
    }

    pub fn hessian_pd(&self) -> bool {
        self.hessian_eigenvalues
            .as_ref()
            .is_some_and(|ev| ev.iter().all(|&e| e > 0.0))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let fit: FitResult = serde_json::from_str(s)?;
        fit.bounds.validate()?;
        fit.params.check_structural()?;
        Ok(fit)
    }
}

/// Eight starting points: a half-fraction of the corners at 1/4 and 3/4 of
/// each free coordinate's range, pulled 25% toward the box center.
pub fn start_design(bx: &ParamBox, n_free: usize) -> Vec<[f64; 4]> {
    let near = 0.25 + 0.25 * 0.25;
    let far = 0.75 - 0.25 * 0.25;
    let center = bx.center();
    (0..8)
        .map(|code| {
            let mut signs = [(code & 1) != 0, (code & 2) != 0, (code & 4) != 0, false];
            if n_free == 4 {
                // defining relation x4 = x1 x2 x3
                signs[3] = signs[0] ^ signs[1] ^ signs[2];
            }
            let mut theta = center;
            for k in 0..n_free {
                let frac = if signs[k] { far } else { near };
                theta[k] = bx.lower[k] + frac * (bx.upper[k] - bx.lower[k]);
            }
            theta
        })
        .collect()
}

/// Keeps a mapped coordinate strictly inside the open interval.
fn interior(v: f64, lo: f64, hi: f64) -> f64 {
    let pad = (hi - lo) * 1e-12;
    v.clamp(lo + pad, hi - pad)
}

fn theta_from_x(x: &[f64], free: &[usize], fixed: &[f64; 4], bx: &ParamBox) -> [f64; 4] {
    let mut theta = *fixed;
    for (xi, &k) in x.iter().zip(free) {
        theta[k] = interior(to_box(*xi, bx.lower[k], bx.upper[k]), bx.lower[k], bx.upper[k]);
    }
    theta
}

/// Maximizes the quasi-likelihood over the open box.
pub fn fit_qmle(series: &LowFreqSeries, bx: &ParamBox, opts: &FitOptions) -> Result<FitResult> {
    bx.validate()?;
    let free_names = opts.free_params();
    let free: Vec<usize> = free_names.iter().map(|p| p.index()).collect();
    let mut warnings = Vec::new();

    let mut base = bx.center();
    if let Some(a) = opts.fixed_alpha {
        if !a.is_finite() {
            return Err(Error::config("fixed alpha must be finite"));
        }
        base[3] = a;
    }

    let rv0 = series.rv[0];
    if series.rv.iter().all(|&v| v == rv0) {
        warnings.push("realized variance series is constant".to_string());
    }

    let mut starts = start_design(bx, free.len());
    for extra in &opts.extra_starts {
        if !bx.contains(extra) {
            return Err(Error::config(format!("extra start {extra:?} lies outside the box")));
        }
        starts.push(*extra);
    }
    if let Some(a) = opts.fixed_alpha {
        for s in &mut starts {
            s[3] = a;
        }
    }

    let nm = NmOptions {
        max_evals: opts.max_evals_per_start,
        tol: opts.tol,
        ..Default::default()
    };
    let horizon = series.horizon_j;
    let objective = |x: &[f64]| -> f64 {
        let theta = theta_from_x(x, &free, &base, bx);
        let coeffs = derive_coeffs_unchecked(&ModelParams::from_theta(theta, 0.0), horizon);
        -mean_loglik(series, &coeffs).0
    };

    let runs: Vec<StartSummary> = starts
        .par_iter()
        .map(|start| {
            let x0: Vec<f64> = free
                .iter()
                .map(|&k| from_box(start[k], bx.lower[k], bx.upper[k]))
                .collect();
            let r = nelder_mead(objective, &x0, &nm);
            StartSummary {
                start: *start,
                theta: theta_from_x(&r.x, &free, &base, bx),
                loglik: -r.f,
                converged: r.converged,
                evals: r.evals,
                trace: r.trace.iter().map(|f| -f).collect(),
                x: r.x,
            }
        })
        .collect();

    let best = runs
        .iter()
        .filter(|r| r.loglik.is_finite())
        .min_by(|a, b| {
            b.loglik
                .total_cmp(&a.loglik)
                .then_with(|| a.x.iter().zip(&b.x).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal))
        })
        .ok_or_else(|| Error::domain("quasi-likelihood is not finite at any start"))?;

    if !runs.iter().any(|r| r.converged) {
        warnings.push("no start met the simplex convergence tolerance".to_string());
    }

    let params = ModelParams::from_theta(best.theta, series.mu_hat);
    let coeffs = derive_coeffs(&params, horizon)?;
    let g_init = series.initial_g();
    let (mut path, floor_hits) = g_path(&coeffs, g_init, &series.returns);
    let g_next = path.pop().expect("path has n + 1 entries");
    if floor_hits > 0 {
        warnings.push(format!("variance floor engaged {floor_hits} times at the optimum"));
    }

    let mut fit = FitResult {
        params,
        bounds: *bx,
        free_params: free_names,
        loglik: best.loglik,
        std_errors: None,
        score_cov: None,
        hessian: None,
        hessian_eigenvalues: None,
        converged: best.converged,
        n_restarts_used: runs.len(),
        starts: runs.clone(),
        g_init,
        g_path: path,
        g_next,
        floor_hits,
        horizon_j: horizon,
        n_obs: series.n(),
        mu_hat: series.mu_hat,
        warnings,
    };

    if opts.sandwich {
        let parts = sandwich::sandwich_parts(series, &params, &free);
        fit.score_cov = Some(parts.score_cov.clone());
        fit.hessian = Some(parts.hessian.clone());
        fit.hessian_eigenvalues = Some(parts.eigenvalues.clone());
        match parts.finish() {
            Ok(s) => fit.std_errors = Some(s.std_errors),
            Err(e) => fit.warnings.push(e.to_string()),
        }
    }
    Ok(fit)
}
