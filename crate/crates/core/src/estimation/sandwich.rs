use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{loglik_terms, LowFreqSeries};
use crate::error::{Error, Result};
use crate::model::{ModelParams, ParamName};

const SCORE_STEP: f64 = 1e-5;
const HESSIAN_STEP: f64 = 1e-3;

/// Robust covariance pieces. Vectors and matrices follow the order of `free`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub free: Vec<ParamName>,
    pub std_errors: Vec<f64>,
    /// Mean outer product of per-observation scores.
    pub score_cov: Vec<Vec<f64>>,
    /// Minus the averaged Hessian of the summed log-likelihood terms.
    pub hessian: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Mean score; close to zero at an interior optimum.
    pub mean_score: Vec<f64>,
}

pub(crate) struct SandwichParts {
    free: Vec<ParamName>,
    pub score_cov: Vec<Vec<f64>>,
    pub hessian: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    mean_score: Vec<f64>,
    n: usize,
}

fn step(theta: f64, rel: f64) -> f64 {
    rel * theta.abs().max(0.1)
}

fn shifted(params: &ModelParams, k: usize, delta: f64) -> ModelParams {
    let mut t = params.theta();
    t[k] += delta;
    ModelParams::from_theta(t, params.mu)
}

/// Per-observation scores by central differences; `out[i][c]` is the
/// derivative of term `i` in free coordinate `c`.
fn scores(series: &LowFreqSeries, params: &ModelParams, free: &[usize]) -> Vec<Vec<f64>> {
    let n = series.n();
    let mut out = vec![vec![0.0; free.len()]; n];
    for (c, &k) in free.iter().enumerate() {
        let h = step(params.theta()[k], SCORE_STEP);
        let up = loglik_terms(series, &shifted(params, k, h));
        let dn = loglik_terms(series, &shifted(params, k, -h));
        for i in 0..n {
            out[i][c] = (up[i] - dn[i]) / (2.0 * h);
        }
    }
    out
}

fn summed_score(series: &LowFreqSeries, params: &ModelParams, free: &[usize]) -> Vec<f64> {
    let s = scores(series, params, free);
    (0..free.len()).map(|c| s.iter().map(|row| row[c]).sum()).collect()
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

pub(crate) fn sandwich_parts(series: &LowFreqSeries, params: &ModelParams, free: &[usize]) -> SandwichParts {
    let n = series.n();
    let p = free.len();
    let s = scores(series, params, free);

    let mut a = DMatrix::<f64>::zeros(p, p);
    for row in &s {
        for r in 0..p {
            for c in 0..p {
                a[(r, c)] += row[r] * row[c] / n as f64;
            }
        }
    }
    let mean_score: Vec<f64> = (0..p).map(|c| s.iter().map(|row| row[c]).sum::<f64>() / n as f64).collect();

    let mut h = DMatrix::<f64>::zeros(p, p);
    for (c, &k) in free.iter().enumerate() {
        let d = step(params.theta()[k], HESSIAN_STEP);
        let up = summed_score(series, &shifted(params, k, d), free);
        let dn = summed_score(series, &shifted(params, k, -d), free);
        for r in 0..p {
            h[(r, c)] = (up[r] - dn[r]) / (2.0 * d);
        }
    }
    let b = -(&h + h.transpose()) / (2.0 * n as f64);
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(b.clone()).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);

    SandwichParts {
        free: free.iter().map(|&k| ParamName::ALL[k]).collect(),
        score_cov: to_rows(&a),
        hessian: to_rows(&b),
        eigenvalues,
        mean_score,
        n,
    }
}

impl SandwichParts {
    pub(crate) fn finish(self) -> Result<Sandwich> {
        if !self.eigenvalues.iter().all(|&e| e > 0.0 && e.is_finite()) {
            return Err(Error::NotPositiveDefinite {
                eigenvalues: self.eigenvalues,
            });
        }
        let p = self.free.len();
        let b = DMatrix::from_fn(p, p, |r, c| self.hessian[r][c]);
        let a = DMatrix::from_fn(p, p, |r, c| self.score_cov[r][c]);
        let b_inv = b.try_inverse().ok_or_else(|| Error::NotPositiveDefinite {
            eigenvalues: self.eigenvalues.clone(),
        })?;
        let v = &b_inv * a * &b_inv;
        let std_errors = (0..p).map(|k| (v[(k, k)].max(0.0) / self.n as f64).sqrt()).collect();
        Ok(Sandwich {
            free: self.free,
            std_errors,
            score_cov: self.score_cov,
            hessian: self.hessian,
            eigenvalues: self.eigenvalues,
            mean_score: self.mean_score,
        })
    }
}

/// Sandwich standard errors over all four parameters.
pub fn sandwich_se(series: &LowFreqSeries, params: &ModelParams) -> Result<Sandwich> {
    sandwich_se_free(series, params, &ParamName::ALL)
}

/// Sandwich standard errors over a subset of parameters, the rest held fixed.
pub fn sandwich_se_free(series: &LowFreqSeries, params: &ModelParams, free: &[ParamName]) -> Result<Sandwich> {
    params.check_structural()?;
    if free.is_empty() {
        return Err(Error::config("at least one free parameter is required"));
    }
    let idx: Vec<usize> = free.iter().map(|p| p.index()).collect();
    sandwich_parts(series, params, &idx).finish()
}
