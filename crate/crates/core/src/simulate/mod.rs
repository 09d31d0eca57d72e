//! Synthetic tick panels with ground-truth integrated variance.
//!
//! Time is measured in days: day `i` (1-based) covers `[i-1, i]` and its
//! first and last ticks sit exactly on the boundaries. Adjacent days share
//! the boundary observation.

mod gqarch;
mod heston;
mod noise;

pub use gqarch::simulate_gqarch_ito;
pub use heston::{simulate_heston, simulate_jump_diffusion, HestonParams, JumpParams};
pub use noise::{add_noise, NoiseParams};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest fractional horizon for which ground truth is recorded.
pub const MAX_HORIZON: u32 = 6;

/// Tolerance when comparing tick times against window boundaries.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_days: usize,
    pub ticks_per_day: usize,
    pub seed: u64,
    pub euler_substeps: usize,
    pub x0: f64,
    pub sigma0_sq: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_days: 250,
            ticks_per_day: 2160,
            seed: 0,
            euler_substeps: 1,
            x0: 10.0,
            sigma0_sq: 0.667,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_days == 0 {
            return Err(Error::config("n_days must be >= 1"));
        }
        if self.ticks_per_day < 2 {
            return Err(Error::config("ticks_per_day must be >= 2"));
        }
        if self.euler_substeps == 0 {
            return Err(Error::config("euler_substeps must be >= 1"));
        }
        if !self.x0.is_finite() {
            return Err(Error::config("x0 must be finite"));
        }
        if !(self.sigma0_sq.is_finite() && self.sigma0_sq > 0.0) {
            return Err(Error::config("sigma0_sq must be finite and > 0"));
        }
        Ok(())
    }

    pub(crate) fn steps_per_day(&self) -> usize {
        self.ticks_per_day * self.euler_substeps
    }
}

/// Simulator ground truth for one day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayTruth {
    /// Integrated variance over the whole day.
    pub iv: f64,
    /// `frac_iv[j-1][w]` is the integrated variance of window `w` at horizon `j`.
    pub frac_iv: Vec<Vec<f64>>,
    /// Number of variance jumps (jump-diffusion only).
    #[serde(default)]
    pub jumps: u32,
}

impl DayTruth {
    pub fn window_iv(&self, j: u32, window: usize) -> Option<f64> {
        self.frac_iv.get(j as usize - 1)?.get(window).copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DayRecord {
    /// 1-based day index.
    pub index: usize,
    pub times: Vec<f64>,
    /// Latent log prices; `None` for ingested market data.
    pub clean: Option<Vec<f64>>,
    /// Observed log prices.
    pub noisy: Vec<f64>,
    pub truth: Option<DayTruth>,
}

impl DayRecord {
    pub fn n_ticks(&self) -> usize {
        self.times.len()
    }

    pub fn open_price(&self) -> f64 {
        self.noisy[0]
    }

    pub fn close_price(&self) -> f64 {
        self.noisy[self.noisy.len() - 1]
    }

    pub fn start(&self) -> f64 {
        (self.index - 1) as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PanelMeta {
    pub source: String,
    /// Euler steps where the spot variance floor engaged.
    pub floor_hits: u64,
    pub total_steps: u64,
    pub warnings: Vec<String>,
    /// Days flagged by ingestion (e.g. missing ticks).
    pub flagged_days: Vec<usize>,
    /// Original calendar labels of ingested days, in panel order.
    #[serde(default)]
    pub day_labels: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TickPanel {
    pub days: Vec<DayRecord>,
    pub meta: PanelMeta,
}

impl TickPanel {
    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    /// Mean number of increments per day.
    pub fn mean_ticks(&self) -> f64 {
        let total: usize = self.days.iter().map(|d| d.n_ticks() - 1).sum();
        total as f64 / self.days.len().max(1) as f64
    }

    pub fn has_truth(&self) -> bool {
        self.days.iter().all(|d| d.truth.is_some())
    }

    /// Observed open-to-close log return per day.
    pub fn daily_returns(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.close_price() - d.open_price()).collect()
    }

    /// Keeps the first `n` days.
    pub fn truncated(&self, n: usize) -> TickPanel {
        TickPanel {
            days: self.days[..n.min(self.days.len())].to_vec(),
            meta: self.meta.clone(),
        }
    }

    /// Checks the structural invariants of a panel.
    pub fn validate(&self) -> Result<()> {
        if self.days.is_empty() {
            return Err(Error::domain("panel has no days"));
        }
        for (pos, day) in self.days.iter().enumerate() {
            let n = day.n_ticks();
            if n < 2 {
                return Err(Error::domain(format!("day {} has fewer than 2 ticks", day.index)));
            }
            if day.noisy.len() != n || day.clean.as_ref().is_some_and(|c| c.len() != n) {
                return Err(Error::domain(format!("day {} has mismatched column lengths", day.index)));
            }
            if pos > 0 && day.index <= self.days[pos - 1].index {
                return Err(Error::domain("day indices must be increasing"));
            }
            if day.times.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::domain(format!("day {} tick times not strictly increasing", day.index)));
            }
            let start = day.start();
            if (day.times[0] - start).abs() > TIME_EPS || (day.times[n - 1] - (start + 1.0)).abs() > TIME_EPS {
                return Err(Error::domain(format!("day {} does not span [{}, {}]", day.index, start, start + 1.0)));
            }
            if day.noisy.iter().chain(day.clean.iter().flatten()).any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("day {} has non-finite prices", day.index)));
            }
            if let Some(t) = &day.truth {
                if !(t.iv > 0.0 && t.iv.is_finite()) {
                    return Err(Error::domain(format!("day {} has non-positive IV", day.index)));
                }
            }
        }
        Ok(())
    }
}

/// Deterministic generator for a given seed and sub-stream.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform tick times of day `index` with `m` increments.
pub(crate) fn uniform_times(index: usize, m: usize) -> Vec<f64> {
    let start = (index - 1) as f64;
    (0..=m).map(|k| start + k as f64 / m as f64).collect()
}

/// Splits a day's per-step variance contributions into `1/j` windows.
pub(crate) fn window_sums(step_iv: &[f64]) -> Vec<Vec<f64>> {
    let n = step_iv.len();
    (1..=MAX_HORIZON as usize)
        .map(|j| {
            (0..j)
                .map(|w| {
                    let lo = (w * n).div_ceil(j);
                    let hi = ((w + 1) * n).div_ceil(j);
                    step_iv[lo..hi].iter().sum()
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_sums_partition_total() {
        let steps: Vec<f64> = (0..2161).map(|k| 1.0 + (k % 7) as f64).collect();
        let total: f64 = steps.iter().sum();
        for per_j in window_sums(&steps) {
            let s: f64 = per_j.iter().sum();
            assert!((s - total).abs() < 1e-10 * total);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        for bad in [
            SimConfig { ticks_per_day: 1, ..Default::default() },
            SimConfig { sigma0_sq: 0.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
