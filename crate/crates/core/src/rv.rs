//! Realized-variance estimators on tick windows.
//!
//! A window is a slice of log prices. The two-scale and multi-scale
//! estimators combine sub-sampled realized variances at several strides so
//! that the `2 n a^2` bias from i.i.d. observation noise cancels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::check_horizon;
use crate::simulate::{DayRecord, TickPanel, TIME_EPS};

/// Lower bound applied to every debiased estimate.
pub const RV_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RvEstimator {
    Naive,
    Tsrv,
    Msrv,
}

impl std::str::FromStr for RvEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "naive" => Ok(RvEstimator::Naive),
            "tsrv" => Ok(RvEstimator::Tsrv),
            "msrv" => Ok(RvEstimator::Msrv),
            other => Err(Error::config(format!("unknown RV estimator '{other}'"))),
        }
    }
}

/// Estimator choice. `None` scales are resolved per window from its length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RvConfig {
    pub estimator: RvEstimator,
    pub k_scale: Option<usize>,
    pub msrv_scales: Option<usize>,
}

impl Default for RvConfig {
    fn default() -> Self {
        Self {
            estimator: RvEstimator::Msrv,
            k_scale: None,
            msrv_scales: None,
        }
    }
}

impl RvConfig {
    pub fn naive() -> Self {
        Self {
            estimator: RvEstimator::Naive,
            ..Default::default()
        }
    }

    pub fn tsrv(k: Option<usize>) -> Self {
        Self {
            estimator: RvEstimator::Tsrv,
            k_scale: k,
            msrv_scales: None,
        }
    }

    pub fn msrv(scales: Option<usize>) -> Self {
        Self {
            estimator: RvEstimator::Msrv,
            k_scale: None,
            msrv_scales: scales,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_scale.is_some_and(|k| k < 2) {
            return Err(Error::config("k_scale must be >= 2"));
        }
        if self.msrv_scales.is_some_and(|m| m < 2) {
            return Err(Error::config("msrv_scales must be >= 2"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RvEstimate {
    pub value: f64,
    /// The raw debiased value was below [`RV_FLOOR`].
    pub floored: bool,
}

impl RvEstimate {
    fn floored(raw: f64) -> Self {
        if raw < RV_FLOOR {
            Self {
                value: RV_FLOOR,
                floored: true,
            }
        } else {
            Self {
                value: raw,
                floored: false,
            }
        }
    }
}

/// Sum of squared increments.
pub fn rv_naive(prices: &[f64]) -> Result<f64> {
    if prices.len() < 2 {
        return Err(Error::domain("naive RV needs at least 2 ticks"));
    }
    Ok(prices.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum())
}

/// Average of the `k` sub-sampled realized variances at stride `k`,
/// i.e. `(1/k) sum_i (Y_{i+k} - Y_i)^2`.
pub fn subsampled_rv(prices: &[f64], k: usize) -> f64 {
    debug_assert!(k >= 1);
    if prices.len() <= k {
        return 0.0;
    }
    let s: f64 = prices[k..]
        .iter()
        .zip(prices)
        .map(|(b, a)| (b - a) * (b - a))
        .sum();
    s / k as f64
}

/// Two-scale realized variance `avgRV_k - (nbar / n) RV_all` with
/// `nbar = (n - k + 1)/k` and `n` the number of increments.
pub fn rv_tsrv(prices: &[f64], k: usize) -> Result<RvEstimate> {
    let n = prices.len().saturating_sub(1);
    if k < 1 || n < 2 * k {
        return Err(Error::domain(format!(
            "TSRV needs at least 2k = {} increments, window has {n}",
            2 * k
        )));
    }
    let all = rv_naive(prices)?;
    let slow = subsampled_rv(prices, k);
    let nbar = (n - k + 1) as f64 / k as f64;
    Ok(RvEstimate::floored(slow - nbar / n as f64 * all))
}

/// Multi-scale weights `a_i = 12 i (i/M - 1/2 - 1/(2M)) / (M^2 - 1)` for
/// strides `i = 1..=M`. They satisfy `sum a_i = 1` and `sum a_i / i = 0`.
pub fn msrv_weights(m_scales: usize) -> Vec<f64> {
    let m = m_scales as f64;
    let denom = m * m - 1.0;
    (1..=m_scales)
        .map(|i| {
            let i = i as f64;
            12.0 * i * (i / m - 0.5 - 0.5 / m) / denom
        })
        .collect()
}

/// Multi-scale realized variance `sum_i a_i avgRV_i`.
pub fn rv_msrv(prices: &[f64], m_scales: usize) -> Result<RvEstimate> {
    let n = prices.len().saturating_sub(1);
    if m_scales < 2 || n < 2 * m_scales {
        return Err(Error::domain(format!(
            "MSRV with {m_scales} scales needs at least {} increments, window has {n}",
            2 * m_scales
        )));
    }
    let raw = msrv_weights(m_scales)
        .iter()
        .enumerate()
        .map(|(i, a)| a * subsampled_rv(prices, i + 1))
        .sum();
    Ok(RvEstimate::floored(raw))
}

/// `round(n^{2/3})` clamped to `[10, n/4]`.
pub fn default_k_scale(n_increments: usize) -> usize {
    let hi = (n_increments / 4).max(2);
    let k = (n_increments as f64).powf(2.0 / 3.0).round() as usize;
    k.clamp(10.min(hi), hi)
}

/// `round(sqrt(n) / 2)` clamped to `[2, n/2]`.
pub fn default_msrv_scales(n_increments: usize) -> usize {
    let hi = (n_increments / 2).max(2);
    let m = (0.5 * (n_increments as f64).sqrt()).round() as usize;
    m.clamp(2, hi)
}

/// Applies the configured estimator to one window.
pub fn estimate_window(prices: &[f64], cfg: &RvConfig) -> Result<RvEstimate> {
    let n = prices.len().saturating_sub(1);
    match cfg.estimator {
        RvEstimator::Naive => rv_naive(prices).map(RvEstimate::floored),
        RvEstimator::Tsrv => rv_tsrv(prices, cfg.k_scale.unwrap_or_else(|| default_k_scale(n))),
        RvEstimator::Msrv => rv_msrv(prices, cfg.msrv_scales.unwrap_or_else(|| default_msrv_scales(n))),
    }
}

/// Inclusive tick-index ranges of the `j` windows of a day.
///
/// Window `w` holds the ticks in `[start + w/j, start + (w+1)/j)` plus the
/// first tick at or after its right edge, which it shares with window `w+1`.
pub fn window_ranges(day: &DayRecord, j: u32) -> Vec<(usize, usize)> {
    let start = day.start();
    let last = day.n_ticks() - 1;
    let edges: Vec<usize> = (0..=j)
        .map(|w| {
            if w == j {
                return last;
            }
            let edge = start + w as f64 / j as f64;
            day.times.partition_point(|&t| t < edge - TIME_EPS).min(last)
        })
        .collect();
    edges.windows(2).map(|e| (e[0], e[1])).collect()
}

/// Observed log return over each `1/j` window of a day.
pub fn window_returns(day: &DayRecord, j: u32) -> Vec<f64> {
    window_ranges(day, j)
        .into_iter()
        .map(|(lo, hi)| day.noisy[hi] - day.noisy[lo])
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RvFlag {
    Ok,
    Floored,
    Short,
}

impl RvFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            RvFlag::Ok => "ok",
            RvFlag::Floored => "floored",
            RvFlag::Short => "short",
        }
    }
}

impl std::str::FromStr for RvFlag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(RvFlag::Ok),
            "floored" => Ok(RvFlag::Floored),
            "short" => Ok(RvFlag::Short),
            other => Err(Error::domain(format!("unknown RV flag '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RvEntry {
    pub day: usize,
    pub j: u32,
    /// 1-based window index within the day.
    pub window: usize,
    /// `None` when the window was too short for the estimator.
    pub rv: Option<f64>,
    pub flag: RvFlag,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RvSeries {
    pub entries: Vec<RvEntry>,
    pub config: RvConfig,
}

impl RvSeries {
    /// Entries at horizon `j`, in (day, window) order.
    pub fn horizon(&self, j: u32) -> Vec<&RvEntry> {
        self.entries.iter().filter(|e| e.j == j).collect()
    }

    /// Values at horizon `j`, gaps as `None`.
    pub fn values(&self, j: u32) -> Vec<Option<f64>> {
        self.entries.iter().filter(|e| e.j == j).map(|e| e.rv).collect()
    }

    pub fn gaps(&self) -> usize {
        self.entries.iter().filter(|e| e.rv.is_none()).count()
    }

    /// Concatenates series computed for different horizons.
    pub fn merge(parts: Vec<RvSeries>) -> Option<RvSeries> {
        let config = parts.first()?.config;
        let entries = parts.into_iter().flat_map(|p| p.entries).collect();
        Some(RvSeries { entries, config })
    }
}

/// Realized variance of every `1/j` window of every day.
pub fn rv_panel(panel: &TickPanel, cfg: &RvConfig, j: u32) -> Result<RvSeries> {
    cfg.validate()?;
    check_horizon(j)?;
    let per_day: Vec<Vec<RvEntry>> = panel
        .days
        .par_iter()
        .map(|day| {
            window_ranges(day, j)
                .into_iter()
                .enumerate()
                .map(|(w, (lo, hi))| {
                    let (rv, flag) = match estimate_window(&day.noisy[lo..=hi], cfg) {
                        Ok(est) if est.floored => (Some(est.value), RvFlag::Floored),
                        Ok(est) => (Some(est.value), RvFlag::Ok),
                        Err(_) => (None, RvFlag::Short),
                    };
                    RvEntry {
                        day: day.index,
                        j,
                        window: w + 1,
                        rv,
                        flag,
                    }
                })
                .collect()
        })
        .collect();
    Ok(RvSeries {
        entries: per_day.into_iter().flatten().collect(),
        config: *cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::uniform_times;
    use proptest::prelude::*;

    #[test]
    fn naive_hand_sum() {
        assert!((rv_naive(&[0.0, 0.01, 0.03]).unwrap() - 0.0005).abs() < 1e-18);
        assert_eq!(rv_naive(&[1.0; 50]).unwrap(), 0.0);
        assert!(rv_naive(&[1.0]).is_err());
    }

    #[test]
    fn constant_prices_floor() {
        let flat = vec![4.2; 500];
        let t = rv_tsrv(&flat, 30).unwrap();
        assert_eq!(t.value, RV_FLOOR);
        assert!(t.floored);
        let m = rv_msrv(&flat, 10).unwrap();
        assert_eq!(m.value, RV_FLOOR);
    }

    #[test]
    fn short_windows_rejected() {
        let p: Vec<f64> = (0..20).map(|k| k as f64 * 0.01).collect();
        assert!(rv_tsrv(&p, 10).is_err());
        assert!(rv_tsrv(&p, 9).is_ok());
        assert!(rv_msrv(&p, 10).is_err());
        assert!(rv_msrv(&p, 1).is_err());
    }

    #[test]
    fn msrv_weight_constraints() {
        for m in [2usize, 3, 7, 23, 46, 200] {
            let w = msrv_weights(m);
            let s: f64 = w.iter().sum();
            let s_inv: f64 = w.iter().enumerate().map(|(i, a)| a / (i + 1) as f64).sum();
            assert!((s - 1.0).abs() < 1e-12, "m={m}: {s}");
            assert!(s_inv.abs() < 1e-12, "m={m}: {s_inv}");
        }
    }

    #[test]
    fn subsampled_stride_one_is_naive() {
        let p: Vec<f64> = (0..100).map(|k| ((k * 37) % 11) as f64 * 0.001).collect();
        assert!((subsampled_rv(&p, 1) - rv_naive(&p).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn default_scales() {
        assert_eq!(default_k_scale(2160), 167);
        assert_eq!(default_k_scale(20), 5);
        assert_eq!(default_k_scale(100), 22);
        assert_eq!(default_msrv_scales(2160), 23);
        assert_eq!(default_msrv_scales(4), 2);
    }

    fn day(prices: Vec<f64>) -> DayRecord {
        let m = prices.len() - 1;
        DayRecord {
            index: 3,
            times: uniform_times(3, m),
            clean: Some(prices.clone()),
            noisy: prices,
            truth: None,
        }
    }

    #[test]
    fn windows_share_boundaries() {
        let d = day((0..=2340).map(|k| (k as f64 * 0.37).sin()).collect());
        for j in 1..=6u32 {
            let r = window_ranges(&d, j);
            assert_eq!(r.len(), j as usize);
            assert_eq!(r[0].0, 0);
            assert_eq!(r.last().unwrap().1, 2340);
            for w in r.windows(2) {
                assert_eq!(w[0].1, w[1].0);
            }
            assert!(r.iter().all(|&(lo, hi)| hi - lo == 2340 / j as usize));
        }
    }

    #[test]
    fn half_day_naive_telescopes() {
        let d = day((0..=1000).map(|k| (k as f64 * 0.13).cos() * 0.01).collect());
        let panel = TickPanel {
            days: vec![d],
            meta: Default::default(),
        };
        let full = rv_panel(&panel, &RvConfig::naive(), 1).unwrap();
        let halves = rv_panel(&panel, &RvConfig::naive(), 2).unwrap();
        let sum: f64 = halves.values(2).iter().map(|v| v.unwrap()).sum();
        assert!((sum - full.values(1)[0].unwrap()).abs() < 1e-15);
    }

    #[test]
    fn gapped_window_is_flagged() {
        // no ticks between 0.1 and 0.9 of the day
        let mut times = vec![2.0];
        times.extend((1..=50).map(|k| 2.0 + k as f64 * 0.002));
        times.extend((0..=50).map(|k| 2.9 + k as f64 * 0.002));
        let n = times.len();
        let d = DayRecord {
            index: 3,
            times,
            clean: None,
            noisy: (0..n).map(|k| k as f64 * 1e-3).collect(),
            truth: None,
        };
        let panel = TickPanel {
            days: vec![d],
            meta: Default::default(),
        };
        let s = rv_panel(&panel, &RvConfig::tsrv(Some(10)), 4).unwrap();
        let flags: Vec<RvFlag> = s.entries.iter().map(|e| e.flag).collect();
        assert!(flags.contains(&RvFlag::Short));
        assert!(s.gaps() > 0);
        assert_eq!(s.entries.len(), 4);
    }

    proptest! {
        #[test]
        fn estimators_scale_quadratically(seed in 0u64..1000, c in prop::sample::select(vec![2.0f64, 0.5, 3.0])) {
            use rand::SeedableRng;
            use rand_distr::{Distribution, StandardNormal};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut x = 0.0;
            let prices: Vec<f64> = (0..400).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); x += 0.01 * z; x }).collect();
            let scaled: Vec<f64> = prices.iter().map(|p| c * p).collect();
            let c2 = c * c;
            let a = rv_naive(&prices).unwrap();
            prop_assert!((rv_naive(&scaled).unwrap() - c2 * a).abs() <= 1e-12 * c2 * a);
            let a = rv_tsrv(&prices, 12).unwrap();
            if !a.floored {
                prop_assert!((rv_tsrv(&scaled, 12).unwrap().value - c2 * a.value).abs() <= 1e-10 * c2 * a.value);
            }
            let a = rv_msrv(&prices, 8).unwrap();
            if !a.floored {
                prop_assert!((rv_msrv(&scaled, 8).unwrap().value - c2 * a.value).abs() <= 1e-10 * c2 * a.value);
            }
        }
    }
}
