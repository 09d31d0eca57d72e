//! Fractional-day variance forecasts and their out-of-sample scoring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::model::{derive_coeffs, initial_variance};
use crate::rv::{window_returns, RvSeries};
use crate::simulate::{TickPanel, MAX_HORIZON};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub mse: f64,
    pub amape: f64,
    pub ll: f64,
    pub n: usize,
}

/// MAE, MSE, AMAPE and mean squared log ratio over `(forecast, realized)` pairs.
pub fn metric_suite(pairs: &[(f64, f64)]) -> Result<Metrics> {
    if pairs.is_empty() {
        return Err(Error::domain("metric suite needs at least one pair"));
    }
    let mut m = Metrics {
        n: pairs.len(),
        ..Default::default()
    };
    for &(f, rv) in pairs {
        if !(f > 0.0 && rv > 0.0 && f.is_finite() && rv.is_finite()) {
            return Err(Error::domain(format!("forecast and realized variance must be positive, got ({f}, {rv})")));
        }
        let d = rv - f;
        m.mae += d.abs();
        m.mse += d * d;
        m.amape += ((f - rv) / (f + rv)).abs();
        m.ll += (f.ln() - rv.ln()).powi(2);
    }
    let n = pairs.len() as f64;
    m.mae /= n;
    m.mse /= n;
    m.amape /= n;
    m.ll /= n;
    Ok(m)
}

/// One-step-ahead forecast of the next `1/j` window's integrated variance.
///
/// `history` holds demeaned window returns on the `1/j` grid; the recursion
/// starts at `g_init` before the first of them.
pub fn forecast_fraction(fit: &FitResult, history: &[f64], g_init: f64, j: u32) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::domain("forecast history is empty"));
    }
    if !(g_init.is_finite() && g_init > 0.0) {
        return Err(Error::domain("initial variance must be positive"));
    }
    if !fit.converged {
        log::warn!("forecasting from a fit that did not converge");
    }
    let coeffs = derive_coeffs(&fit.params, j)?;
    Ok(history.iter().fold(g_init, |g, &z| coeffs.step(g, z).0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastTask {
    pub fit: FitResult,
    pub horizon_j: u32,
    pub in_sample_days: usize,
    pub out_sample_days: usize,
}

impl ForecastTask {
    pub fn validate(&self, available_days: usize) -> Result<()> {
        if !(1..=MAX_HORIZON).contains(&self.horizon_j) {
            return Err(Error::config(format!("horizon {} outside 1..={MAX_HORIZON}", self.horizon_j)));
        }
        if self.in_sample_days == 0 || self.out_sample_days == 0 {
            return Err(Error::config("in- and out-of-sample spans must be non-empty"));
        }
        if self.in_sample_days + self.out_sample_days > available_days {
            return Err(Error::config(format!(
                "{} + {} days requested, {available_days} available",
                self.in_sample_days, self.out_sample_days
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastPair {
    pub day: usize,
    pub window: usize,
    pub forecast: f64,
    pub rv: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub horizon_j: u32,
    pub pairs: Vec<ForecastPair>,
    pub metrics: Metrics,
    /// Out-of-sample windows dropped for lack of a realized variance.
    pub skipped: Vec<(usize, usize)>,
}

impl EvalReport {
    pub fn n_windows(&self) -> usize {
        self.pairs.len()
    }
}

/// Fixed-parameter rolling evaluation on the `1/j` grid.
///
/// The recursion is started from the leading in-sample realized variances,
/// run through the in-sample windows, and then each out-of-sample window is
/// forecast from all windows before it. Window returns are demeaned by the
/// fitted drift rescaled to the window length.
pub fn rolling_eval(task: &ForecastTask, panel: &TickPanel, rv: &RvSeries) -> Result<EvalReport> {
    task.validate(panel.n_days())?;
    let j = task.horizon_j;
    let coeffs = derive_coeffs(&task.fit.params, j)?;
    let mu_window = task.fit.mu_hat * task.fit.horizon_j as f64 / j as f64;

    let last_day = task.in_sample_days + task.out_sample_days;
    let entries = rv.horizon(j);
    let rv_of = |day: usize, window: usize| -> Option<f64> {
        entries
            .iter()
            .find(|e| e.day == day && e.window == window)
            .and_then(|e| e.rv)
    };

    let in_rv: Vec<f64> = (1..=task.in_sample_days)
        .flat_map(|d| (1..=j as usize).map(move |w| (d, w)))
        .filter_map(|(d, w)| rv_of(d, w))
        .collect();
    let mut g = initial_variance(&in_rv).ok_or_else(|| Error::domain("no in-sample realized variance at this horizon"))?;

    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for day in &panel.days[..last_day] {
        let out_of_sample = day.index > task.in_sample_days;
        for (w, z) in window_returns(day, j).into_iter().enumerate() {
            if out_of_sample {
                match rv_of(day.index, w + 1) {
                    Some(r) => pairs.push(ForecastPair {
                        day: day.index,
                        window: w + 1,
                        forecast: g,
                        rv: r,
                    }),
                    None => skipped.push((day.index, w + 1)),
                }
            }
            g = coeffs.step(g, z - mu_window).0;
        }
    }
    if pairs.is_empty() {
        return Err(Error::domain("no out-of-sample window has a realized variance"));
    }
    let metric_pairs: Vec<(f64, f64)> = pairs.iter().map(|p| (p.forecast, p.rv)).collect();
    Ok(EvalReport {
        horizon_j: j,
        metrics: metric_suite(&metric_pairs)?,
        pairs,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_examples() {
        let m = metric_suite(&[(1.0, 1.0), (0.3, 0.3)]).unwrap();
        assert_eq!((m.mae, m.mse, m.amape, m.ll), (0.0, 0.0, 0.0, 0.0));

        let e = std::f64::consts::E;
        let m = metric_suite(&[(e * 0.5, 0.5), (e * 2.0, 2.0)]).unwrap();
        assert!((m.ll - 1.0).abs() < 1e-12);
        assert!((m.amape - (e - 1.0) / (e + 1.0)).abs() < 1e-12);

        let m = metric_suite(&[(1.5, 1.0), (1.5, 2.0)]).unwrap();
        assert!((m.mae - 0.5).abs() < 1e-12);
        assert!((m.mse - 0.25).abs() < 1e-12);
        assert!((m.amape - (0.2 + 1.0 / 7.0) / 2.0).abs() < 1e-12);
        let ll = (1.5f64.ln().powi(2) + 0.75f64.ln().powi(2)) / 2.0;
        assert!((m.ll - ll).abs() < 1e-12);
        assert!((m.amape - 0.17143).abs() < 1e-5 && (m.ll - 0.12359).abs() < 1e-5);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(metric_suite(&[(0.0, 1.0)]).is_err());
        assert!(metric_suite(&[(1.0, -1.0)]).is_err());
        assert!(metric_suite(&[]).is_err());
    }

    #[test]
    fn single_pair_jensen() {
        let m = metric_suite(&[(0.7, 1.9)]).unwrap();
        assert!(m.mse >= m.mae * m.mae - 1e-15);
    }

    proptest! {
        #[test]
        fn amape_bounded_and_scale_rules(
            pairs in prop::collection::vec((1e-6f64..10.0, 1e-6f64..10.0), 1..40),
            c in 0.01f64..100.0,
        ) {
            let m = metric_suite(&pairs).unwrap();
            prop_assert!(m.amape >= 0.0 && m.amape < 1.0);
            prop_assert!(m.mae >= 0.0 && m.mse >= 0.0 && m.ll >= 0.0);
            let scaled: Vec<(f64, f64)> = pairs.iter().map(|&(f, r)| (c * f, c * r)).collect();
            let s = metric_suite(&scaled).unwrap();
            prop_assert!((s.mae - c * m.mae).abs() <= 1e-9 * (c * m.mae).max(1e-12));
            prop_assert!((s.mse - c * c * m.mse).abs() <= 1e-9 * (c * c * m.mse).max(1e-12));
            prop_assert!((s.amape - m.amape).abs() <= 1e-12);
            prop_assert!((s.ll - m.ll).abs() <= 1e-9 * m.ll.max(1e-12));
        }
    }
}
