use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{stream_rng, TickPanel, TIME_EPS};
use crate::error::{Error, Result};

/// I.i.d. Gaussian microstructure noise with standard deviation `a_noise`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    pub a_noise: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self { a_noise: 0.001 }
    }
}

/// Returns a copy of `panel` with `Y = X + eps` in the observed column.
///
/// A tick shared by two adjacent days receives a single draw. Clean prices
/// and ground truth are carried over unchanged.
pub fn add_noise(panel: &TickPanel, p: &NoiseParams, seed: u64) -> Result<TickPanel> {
    if !(p.a_noise.is_finite() && p.a_noise >= 0.0) {
        return Err(Error::domain("a_noise must be finite and >= 0"));
    }
    let normal = Normal::new(0.0, p.a_noise).map_err(|e| Error::domain(e.to_string()))?;
    let mut rng = stream_rng(seed, 2);
    let mut out = panel.clone();
    let mut carry: Option<(f64, f64)> = None;

    for day in &mut out.days {
        let clean = day
            .clean
            .as_ref()
            .ok_or_else(|| Error::domain(format!("day {} has no clean prices", day.index)))?;
        let mut noisy = Vec::with_capacity(clean.len());
        for (k, (&x, &t)) in clean.iter().zip(&day.times).enumerate() {
            let eps = match carry {
                Some((ct, ce)) if k == 0 && (ct - t).abs() < TIME_EPS => ce,
                _ => normal.sample(&mut rng),
            };
            noisy.push(x + eps);
            if k + 1 == clean.len() {
                carry = Some((t, eps));
            }
        }
        day.noisy = noisy;
    }
    out.meta.source = format!("{}+noise({})", panel.meta.source, p.a_noise);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::THETA0;
    use crate::simulate::{simulate_gqarch_ito, SimConfig};

    fn panel() -> TickPanel {
        simulate_gqarch_ito(
            &THETA0,
            &SimConfig {
                n_days: 3,
                ticks_per_day: 2160,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_noise_is_identity() {
        let p = panel();
        let n = add_noise(&p, &NoiseParams { a_noise: 0.0 }, 5).unwrap();
        for d in &n.days {
            assert_eq!(&d.noisy, d.clean.as_ref().unwrap());
        }
    }

    #[test]
    fn noise_moments_and_shared_boundary() {
        let p = panel();
        let n = add_noise(&p, &NoiseParams { a_noise: 0.001 }, 5).unwrap();
        let mut all = Vec::new();
        for d in &n.days {
            let eps: Vec<f64> = d.noisy.iter().zip(d.clean.as_ref().unwrap()).map(|(y, x)| y - x).collect();
            let k = eps.len() as f64;
            let mean = eps.iter().sum::<f64>() / k;
            let var = eps.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (k - 1.0);
            // var of sample variance ~ 2 sigma^4 / k
            let se = (2.0f64 / k).sqrt() * 1e-6;
            assert!((var - 1e-6).abs() < 3.0 * se, "{var}");
            all.extend(eps);
        }
        let k = all.len() as f64;
        let mean = all.iter().sum::<f64>() / k;
        assert!(mean.abs() < 3.0 * 1e-3 / k.sqrt());
        for w in n.days.windows(2) {
            assert_eq!(w[0].close_price(), w[1].open_price());
        }
        assert_eq!(p.days[0].truth, n.days[0].truth);
    }
}
