use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{stream_rng, uniform_times, window_sums, DayRecord, DayTruth, PanelMeta, SimConfig, TickPanel};
use crate::error::{Error, Result};

/// `dS = r S dt + sqrt(V) S dW1`, `dV = (a - b V) dt + gamma_h sqrt(V) dW2`,
/// `corr(dW1, dW2) = rho`. Rates per day.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HestonParams {
    pub r: f64,
    pub a: f64,
    pub b: f64,
    pub gamma_h: f64,
    pub rho: f64,
    pub s0: f64,
    pub v0: f64,
}

impl Default for HestonParams {
    fn default() -> Self {
        Self {
            r: 0.02,
            a: 0.01,
            b: 0.001,
            gamma_h: 0.075,
            rho: -0.8,
            s0: 50.0,
            v0: 0.05,
        }
    }
}

impl HestonParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.r, self.a, self.b, self.gamma_h, self.rho, self.s0, self.v0]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::domain("heston parameters must be finite"));
        }
        if self.a < 0.0 || self.b < 0.0 || self.gamma_h < 0.0 {
            return Err(Error::domain("heston a, b, gamma_h must be >= 0"));
        }
        if self.rho.abs() > 1.0 {
            return Err(Error::domain("heston rho must lie in [-1, 1]"));
        }
        if self.s0 <= 0.0 || self.v0 <= 0.0 {
            return Err(Error::domain("heston s0 and v0 must be > 0"));
        }
        Ok(())
    }
}

/// Heston variance with compound-Poisson jumps `N(0, sigma_j^2)` at rate `lambda` per day.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JumpParams {
    pub heston: HestonParams,
    pub lambda: f64,
    pub sigma_j: f64,
}

impl Default for JumpParams {
    fn default() -> Self {
        Self {
            heston: HestonParams::default(),
            lambda: 1.0,
            sigma_j: 0.01,
        }
    }
}

impl JumpParams {
    pub fn validate(&self) -> Result<()> {
        self.heston.validate()?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) || !(self.sigma_j.is_finite() && self.sigma_j >= 0.0) {
            return Err(Error::domain("jump lambda and sigma_j must be finite and >= 0"));
        }
        Ok(())
    }
}

pub fn simulate_heston(p: &HestonParams, cfg: &SimConfig) -> Result<TickPanel> {
    p.validate()?;
    run(p, 0.0, 0.0, cfg, "heston")
}

pub fn simulate_jump_diffusion(p: &JumpParams, cfg: &SimConfig) -> Result<TickPanel> {
    p.validate()?;
    run(&p.heston, p.lambda, p.sigma_j, cfg, "jump-diffusion")
}

/// Full-truncation Euler scheme. Diffusion shocks come from sub-stream 0 and
/// jump arrivals/sizes from sub-stream 1, so `lambda = 0` reproduces the
/// pure Heston path exactly.
fn run(p: &HestonParams, lambda: f64, sigma_j: f64, cfg: &SimConfig, source: &str) -> Result<TickPanel> {
    cfg.validate()?;
    let m = cfg.ticks_per_day;
    let sub = cfg.euler_substeps;
    let n_steps = cfg.steps_per_day();
    let dt = 1.0 / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let rho_c = (1.0 - p.rho * p.rho).max(0.0).sqrt();
    let jump_prob = lambda * dt;

    let mut diffusion = stream_rng(cfg.seed, 0);
    let mut jumps_rng = stream_rng(cfg.seed, 1);

    let mut x = p.s0.ln();
    let mut v = p.v0;
    let mut step_iv = vec![0.0; n_steps];
    let mut days = Vec::with_capacity(cfg.n_days);

    for index in 1..=cfg.n_days {
        let mut prices = Vec::with_capacity(m + 1);
        prices.push(x);
        let mut iv = 0.0;
        let mut n_jumps = 0u32;
        for (k, slot) in step_iv.iter_mut().enumerate() {
            let vp = v.max(0.0);
            let z1: f64 = StandardNormal.sample(&mut diffusion);
            let z2: f64 = StandardNormal.sample(&mut diffusion);
            let w2 = p.rho * z1 + rho_c * z2;
            let sv = vp.sqrt();
            *slot = vp * dt;
            iv += *slot;
            x += (p.r - 0.5 * vp) * dt + sv * sqrt_dt * z1;
            v += (p.a - p.b * vp) * dt + p.gamma_h * sv * sqrt_dt * w2;
            let u: f64 = jumps_rng.random();
            if u < jump_prob {
                let size: f64 = StandardNormal.sample(&mut jumps_rng);
                v += sigma_j * size;
                n_jumps += 1;
            }
            if (k + 1) % sub == 0 {
                prices.push(x);
            }
        }
        days.push(DayRecord {
            index,
            times: uniform_times(index, m),
            clean: Some(prices.clone()),
            noisy: prices,
            truth: Some(DayTruth {
                iv,
                frac_iv: window_sums(&step_iv),
                jumps: n_jumps,
            }),
        });
    }

    Ok(TickPanel {
        days,
        meta: PanelMeta {
            source: source.into(),
            total_steps: (cfg.n_days * n_steps) as u64,
            ..Default::default()
        },
    })
}
