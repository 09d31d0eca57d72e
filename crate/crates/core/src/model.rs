//! Parameter vector, fractional-horizon coefficient mapping and the
//! conditional-variance recursion `g`.
//!
//! The daily recursion is
//!
//! ```text
//! g_n = omega_g + decay * g_{n-1/j} + beta_g * Z^2 + alpha_g * Z
//! ```
//!
//! where `Z` is the demeaned return over the previous `1/j` window and the
//! coefficients are closed-form functions of `(omega, beta, gamma, alpha)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Variance floor applied wherever a recursion or simulated spot variance
/// would otherwise leave the positive half-line.
pub const G_MIN: f64 = 1e-12;

/// Below this `|beta / j|` the exponential ratios switch to Taylor series.
pub const SERIES_CUTOFF: f64 = 1e-4;

/// Index into the 4-vector `(omega, beta, gamma, alpha)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamName {
    Omega,
    Beta,
    Gamma,
    Alpha,
}

impl ParamName {
    pub const ALL: [ParamName; 4] = [
        ParamName::Omega,
        ParamName::Beta,
        ParamName::Gamma,
        ParamName::Alpha,
    ];

    pub fn index(self) -> usize {
        match self {
            ParamName::Omega => 0,
            ParamName::Beta => 1,
            ParamName::Gamma => 2,
            ParamName::Alpha => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::Omega => "omega",
            ParamName::Beta => "beta",
            ParamName::Gamma => "gamma",
            ParamName::Alpha => "alpha",
        }
    }
}

/// Structural parameters plus drift. Rates are per day.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega: f64,
    pub beta: f64,
    pub gamma: f64,
    pub alpha: f64,
    #[serde(default)]
    pub mu: f64,
}

/// The parameter point used throughout the recovery experiments.
pub const THETA0: ModelParams = ModelParams {
    omega: 0.2,
    beta: 0.3,
    gamma: 0.4,
    alpha: 0.1,
    mu: 0.0,
};

impl ModelParams {
    pub fn new(omega: f64, beta: f64, gamma: f64, alpha: f64) -> Self {
        Self {
            omega,
            beta,
            gamma,
            alpha,
            mu: 0.0,
        }
    }

    /// Symmetric special case (`alpha = 0`).
    pub fn garch_ito(omega: f64, beta: f64, gamma: f64) -> Self {
        Self::new(omega, beta, gamma, 0.0)
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn theta(&self) -> [f64; 4] {
        [self.omega, self.beta, self.gamma, self.alpha]
    }

    pub fn from_theta(theta: [f64; 4], mu: f64) -> Self {
        Self {
            omega: theta[0],
            beta: theta[1],
            gamma: theta[2],
            alpha: theta[3],
            mu,
        }
    }

    pub fn get(&self, name: ParamName) -> f64 {
        self.theta()[name.index()]
    }

    pub fn is_finite(&self) -> bool {
        self.theta().iter().all(|v| v.is_finite()) && self.mu.is_finite()
    }

    /// Structural feasibility: `omega > 0`, `beta, gamma` in `(0, 1)`, all finite.
    pub fn check_structural(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::domain(format!("non-finite parameters {self:?}")));
        }
        if self.omega <= 0.0 {
            return Err(Error::domain(format!("omega must be > 0, got {}", self.omega)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::domain(format!("beta must lie in (0,1), got {}", self.beta)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::domain(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        Ok(())
    }

    /// Structural feasibility plus strict membership in `bx`.
    pub fn check_in(&self, bx: &ParamBox) -> Result<()> {
        self.check_structural()?;
        if !bx.contains(&self.theta()) {
            return Err(Error::domain(format!(
                "parameters {:?} outside box {:?}..{:?}",
                self.theta(),
                bx.lower,
                bx.upper
            )));
        }
        Ok(())
    }
}

/// Open box of admissible `(omega, beta, gamma, alpha)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamBox {
    pub lower: [f64; 4],
    pub upper: [f64; 4],
}

impl Default for ParamBox {
    fn default() -> Self {
        Self {
            lower: [1e-6, 1e-4, 1e-4, -2.0],
            upper: [5.0, 0.999, 0.999, 2.0],
        }
    }
}

impl ParamBox {
    pub fn new(lower: [f64; 4], upper: [f64; 4]) -> Result<Self> {
        let bx = Self { lower, upper };
        bx.validate()?;
        Ok(bx)
    }

    pub fn validate(&self) -> Result<()> {
        for k in 0..4 {
            let (l, u) = (self.lower[k], self.upper[k]);
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::config(format!(
                    "box bounds for {} must be finite with lower < upper, got ({l}, {u})",
                    ParamName::ALL[k].as_str()
                )));
            }
        }
        for k in [1, 2] {
            if self.lower[k] < 0.0 || self.upper[k] > 1.0 {
                return Err(Error::config(format!(
                    "box bounds for {} must lie inside (0,1)",
                    ParamName::ALL[k].as_str()
                )));
            }
        }
        if self.lower[0] < 0.0 {
            return Err(Error::config("omega lower bound must be >= 0"));
        }
        Ok(())
    }

    pub fn contains(&self, theta: &[f64; 4]) -> bool {
        (0..4).all(|k| theta[k] > self.lower[k] && theta[k] < self.upper[k])
    }

    pub fn center(&self) -> [f64; 4] {
        std::array::from_fn(|k| 0.5 * (self.lower[k] + self.upper[k]))
    }
}

/// Coefficients of the `1/j`-grid recursion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GqarchCoeffs {
    pub omega_g: f64,
    pub beta_g: f64,
    pub alpha_g: f64,
    pub decay: f64,
    pub horizon_j: u32,
}

impl GqarchCoeffs {
    /// Level the recursion settles at when every return is zero.
    pub fn fixed_point(&self) -> f64 {
        self.omega_g / (1.0 - self.decay)
    }

    /// One recursion step; returns the floored value and whether the floor engaged.
    #[inline]
    pub fn step(&self, g: f64, z: f64) -> (f64, bool) {
        let next = self.omega_g + self.decay * g + self.beta_g * z * z + self.alpha_g * z;
        if next >= G_MIN {
            (next, false)
        } else {
            (G_MIN, true)
        }
    }

    /// True when `alpha_g^2 <= 4 beta_g omega_g`, so that
    /// `omega_g + beta_g z^2 + alpha_g z >= 0` for every `z`.
    pub fn discriminant_ok(&self) -> bool {
        self.alpha_g * self.alpha_g <= 4.0 * self.beta_g * self.omega_g
    }
}

/// `((e^x - 1)/x, (e^x - 1 - x)/x^2)`, cancellation-safe near zero.
pub fn exp_ratios(x: f64) -> (f64, f64) {
    if x.abs() < SERIES_CUTOFF {
        let p = 1.0 + x * (1.0 / 2.0 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x * (1.0 / 120.0 + x / 720.0))));
        let q = 1.0 / 2.0
            + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x * (1.0 / 120.0 + x * (1.0 / 720.0 + x / 5040.0))));
        (p, q)
    } else {
        let em1 = x.exp_m1();
        (em1 / x, (em1 - x) / (x * x))
    }
}

pub(crate) fn check_horizon(j: u32) -> Result<()> {
    if j < 1 {
        return Err(Error::domain("horizon j must be >= 1"));
    }
    Ok(())
}

/// Maps structural parameters to the `1/j`-grid recursion coefficients.
///
/// With `x = beta / j`, `p = (e^x - 1)/x` and `q = (e^x - 1 - x)/x^2`:
/// `omega_g = p omega / j^2`, `beta_g = x ((gamma - 1) q / j + p)`,
/// `alpha_g = alpha ((gamma - 1) q / j^2 + p / j)`, `decay = (gamma + j - 1)/j`.
pub fn derive_coeffs(params: &ModelParams, j: u32) -> Result<GqarchCoeffs> {
    check_horizon(j)?;
    params.check_structural()?;
    Ok(derive_coeffs_unchecked(params, j))
}

#[inline]
pub(crate) fn derive_coeffs_unchecked(params: &ModelParams, j: u32) -> GqarchCoeffs {
    let jf = j as f64;
    let x = params.beta / jf;
    let (p, q) = exp_ratios(x);
    let gm1 = params.gamma - 1.0;
    GqarchCoeffs {
        omega_g: p * params.omega / (jf * jf),
        beta_g: x * (gm1 * q / jf + p),
        alpha_g: params.alpha * (gm1 * q / (jf * jf) + p / jf),
        // (gamma + j - 1)/j, written so that j = 1 gives gamma exactly
        decay: params.gamma + (jf - 1.0) * (1.0 - params.gamma) / jf,
        horizon_j: j,
    }
}

/// Conditional-variance state on the `1/j` grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GState {
    pub g: f64,
    pub index: u64,
    /// Cumulative number of updates where the variance floor engaged.
    pub floor_hits: u64,
}

impl GState {
    pub fn new(g: f64) -> Result<Self> {
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::domain(format!("initial g must be finite and > 0, got {g}")));
        }
        Ok(Self {
            g,
            index: 0,
            floor_hits: 0,
        })
    }
}

/// Advances the recursion by one window given the previous window's return.
pub fn g_update(state: GState, coeffs: &GqarchCoeffs, z: f64) -> Result<GState> {
    if !z.is_finite() {
        return Err(Error::domain(format!("return must be finite, got {z}")));
    }
    if !(state.g > 0.0) {
        return Err(Error::domain(format!("state g must be > 0, got {}", state.g)));
    }
    let (g, floored) = coeffs.step(state.g, z);
    Ok(GState {
        g,
        index: state.index + 1,
        floor_hits: state.floor_hits + u64::from(floored),
    })
}

/// Spot variance at the end of a `1/j` window that started at `sigma_sq`
/// and accumulated the stochastic integral `z` over the window.
pub fn propagate_spot(params: &ModelParams, sigma_sq: f64, z: f64, j: u32) -> f64 {
    let h = 1.0 / j as f64;
    sigma_sq + h * (params.omega + (params.gamma - 1.0) * sigma_sq) + params.beta * z * z + params.alpha * z
}

/// Closed form of the expected window integrated variance given the spot
/// variance at window start: `q h^2 (omega + (gamma - 1) s) + p h s`.
pub fn expected_window_iv(params: &ModelParams, sigma_sq: f64, j: u32) -> f64 {
    let h = 1.0 / j as f64;
    let (p, q) = exp_ratios(params.beta * h);
    q * h * h * (params.omega + (params.gamma - 1.0) * sigma_sq) + p * h * sigma_sq
}

/// Truncated infinite-series form of `g` on the `1/j` grid.
///
/// The spot variance starts at `sigma_sq_start`, is propagated through each
/// window return in `path`, and the series
/// `sum_{k=0}^{k_max} beta^k [omega + (gamma + j(k+2) - 1) s] h^{k+2} / (k+2)!`
/// is evaluated at the resulting spot `s`. Intended as a test oracle for the
/// closed-form recursion.
pub fn g_series_oracle(
    params: &ModelParams,
    sigma_sq_start: f64,
    path: &[f64],
    j: u32,
    k_max: u32,
) -> Result<f64> {
    check_horizon(j)?;
    if !(params.beta > 0.0 && params.beta < 1.0) {
        return Err(Error::domain("series oracle requires 0 < beta < 1"));
    }
    let spot = path
        .iter()
        .fold(sigma_sq_start, |s, &z| propagate_spot(params, s, z, j));
    let jf = j as f64;
    let h = 1.0 / jf;
    // term_k = beta^k h^{k+2} / (k+2)!
    let mut weight = h * h / 2.0;
    let mut sum = 0.0;
    for k in 0..=k_max {
        let kf = k as f64;
        sum += weight * (params.omega + (params.gamma + jf * (kf + 2.0) - 1.0) * spot);
        weight *= params.beta * h / (kf + 3.0);
    }
    Ok(sum)
}

/// Recursion initializer: mean of the first `max(5, n/10)` available values.
pub fn initial_variance(values: &[f64]) -> Option<f64> {
    let n = values.len();
    let take = (n / 10).max(5).min(n);
    if take == 0 {
        return None;
    }
    let sum: f64 = values[..take].iter().sum();
    let mean = sum / take as f64;
    Some(mean.max(G_MIN))
}
