//! GQARCH-Itô volatility toolkit: simulation, noise-robust realized variance,
//! quasi-maximum-likelihood fitting and fractional-day forecast evaluation.

pub mod error;
pub mod estimation;
pub mod forecast;
pub mod model;
pub mod pipeline;
pub mod rv;
pub mod simulate;

pub use error::{Error, Result};
pub use estimation::{fit_qmle, quasi_loglik, sandwich_se, FitOptions, FitResult, LowFreqSeries};
pub use forecast::{forecast_fraction, metric_suite, rolling_eval, EvalReport, ForecastTask, Metrics};
pub use model::{derive_coeffs, g_update, GState, GqarchCoeffs, ModelParams, ParamBox, ParamName, THETA0};
pub use rv::{rv_panel, RvConfig, RvEstimator, RvSeries};
pub use simulate::{add_noise, simulate_gqarch_ito, simulate_heston, simulate_jump_diffusion, SimConfig, TickPanel};
