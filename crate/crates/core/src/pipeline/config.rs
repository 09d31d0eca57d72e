use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ingest::SessionCalendar;
use crate::error::{Error, Result};
use crate::estimation::FitOptions;
use crate::model::{ModelParams, ParamBox, THETA0};
use crate::rv::RvConfig;
use crate::simulate::{HestonParams, NoiseParams, SimConfig, MAX_HORIZON};

/// Data-generating process used when no input file is given.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dgp {
    #[default]
    Gqarch,
    Heston,
    Jump,
}

impl std::str::FromStr for Dgp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gqarch" | "gqarch-ito" => Ok(Dgp::Gqarch),
            "heston" => Ok(Dgp::Heston),
            "jump" | "jump-diffusion" => Ok(Dgp::Jump),
            other => Err(Error::config(format!("unknown dgp '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JumpSettings {
    pub lambda: f64,
    pub sigma_j: f64,
}

impl Default for JumpSettings {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            sigma_j: 0.01,
        }
    }
}

/// Settings for every command. Unset fields take their defaults; CLI flags
/// override file values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub dgp: Dgp,
    /// `n_days`, `ticks_per_day`, ... for simulation; its `seed` is replaced by `seed`.
    pub sim: SimConfig,
    pub params: ModelParams,
    pub heston: HestonParams,
    pub jump: JumpSettings,
    /// Observation noise added to simulated prices; `null` disables it.
    pub noise: Option<NoiseParams>,
    /// Raw tick CSV to ingest instead of simulating.
    pub input: Option<PathBuf>,
    pub calendar: SessionCalendar,
    /// Previously written panel, RV, and fit files.
    pub panel: Option<PathBuf>,
    pub rv_file: Option<PathBuf>,
    pub fit_file: Option<PathBuf>,
    pub rv: RvConfig,
    pub bounds: ParamBox,
    pub fit: FitOptions,
    pub demean: bool,
    pub horizons: Vec<u32>,
    /// Defaults to all days but the out-of-sample ones.
    pub in_sample_days: Option<usize>,
    pub out_sample_days: usize,
    /// Re-estimate on the `1/j` grid for each horizon instead of deriving
    /// coefficients from the daily fit.
    pub refit_per_horizon: bool,
    pub replications: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            dgp: Dgp::Gqarch,
            sim: SimConfig::default(),
            params: THETA0,
            heston: HestonParams::default(),
            jump: JumpSettings::default(),
            noise: Some(NoiseParams::default()),
            input: None,
            calendar: SessionCalendar::default(),
            panel: None,
            rv_file: None,
            fit_file: None,
            rv: RvConfig::default(),
            bounds: ParamBox::default(),
            fit: FitOptions::default(),
            demean: true,
            horizons: (1..=MAX_HORIZON).collect(),
            in_sample_days: None,
            out_sample_days: 1,
            refit_per_horizon: false,
            replications: 100,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(s).map_err(|e| Error::config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parameter-recovery study: 250 days of 2160 ticks at the reference
    /// parameters, noise sd 0.001, MSRV inputs.
    pub fn recovery_preset() -> Self {
        Self::default()
    }

    /// Forecasting study: 101 days of 10-second ticks over a 6.5-hour
    /// session, fit on the first 100, score the last.
    pub fn forecast_preset(dgp: Dgp) -> Self {
        Self {
            dgp,
            sim: SimConfig {
                n_days: 101,
                ticks_per_day: 2340,
                ..Default::default()
            },
            in_sample_days: Some(100),
            out_sample_days: 1,
            replications: 30,
            ..Default::default()
        }
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::config("a seed is required for stochastic commands"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(Error::config("horizons must be non-empty"));
        }
        if let Some(bad) = self.horizons.iter().find(|j| !(1..=MAX_HORIZON).contains(*j)) {
            return Err(Error::config(format!("horizon {bad} outside 1..={MAX_HORIZON}")));
        }
        let mut sorted = self.horizons.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.horizons.len() {
            return Err(Error::config("horizons contain duplicates"));
        }
        if self.out_sample_days == 0 {
            return Err(Error::config("out_sample_days must be >= 1"));
        }
        if self.in_sample_days == Some(0) {
            return Err(Error::config("in_sample_days must be >= 1"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications must be >= 1"));
        }
        self.sim.validate()?;
        self.rv.validate().map_err(|e| Error::config(e.to_string()))?;
        self.bounds.validate()?;
        self.calendar.validate()?;
        for p in [&self.input, &self.panel, &self.rv_file, &self.fit_file].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::config(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// In-sample span for a panel with `n_days` days.
    pub fn split(&self, n_days: usize) -> Result<(usize, usize)> {
        let out = self.out_sample_days;
        let ins = self.in_sample_days.unwrap_or(n_days.saturating_sub(out));
        if ins == 0 || ins + out > n_days {
            return Err(Error::config(format!(
                "split {ins} + {out} does not fit in {n_days} days"
            )));
        }
        Ok((ins, out))
    }
}
