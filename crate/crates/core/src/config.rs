//! Flat `section.key = value` configuration files.
//!
//! Every solver parameter is settable from a config file; anything not set
//! keeps its default. The rendered form is embedded in benchmark reports so
//! a run can be reproduced from its report alone. Weight keys are factors
//! applied to sigma^2, since the working weights scale with the assumed
//! noise level.

use crate::error::{Error, Result};
use crate::noise::ImpulseKind;
use crate::nonlocal::{AggregationWeights, NonlocalConfig};
use crate::detect::{DEFAULT_CWM_DELTAS, DEFAULT_CWM_SCALE};
use crate::solver::{
    LocalConfig, SolverConfig, DEFAULT_BETA_FACTOR, DEFAULT_DELTA_SCHEDULE, DEFAULT_LAMBDA_FACTOR,
    DEFAULT_MU1_FACTOR, DEFAULT_MU2_FACTOR, DEFAULT_WMAX,
};

/// All tunable parameters in file form.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub lambda_factor: f64,
    pub beta_factor: f64,
    pub mu1_factor: f64,
    pub mu2_factor: f64,
    pub inner_iters: usize,
    pub outer_iters: usize,
    pub wmax: usize,
    pub delta_schedule: Vec<f64>,
    pub acwmf_scale: f64,
    pub acwmf_deltas: [f64; 4],
    pub local: LocalConfig,
    pub nonlocal: NonlocalConfig,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            lambda_factor: DEFAULT_LAMBDA_FACTOR,
            beta_factor: DEFAULT_BETA_FACTOR,
            mu1_factor: DEFAULT_MU1_FACTOR,
            mu2_factor: DEFAULT_MU2_FACTOR,
            inner_iters: 16,
            outer_iters: 4,
            wmax: DEFAULT_WMAX,
            delta_schedule: DEFAULT_DELTA_SCHEDULE.to_vec(),
            acwmf_scale: DEFAULT_CWM_SCALE,
            acwmf_deltas: DEFAULT_CWM_DELTAS,
            local: LocalConfig::default(),
            nonlocal: NonlocalConfig::default(),
        }
    }
}

impl Params {
    /// Parse `section.key = value` text. `#` starts a comment; blank lines
    /// are ignored; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = Params::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            p.set(key, value).map_err(|e| {
                Error::InvalidConfig(format!("line {}: {e}", lineno + 1))
            })?;
        }
        Ok(p)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn float(v: &str) -> Result<f64> {
            v.parse()
                .map_err(|_| Error::InvalidConfig(format!("bad float '{v}'")))
        }
        fn count(v: &str) -> Result<usize> {
            v.parse()
                .map_err(|_| Error::InvalidConfig(format!("bad count '{v}'")))
        }
        match key {
            "solver.lambda_factor" => self.lambda_factor = float(value)?,
            "solver.beta_factor" => self.beta_factor = float(value)?,
            "solver.mu1_factor" => self.mu1_factor = float(value)?,
            "solver.mu2_factor" => self.mu2_factor = float(value)?,
            "solver.inner_iters" => self.inner_iters = count(value)?,
            "solver.outer_iters" => self.outer_iters = count(value)?,
            "detect.wmax" => self.wmax = count(value)?,
            "detect.delta_schedule" => {
                self.delta_schedule = value
                    .split(',')
                    .map(|v| float(v.trim()))
                    .collect::<Result<Vec<_>>>()?;
            }
            "detect.acwmf_scale" => self.acwmf_scale = float(value)?,
            "detect.acwmf_deltas" => {
                let parts = value
                    .split(',')
                    .map(|v| float(v.trim()))
                    .collect::<Result<Vec<_>>>()?;
                self.acwmf_deltas = parts.try_into().map_err(|_| {
                    Error::InvalidConfig("acwmf_deltas needs exactly 4 values".to_string())
                })?;
            }
            "local.hqs_iters" => self.local.hqs_iters = count(value)?,
            "local.rho0_factor" => self.local.rho0_factor = float(value)?,
            "nonlocal.block_size" => self.nonlocal.block_size = count(value)?,
            "nonlocal.group_size" => self.nonlocal.group_size = count(value)?,
            "nonlocal.window" => self.nonlocal.window = count(value)?,
            "nonlocal.step" => self.nonlocal.step = count(value)?,
            "nonlocal.weights" => self.nonlocal.weights = AggregationWeights::parse(value)?,
            other => {
                return Err(Error::InvalidConfig(format!("unknown key '{other}'")));
            }
        }
        Ok(())
    }

    /// Render in the same format `parse` accepts.
    pub fn render(&self) -> String {
        let schedule = self
            .delta_schedule
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "solver.lambda_factor = {}\n\
             solver.beta_factor = {}\n\
             solver.mu1_factor = {}\n\
             solver.mu2_factor = {}\n\
             solver.inner_iters = {}\n\
             solver.outer_iters = {}\n\
             detect.wmax = {}\n\
             detect.delta_schedule = {}\n\
             detect.acwmf_scale = {}\n\
             detect.acwmf_deltas = {}\n\
             local.hqs_iters = {}\n\
             local.rho0_factor = {}\n\
             nonlocal.block_size = {}\n\
             nonlocal.group_size = {}\n\
             nonlocal.window = {}\n\
             nonlocal.step = {}\n\
             nonlocal.weights = {}\n",
            self.lambda_factor,
            self.beta_factor,
            self.mu1_factor,
            self.mu2_factor,
            self.inner_iters,
            self.outer_iters,
            self.wmax,
            schedule,
            self.acwmf_scale,
            self.acwmf_deltas
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(","),
            self.local.hqs_iters,
            self.local.rho0_factor,
            self.nonlocal.block_size,
            self.nonlocal.group_size,
            self.nonlocal.window,
            self.nonlocal.step,
            self.nonlocal.weights.as_str(),
        )
    }

    /// Resolve into a working solver configuration for a noise level.
    pub fn solver_config(&self, sigma: f64, kind: ImpulseKind) -> SolverConfig {
        let s2 = sigma * sigma;
        SolverConfig {
            sigma,
            kind,
            lambda: self.lambda_factor * s2,
            beta: self.beta_factor * s2,
            mu1: self.mu1_factor * s2,
            mu2: self.mu2_factor * s2,
            inner_iters: self.inner_iters,
            outer_iters: self.outer_iters,
            w_max: self.wmax,
            delta_schedule: self.delta_schedule.clone(),
            acwmf_scale: self.acwmf_scale,
            acwmf_deltas: self.acwmf_deltas,
            local: self.local,
            nonlocal: self.nonlocal.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_render_and_parse() {
        let p = Params::default();
        let rendered = p.render();
        let back = Params::parse(&rendered).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn parse_overrides_and_comments() {
        let text = "\n# tuning\nsolver.lambda_factor = 0.3  # stronger\nnonlocal.step = 6\n\
                    detect.delta_schedule = 1.0, 0.5\nnonlocal.weights = inverse_sparsity\n";
        let p = Params::parse(text).unwrap();
        assert_eq!(p.lambda_factor, 0.3);
        assert_eq!(p.nonlocal.step, 6);
        assert_eq!(p.delta_schedule, vec![1.0, 0.5]);
        assert_eq!(p.nonlocal.weights, AggregationWeights::InverseSparsity);
        // Untouched keys keep defaults.
        assert_eq!(p.beta_factor, DEFAULT_BETA_FACTOR);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(Params::parse("solver.gamma = 1").is_err());
        assert!(Params::parse("nonsense").is_err());
    }

    #[test]
    fn solver_config_scales_with_sigma_squared() {
        let p = Params::default();
        let cfg = p.solver_config(10.0, ImpulseKind::SaltPepper);
        assert!((cfg.lambda - p.lambda_factor * 100.0).abs() < 1e-12);
        assert!((cfg.beta - p.beta_factor * 100.0).abs() < 1e-12);
        cfg.validate().unwrap();
    }
}
