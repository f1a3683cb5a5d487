//! Settings shared by the command-line tool, loadable from TOML.
//!
//! Every key has a flag of the same name (underscores become dashes); flags
//! override the file, and the file overrides the defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::budget::{ManagerConfig, Mode, SkipPolicy, DEFAULT_ALPHA_M, DEFAULT_QUERIES_PER_BUDGET};
use crate::error::{invalid_param, Error, Result};
use crate::eval::{ExperimentConfig, VerifyConfig};
use crate::noise::{eps_from_radius, Projection, BEIJING_ORIGIN};
use crate::traces::SamplerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Privacy level ε* at distance r*; the per-meter budget is ε*/r*.
    pub eps_star: f64,
    pub r_star_m: f64,
    pub delta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub alpha_m: f64,
    /// Per-step budget; defaults to the total budget over 30.
    pub rho: Option<f64>,
    pub pr_init: f64,
    pub pr_window: usize,
    pub v_max_kmh: f64,
    pub speed_cap_kmh: f64,
    pub brief_interval_s: f64,
    pub jump_interval_s: f64,
    pub interval_noise_frac: f64,
    pub samples_per_trace: usize,
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl Default for Settings {
    fn default() -> Self {
        let sampler = SamplerConfig::default();
        Settings {
            seed: 0,
            jobs: 0,
            eps_star: std::f64::consts::LN_10,
            r_star_m: 100.0,
            delta: 0.9,
            eta: 0.9,
            gamma: 0.8,
            alpha_m: DEFAULT_ALPHA_M,
            rho: None,
            pr_init: 0.6,
            pr_window: 5,
            v_max_kmh: 0.5,
            speed_cap_kmh: 15.0,
            brief_interval_s: sampler.brief_interval,
            jump_interval_s: sampler.jump_interval,
            interval_noise_frac: sampler.interval_noise_frac,
            samples_per_trace: sampler.samples_per_trace,
            origin_lat: BEIJING_ORIGIN.0,
            origin_lon: BEIJING_ORIGIN.1,
        }
    }
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Defaults, overlaid with `path` when given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Settings::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    pub fn to_toml(&self) -> String {
        let mut s = toml::to_string(self).expect("settings serialize");
        if self.rho.is_none() {
            s.push_str(&format!("# rho = {}\n", self.rho()));
        }
        s
    }

    pub fn eps_total(&self) -> Result<f64> {
        eps_from_radius(self.eps_star, self.r_star_m)
    }

    pub fn rho(&self) -> f64 {
        self.rho
            .unwrap_or_else(|| self.eps_total().unwrap_or(f64::NAN) / DEFAULT_QUERIES_PER_BUDGET)
    }

    pub fn v_max(&self) -> f64 {
        self.v_max_kmh / 3.6
    }

    /// Manager settings with the given mode and skip choice.
    pub fn manager(&self, mode: Mode, time_skip: bool) -> Result<ManagerConfig> {
        let skip = if time_skip {
            SkipPolicy::with_time_based(self.v_max())
        } else {
            SkipPolicy::default()
        };
        let cfg = ManagerConfig {
            eps_total: self.eps_total()?,
            mode,
            eta: self.eta,
            gamma: self.gamma,
            delta: self.delta,
            pr_init: self.pr_init,
            pr_window: self.pr_window,
            skip,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn fixed_utility(&self) -> Mode {
        Mode::FixedUtility {
            alpha: self.alpha_m,
        }
    }

    pub fn fixed_rate(&self) -> Mode {
        Mode::FixedRate { rho: self.rho() }
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let exp = ExperimentConfig {
            base: self.manager(self.fixed_utility(), false)?,
            alpha: self.alpha_m,
            rho: self.rho(),
            v_max: self.v_max(),
        };
        exp.specs()?;
        Ok(exp)
    }

    pub fn verify(&self) -> Result<VerifyConfig> {
        Ok(VerifyConfig {
            experiment: self.experiment()?,
            seed: self.seed,
            ..VerifyConfig::default()
        })
    }

    pub fn sampler(&self) -> Result<SamplerConfig> {
        let cfg = SamplerConfig {
            speed_cap: self.speed_cap_kmh / 3.6,
            brief_interval: self.brief_interval_s,
            jump_interval: self.jump_interval_s,
            interval_noise_frac: self.interval_noise_frac,
            p_jump: 0.0,
            samples_per_trace: self.samples_per_trace,
        };
        cfg.validate()?;
        if cfg.samples_per_trace == 0 {
            return Err(invalid_param("samples_per_trace must be at least 1"));
        }
        Ok(cfg)
    }

    pub fn projection(&self) -> Result<Projection> {
        Projection::new(self.origin_lat, self.origin_lon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget::default_eps_total;

    #[test]
    fn defaults_match_library_defaults() {
        let s = Settings::default();
        assert!((s.eps_total().unwrap() - default_eps_total()).abs() < 1e-18);
        assert!((s.rho() - default_eps_total() / 30.0).abs() < 1e-18);
        assert!((s.v_max() - crate::budget::DEFAULT_V_MAX).abs() < 1e-15);
        let m = s.manager(s.fixed_rate(), false).unwrap();
        let d = ManagerConfig::fixed_rate(default_eps_total(), default_eps_total() / 30.0);
        assert_eq!(m.eta, d.eta);
        assert_eq!(m.gamma, d.gamma);
        assert_eq!(s.sampler().unwrap(), SamplerConfig::default());
    }

    #[test]
    fn toml_roundtrip_and_partial_files() {
        let s = Settings::default();
        assert_eq!(Settings::from_toml(&s.to_toml()).unwrap(), s);
        let partial = Settings::from_toml("eta = 0.5\nseed = 7\n").unwrap();
        assert_eq!(partial.eta, 0.5);
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.gamma, 0.8);
        assert!(Settings::from_toml("etta = 0.5").is_err());
    }
}
