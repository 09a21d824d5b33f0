//! JSON experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use frl_core::ddp::SearchConfig;
use frl_core::ensemble::DEFAULT_BETA_COUNT;
use frl_core::frl::{FrlConfig, Problem};
use frl_core::ode::TimeGrid;
use frl_core::oracle::DemoSettings;
use serde::{Deserialize, Deserializer};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    CurseDemo,
    LqrFinite,
    LqrInfinite,
    Bloch,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::CurseDemo => "curse-demo",
            Experiment::LqrFinite => "lqr-finite",
            Experiment::LqrInfinite => "lqr-infinite",
            Experiment::Bloch => "bloch",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Early-stop threshold; the string `"inf"` disables early stopping.
fn eta_value<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Number(f64),
        Text(String),
    }
    match Raw::deserialize(de)? {
        Raw::Number(x) => Ok(x),
        Raw::Text(s) if s == "inf" => Ok(f64::INFINITY),
        Raw::Text(s) => Err(serde::de::Error::custom(format!(
            "eta must be a number or \"inf\", got {s:?}"
        ))),
    }
}

fn default_eta() -> f64 {
    1.0
}
fn default_n0() -> usize {
    2
}
fn default_n_max() -> usize {
    10
}
fn default_k() -> usize {
    50
}
fn default_frl_steps() -> usize {
    200
}
fn default_frl_horizon() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.4
}
fn default_damping() -> f64 {
    1.0
}
fn default_rho() -> f64 {
    DemoSettings::default().rho
}
fn default_demo_horizon() -> f64 {
    DemoSettings::default().horizon
}
fn default_demo_steps() -> usize {
    DemoSettings::default().steps
}
fn default_beta_count() -> usize {
    DEFAULT_BETA_COUNT
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrlBlock {
    #[serde(rename = "N0", default = "default_n0")]
    pub n0: usize,
    #[serde(rename = "Nmax", default = "default_n_max")]
    pub n_max: usize,
    pub epsilon: f64,
    #[serde(default = "default_eta", deserialize_with = "eta_value")]
    pub eta: f64,
    #[serde(rename = "K", default = "default_k")]
    pub k: usize,
    #[serde(default = "default_frl_steps")]
    pub steps: usize,
    #[serde(rename = "T", default = "default_frl_horizon")]
    pub horizon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub exact_row0: bool,
    #[serde(default = "default_damping")]
    pub damping: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoBlock {
    /// Inclusive `[first, last]` range of ensemble sizes or truncation orders.
    pub n_range: [usize; 2],
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(rename = "T", default = "default_demo_horizon")]
    pub horizon: f64,
    #[serde(default = "default_demo_steps")]
    pub steps: usize,
    #[serde(default)]
    pub exact_row0: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleBlock {
    #[serde(default = "default_beta_count")]
    pub beta_count: usize,
}

impl Default for EnsembleBlock {
    fn default() -> Self {
        Self {
            beta_count: DEFAULT_BETA_COUNT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub output_dir: Option<PathBuf>,
    /// When false every `wall_time_s` is written as zero so that repeated
    /// runs produce identical files.
    #[serde(default = "default_true")]
    pub record_timing: bool,
    pub frl: Option<FrlBlock>,
    pub demo: Option<DemoBlock>,
    pub ensemble: Option<EnsembleBlock>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        cfg.check_blocks()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn check_blocks(&self) -> Result<(), CliError> {
        let (needed, stray): (&str, &[(&str, bool)]) = match self.experiment {
            Experiment::LqrFinite | Experiment::Bloch => ("frl", &[("demo", self.demo.is_some())]),
            Experiment::CurseDemo | Experiment::LqrInfinite => (
                "demo",
                &[
                    ("frl", self.frl.is_some()),
                    ("ensemble", self.ensemble.is_some()),
                ],
            ),
        };
        let present = match needed {
            "frl" => self.frl.is_some(),
            _ => self.demo.is_some(),
        };
        if !present {
            return Err(CliError::Config(format!(
                "missing field `{needed}` required by experiment {}",
                self.experiment
            )));
        }
        if let Some((name, _)) = stray.iter().find(|(_, set)| *set) {
            return Err(CliError::Config(format!(
                "block `{name}` does not apply to experiment {}",
                self.experiment
            )));
        }
        Ok(())
    }

    pub fn resolve_output_dir(&self, flag: Option<&Path>) -> Result<PathBuf, CliError> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .ok_or_else(|| CliError::Config("missing field `output_dir`".into()))
    }

    pub fn ensemble_block(&self) -> EnsembleBlock {
        self.ensemble.clone().unwrap_or_default()
    }

    /// Outer-loop configuration for `lqr-finite` and `bloch`.
    pub fn frl_config(&self) -> Result<FrlConfig, CliError> {
        let block = self
            .frl
            .as_ref()
            .ok_or_else(|| CliError::Config("missing field `frl`".into()))?;
        let problem = match self.experiment {
            Experiment::Bloch => Problem::Bloch { delta: block.delta },
            _ => Problem::Lqr,
        };
        let grid =
            TimeGrid::new(0.0, block.horizon, block.steps).map_err(CliError::from_validation)?;
        let search = SearchConfig {
            damping: block.damping,
            ..SearchConfig::new(block.eta, block.k).map_err(CliError::from_validation)?
        };
        let mut cfg = FrlConfig::new(problem, block.n0, block.n_max, block.epsilon);
        cfg.search = search;
        cfg.grid = grid;
        cfg.exact_row0 = block.exact_row0;
        cfg.validate().map_err(CliError::from_validation)?;
        Ok(cfg)
    }

    /// Range and settings for `curse-demo` and `lqr-infinite`.
    pub fn demo_settings(&self) -> Result<(Vec<usize>, DemoSettings, bool), CliError> {
        let block = self
            .demo
            .as_ref()
            .ok_or_else(|| CliError::Config("missing field `demo`".into()))?;
        let [lo, hi] = block.n_range;
        if lo > hi {
            return Err(CliError::Config(format!("n_range [{lo}, {hi}] is empty")));
        }
        if !(block.rho.is_finite() && block.rho >= 0.0) {
            return Err(CliError::Config(format!(
                "rho {} is not a finite rate >= 0",
                block.rho
            )));
        }
        if !(block.horizon.is_finite() && block.horizon > 0.0) || block.steps == 0 {
            return Err(CliError::Config("T and steps must be positive".into()));
        }
        let settings = DemoSettings {
            rho: block.rho,
            horizon: block.horizon,
            steps: block.steps,
        };
        Ok(((lo..=hi).collect(), settings, block.exact_row0))
    }
}
