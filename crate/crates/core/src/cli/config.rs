//! Experiment configuration file.
//!
//! A JSON object; every section is optional and falls back to the library
//! defaults:
//!
//! ```json
//! {
//!   "scene": { "height": 64, "width": 64, "d_min": 0.5, "d_max": 10.0, "noise": 0.02 },
//!   "model": { "input_channels": 3, "hidden": 16, "features": 8, "leaky_slope": 0.1, "head_bias": 0.0 },
//!   "depth_loss": { "variance_focus": 0.85, "output_scale": 10.0 },
//!   "schedule": { "steps": 2000, "batch_size": 4, "learning_rate": 0.05, "lr_decay": "cosine",
//!                 "seeds": [1, 2, 3, 4, 5], "eval_every": 500, "train_scenes": 64, "eval_scenes": 8, "eval_seed": 1000003 },
//!   "separation": { "r_near": 0.1, "r_far": 0.5, "pairs": 4096, "seed": 24301 },
//!   "strategies": [
//!     { "name": "baseline", "reg": { "r_p": 0.1, "strategy": { "kind": "disabled" } } },
//!     { "name": "uniform", "reg": { "r_p": 0.1, "strategy": { "kind": "uniform", "r_n": 0.5, "margin": 4.0 } } },
//!     { "name": "multi_range", "reg": { "r_p": 0.1, "strategy": { "kind": "multi_range", "ranges": [
//!         { "low": 0.5, "high": 1.0, "margin": 3.0 }, { "low": 1.0, "high": 1.5, "margin": 6.0 },
//!         { "low": 1.5, "high": 2.0, "margin": 8.0 } ] } } }
//!   ],
//!   "sweep": { "strategy": "multi_range", "n_within": [5, 10, 15, 20, 25], "n_across": [2, 4, 6, 8, 10] },
//!   "output_dir": "out"
//! }
//! ```
//!
//! Each `reg` block also accepts `n_within`, `n_across`, `loss_reduction`
//! (`"sum"` or `"mean_over_contributing"`) and `depth_loss_weight`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identify::RegConfig;
use crate::regloss::DepthLossParams;
use crate::toybench::{ModelConfig, SceneParams, Schedule, SeparationParams, TrainSetup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedStrategy {
    pub name: String,
    pub reg: RegConfig,
}

/// Sample-count sweep: the named strategy is rerun with each `n_within`
/// (keeping its `n_across`) and each `n_across` (keeping its `n_within`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub strategy: String,
    #[serde(default)]
    pub n_within: Vec<usize>,
    #[serde(default)]
    pub n_across: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scene: SceneParams,
    pub model: ModelConfig,
    pub depth_loss: DepthLossParams,
    pub schedule: Schedule,
    pub separation: SeparationParams,
    pub strategies: Vec<NamedStrategy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    pub output_dir: PathBuf,
}

pub fn standard_strategies() -> Vec<NamedStrategy> {
    vec![
        NamedStrategy {
            name: "baseline".into(),
            reg: RegConfig::disabled(),
        },
        NamedStrategy {
            name: "uniform".into(),
            reg: RegConfig::uniform(0.1, 0.5, 4.0),
        },
        NamedStrategy {
            name: "multi_range".into(),
            reg: RegConfig::default(),
        },
    ]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene: SceneParams::default(),
            model: ModelConfig::default(),
            depth_loss: DepthLossParams::default(),
            schedule: Schedule::default(),
            separation: SeparationParams::default(),
            strategies: standard_strategies(),
            sweep: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::ConfigParse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        config.validate().map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.seeds.is_empty() {
            return Err(Error::InvalidConfig("schedule.seeds is empty".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::InvalidConfig("strategies is empty".into()));
        }
        for (i, s) in self.strategies.iter().enumerate() {
            if s.name.is_empty()
                || !s
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(Error::InvalidConfig(format!(
                    "strategies[{i}].name {:?} must be non-empty [A-Za-z0-9_-]",
                    s.name
                )));
            }
            if self.strategies[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::InvalidConfig(format!(
                    "strategy name {:?} is repeated",
                    s.name
                )));
            }
            self.setup(&s.reg)
                .validate()
                .map_err(|e| Error::InvalidConfig(format!("strategies[{i}] ({}): {e}", s.name)))?;
        }
        if let Some(sweep) = &self.sweep {
            let base = self.strategy(&sweep.strategy)?;
            for &n in &sweep.n_within {
                self.setup(&base.reg.clone().with_counts(n, base.reg.n_across))
                    .validate()?;
            }
            for &n in &sweep.n_across {
                self.setup(&base.reg.clone().with_counts(base.reg.n_within, n))
                    .validate()?;
            }
        }
        Ok(())
    }

    pub fn strategy(&self, name: &str) -> Result<&NamedStrategy> {
        self.strategies
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| {
                let known: Vec<&str> = self.strategies.iter().map(|s| s.name.as_str()).collect();
                Error::InvalidConfig(format!(
                    "unknown strategy {name:?}; config defines {known:?}"
                ))
            })
    }

    pub fn setup(&self, reg: &RegConfig) -> TrainSetup {
        TrainSetup {
            scene: self.scene,
            model: self.model,
            reg: reg.clone(),
            depth_loss: self.depth_loss,
            schedule: self.schedule.clone(),
            separation: self.separation,
        }
    }
}
