//! Declarative run configuration: sectioned key=value text (TOML), parsed
//! strictly so unknown keys fail loudly instead of silently defaulting.

use crate::env::{make_gridworld, make_pointmass, make_pointmass_pixel, GoalProcess, PixelSpec, SuccessCriterion};
use crate::error::{Error, Result};
use crate::train::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Strict parse; error messages carry TOML line/column spans.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::invalid(format!("config parse: {e}")))?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// `gridworld`, `pointmass`, or `pointmass-pixel`.
    pub kind: String,
    pub width: usize,
    pub height: usize,
    pub slip_prob: f64,
    pub dim: usize,
    pub max_step: f64,
    pub noise_std: f64,
    pub image_size: usize,
    pub channels: usize,
    /// Override the per-kind default episode horizon.
    pub horizon: Option<usize>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            kind: "gridworld".into(),
            width: 5,
            height: 5,
            slip_prob: 0.0,
            dim: 2,
            max_step: 0.1,
            noise_std: 0.01,
            image_size: 48,
            channels: 1,
            horizon: None,
        }
    }
}

impl EnvConfig {
    pub fn build(&self) -> Result<GoalProcess> {
        let mut p = match self.kind.as_str() {
            "gridworld" => make_gridworld(self.width, self.height, self.slip_prob)?,
            "pointmass" => make_pointmass(self.dim, self.max_step, self.noise_std)?,
            "pointmass-pixel" => make_pointmass_pixel(
                self.dim,
                self.max_step,
                self.noise_std,
                PixelSpec {
                    h: self.image_size,
                    w: self.image_size,
                    c: self.channels,
                    radius: 4,
                },
            )?,
            other => return Err(Error::invalid(format!("unknown env kind '{other}'"))),
        };
        if let Some(h) = self.horizon {
            if h == 0 {
                return Err(Error::invalid("horizon must be positive"));
            }
            p.horizon = h;
        }
        Ok(p)
    }

    /// Named presets accepted by `--env`: `gridN` (NxN board) or the kind
    /// names themselves.
    pub fn preset(name: &str) -> Result<Self> {
        let mut cfg = EnvConfig::default();
        if let Some(n) = name.strip_prefix("grid") {
            if !n.is_empty() {
                let side: usize = n
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad grid preset '{name}'")))?;
                cfg.width = side;
                cfg.height = side;
            }
            cfg.kind = "gridworld".into();
            return Ok(cfg);
        }
        match name {
            "gridworld" => cfg.kind = "gridworld".into(),
            "pointmass" => cfg.kind = "pointmass".into(),
            "pointmass-pixel" => cfg.kind = "pointmass-pixel".into(),
            other => return Err(Error::invalid(format!("unknown env preset '{other}'"))),
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// `uniform` or `reacher` (scripted goal-reacher with epsilon-random
    /// actions; epsilon 1 is the uniform mixture).
    pub behavior: String,
    pub epsilon: f64,
    pub num_transitions: usize,
    pub seed: u64,
    pub path: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            behavior: "uniform".into(),
            epsilon: 0.3,
            num_transitions: 250_000,
            seed: 0,
            path: None,
        }
    }
}

impl DataConfig {
    pub fn behavior(&self) -> Result<crate::dataset::Behavior> {
        match self.behavior.as_str() {
            "uniform" => Ok(crate::dataset::Behavior::UniformRandom),
            "reacher" => Ok(crate::dataset::Behavior::ScriptedGoalReacher {
                epsilon: self.epsilon,
            }),
            other => Err(Error::invalid(format!("unknown behavior '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub num_goals: usize,
    pub horizon: Option<usize>,
    /// `exact` or `l2-ball`.
    pub criterion: String,
    pub radius: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            num_goals: 50,
            horizon: None,
            criterion: "default".into(),
            radius: 0.05,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn criterion(&self, process: &GoalProcess) -> Result<SuccessCriterion> {
        match self.criterion.as_str() {
            "default" => Ok(process.success),
            "exact" => Ok(SuccessCriterion::ExactMatch),
            "l2-ball" => Ok(SuccessCriterion::L2Ball {
                radius: self.radius,
            }),
            other => Err(Error::invalid(format!("unknown criterion '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_match_reference_values() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg.train.batch_size, 2048);
        assert_eq!(cfg.train.total_steps, 300_000);
        assert_eq!(cfg.train.epoch_len, 1000);
        assert_eq!(cfg.train.repr_dim, 16);
        assert_eq!(cfg.train.lr, 3e-4);
        assert_eq!(cfg.train.gamma, 0.99);
        assert_eq!(cfg.train.aug_prob, 0.5);
        assert_eq!(cfg.train.aug_pad, 4);
        assert_eq!(cfg.train.cold_init_range, 1e-12);
        assert_eq!((cfg.train.mlp_width, cfg.train.mlp_depth), (1024, 4));
        assert_eq!(cfg.train.policy_std, 0.15);
        assert_eq!(cfg.data.num_transitions, 250_000);
        assert_eq!(cfg.env.image_size, 48);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = RunConfig::from_toml("[train]\nbatch_size = 64\nbogus_key = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus_key"), "{msg}");
        assert!(msg.contains('3'), "location missing: {msg}");
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = RunConfig::from_toml(
            "[env]\nkind = \"pointmass\"\nmax_step = 0.05\n\n[train]\nbatch_size = 64\ncritic_mode = \"td\"\n",
        )
        .unwrap();
        assert_eq!(cfg.env.kind, "pointmass");
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.train.critic_mode, crate::train::CriticMode::Td);
        cfg.env.build().unwrap();
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_toml("[train]\ngamma = 1.5\n").is_err());
        assert!(RunConfig::from_toml("[train]\nlambda = -0.1\n").is_err());
    }

    #[test]
    fn env_presets() {
        let g9 = EnvConfig::preset("grid9").unwrap();
        assert_eq!((g9.width, g9.height), (9, 9));
        assert!(EnvConfig::preset("grid").is_ok());
        assert!(EnvConfig::preset("hexworld").is_err());
        let pm = EnvConfig::preset("pointmass-pixel").unwrap();
        let p = pm.build().unwrap();
        assert!(p.obs_space().is_image());
    }
}
