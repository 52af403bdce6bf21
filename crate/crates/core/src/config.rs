//! TOML run configuration.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Budget, EvalOptions};
use crate::gesture::DEFAULT_NOISE_SIGMA;
use crate::policy::ModelConfig;
use crate::ppo::TrainConfig;
use crate::scene::{generate_scene, scene_seeds, Scene, SceneGenParams, SceneType, Split};

/// Environment variable that replaces the configured training and
/// evaluation seeds.
pub const SEED_ENV: &str = "GESTNAV_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub scene_type: SceneType,
    /// Use only the first `max_scenes` seeds of a split.
    pub max_scenes: Option<usize>,
    pub params: SceneGenParams,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            scene_type: SceneType::Kitchen,
            max_scenes: None,
            params: SceneGenParams::default(),
        }
    }
}

impl SceneConfig {
    pub fn seeds(&self, split: Split) -> Vec<u64> {
        let mut seeds = scene_seeds(split);
        if let Some(n) = self.max_scenes {
            seeds.truncate(n);
        }
        seeds
    }

    pub fn generate(&self, split: Split) -> Result<Vec<Arc<Scene>>> {
        self.seeds(split)
            .into_iter()
            .map(|s| generate_scene(s, self.scene_type, &self.params).map(Arc::new))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GestureConfig {
    pub anatomy_seed: u64,
    pub noise_sigma: f64,
}

impl Default for GestureConfig {
    fn default() -> Self {
        Self {
            anatomy_seed: 0,
            noise_sigma: DEFAULT_NOISE_SIGMA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub episodes_per_scene: usize,
    pub budgets: Vec<Budget>,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes_per_scene: 250,
            budgets: Budget::STANDARD.to_vec(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub scene: SceneConfig,
    pub gesture: GestureConfig,
    pub model: ModelConfig,
    pub ppo: TrainConfig,
    pub eval: EvalConfig,
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` and applies the seed override from the environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())?;
        Ok(cfg)
    }

    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            let seed: u64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
            self.ppo.seed = seed;
            self.eval.seed = seed;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.scene.max_scenes == Some(0) {
            return Err(Error::Config("scene.max_scenes must be positive".into()));
        }
        if !(self.gesture.noise_sigma >= 0.0 && self.gesture.noise_sigma.is_finite()) {
            return Err(Error::Config("gesture.noise_sigma must be finite and non-negative".into()));
        }
        if self.eval.episodes_per_scene == 0 || self.eval.budgets.is_empty() {
            return Err(Error::Config("eval needs episodes and at least one budget".into()));
        }
        self.model.validate()?;
        self.ppo.validate()
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            episodes_per_scene: self.eval.episodes_per_scene,
            budgets: self.eval.budgets.clone(),
            seed: self.eval.seed,
            noise_sigma: self.gesture.noise_sigma,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(Config::from_toml_str("").unwrap(), Config::default());
    }

    #[test]
    fn sections_parse() {
        let cfg = Config::from_toml_str(
            r#"
[scene]
scene_type = "bedroom"
max_scenes = 5
[scene.params]
max_size_m = 5.0
[gesture]
noise_sigma = 0.1
[model]
hidden = 64
[ppo]
total_env_steps = 1280
seed = 7
[eval]
budgets = [1, "inf"]
"#,
        )
        .unwrap();
        assert_eq!(cfg.scene.scene_type, SceneType::Bedroom);
        assert_eq!(cfg.scene.seeds(Split::Train), vec![0, 1, 2, 3, 4]);
        assert_eq!(cfg.scene.params.max_size_m, 5.0);
        assert_eq!(cfg.model.hidden, 64);
        assert_eq!(cfg.ppo.seed, 7);
        assert_eq!(cfg.eval.budgets, vec![Budget::Stops(1), Budget::Unlimited]);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(Config::from_toml_str("[ppo]\nlearning_rate = 1.0").is_err());
        assert!(Config::from_toml_str("bogus = 1").is_err());
        assert!(Config::from_toml_str("[ppo]\nminibatch = 100").is_err());
        assert!(Config::from_toml_str("[scene.params]\nmax_size_m = 9.0").is_err());
    }

    #[test]
    fn seed_override() {
        let mut cfg = Config::default();
        cfg.apply_seed_override(Some("42")).unwrap();
        assert_eq!((cfg.ppo.seed, cfg.eval.seed), (42, 42));
        assert!(cfg.apply_seed_override(Some("-1")).is_err());
    }
}
