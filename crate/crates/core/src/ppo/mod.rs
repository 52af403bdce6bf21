//! Proximal policy optimization for the recurrent actor-critic.

mod gae;
mod rollout;
mod train;
mod update;

pub use gae::{compute_gae, normalize_advantages};
pub use rollout::{Collector, EpisodeSummary, RolloutBuffer, Segment};
pub use train::{train, MetricsRow, TrainOutcome, TrainSetup};
pub use update::{minibatch_loss, ppo_update, LossOutput, UpdateStats};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub horizon: usize,
    pub num_envs: usize,
    pub buffer: usize,
    pub minibatch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub grad_clip_norm: f64,
    pub total_env_steps: u64,
    pub seed: u64,
    /// Updates between checkpoint and metrics rows.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            horizon: 128,
            num_envs: 10,
            buffer: 1280,
            minibatch: 128,
            epochs: 4,
            lr: 3e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.01,
            grad_clip_norm: 0.5,
            total_env_steps: 500_000,
            seed: 0,
            log_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.horizon == 0 || self.num_envs == 0 || self.epochs == 0 || self.log_every == 0 {
            return bad("horizon, num_envs, epochs and log_every must be positive".into());
        }
        if self.buffer != self.horizon * self.num_envs {
            return bad(format!(
                "buffer {} must equal horizon {} x num_envs {}",
                self.buffer, self.horizon, self.num_envs
            ));
        }
        if self.minibatch == 0 || self.buffer % self.minibatch != 0 {
            return bad(format!("minibatch {} must divide buffer {}", self.minibatch, self.buffer));
        }
        if self.minibatch % self.horizon != 0 {
            return bad(format!(
                "minibatch {} must be a whole number of {}-step segments",
                self.minibatch, self.horizon
            ));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.lr > 0.0) || !unit(self.gamma) || !unit(self.gae_lambda) || !(self.clip_eps > 0.0) {
            return bad("lr, gamma, gae_lambda or clip_eps out of range".into());
        }
        if !(self.value_coef >= 0.0 && self.entropy_coef >= 0.0 && self.grad_clip_norm > 0.0) {
            return bad("loss coefficients must be non-negative and grad_clip_norm positive".into());
        }
        Ok(())
    }

    /// Number of collect/update iterations needed to cover `total_env_steps`.
    pub fn num_updates(&self) -> u64 {
        self.total_env_steps.div_ceil(self.buffer as u64)
    }
}

/// Decorrelated child seed for stream `stream`, index `index`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(index.wrapping_mul(0xd1b5_4a32_d192_ed03));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_consistent() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!(c.buffer, 1280);
        assert_eq!(TrainConfig { total_env_steps: 1280, ..c.clone() }.num_updates(), 1);
        assert_eq!(TrainConfig { total_env_steps: 1281, ..c.clone() }.num_updates(), 2);
    }

    #[test]
    fn inconsistent_buffer_rejected() {
        let c = TrainConfig {
            buffer: 1000,
            ..TrainConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = TrainConfig {
            minibatch: 100,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
