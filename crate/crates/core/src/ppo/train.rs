use std::collections::VecDeque;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, ppo_update, Collector, TrainConfig, UpdateStats};
use crate::error::{Error, Result};
use crate::gesture::GestureAnatomy;
use crate::policy::{save_checkpoint, CheckpointMeta, ModelConfig, PolicyParams, TENSOR_NAMES};
use crate::scene::Scene;
use crate::sim::{Condition, GestureBank};
use crate::tensor::{AdamConfig, AdamState};

const ROLLING_WINDOW: usize = 100;

#[derive(Debug, Clone)]
pub struct TrainSetup {
    pub scenes: Vec<Arc<Scene>>,
    pub condition: Condition,
    pub model: ModelConfig,
    pub ppo: TrainConfig,
    pub anatomy_seed: u64,
    pub noise_sigma: f64,
    /// Where checkpoints and `metrics.jsonl` go; nothing is written if unset.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub update: u64,
    pub env_steps: u64,
    pub mean_episode_reward: f64,
    pub rolling_sr: f64,
    pub episodes: u64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub meta: CheckpointMeta,
    pub metrics: Vec<MetricsRow>,
    pub checkpoints: Vec<PathBuf>,
}

/// Alternates rollout collection and PPO updates until the configured
/// number of environment steps is reached. Every `log_every` updates, and
/// after the last one, a metrics row is emitted and (with an output
/// directory) a checkpoint is written.
pub fn train(setup: &TrainSetup, mut progress: impl FnMut(&MetricsRow)) -> Result<TrainOutcome> {
    let cfg = &setup.ppo;
    cfg.validate()?;
    setup.model.validate()?;
    if setup.scenes.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut params = PolicyParams::init(setup.model, derive_seed(cfg.seed, 0, 0))?;
    let bank = Arc::new(GestureBank::new(GestureAnatomy::from_seed(setup.anatomy_seed)));
    let mut collector = Collector::new(
        &setup.scenes,
        setup.condition,
        bank,
        setup.noise_sigma,
        cfg.num_envs,
        cfg.horizon,
        setup.model.hidden,
        cfg.seed,
    )?;
    let mut adam = AdamState::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut shuffle = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 3, 0));

    let mut metrics_file = match &setup.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(BufWriter::new(File::create(dir.join("metrics.jsonl"))?))
        }
        None => None,
    };
    let mut recent: VecDeque<(f64, bool)> = VecDeque::with_capacity(ROLLING_WINDOW);
    let mut episodes = 0u64;
    let mut metrics = Vec::new();
    let mut checkpoints = Vec::new();
    let mut meta = CheckpointMeta {
        condition: Some(setup.condition),
        anatomy_seed: setup.anatomy_seed,
        env_steps: 0,
        seed: cfg.seed,
    };
    let updates = cfg.num_updates();
    let mut acc = UpdateStats::default();
    let mut acc_n = 0usize;
    for update in 1..=updates {
        let mut buffer = collector.collect(&params)?;
        buffer.compute_gae(cfg.gamma, cfg.gae_lambda);
        for ep in &buffer.episodes {
            if recent.len() == ROLLING_WINDOW {
                recent.pop_front();
            }
            recent.push_back((ep.reward, ep.success));
            episodes += 1;
        }
        let stats = match ppo_update(&mut params, &mut adam, &buffer, cfg, &mut shuffle) {
            Ok(s) => s,
            Err(e @ Error::NonFiniteLoss(_)) => {
                if let Some(dir) = &setup.out_dir {
                    write_dump(dir, update, &params, &e)?;
                }
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        acc.policy_loss += stats.policy_loss;
        acc.value_loss += stats.value_loss;
        acc.entropy += stats.entropy;
        acc.clip_fraction += stats.clip_fraction;
        acc.approx_kl += stats.approx_kl;
        acc_n += 1;
        meta.env_steps = update * cfg.buffer as u64;
        if update % cfg.log_every as u64 == 0 || update == updates {
            let k = acc_n as f64;
            let n = recent.len().max(1) as f64;
            let row = MetricsRow {
                update,
                env_steps: meta.env_steps,
                mean_episode_reward: recent.iter().map(|r| r.0).sum::<f64>() / n,
                rolling_sr: recent.iter().filter(|r| r.1).count() as f64 / n,
                episodes,
                policy_loss: acc.policy_loss / k,
                value_loss: acc.value_loss / k,
                entropy: acc.entropy / k,
                clip_fraction: acc.clip_fraction / k,
                approx_kl: acc.approx_kl / k,
            };
            acc = UpdateStats::default();
            acc_n = 0;
            if let Some(dir) = &setup.out_dir {
                let path = dir.join(format!("checkpoint_{:08}.ckpt", meta.env_steps));
                save_checkpoint(&path, &params, &meta)?;
                checkpoints.push(path);
            }
            if let Some(f) = metrics_file.as_mut() {
                serde_json::to_writer(&mut *f, &row)?;
                f.write_all(b"\n")?;
                f.flush()?;
            }
            progress(&row);
            metrics.push(row);
        }
    }
    if let Some(dir) = &setup.out_dir {
        let path = dir.join("final.ckpt");
        save_checkpoint(&path, &params, &meta)?;
        checkpoints.push(path);
    }
    Ok(TrainOutcome {
        params,
        meta,
        metrics,
        checkpoints,
    })
}

fn write_dump(dir: &std::path::Path, update: u64, params: &PolicyParams, err: &Error) -> Result<()> {
    let norms: serde_json::Map<String, serde_json::Value> = TENSOR_NAMES
        .iter()
        .zip(params.tensors())
        .map(|(name, t)| {
            let finite = t.is_finite();
            (
                name.to_string(),
                serde_json::json!({ "norm": t.sum_sq().sqrt(), "finite": finite }),
            )
        })
        .collect();
    let dump = serde_json::json!({
        "update": update,
        "error": err.to_string(),
        "parameters": norms,
    });
    fs::write(dir.join("nonfinite_dump.json"), serde_json::to_vec_pretty(&dump)?)?;
    Ok(())
}
