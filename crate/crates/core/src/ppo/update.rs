use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{normalize_advantages, RolloutBuffer, Segment, TrainConfig};
use crate::error::{Error, Result};
use crate::policy::{PolicyParams, NUM_ACTIONS};
use crate::tensor::{adam_update, AdamState, Categorical};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
    pub minibatches: usize,
}

/// Loss terms and parameter gradient for one minibatch.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub grads: PolicyParams,
}

/// Clipped-surrogate PPO loss over whole segments:
/// `-mean(min(ρA, clip(ρ)A)) + c_v mean((V - R)²) - c_e mean(H)`.
pub fn minibatch_loss(
    params: &PolicyParams,
    segments: &[&Segment],
    advantages: &[&[f64]],
    cfg: &TrainConfig,
) -> Result<LossOutput> {
    let total: usize = segments.iter().map(|s| s.len()).sum();
    if total == 0 {
        return Err(Error::EmptyInput);
    }
    let inv = 1.0 / total as f64;
    let mut grads = params.zeros_like();
    let (mut pl, mut vl, mut ent, mut clipped, mut kl) = (0.0, 0.0, 0.0, 0usize, 0.0);
    for (seg, adv) in segments.iter().zip(advantages) {
        let n = seg.len();
        if adv.len() != n || seg.returns.len() != n {
            return Err(Error::ShapeMismatch("segment advantages/returns".into()));
        }
        let fwd = params.forward_segment(&seg.obs_refs(), &seg.resets, &seg.h0)?;
        let mut dlogits = vec![0.0; n * NUM_ACTIONS];
        let mut dvalues = vec![0.0; n];
        for t in 0..n {
            let dist = Categorical::from_logits(fwd.logits_at(t))?;
            let a = seg.actions[t];
            let log_ratio = dist.log_prob(a) - seg.log_probs[t];
            let ratio = log_ratio.exp();
            let at = adv[t];
            let s1 = ratio * at;
            let s2 = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * at;
            pl -= s1.min(s2) * inv;
            if (ratio - 1.0).abs() > cfg.clip_eps {
                clipped += 1;
            }
            kl += ((ratio - 1.0) - log_ratio) * inv;
            let h = dist.entropy();
            ent += h * inv;
            let err = fwd.values[t] - seg.returns[t];
            vl += err * err * inv;
            dvalues[t] = cfg.value_coef * 2.0 * err * inv;
            // d/dlogp of -min(s1, s2): nonzero only where the unclipped term is active
            let dlogp = if s1 <= s2 { -s1 * inv } else { 0.0 };
            let glp = dist.grad_log_prob(a);
            let gh = dist.grad_entropy();
            for k in 0..NUM_ACTIONS {
                dlogits[t * NUM_ACTIONS + k] = dlogp * glp[k] - cfg.entropy_coef * inv * gh[k];
            }
        }
        params.backward_segment(&fwd, &dlogits, &dvalues, &mut grads)?;
    }
    let loss = pl + cfg.value_coef * vl - cfg.entropy_coef * ent;
    Ok(LossOutput {
        loss,
        policy_loss: pl,
        value_loss: vl,
        entropy: ent,
        clip_fraction: clipped as f64 / total as f64,
        approx_kl: kl,
        grads,
    })
}

/// Runs `epochs` passes of minibatch updates over the buffer. Minibatches
/// are whole segments, visited in a shuffled order each epoch.
pub fn ppo_update(
    params: &mut PolicyParams,
    adam: &mut AdamState,
    buffer: &RolloutBuffer,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<UpdateStats> {
    if !buffer.has_advantages {
        return Err(Error::InvalidRecord("advantages not computed".into()));
    }
    let mut flat: Vec<f64> = buffer
        .segments
        .iter()
        .flat_map(|s| s.advantages.iter().copied())
        .collect();
    normalize_advantages(&mut flat);
    let mut norm: Vec<&[f64]> = Vec::with_capacity(buffer.segments.len());
    let mut offset = 0;
    for s in &buffer.segments {
        norm.push(&flat[offset..offset + s.len()]);
        offset += s.len();
    }
    let per_mb = (cfg.minibatch / cfg.horizon).max(1);
    let mut stats = UpdateStats::default();
    let mut order: Vec<usize> = (0..buffer.segments.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(per_mb) {
            let segs: Vec<&Segment> = chunk.iter().map(|&i| &buffer.segments[i]).collect();
            let advs: Vec<&[f64]> = chunk.iter().map(|&i| norm[i]).collect();
            let mut out = minibatch_loss(params, &segs, &advs, cfg)?;
            let norm = out.grads.global_norm();
            if !out.loss.is_finite() || !norm.is_finite() {
                return Err(Error::NonFiniteLoss(format!(
                    "loss {} (policy {}, value {}, entropy {}), grad norm {norm}",
                    out.loss, out.policy_loss, out.value_loss, out.entropy
                )));
            }
            if norm > cfg.grad_clip_norm {
                out.grads.scale(cfg.grad_clip_norm / norm);
            }
            let grads = out.grads.tensors();
            adam_update(&mut params.tensors_mut(), &grads, adam)?;
            stats.policy_loss += out.policy_loss;
            stats.value_loss += out.value_loss;
            stats.entropy += out.entropy;
            stats.clip_fraction += out.clip_fraction;
            stats.approx_kl += out.approx_kl;
            stats.grad_norm += norm;
            stats.minibatches += 1;
        }
    }
    let k = stats.minibatches.max(1) as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.clip_fraction /= k;
    stats.approx_kl /= k;
    stats.grad_norm /= k;
    Ok(stats)
}
