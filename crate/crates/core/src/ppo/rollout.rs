use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{compute_gae, derive_seed};
use crate::error::Result;
use crate::policy::{GestureCache, PolicyParams, NUM_ACTIONS};
use crate::scene::Scene;
use crate::sim::{Action, Condition, EpisodeSampler, GestureBank, NavEnv, Observation};
use crate::tensor::Categorical;

/// One environment's contiguous run of `horizon` transitions.
#[derive(Debug, Clone)]
pub struct Segment {
    pub env_index: usize,
    pub obs: Vec<Observation>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Transition `t` ended its episode.
    pub dones: Vec<bool>,
    /// Observation `t` starts an episode; the recurrent state is zeroed first.
    pub resets: Vec<bool>,
    /// Step index within the episode.
    pub episode_steps: Vec<u32>,
    pub h0: Vec<f64>,
    pub bootstrap: f64,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn obs_refs(&self) -> Vec<&Observation> {
        self.obs.iter().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub env_index: usize,
    pub reward: f64,
    pub success: bool,
    pub steps: u32,
}

#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub segments: Vec<Segment>,
    /// Episodes that finished during this collection.
    pub episodes: Vec<EpisodeSummary>,
    pub has_advantages: bool,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.segments.iter().map(Segment::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn compute_gae(&mut self, gamma: f64, lambda: f64) {
        for s in &mut self.segments {
            let (a, r) = compute_gae(&s.rewards, &s.values, &s.dones, s.bootstrap, gamma, lambda);
            s.advantages = a;
            s.returns = r;
        }
        self.has_advantages = true;
    }
}

struct Slot {
    sampler: EpisodeSampler,
    env: NavEnv,
    obs: Observation,
    hidden: Vec<f64>,
    fresh: bool,
    rng: ChaCha8Rng,
    reward: f64,
}

/// Drives `num_envs` environments in lockstep. Each environment owns its
/// episode sampler and action RNG, so results do not depend on how the
/// environments are scheduled.
pub struct Collector {
    slots: Vec<Slot>,
    bank: Arc<GestureBank>,
    horizon: usize,
    hidden: usize,
    cache: GestureCache,
}

impl Collector {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        scenes: &[Arc<Scene>],
        condition: Condition,
        bank: Arc<GestureBank>,
        noise_sigma: f64,
        num_envs: usize,
        horizon: usize,
        hidden: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut slots = Vec::with_capacity(num_envs);
        for i in 0..num_envs {
            let mut sampler = EpisodeSampler::new(
                scenes.to_vec(),
                condition,
                bank.clone(),
                noise_sigma,
                derive_seed(seed, 1, i as u64),
            )?;
            let (env, obs) = NavEnv::reset(sampler.sample()?, bank.clone())?;
            slots.push(Slot {
                sampler,
                env,
                obs,
                hidden: vec![0.0; hidden],
                fresh: true,
                rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, 2, i as u64)),
                reward: 0.0,
            });
        }
        Ok(Self {
            slots,
            bank,
            horizon,
            hidden,
            cache: GestureCache::new(),
        })
    }

    pub fn num_envs(&self) -> usize {
        self.slots.len()
    }

    /// Current pose and episode of every environment.
    pub fn envs(&self) -> impl Iterator<Item = &NavEnv> {
        self.slots.iter().map(|s| &s.env)
    }

    pub fn collect(&mut self, params: &PolicyParams) -> Result<RolloutBuffer> {
        let (n, h, d) = (self.slots.len(), self.horizon, self.hidden);
        self.cache.clear();
        let mut segments: Vec<Segment> = self
            .slots
            .iter()
            .enumerate()
            .map(|(i, s)| Segment {
                env_index: i,
                obs: Vec::with_capacity(h),
                actions: Vec::with_capacity(h),
                log_probs: Vec::with_capacity(h),
                values: Vec::with_capacity(h),
                rewards: Vec::with_capacity(h),
                dones: Vec::with_capacity(h),
                resets: Vec::with_capacity(h),
                episode_steps: Vec::with_capacity(h),
                h0: if s.fresh { vec![0.0; d] } else { s.hidden.clone() },
                bootstrap: 0.0,
                advantages: Vec::new(),
                returns: Vec::new(),
            })
            .collect();
        let mut episodes = Vec::new();
        let mut hidden = vec![0.0; n * d];
        for _ in 0..h {
            for (i, s) in self.slots.iter().enumerate() {
                hidden[i * d..(i + 1) * d].copy_from_slice(&s.hidden);
            }
            let resets: Vec<bool> = self.slots.iter().map(|s| s.fresh).collect();
            let out = {
                let obs: Vec<&Observation> = self.slots.iter().map(|s| &s.obs).collect();
                params.step_batch(&obs, &hidden, &resets, Some(&mut self.cache))?
            };
            for (i, s) in self.slots.iter_mut().enumerate() {
                let dist = Categorical::from_logits(&out.logits[i * NUM_ACTIONS..(i + 1) * NUM_ACTIONS])?;
                let a = dist.sample(&mut s.rng);
                let step_index = s.env.steps();
                let (next_obs, outcome) = s.env.step(Action::from_index(a)?)?;
                let seg = &mut segments[i];
                seg.obs.push(std::mem::replace(&mut s.obs, next_obs));
                seg.actions.push(a);
                seg.log_probs.push(dist.log_prob(a));
                seg.values.push(out.values[i]);
                seg.rewards.push(outcome.reward);
                seg.dones.push(outcome.done);
                seg.resets.push(s.fresh);
                seg.episode_steps.push(step_index);
                s.reward += outcome.reward;
                if outcome.done {
                    episodes.push(EpisodeSummary {
                        env_index: i,
                        reward: s.reward,
                        success: outcome.success,
                        steps: s.env.steps(),
                    });
                    let (env, obs) = NavEnv::reset(s.sampler.sample()?, self.bank.clone())?;
                    s.env = env;
                    s.obs = obs;
                    s.reward = 0.0;
                    s.fresh = true;
                    s.hidden.iter_mut().for_each(|v| *v = 0.0);
                } else {
                    s.fresh = false;
                    s.hidden.copy_from_slice(&out.hidden[i * d..(i + 1) * d]);
                }
            }
        }
        for (i, s) in self.slots.iter().enumerate() {
            hidden[i * d..(i + 1) * d].copy_from_slice(&s.hidden);
        }
        let resets: Vec<bool> = self.slots.iter().map(|s| s.fresh).collect();
        let obs: Vec<&Observation> = self.slots.iter().map(|s| &s.obs).collect();
        let tail = params.step_batch(&obs, &hidden, &resets, Some(&mut self.cache))?;
        for (i, seg) in segments.iter_mut().enumerate() {
            seg.bootstrap = tail.values[i];
        }
        Ok(RolloutBuffer {
            segments,
            episodes,
            has_advantages: false,
        })
    }
}
