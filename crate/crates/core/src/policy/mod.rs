//! Recurrent multimodal actor-critic.
//!
//! Vision rays, the flattened gesture matrix and a target-category embedding
//! are encoded separately, concatenated, passed through a combiner layer and
//! a GRU; linear actor and critic heads read the GRU state.

mod checkpoint;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointMeta, MAGIC};

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gesture::{GestureSequence, GESTURE_LEN};
use crate::scene::NUM_CATEGORIES;
use crate::sim::{Action, Observation, VISION_LEN};
use crate::tensor::{
    gru_batch_step, gru_sequence_backward, gru_sequence_forward, linear_batch_backward, linear_batch_forward,
    relu_backward, relu_inplace, Categorical, GruParams, GruSequence, Tensor,
};

pub const NUM_ACTIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub vision_hidden: usize,
    pub vision_out: usize,
    pub gesture_out: usize,
    pub embed_dim: usize,
    pub combiner: usize,
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vision_hidden: 256,
            vision_out: 128,
            gesture_out: 128,
            embed_dim: 32,
            combiner: 256,
            hidden: 256,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.vision_hidden,
            self.vision_out,
            self.gesture_out,
            self.embed_dim,
            self.combiner,
            self.hidden,
        ];
        if dims.contains(&0) {
            return Err(Error::Config("model widths must be positive".into()));
        }
        Ok(())
    }

    fn concat(&self) -> usize {
        self.vision_out + self.gesture_out + self.embed_dim
    }
}

/// All learnable weights. Also used as the gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub config: ModelConfig,
    pub vision1_w: Tensor,
    pub vision1_b: Tensor,
    pub vision2_w: Tensor,
    pub vision2_b: Tensor,
    pub gesture_w: Tensor,
    pub gesture_b: Tensor,
    pub embedding: Tensor,
    pub combiner_w: Tensor,
    pub combiner_b: Tensor,
    pub gru: GruParams,
    pub actor_w: Tensor,
    pub actor_b: Tensor,
    pub critic_w: Tensor,
    pub critic_b: Tensor,
}

pub const TENSOR_NAMES: [&str; 16] = [
    "vision1.w",
    "vision1.b",
    "vision2.w",
    "vision2.b",
    "gesture.w",
    "gesture.b",
    "embedding",
    "combiner.w",
    "combiner.b",
    "gru.w",
    "gru.u",
    "gru.b",
    "actor.w",
    "actor.b",
    "critic.w",
    "critic.b",
];

impl PolicyParams {
    pub fn zeros(config: ModelConfig) -> Self {
        let c = config;
        Self {
            config,
            vision1_w: Tensor::zeros(&[c.vision_hidden, VISION_LEN]),
            vision1_b: Tensor::zeros(&[c.vision_hidden]),
            vision2_w: Tensor::zeros(&[c.vision_out, c.vision_hidden]),
            vision2_b: Tensor::zeros(&[c.vision_out]),
            gesture_w: Tensor::zeros(&[c.gesture_out, GESTURE_LEN]),
            gesture_b: Tensor::zeros(&[c.gesture_out]),
            embedding: Tensor::zeros(&[NUM_CATEGORIES, c.embed_dim]),
            combiner_w: Tensor::zeros(&[c.combiner, c.concat()]),
            combiner_b: Tensor::zeros(&[c.combiner]),
            gru: GruParams::zeros(c.combiner, c.hidden),
            actor_w: Tensor::zeros(&[NUM_ACTIONS, c.hidden]),
            actor_b: Tensor::zeros(&[NUM_ACTIONS]),
            critic_w: Tensor::zeros(&[1, c.hidden]),
            critic_b: Tensor::zeros(&[1]),
        }
    }

    /// Uniform `±1/sqrt(fan_in)` weights, zero biases, actor weights scaled
    /// by 0.01.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(config);
        let c = config;
        let fill = |t: &mut Tensor, fan_in: usize, rng: &mut ChaCha8Rng| {
            *t = Tensor::uniform(t.shape(), 1.0 / (fan_in as f64).sqrt(), rng);
        };
        fill(&mut p.vision1_w, VISION_LEN, &mut rng);
        fill(&mut p.vision2_w, c.vision_hidden, &mut rng);
        fill(&mut p.gesture_w, GESTURE_LEN, &mut rng);
        fill(&mut p.embedding, NUM_CATEGORIES, &mut rng);
        fill(&mut p.combiner_w, c.concat(), &mut rng);
        p.gru = GruParams::init(c.combiner, c.hidden, &mut rng);
        fill(&mut p.actor_w, c.hidden, &mut rng);
        p.actor_w.scale(0.01);
        fill(&mut p.critic_w, c.hidden, &mut rng);
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config)
    }

    pub fn tensors(&self) -> [&Tensor; 16] {
        [
            &self.vision1_w,
            &self.vision1_b,
            &self.vision2_w,
            &self.vision2_b,
            &self.gesture_w,
            &self.gesture_b,
            &self.embedding,
            &self.combiner_w,
            &self.combiner_b,
            &self.gru.w,
            &self.gru.u,
            &self.gru.b,
            &self.actor_w,
            &self.actor_b,
            &self.critic_w,
            &self.critic_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 16] {
        [
            &mut self.vision1_w,
            &mut self.vision1_b,
            &mut self.vision2_w,
            &mut self.vision2_b,
            &mut self.gesture_w,
            &mut self.gesture_b,
            &mut self.embedding,
            &mut self.combiner_w,
            &mut self.combiner_b,
            &mut self.gru.w,
            &mut self.gru.u,
            &mut self.gru.b,
            &mut self.actor_w,
            &mut self.actor_b,
            &mut self.critic_w,
            &mut self.critic_b,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn zero_(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors().iter().map(|t| t.sum_sq()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.scale(k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

/// Recurrent state carried across the steps of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub hidden: Vec<f64>,
}

impl AgentState {
    pub fn new(hidden: usize) -> Self {
        Self {
            hidden: vec![0.0; hidden],
        }
    }

    pub fn reset(&mut self) {
        self.hidden.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Gesture-encoder outputs keyed by sequence identity. Valid only while
/// the parameters it was filled with are unchanged.
#[derive(Debug, Default)]
pub struct GestureCache {
    entries: HashMap<*const GestureSequence, (Arc<GestureSequence>, Vec<f64>)>,
}

impl GestureCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

// SAFETY: the raw pointer keys are only compared, never dereferenced; each
// key's allocation is kept alive by the Arc stored next to it.
unsafe impl Send for GestureCache {}

/// Forward activations for a batch of observations.
#[derive(Debug, Clone)]
struct Encoded {
    n: usize,
    vision: Vec<f64>,
    v1: Vec<f64>,
    v2: Vec<f64>,
    gestures: Vec<Arc<GestureSequence>>,
    gesture_idx: Vec<usize>,
    g_out: Vec<f64>,
    targets: Vec<usize>,
    concat: Vec<f64>,
    features: Vec<f64>,
}

/// Per-step action distribution and value for a batch.
#[derive(Debug, Clone)]
pub struct StepBatch {
    pub logits: Vec<f64>,
    pub values: Vec<f64>,
    pub hidden: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ActOutput {
    pub action: Action,
    pub log_prob: f64,
    pub entropy: f64,
    pub value: f64,
    pub logits: [f64; NUM_ACTIONS],
    pub state: AgentState,
}

/// Forward pass over one contiguous segment, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct SegmentForward {
    enc: Encoded,
    seq: GruSequence,
    pub logits: Vec<f64>,
    pub values: Vec<f64>,
}

impl SegmentForward {
    pub fn len(&self) -> usize {
        self.enc.n
    }

    pub fn is_empty(&self) -> bool {
        self.enc.n == 0
    }

    pub fn logits_at(&self, t: usize) -> &[f64] {
        &self.logits[t * NUM_ACTIONS..(t + 1) * NUM_ACTIONS]
    }

    pub fn final_hidden(&self) -> &[f64] {
        self.seq.last()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentEval {
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub entropies: Vec<f64>,
}

impl PolicyParams {
    fn encode(&self, obs: &[&Observation], cache: Option<&mut GestureCache>) -> Result<Encoded> {
        let c = self.config;
        let n = obs.len();
        let mut vision = Vec::with_capacity(n * VISION_LEN);
        let mut targets = Vec::with_capacity(n);
        for o in obs {
            if o.vision.len() != VISION_LEN {
                return Err(Error::ShapeMismatch(format!(
                    "vision block has {} values, expected {VISION_LEN}",
                    o.vision.len()
                )));
            }
            vision.extend_from_slice(&o.vision);
            targets.push(o.target.index());
        }
        let mut v1 = linear_batch_forward(&self.vision1_w, &self.vision1_b, &vision, n)?;
        relu_inplace(&mut v1);
        let mut v2 = linear_batch_forward(&self.vision2_w, &self.vision2_b, &v1, n)?;
        relu_inplace(&mut v2);

        let mut gestures: Vec<Arc<GestureSequence>> = Vec::new();
        let mut gesture_idx = Vec::with_capacity(n);
        for o in obs {
            let k = match gestures.iter().position(|g| Arc::ptr_eq(g, &o.gesture)) {
                Some(k) => k,
                None => {
                    gestures.push(o.gesture.clone());
                    gestures.len() - 1
                }
            };
            gesture_idx.push(k);
        }
        let mut g_out = vec![0.0; gestures.len() * c.gesture_out];
        let mut missing = Vec::new();
        match cache.as_deref() {
            Some(cache) => {
                for (k, g) in gestures.iter().enumerate() {
                    match cache.entries.get(&Arc::as_ptr(g)) {
                        Some((_, out)) => g_out[k * c.gesture_out..(k + 1) * c.gesture_out].copy_from_slice(out),
                        None => missing.push(k),
                    }
                }
            }
            None => missing.extend(0..gestures.len()),
        }
        if !missing.is_empty() {
            let mut x = Vec::with_capacity(missing.len() * GESTURE_LEN);
            for &k in &missing {
                x.extend_from_slice(gestures[k].as_slice());
            }
            let mut y = linear_batch_forward(&self.gesture_w, &self.gesture_b, &x, missing.len())?;
            relu_inplace(&mut y);
            for (row, &k) in missing.iter().enumerate() {
                let out = &y[row * c.gesture_out..(row + 1) * c.gesture_out];
                g_out[k * c.gesture_out..(k + 1) * c.gesture_out].copy_from_slice(out);
            }
            if let Some(cache) = cache {
                for (row, &k) in missing.iter().enumerate() {
                    let out = y[row * c.gesture_out..(row + 1) * c.gesture_out].to_vec();
                    cache.entries.insert(Arc::as_ptr(&gestures[k]), (gestures[k].clone(), out));
                }
            }
        }

        let width = c.concat();
        let mut concat = Vec::with_capacity(n * width);
        for t in 0..n {
            concat.extend_from_slice(&v2[t * c.vision_out..(t + 1) * c.vision_out]);
            let k = gesture_idx[t];
            concat.extend_from_slice(&g_out[k * c.gesture_out..(k + 1) * c.gesture_out]);
            let id = targets[t];
            if id >= NUM_CATEGORIES {
                return Err(Error::IndexOutOfRange {
                    index: id,
                    limit: NUM_CATEGORIES,
                });
            }
            concat.extend_from_slice(self.embedding.row(id));
        }
        let mut features = linear_batch_forward(&self.combiner_w, &self.combiner_b, &concat, n)?;
        relu_inplace(&mut features);
        Ok(Encoded {
            n,
            vision,
            v1,
            v2,
            gestures,
            gesture_idx,
            g_out,
            targets,
            concat,
            features,
        })
    }

    /// Combiner output for one observation.
    pub fn encode_observation(&self, obs: &Observation) -> Result<Vec<f64>> {
        Ok(self.encode(&[obs], None)?.features)
    }

    fn heads(&self, h: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let logits = linear_batch_forward(&self.actor_w, &self.actor_b, h, n)?;
        let values = linear_batch_forward(&self.critic_w, &self.critic_b, h, n)?;
        Ok((logits, values))
    }

    /// One step for `n` independent agents with hidden states `h: [n x d]`.
    /// Rows of `resets` zero the corresponding state first.
    pub fn step_batch(
        &self,
        obs: &[&Observation],
        h: &[f64],
        resets: &[bool],
        cache: Option<&mut GestureCache>,
    ) -> Result<StepBatch> {
        let d = self.config.hidden;
        let n = obs.len();
        if h.len() != n * d || resets.len() != n {
            return Err(Error::ShapeMismatch("hidden state batch".into()));
        }
        let enc = self.encode(obs, cache)?;
        let mut h0 = h.to_vec();
        for (t, _) in resets.iter().enumerate().filter(|(_, &r)| r) {
            h0[t * d..(t + 1) * d].iter_mut().for_each(|v| *v = 0.0);
        }
        let hidden = gru_batch_step(&self.gru, &enc.features, &h0, n)?;
        let (logits, values) = self.heads(&hidden, n)?;
        Ok(StepBatch {
            logits,
            values,
            hidden,
        })
    }

    /// Samples an action for one agent and advances its recurrent state.
    pub fn act(&self, obs: &Observation, state: &AgentState, rng: &mut impl Rng) -> Result<ActOutput> {
        let out = self.step_batch(&[obs], &state.hidden, &[false], None)?;
        let dist = Categorical::from_logits(&out.logits)?;
        let a = dist.sample(rng);
        Ok(ActOutput {
            action: Action::from_index(a)?,
            log_prob: dist.log_prob(a),
            entropy: dist.entropy(),
            value: out.values[0],
            logits: out.logits.try_into().expect("four logits"),
            state: AgentState { hidden: out.hidden },
        })
    }

    /// Unrolls a segment from `h0`, zeroing the state before every step
    /// whose `resets` flag is set.
    pub fn forward_segment(&self, obs: &[&Observation], resets: &[bool], h0: &[f64]) -> Result<SegmentForward> {
        if obs.len() != resets.len() {
            return Err(Error::ShapeMismatch("segment observations vs reset flags".into()));
        }
        let enc = self.encode(obs, None)?;
        let seq = gru_sequence_forward(&self.gru, &enc.features, h0, resets)?;
        let (logits, values) = self.heads(&seq.outputs, enc.n)?;
        Ok(SegmentForward {
            enc,
            seq,
            logits,
            values,
        })
    }

    /// Per-step log-probabilities of `actions`, values and entropies.
    pub fn evaluate(
        &self,
        obs: &[&Observation],
        actions: &[usize],
        resets: &[bool],
        h0: &[f64],
    ) -> Result<SegmentEval> {
        if actions.len() != obs.len() {
            return Err(Error::ShapeMismatch("segment observations vs actions".into()));
        }
        let fwd = self.forward_segment(obs, resets, h0)?;
        let mut out = SegmentEval {
            log_probs: Vec::with_capacity(obs.len()),
            values: fwd.values.clone(),
            entropies: Vec::with_capacity(obs.len()),
        };
        for (t, &a) in actions.iter().enumerate() {
            let d = Categorical::from_logits(fwd.logits_at(t))?;
            out.log_probs.push(d.log_prob(a));
            out.entropies.push(d.entropy());
        }
        Ok(out)
    }

    /// Accumulates into `grads` the gradient of a scalar loss whose
    /// derivatives with respect to the segment's logits and values are given.
    pub fn backward_segment(
        &self,
        fwd: &SegmentForward,
        dlogits: &[f64],
        dvalues: &[f64],
        grads: &mut PolicyParams,
    ) -> Result<()> {
        let c = self.config;
        let n = fwd.enc.n;
        let d = c.hidden;
        if dlogits.len() != n * NUM_ACTIONS || dvalues.len() != n || grads.config != c {
            return Err(Error::ShapeMismatch("segment gradient".into()));
        }
        let h = &fwd.seq.outputs;
        let mut dh = linear_batch_backward(&self.actor_w, h, dlogits, n, &mut grads.actor_w, &mut grads.actor_b, true)?
            .expect("dx requested");
        let dh_v = linear_batch_backward(&self.critic_w, h, dvalues, n, &mut grads.critic_w, &mut grads.critic_b, true)?
            .expect("dx requested");
        dh.iter_mut().zip(&dh_v).for_each(|(a, b)| *a += b);
        debug_assert_eq!(dh.len(), n * d);

        let enc = &fwd.enc;
        let (mut dfeat, _) = gru_sequence_backward(&self.gru, &fwd.seq, &enc.features, &dh, &mut grads.gru)?;
        relu_backward(&enc.features, &mut dfeat);
        let dconcat = linear_batch_backward(
            &self.combiner_w,
            &enc.concat,
            &dfeat,
            n,
            &mut grads.combiner_w,
            &mut grads.combiner_b,
            true,
        )?
        .expect("dx requested");

        let width = c.concat();
        let mut dv2 = Vec::with_capacity(n * c.vision_out);
        let mut dg = vec![0.0; enc.gestures.len() * c.gesture_out];
        for t in 0..n {
            let row = &dconcat[t * width..(t + 1) * width];
            dv2.extend_from_slice(&row[..c.vision_out]);
            let k = enc.gesture_idx[t];
            let gsrc = &row[c.vision_out..c.vision_out + c.gesture_out];
            dg[k * c.gesture_out..(k + 1) * c.gesture_out]
                .iter_mut()
                .zip(gsrc)
                .for_each(|(a, b)| *a += b);
            let e = &row[c.vision_out + c.gesture_out..];
            grads
                .embedding
                .row_mut(enc.targets[t])
                .iter_mut()
                .zip(e)
                .for_each(|(a, b)| *a += b);
        }

        relu_backward(&enc.v2, &mut dv2);
        let mut dv1 = linear_batch_backward(
            &self.vision2_w,
            &enc.v1,
            &dv2,
            n,
            &mut grads.vision2_w,
            &mut grads.vision2_b,
            true,
        )?
        .expect("dx requested");
        relu_backward(&enc.v1, &mut dv1);
        linear_batch_backward(
            &self.vision1_w,
            &enc.vision,
            &dv1,
            n,
            &mut grads.vision1_w,
            &mut grads.vision1_b,
            false,
        )?;

        relu_backward(&enc.g_out, &mut dg);
        let u = enc.gestures.len();
        let active: Vec<usize> = (0..u)
            .filter(|&k| dg[k * c.gesture_out..(k + 1) * c.gesture_out].iter().any(|&v| v != 0.0))
            .collect();
        if !active.is_empty() {
            let mut x = Vec::with_capacity(active.len() * GESTURE_LEN);
            let mut dy = Vec::with_capacity(active.len() * c.gesture_out);
            for &k in &active {
                x.extend_from_slice(enc.gestures[k].as_slice());
                dy.extend_from_slice(&dg[k * c.gesture_out..(k + 1) * c.gesture_out]);
            }
            linear_batch_backward(
                &self.gesture_w,
                &x,
                &dy,
                active.len(),
                &mut grads.gesture_w,
                &mut grads.gesture_b,
                false,
            )?;
        }
        Ok(())
    }
}
