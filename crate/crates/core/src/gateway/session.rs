use std::collections::VecDeque;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::protocol::*;
use crate::error::{Error, Result};
use crate::eval::{record_for_budget, spl, success_rate, Budget, EpisodeRecord};
use crate::gesture::referencing_gesture;
use crate::policy::{AgentState, GestureCache, PolicyParams};
use crate::scene::{raycast, Scene};
use crate::sim::{
    wrap_angle, Action, Condition, EpisodeSampler, GestureBank, GestureKind, NavEnv, Observation, FOV_DEG,
    MAX_DEPTH_M, NUM_RAYS,
};
use crate::tensor::Categorical;

/// Steps an intervene command keeps the template on the gesture channel.
pub const INTERVENTION_WINDOW: u32 = 5;
pub const DEFAULT_PACE_SPS: f64 = 4.0;

/// Read-only inputs shared by every session of a server.
#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub scenes: Vec<Arc<Scene>>,
    pub params: Arc<PolicyParams>,
    pub bank: Arc<GestureBank>,
    pub condition: Condition,
    pub noise_sigma: f64,
    pub pace_sps: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Gesture {
    Point(f64),
    Intervene,
}

#[derive(Debug)]
struct Active {
    env: NavEnv,
    obs: Observation,
    state: AgentState,
    last_reward: f64,
    human: bool,
    bearing_deg: Option<f64>,
    recorded: bool,
}

/// One steering session: at most one active episode, a queue of gesture
/// commands applied at step boundaries, and tallies over finished episodes.
#[derive(Debug)]
pub struct Session {
    id: String,
    config: SessionConfig,
    sampler: EpisodeSampler,
    rng: ChaCha8Rng,
    cache: GestureCache,
    active: Option<Active>,
    pending: VecDeque<Gesture>,
    records: Vec<EpisodeRecord>,
    paused: bool,
    pace_sps: f64,
    seq: u64,
    episodes: u64,
}

impl Session {
    pub fn new(id: impl Into<String>, config: SessionConfig, index: u64) -> Result<Self> {
        let seed = crate::ppo::derive_seed(config.seed, 20, index);
        let sampler = EpisodeSampler::new(
            config.scenes.clone(),
            config.condition,
            config.bank.clone(),
            config.noise_sigma,
            seed,
        )?;
        Ok(Self {
            id: id.into(),
            pace_sps: config.pace_sps,
            config,
            sampler,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5),
            cache: GestureCache::new(),
            active: None,
            pending: VecDeque::new(),
            records: Vec::new(),
            paused: false,
            seq: 0,
            episodes: 0,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn pace_sps(&self) -> f64 {
        self.pace_sps
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn has_episode(&self) -> bool {
        self.active.is_some()
    }

    pub fn records(&self) -> &[EpisodeRecord] {
        &self.records
    }

    pub fn env(&self) -> Option<&NavEnv> {
        self.active.as_ref().map(|a| &a.env)
    }

    pub fn observation(&self) -> Option<&Observation> {
        self.active.as_ref().map(|a| &a.obs)
    }

    /// Whether the next tick would advance the simulation.
    pub fn running(&self) -> bool {
        !self.paused && self.active.as_ref().is_some_and(|a| !a.env.done())
    }

    /// Applies one client message. Control commands take effect at once;
    /// gesture commands are queued for the next step boundary.
    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        match msg {
            ClientMessage::Reset => match self.reset() {
                Ok(()) => self.update().into_iter().collect(),
                Err(_) => vec![ServerMessage::error("reset_failed")],
            },
            ClientMessage::Pause | ClientMessage::Resume => {
                self.paused = matches!(msg, ClientMessage::Pause);
                self.update().into_iter().collect()
            }
            ClientMessage::SetPace { sps } => {
                if !(sps.is_finite() && sps > 0.0 && sps <= 1000.0) {
                    return vec![ServerMessage::error("bad_message")];
                }
                self.pace_sps = sps;
                self.update().into_iter().collect()
            }
            ClientMessage::Point { bearing_deg } if !bearing_deg.is_finite() => {
                vec![ServerMessage::error("bad_message")]
            }
            ClientMessage::Point { .. } | ClientMessage::Intervene if self.active.is_none() => {
                vec![ServerMessage::error("no_active_episode")]
            }
            ClientMessage::Point { bearing_deg } => {
                self.pending.push_back(Gesture::Point(bearing_deg));
                Vec::new()
            }
            ClientMessage::Intervene => {
                self.pending.push_back(Gesture::Intervene);
                Vec::new()
            }
        }
    }

    /// Parses and applies a raw text frame.
    pub fn handle_text(&mut self, text: &str) -> Vec<ServerMessage> {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.handle(msg),
            Err(_) => vec![ServerMessage::error("bad_message")],
        }
    }

    fn reset(&mut self) -> Result<()> {
        let spec = self.sampler.sample()?;
        let (env, obs) = NavEnv::reset(spec, self.config.bank.clone())?;
        self.cache.clear();
        self.pending.clear();
        self.active = Some(Active {
            env,
            obs,
            state: AgentState::new(self.config.params.config.hidden),
            last_reward: 0.0,
            human: false,
            bearing_deg: None,
            recorded: false,
        });
        self.episodes += 1;
        Ok(())
    }

    fn apply_pending(&mut self) -> Result<()> {
        let active = self.active.as_mut().ok_or(Error::NoActiveEpisode)?;
        while let Some(g) = self.pending.pop_front() {
            match g {
                Gesture::Point(deg) => {
                    let start = active.env.spec().start;
                    let bearing = wrap_angle(deg.to_radians() - start.heading_rad());
                    let seq = referencing_gesture(
                        bearing,
                        &self.config.bank.anatomy,
                        self.rng.random(),
                        self.config.noise_sigma,
                    )?;
                    active.env.inject_reference(Arc::new(seq));
                    active.bearing_deg = Some(deg);
                }
                Gesture::Intervene => {
                    active.env.inject_intervention(INTERVENTION_WINDOW);
                }
            }
            active.human = true;
        }
        Ok(())
    }

    /// One simulation step at a step boundary; `None` when not running.
    pub fn tick(&mut self) -> Result<Option<ServerMessage>> {
        if !self.running() {
            return Ok(None);
        }
        self.apply_pending()?;
        let params = self.config.params.clone();
        let active = self.active.as_mut().expect("running implies an episode");
        let out = params.step_batch(&[&active.obs], &active.state.hidden, &[false], Some(&mut self.cache))?;
        let a = Categorical::from_logits(&out.logits)?.sample(&mut self.rng);
        active.state.hidden = out.hidden;
        let (obs, step) = active.env.step(Action::from_index(a)?)?;
        active.obs = obs;
        active.last_reward = step.reward;
        if step.done && !active.recorded {
            active.recorded = true;
            let log = active.env.episode_log(self.episodes);
            self.records.push(record_for_budget(
                &log,
                active.env.scene().scene_type(),
                Budget::Unlimited,
                None,
            ));
        }
        Ok(self.update())
    }

    pub fn tallies(&self) -> TalliesMsg {
        TalliesMsg {
            sr: success_rate(&self.records).unwrap_or(0.0),
            spl: spl(&self.records).unwrap_or(0.0),
            n: self.records.len(),
        }
    }

    /// Current state as a frame; `None` before the first reset.
    pub fn update(&mut self) -> Option<ServerMessage> {
        let active = self.active.as_ref()?;
        self.seq += 1;
        let env = &active.env;
        let scene = env.scene();
        let pose = env.pose();
        let pose_msg = |p: crate::sim::Pose| {
            let c = p.position();
            PoseMsg {
                x: c.x,
                y: c.y,
                heading_deg: p.heading_deg(),
            }
        };
        let origin = pose.position();
        let half = FOV_DEG / 2.0;
        let rays = (0..NUM_RAYS)
            .map(|k| {
                let angle_deg = pose.heading_deg() - half + FOV_DEG * k as f64 / (NUM_RAYS - 1) as f64;
                let hit = raycast(scene, origin, angle_deg.to_radians(), MAX_DEPTH_M);
                RayMsg {
                    angle_deg,
                    depth_m: hit.as_ref().map_or(MAX_DEPTH_M, |h| h.distance_m.min(MAX_DEPTH_M)),
                    category: hit
                        .and_then(|h| scene.object_at(h.cell))
                        .map(|o| o.category.index() as u32),
                }
            })
            .collect();
        let trajectory = env
            .trajectory()
            .iter()
            .map(|p| {
                let c = p.position();
                PointMsg { x: c.x, y: c.y }
            })
            .collect();
        let grid = (0..scene.rows() as i32)
            .flat_map(|r| (0..scene.cols() as i32).map(move |c| (c, r)))
            .map(|(c, r)| scene.is_blocked(crate::scene::Cell::new(c, r)) as u8)
            .collect();
        let kind = active.obs.gesture_kind;
        let human_now = active.human && kind != GestureKind::None;
        Some(ServerMessage::StateUpdate(Box::new(StateUpdate {
            seq: self.seq,
            session_id: self.id.clone(),
            paused: self.paused,
            pace_sps: self.pace_sps,
            pose: pose_msg(pose),
            anchor: pose_msg(env.spec().start),
            trajectory,
            rays,
            objects: scene
                .objects()
                .iter()
                .map(|o| ObjectMsg {
                    instance: o.instance_id,
                    category: o.category.index() as u32,
                    anchor: PointMsg {
                        x: o.anchor.x,
                        y: o.anchor.y,
                    },
                    cells: o.footprint.iter().map(|c| [c.col, c.row]).collect(),
                })
                .collect(),
            target: TargetMsg {
                category: env.spec().target_category.index() as u32,
                instance: env.spec().target_instance,
            },
            gesture_kind: kind,
            gesture: GestureMsg {
                human: human_now,
                bearing_deg: if kind == GestureKind::Referencing { active.bearing_deg } else { None },
                template: active.obs.template,
            },
            last_reward: active.last_reward,
            episode: EpisodeMsg {
                steps: env.steps(),
                stops: env.stops().len() as u32,
                done: env.done(),
                success: env.success(),
            },
            tallies: self.tallies(),
            scene: SceneMsg {
                scene_id: scene.scene_id().to_string(),
                width_m: scene.width_m(),
                height_m: scene.height_m(),
                cols: scene.cols(),
                rows: scene.rows(),
                grid,
            },
        })))
    }
}
