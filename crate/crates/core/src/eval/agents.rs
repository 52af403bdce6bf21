use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::policy::{AgentState, GestureCache, PolicyParams};
use crate::scene::{eligible_goal_cells, DistanceField};
use crate::sim::{forward_offset, wrap_angle, Action, NavEnv, Observation, NUM_HEADINGS};
use crate::tensor::Categorical;

/// Anything that picks actions for an episode.
pub trait Agent {
    /// Called before the first step of every episode.
    fn reset(&mut self, episode_seed: u64);
    fn act(&mut self, env: &NavEnv, obs: &Observation) -> Result<Action>;
}

/// Samples from a trained policy.
#[derive(Debug)]
pub struct PolicyAgent<'a> {
    params: &'a PolicyParams,
    state: AgentState,
    cache: GestureCache,
    rng: ChaCha8Rng,
}

impl<'a> PolicyAgent<'a> {
    pub fn new(params: &'a PolicyParams) -> Self {
        Self {
            params,
            state: AgentState::new(params.config.hidden),
            cache: GestureCache::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl Agent for PolicyAgent<'_> {
    fn reset(&mut self, episode_seed: u64) {
        self.state.reset();
        self.cache.clear();
        self.rng = ChaCha8Rng::seed_from_u64(episode_seed);
    }

    fn act(&mut self, _env: &NavEnv, obs: &Observation) -> Result<Action> {
        let out = self
            .params
            .step_batch(&[obs], &self.state.hidden, &[false], Some(&mut self.cache))?;
        self.state.hidden = out.hidden;
        let a = Categorical::from_logits(&out.logits)?.sample(&mut self.rng);
        Action::from_index(a)
    }
}

/// Uniform over the four actions.
#[derive(Debug)]
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl Default for RandomAgent {
    fn default() -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl Agent for RandomAgent {
    fn reset(&mut self, episode_seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(episode_seed);
    }

    fn act(&mut self, _env: &NavEnv, _obs: &Observation) -> Result<Action> {
        Action::from_index(self.rng.random_range(0..4))
    }
}

/// Privileged agent: follows the shortest path to the nearest eligible
/// cell, turns toward the target and stops once the stop is eligible.
#[derive(Debug, Default)]
pub struct OracleAgent {
    field: Option<DistanceField>,
}

fn turn_toward(current: u8, wanted: u8) -> Action {
    let left = (wanted + NUM_HEADINGS - current) % NUM_HEADINGS;
    if left <= NUM_HEADINGS / 2 {
        Action::TurnLeft
    } else {
        Action::TurnRight
    }
}

fn turns_between(a: u8, b: u8) -> u8 {
    let d = (b + NUM_HEADINGS - a) % NUM_HEADINGS;
    d.min(NUM_HEADINGS - d)
}

impl Agent for OracleAgent {
    fn reset(&mut self, _episode_seed: u64) {
        self.field = None;
    }

    fn act(&mut self, env: &NavEnv, _obs: &Observation) -> Result<Action> {
        if env.stop_eligible() {
            return Ok(Action::Stop);
        }
        if self.field.is_none() {
            let goals = eligible_goal_cells(env.scene(), env.target())?;
            self.field = Some(DistanceField::from_goals(env.scene(), &goals));
        }
        let field = self.field.as_ref().expect("field set above");
        let pose = env.pose();
        match field.next_step(env.scene(), pose.cell) {
            Some(next) => {
                let step = (next.col - pose.cell.col, next.row - pose.cell.row);
                if forward_offset(pose.heading) == step {
                    return Ok(Action::MoveForward);
                }
                let wanted = (0..NUM_HEADINGS)
                    .filter(|&h| forward_offset(h) == step)
                    .min_by_key(|&h| turns_between(pose.heading, h))
                    .expect("every 8-neighbour has a heading");
                Ok(turn_toward(pose.heading, wanted))
            }
            None => {
                let p = pose.position();
                let a = env.target().anchor;
                let rel = wrap_angle((a.y - p.y).atan2(a.x - p.x) - pose.heading_rad());
                Ok(if rel >= 0.0 { Action::TurnLeft } else { Action::TurnRight })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn turn_direction_takes_short_way() {
        assert_eq!(turn_toward(0, 3), Action::TurnLeft);
        assert_eq!(turn_toward(0, 21), Action::TurnRight);
        assert_eq!(turn_toward(23, 1), Action::TurnLeft);
        assert_eq!(turns_between(1, 23), 2);
    }
}
