use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Action, Condition, EpisodeSpec, GestureBank, NavEnv, Pose, MAX_STEPS};
use crate::error::{Error, Result};
use crate::gesture::GestureAnatomy;
use crate::scene::{CategoryId, Cell, Point, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartPose {
    pub x: f64,
    pub y: f64,
    /// Heading index in 15° steps.
    pub heading: u8,
}

impl From<Pose> for StartPose {
    fn from(p: Pose) -> Self {
        let c = p.position();
        Self {
            x: c.x,
            y: c.y,
            heading: p.heading,
        }
    }
}

impl StartPose {
    pub fn to_pose(self) -> Pose {
        Pose::new(Point::new(self.x, self.y).cell(), self.heading)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopEvent {
    /// Zero-based step index of the STOP action.
    pub step: u32,
    pub eligible: bool,
}

/// One line of an episode JSONL log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode_id: u64,
    pub scene_id: String,
    pub condition: Condition,
    pub target_category: u32,
    pub target_instance: u32,
    pub start_pose: StartPose,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub stops: Vec<StopEvent>,
    pub success: bool,
    pub steps: u32,
    pub p_len_m: f64,
    pub l_len_m: f64,
}

/// Result of re-simulating a logged action sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub rewards: Vec<f64>,
    pub trajectory: Vec<Pose>,
    pub stops: Vec<StopEvent>,
    pub success: bool,
    pub p_len_m: f64,
}

/// Re-runs the logged actions through the dynamics. Gestures do not affect
/// dynamics, so the episode is replayed under the baseline condition.
pub fn replay(scene: &Arc<Scene>, log: &EpisodeLog) -> Result<Replay> {
    if scene.scene_id() != log.scene_id {
        return Err(Error::InvalidRecord(format!(
            "log is for scene {}, got {}",
            log.scene_id,
            scene.scene_id()
        )));
    }
    let bank = Arc::new(GestureBank::new(GestureAnatomy::from_seed(0)));
    let spec = EpisodeSpec {
        scene: scene.clone(),
        start: log.start_pose.to_pose(),
        target_category: CategoryId::new(log.target_category)?,
        target_instance: log.target_instance,
        condition: Condition::Baseline,
        referencing_bearing: 0.0,
        referencing_gesture: bank.zero(),
        max_steps: MAX_STEPS,
        anatomy_seed: 0,
        style_seed: 0,
    };
    let (mut env, _) = NavEnv::reset(spec, bank)?;
    let mut rewards = Vec::with_capacity(log.actions.len());
    for &a in &log.actions {
        rewards.push(env.step(a)?.1.reward);
    }
    Ok(Replay {
        rewards,
        trajectory: env.trajectory().to_vec(),
        stops: env.stops().to_vec(),
        success: env.success(),
        p_len_m: env.path_len_m(),
    })
}

pub fn replay_rewards(scene: &Arc<Scene>, log: &EpisodeLog) -> Result<Vec<f64>> {
    Ok(replay(scene, log)?.rewards)
}

/// Top-down text map, north up: `#` blocked, `0`-`9` object categories,
/// `T` target instance, `*` visited cells, `S` start, `E` final cell.
pub fn render_text_map(scene: &Scene, log: &EpisodeLog, trajectory: &[Pose]) -> String {
    let (cols, rows) = (scene.cols(), scene.rows());
    let mut grid = vec![vec!['.'; cols]; rows];
    for (r, line) in grid.iter_mut().enumerate() {
        for (c, ch) in line.iter_mut().enumerate() {
            let cell = Cell::new(c as i32, r as i32);
            if let Some(obj) = scene.object_at(cell) {
                *ch = if obj.instance_id == log.target_instance {
                    'T'
                } else {
                    char::from_digit(obj.category.index() as u32, 10).unwrap_or('o')
                };
            } else if scene.is_blocked(cell) {
                *ch = '#';
            }
        }
    }
    let mut put = |cell: Cell, ch: char| {
        if scene.in_bounds(cell) {
            grid[cell.row as usize][cell.col as usize] = ch;
        }
    };
    for p in trajectory {
        put(p.cell, '*');
    }
    if let Some(last) = trajectory.last() {
        put(last.cell, 'E');
    }
    put(log.start_pose.to_pose().cell, 'S');
    grid.iter()
        .rev()
        .map(|line| line.iter().collect::<String>() + "\n")
        .collect()
}
