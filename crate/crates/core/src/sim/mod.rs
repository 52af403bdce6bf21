//! Navigation MDP: embodiment, dynamics, observations, rewards and
//! termination.

mod episode;
mod log;

pub use episode::{EpisodeSampler, GestureBank};
pub use log::{render_text_map, replay, replay_rewards, EpisodeLog, Replay, StartPose, StopEvent};

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gesture::GestureSequence;
use crate::scene::{
    eligible_goal_cells, line_of_sight_to_instance, raycast, shortest_path_length, CategoryId,
    Cell, ObjectInstance, Point, Scene, CELL_M, GOAL_RADIUS_M, NUM_CATEGORIES,
};

pub const NUM_HEADINGS: u8 = 24;
pub const HEADING_STEP_DEG: f64 = 15.0;
pub const NUM_RAYS: usize = 32;
pub const FOV_DEG: f64 = 90.0;
pub const MAX_DEPTH_M: f64 = 10.0;
pub const RAY_FEATURES: usize = 1 + NUM_CATEGORIES;
pub const VISION_LEN: usize = NUM_RAYS * RAY_FEATURES;
pub const MAX_STEPS: u32 = 100;

pub const REWARD_SUCCESS: f64 = 1.0;
pub const REWARD_TIME: f64 = -0.001;
pub const REWARD_COLLISION: f64 = -0.005;
pub const REWARD_BAD_STOP: f64 = -0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    MoveForward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl Action {
    pub const ALL: [Action; 4] = [
        Action::MoveForward,
        Action::TurnLeft,
        Action::TurnRight,
        Action::Stop,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or(Error::IndexOutOfRange { index: i, limit: 4 })
    }
}

/// Agent pose: a free cell center and a heading in 15° increments
/// (0 = east, counterclockwise).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub cell: Cell,
    pub heading: u8,
}

impl Pose {
    pub fn new(cell: Cell, heading: u8) -> Self {
        Self {
            cell,
            heading: heading % NUM_HEADINGS,
        }
    }

    pub fn position(&self) -> Point {
        self.cell.center()
    }

    pub fn heading_rad(&self) -> f64 {
        heading_rad(self.heading)
    }

    pub fn heading_deg(&self) -> f64 {
        self.heading as f64 * HEADING_STEP_DEG
    }
}

pub fn heading_rad(h: u8) -> f64 {
    h as f64 * HEADING_STEP_DEG.to_radians()
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Cell offset of one forward step: the nearest cell center to a 0.25 m
/// displacement, with exact half-way ties (30°, 60°, ...) resolved toward
/// the axis.
pub fn forward_offset(heading: u8) -> (i32, i32) {
    let a = heading_rad(heading);
    let snap = |v: f64| {
        if v > 0.5 + 1e-9 {
            1
        } else if v < -0.5 - 1e-9 {
            -1
        } else {
            0
        }
    };
    (snap(a.cos()), snap(a.sin()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Baseline,
    Referencing,
    Intervention,
}

impl Condition {
    pub const ALL: [Condition; 3] = [
        Condition::Baseline,
        Condition::Referencing,
        Condition::Intervention,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::Referencing => "referencing",
            Condition::Intervention => "intervention",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Condition::Baseline),
            "referencing" => Ok(Condition::Referencing),
            "intervention" => Ok(Condition::Intervention),
            other => Err(Error::Config(format!("unknown condition {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureKind {
    None,
    Referencing,
    Intervention,
}

/// Per-step percept.
#[derive(Debug, Clone)]
pub struct Observation {
    /// `NUM_RAYS x (1 + NUM_CATEGORIES)`, per ray: depth then category one-hot.
    pub vision: Vec<f64>,
    pub gesture: Arc<GestureSequence>,
    pub gesture_kind: GestureKind,
    /// Template index when `gesture_kind` is intervention.
    pub template: Option<usize>,
    pub target: CategoryId,
}

#[derive(Debug, Clone)]
pub struct EpisodeSpec {
    pub scene: Arc<Scene>,
    pub start: Pose,
    pub target_category: CategoryId,
    pub target_instance: u32,
    pub condition: Condition,
    /// Bearing of the target from the start pose, relative to the start heading.
    pub referencing_bearing: f64,
    pub referencing_gesture: Arc<GestureSequence>,
    pub max_steps: u32,
    pub anatomy_seed: u64,
    pub style_seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub success: f64,
    pub time: f64,
    pub collision: f64,
    pub bad_stop: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.success + self.time + self.collision + self.bad_stop
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub reward_terms: RewardTerms,
    pub collided: bool,
    pub stopped: bool,
    pub stop_eligible: bool,
    pub done: bool,
    pub success: bool,
}

/// Depth and category block seen from `pose`.
pub fn render_rays(scene: &Scene, pose: &Pose) -> Vec<f64> {
    let mut out = vec![0.0; VISION_LEN];
    let half = (FOV_DEG / 2.0).to_radians();
    let origin = pose.position();
    for k in 0..NUM_RAYS {
        let angle = pose.heading_rad() - half + (2.0 * half) * k as f64 / (NUM_RAYS - 1) as f64;
        let row = &mut out[k * RAY_FEATURES..(k + 1) * RAY_FEATURES];
        match raycast(scene, origin, angle, MAX_DEPTH_M) {
            Some(hit) => {
                row[0] = (hit.distance_m / MAX_DEPTH_M).clamp(0.0, 1.0);
                if let Some(obj) = scene.object_at(hit.cell) {
                    row[1 + obj.category.index()] = 1.0;
                }
            }
            None => row[0] = 1.0,
        }
    }
    out
}

fn bearing_to(pose: &Pose, target: Point) -> f64 {
    let p = pose.position();
    (target.y - p.y).atan2(target.x - p.x)
}

/// Target anchor inside the 90° field of view with clear line of sight.
pub fn target_visible(scene: &Scene, pose: &Pose, instance: &ObjectInstance) -> bool {
    let rel = wrap_angle(bearing_to(pose, instance.anchor) - pose.heading_rad());
    rel.abs() <= (FOV_DEG / 2.0).to_radians() + 1e-9
        && line_of_sight_to_instance(scene, pose.position(), instance)
}

/// Strictly more than 90° between the heading and the direction to the anchor.
pub fn intervention_due(pose: &Pose, instance: &ObjectInstance) -> bool {
    let p = pose.position();
    let (vx, vy) = (instance.anchor.x - p.x, instance.anchor.y - p.y);
    let norm = vx.hypot(vy);
    if norm == 0.0 {
        return false;
    }
    let h = pose.heading_rad();
    (h.cos() * vx + h.sin() * vy) / norm < -1e-9
}

/// Gesture for the current step under the episode's condition.
pub fn deliver_gesture(
    spec: &EpisodeSpec,
    bank: &GestureBank,
    pose: &Pose,
    instance: &ObjectInstance,
    rng: &mut impl Rng,
) -> (Arc<GestureSequence>, GestureKind, Option<usize>) {
    match spec.condition {
        Condition::Baseline => (bank.zero(), GestureKind::None, None),
        Condition::Referencing => (
            spec.referencing_gesture.clone(),
            GestureKind::Referencing,
            None,
        ),
        Condition::Intervention => {
            if intervention_due(pose, instance) {
                let idx = rng.random_range(0..bank.num_templates());
                (bank.template(idx), GestureKind::Intervention, Some(idx))
            } else {
                (bank.zero(), GestureKind::None, None)
            }
        }
    }
}

/// One navigation episode.
#[derive(Debug, Clone)]
pub struct NavEnv {
    bank: Arc<GestureBank>,
    spec: EpisodeSpec,
    instance: ObjectInstance,
    l_len_m: f64,
    pose: Pose,
    steps: u32,
    stops: Vec<StopEvent>,
    actions: Vec<Action>,
    rewards: Vec<f64>,
    trajectory: Vec<Pose>,
    collisions: u32,
    path_len_m: f64,
    done: bool,
    success: bool,
    rng: ChaCha8Rng,
    human_reference: Option<Arc<GestureSequence>>,
    human_intervention: Option<(usize, u32)>,
}

impl NavEnv {
    /// Starts an episode. The spec must name an existing target of the given
    /// category, reachable from a free start cell that is not already eligible.
    pub fn reset(spec: EpisodeSpec, bank: Arc<GestureBank>) -> Result<(Self, Observation)> {
        let scene = spec.scene.clone();
        let instance = scene
            .object(spec.target_instance)
            .cloned()
            .ok_or_else(|| Error::InvalidSpec(format!("no instance {}", spec.target_instance)))?;
        if instance.category != spec.target_category {
            return Err(Error::InvalidSpec("target category mismatch".into()));
        }
        if scene.is_blocked(spec.start.cell) || spec.start.heading >= NUM_HEADINGS {
            return Err(Error::InvalidSpec("start pose is not a free cell".into()));
        }
        let goals = eligible_goal_cells(&scene, &instance)
            .map_err(|e| Error::InvalidSpec(e.to_string()))?;
        if goals.contains(&spec.start.cell) {
            return Err(Error::InvalidSpec("start cell is already eligible".into()));
        }
        let l_len_m = shortest_path_length(&scene, spec.start.cell, &goals)
            .map_err(|_| Error::InvalidSpec("target unreachable from start".into()))?;
        let rng = ChaCha8Rng::seed_from_u64(spec.style_seed ^ 0x6465_6c69_7665_7200);
        let mut env = Self {
            bank,
            pose: spec.start,
            instance,
            l_len_m,
            steps: 0,
            stops: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            trajectory: vec![spec.start],
            collisions: 0,
            path_len_m: 0.0,
            done: false,
            success: false,
            rng,
            human_reference: None,
            human_intervention: None,
            spec,
        };
        let obs = env.observe();
        Ok((env, obs))
    }

    pub fn spec(&self) -> &EpisodeSpec {
        &self.spec
    }

    pub fn scene(&self) -> &Arc<Scene> {
        &self.spec.scene
    }

    pub fn bank(&self) -> &Arc<GestureBank> {
        &self.bank
    }

    pub fn target(&self) -> &ObjectInstance {
        &self.instance
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn stops(&self) -> &[StopEvent] {
        &self.stops
    }

    pub fn done(&self) -> bool {
        self.done
    }

    pub fn success(&self) -> bool {
        self.success
    }

    pub fn collisions(&self) -> u32 {
        self.collisions
    }

    pub fn trajectory(&self) -> &[Pose] {
        &self.trajectory
    }

    /// Translation distance so far, meters.
    pub fn path_len_m(&self) -> f64 {
        self.path_len_m
    }

    pub fn l_len_m(&self) -> f64 {
        self.l_len_m
    }

    pub fn stop_eligible(&self) -> bool {
        self.pose.position().distance(self.instance.anchor) <= GOAL_RADIUS_M + 1e-12
            && target_visible(&self.spec.scene, &self.pose, &self.instance)
    }

    /// Replaces the episode's referencing gesture from the next observation on.
    pub fn inject_reference(&mut self, gesture: Arc<GestureSequence>) {
        self.human_reference = Some(gesture);
    }

    /// Puts a uniformly drawn intervention template on the gesture channel
    /// for the next `steps` observations; returns the template index.
    pub fn inject_intervention(&mut self, steps: u32) -> usize {
        let idx = self.rng.random_range(0..self.bank.num_templates());
        self.human_intervention = Some((idx, steps));
        idx
    }

    fn observe(&mut self) -> Observation {
        let (gesture, kind, template) = if let Some((idx, left)) = self.human_intervention {
            self.human_intervention = (left > 1).then_some((idx, left - 1));
            (self.bank.template(idx), GestureKind::Intervention, Some(idx))
        } else if let Some(g) = &self.human_reference {
            (g.clone(), GestureKind::Referencing, None)
        } else {
            deliver_gesture(&self.spec, &self.bank, &self.pose, &self.instance, &mut self.rng)
        };
        Observation {
            vision: render_rays(&self.spec.scene, &self.pose),
            gesture,
            gesture_kind: kind,
            template,
            target: self.spec.target_category,
        }
    }

    pub fn step(&mut self, action: Action) -> Result<(Observation, StepOutcome)> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let mut terms = RewardTerms {
            time: REWARD_TIME,
            ..Default::default()
        };
        let mut collided = false;
        let mut stopped = false;
        let mut stop_eligible = false;
        match action {
            Action::TurnLeft => self.pose.heading = (self.pose.heading + 1) % NUM_HEADINGS,
            Action::TurnRight => {
                self.pose.heading = (self.pose.heading + NUM_HEADINGS - 1) % NUM_HEADINGS
            }
            Action::MoveForward => {
                let (dc, dr) = forward_offset(self.pose.heading);
                if crate::scene::step_allowed(&self.spec.scene, self.pose.cell, dc, dr) {
                    let from = self.pose.cell.center();
                    self.pose.cell = self.pose.cell.offset(dc, dr);
                    self.path_len_m += from.distance(self.pose.cell.center());
                } else {
                    collided = true;
                    self.collisions += 1;
                    terms.collision = REWARD_COLLISION;
                }
            }
            Action::Stop => {
                stopped = true;
                stop_eligible = self.stop_eligible();
                self.stops.push(StopEvent {
                    step: self.steps,
                    eligible: stop_eligible,
                });
                if stop_eligible {
                    self.success = true;
                    self.done = true;
                    terms.success = REWARD_SUCCESS;
                } else {
                    terms.bad_stop = REWARD_BAD_STOP;
                }
            }
        }
        self.steps += 1;
        if self.steps >= self.spec.max_steps {
            self.done = true;
        }
        let reward = terms.total();
        self.actions.push(action);
        self.rewards.push(reward);
        self.trajectory.push(self.pose);
        let obs = self.observe();
        Ok((
            obs,
            StepOutcome {
                reward,
                reward_terms: terms,
                collided,
                stopped,
                stop_eligible,
                done: self.done,
                success: self.success,
            },
        ))
    }

    pub fn episode_log(&self, episode_id: u64) -> EpisodeLog {
        EpisodeLog {
            episode_id,
            scene_id: self.spec.scene.scene_id().to_string(),
            condition: self.spec.condition,
            target_category: self.spec.target_category.index() as u32,
            target_instance: self.spec.target_instance,
            start_pose: StartPose::from(self.spec.start),
            actions: self.actions.clone(),
            rewards: self.rewards.clone(),
            stops: self.stops.clone(),
            success: self.success,
            steps: self.steps,
            p_len_m: self.path_len_m,
            l_len_m: self.l_len_m,
        }
    }
}

/// Whether `p` is within `CELL_M / 2` of a cell center (used by invariants).
pub fn is_cell_center(p: Point) -> bool {
    let fx = p.x / CELL_M - 0.5;
    let fy = p.y / CELL_M - 0.5;
    (fx - fx.round()).abs() < 1e-9 && (fy - fy.round()).abs() < 1e-9
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gesture::GestureAnatomy;
    use crate::scene::SceneType;

    fn arena_with_object(cols: usize, rows: usize, obj_cell: Cell, cat: u32) -> Arc<Scene> {
        let base = Scene::empty_room(cols, rows);
        let blocked: Vec<bool> = (0..rows as i32)
            .flat_map(|r| (0..cols as i32).map(move |c| Cell::new(c, r)))
            .map(|c| base.is_blocked(c))
            .collect();
        let obj = ObjectInstance::new(0, CategoryId::new(cat).unwrap(), vec![obj_cell]);
        Arc::new(Scene::from_grid("arena", 0, SceneType::Kitchen, cols, rows, blocked, vec![obj]).unwrap())
    }

    fn bank() -> Arc<GestureBank> {
        Arc::new(GestureBank::new(GestureAnatomy::from_seed(0)))
    }

    fn spec(scene: Arc<Scene>, start: Pose, condition: Condition) -> EpisodeSpec {
        let target = scene.objects()[0].clone();
        let b = bank();
        EpisodeSpec {
            scene,
            start,
            target_category: target.category,
            target_instance: target.instance_id,
            condition,
            referencing_bearing: 0.3,
            referencing_gesture: Arc::new(
                crate::gesture::referencing_gesture(0.3, &b.anatomy, 1, 0.05).unwrap(),
            ),
            max_steps: MAX_STEPS,
            anatomy_seed: 0,
            style_seed: 1,
        }
    }

    #[test]
    fn forward_offsets_cover_eight_directions() {
        assert_eq!(forward_offset(0), (1, 0));
        assert_eq!(forward_offset(2), (1, 0)); // 30° tie toward axis
        assert_eq!(forward_offset(3), (1, 1));
        assert_eq!(forward_offset(4), (0, 1));
        assert_eq!(forward_offset(6), (0, 1));
        assert_eq!(forward_offset(9), (-1, 1));
        assert_eq!(forward_offset(12), (-1, 0));
        assert_eq!(forward_offset(18), (0, -1));
        assert_eq!(forward_offset(21), (1, -1));
    }

    #[test]
    fn vision_shape_and_ranges() {
        let s = arena_with_object(20, 20, Cell::new(10, 10), 3);
        let v = render_rays(&s, &Pose::new(Cell::new(4, 10), 0));
        assert_eq!(v.len(), 32 * 11);
        for r in v.chunks(RAY_FEATURES) {
            assert!((0.0..=1.0).contains(&r[0]));
            let cats: f64 = r[1..].iter().sum();
            assert!(cats == 0.0 || cats == 1.0);
        }
    }

    #[test]
    fn ray_depth_and_category() {
        // object 4 cells east of the agent: entry face at 3.5 cells = 0.875 m
        let s = arena_with_object(60, 60, Cell::new(14, 30), 3);
        let pose = Pose::new(Cell::new(10, 30), 0);
        let v = render_rays(&s, &pose);
        // rays 15 and 16 straddle the heading; both hit the object
        let row = &v[15 * RAY_FEATURES..16 * RAY_FEATURES];
        assert!(row[1 + 3] == 1.0);
        // obstacle exactly 1.0 m ahead along the center: place wall and cast
        let hit = raycast(&s, pose.position(), 0.0, MAX_DEPTH_M).unwrap();
        assert!((hit.distance_m - 0.875).abs() < 1e-9);
    }

    #[test]
    fn depth_one_meter_maps_to_point_one() {
        // wall face 1.0 m east of a cell center: center at x=0.125+k*0.25, wall at col c
        let base = Scene::empty_room(60, 60);
        let mut blocked: Vec<bool> = (0..60)
            .flat_map(|r| (0..60).map(move |c| Cell::new(c, r)))
            .map(|c| base.is_blocked(c))
            .collect();
        for r in 0..60 {
            blocked[r * 60 + 14] = true; // face at x = 3.5 m
        }
        let s = Scene::from_grid("w", 0, SceneType::Kitchen, 60, 60, blocked, vec![]).unwrap();
        // agent at x = 2.5 m requires a center at 2.5: not a cell center, use
        // the raw ray directly from that point
        let hit = raycast(&s, Point::new(2.5, 7.6), 0.0, MAX_DEPTH_M).unwrap();
        assert!((hit.distance_m / MAX_DEPTH_M - 0.1).abs() < 1e-12);
    }

    #[test]
    fn no_hit_gives_full_depth() {
        let s = Arc::new(Scene::empty_room(120, 120));
        let v = render_rays(&s, &Pose::new(Cell::new(60, 60), 5));
        assert!(v.chunks(RAY_FEATURES).all(|r| r[0] == 1.0));
    }

    #[test]
    fn visibility_fov_boundary() {
        let s = arena_with_object(60, 60, Cell::new(30, 30), 0);
        let inst = &s.objects()[0];
        let ahead = Pose::new(Cell::new(26, 30), 0);
        assert!(target_visible(&s, &ahead, inst));
        let behind = Pose::new(Cell::new(34, 30), 0);
        assert!(!target_visible(&s, &behind, inst));
        // heading 3 = 45°; anchor due east is exactly at the boundary
        assert!(target_visible(&s, &Pose::new(Cell::new(26, 30), 3), inst));
        // anchor placed 2 m away at 44° / 46° off the heading
        let open = Scene::empty_room(60, 60);
        let pose = Pose::new(Cell::new(20, 30), 0);
        let at = |deg: f64| {
            let p = pose.position();
            let a = deg.to_radians();
            let anchor = Point::new(p.x + 2.0 * a.cos(), p.y + 2.0 * a.sin());
            ObjectInstance {
                instance_id: 9,
                category: CategoryId::new(0).unwrap(),
                anchor,
                footprint: vec![anchor.cell()],
            }
        };
        assert!(target_visible(&open, &pose, &at(44.0)));
        assert!(target_visible(&open, &pose, &at(-44.0)));
        assert!(!target_visible(&open, &pose, &at(46.0)));
        assert!(!target_visible(&open, &pose, &at(-46.0)));
    }

    #[test]
    fn intervention_angle_is_strict() {
        let inst = ObjectInstance::new(0, CategoryId::new(0).unwrap(), vec![Cell::new(10, 10)]);
        assert!(intervention_due(&Pose::new(Cell::new(14, 10), 0), &inst)); // behind
        assert!(!intervention_due(&Pose::new(Cell::new(6, 10), 0), &inst)); // ahead
        assert!(!intervention_due(&Pose::new(Cell::new(10, 6), 0), &inst)); // exactly 90°
    }

    #[test]
    fn step_rewards() {
        let s = arena_with_object(12, 12, Cell::new(9, 6), 1);
        let start = Pose::new(Cell::new(1, 1), 12); // facing west into the wall
        let (mut env, obs) = NavEnv::reset(spec(s.clone(), start, Condition::Baseline), bank()).unwrap();
        assert_eq!(obs.vision.len(), 32 * 11);
        assert!(obs.gesture.is_zero());

        let (_, o) = env.step(Action::MoveForward).unwrap();
        assert!(o.collided);
        assert_eq!(env.pose(), start);
        assert!((o.reward - (-0.006)).abs() < 1e-12);

        let (_, o) = env.step(Action::TurnLeft).unwrap();
        assert_eq!(env.pose().heading, 13);
        assert!((o.reward - (-0.001)).abs() < 1e-12);

        let (_, o) = env.step(Action::Stop).unwrap();
        assert!(!o.done && !o.success);
        assert!((o.reward - (-0.011)).abs() < 1e-12);
    }

    #[test]
    fn eligible_stop_succeeds() {
        let s = arena_with_object(16, 16, Cell::new(10, 8), 1);
        // 7 cells west = 1.75 m, outside the goal radius
        let (mut env, _) =
            NavEnv::reset(spec(s, Pose::new(Cell::new(3, 8), 0), Condition::Baseline), bank()).unwrap();
        env.step(Action::MoveForward).unwrap();
        let (_, o) = env.step(Action::Stop).unwrap();
        assert!(o.success && o.done && o.stop_eligible);
        assert!((o.reward - 0.999).abs() < 1e-12);
        assert!(matches!(env.step(Action::TurnLeft), Err(Error::EpisodeFinished)));
        assert!((env.path_len_m() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn episode_times_out_at_step_cap() {
        let s = arena_with_object(16, 16, Cell::new(10, 8), 1);
        let (mut env, _) =
            NavEnv::reset(spec(s, Pose::new(Cell::new(2, 2), 0), Condition::Baseline), bank()).unwrap();
        for i in 0..100 {
            let (_, o) = env.step(Action::TurnLeft).unwrap();
            assert_eq!(o.done, i == 99);
            assert!(!o.success);
        }
        assert!(env.step(Action::TurnLeft).is_err());
    }

    #[test]
    fn start_inside_goal_region_is_invalid() {
        let s = arena_with_object(16, 16, Cell::new(10, 8), 1);
        let r = NavEnv::reset(spec(s, Pose::new(Cell::new(8, 8), 0), Condition::Baseline), bank());
        assert!(matches!(r, Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn referencing_is_constant_and_intervention_uses_templates() {
        let s = arena_with_object(16, 16, Cell::new(10, 8), 1);
        let sp = spec(s.clone(), Pose::new(Cell::new(3, 8), 0), Condition::Referencing);
        let (mut env, first) = NavEnv::reset(sp.clone(), bank()).unwrap();
        let mut last = first.clone();
        for _ in 0..50 {
            last = env.step(Action::TurnLeft).unwrap().0;
        }
        assert_eq!(*first.gesture, *last.gesture);
        assert_eq!(first.gesture_kind, GestureKind::Referencing);

        // intervention: target ahead -> zero; facing away -> a template
        let b = bank();
        let sp = spec(s.clone(), Pose::new(Cell::new(3, 8), 0), Condition::Intervention);
        let (_, ahead) = NavEnv::reset(sp, b.clone()).unwrap();
        assert!(ahead.gesture.is_zero());
        let sp = spec(s, Pose::new(Cell::new(3, 8), 12), Condition::Intervention);
        let (_, away) = NavEnv::reset(sp, b.clone()).unwrap();
        let idx = away.template.unwrap();
        assert_eq!(*away.gesture, *b.template(idx));
        assert_eq!(away.gesture_kind, GestureKind::Intervention);
    }

    #[test]
    fn human_intervention_window_lasts_five_steps() {
        let s = arena_with_object(16, 16, Cell::new(10, 8), 1);
        let sp = spec(s, Pose::new(Cell::new(3, 8), 0), Condition::Baseline);
        let (mut env, _) = NavEnv::reset(sp, bank()).unwrap();
        let idx = env.inject_intervention(5);
        assert!(idx < 10);
        for _ in 0..5 {
            let (o, _) = env.step(Action::TurnLeft).unwrap();
            assert_eq!(o.gesture_kind, GestureKind::Intervention);
            assert_eq!(o.template, Some(idx));
        }
        let (o, _) = env.step(Action::TurnLeft).unwrap();
        assert_eq!(o.gesture_kind, GestureKind::None);
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-12);
    }
}
