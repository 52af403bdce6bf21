use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{wrap_angle, Condition, EpisodeSpec, Pose, MAX_STEPS, NUM_HEADINGS};
use crate::error::{Error, Result};
use crate::gesture::{
    intervention_gesture, referencing_gesture, GestureAnatomy, GestureSequence,
    NUM_INTERVENTION_TEMPLATES,
};
use crate::scene::{eligible_goal_cells, shortest_path_length, Cell, Scene};

/// Shared gesture material for one anatomy: the zero marker and the ten
/// intervention templates.
#[derive(Debug)]
pub struct GestureBank {
    pub anatomy: GestureAnatomy,
    zero: Arc<GestureSequence>,
    templates: Vec<Arc<GestureSequence>>,
}

impl GestureBank {
    pub fn new(anatomy: GestureAnatomy) -> Self {
        let templates = (0..NUM_INTERVENTION_TEMPLATES)
            .map(|i| Arc::new(intervention_gesture(i, &anatomy).expect("index in range")))
            .collect();
        Self {
            anatomy,
            zero: Arc::new(GestureSequence::zeros()),
            templates,
        }
    }

    pub fn zero(&self) -> Arc<GestureSequence> {
        self.zero.clone()
    }

    pub fn template(&self, index: usize) -> Arc<GestureSequence> {
        self.templates[index].clone()
    }

    pub fn num_templates(&self) -> usize {
        self.templates.len()
    }
}

/// Draws valid episodes over a fixed scene set.
#[derive(Debug, Clone)]
pub struct EpisodeSampler {
    scenes: Vec<Arc<Scene>>,
    condition: Condition,
    bank: Arc<GestureBank>,
    noise_sigma: f64,
    rng: ChaCha8Rng,
    eligible: HashMap<(usize, u32), Arc<Vec<Cell>>>,
}

impl EpisodeSampler {
    pub fn new(
        scenes: Vec<Arc<Scene>>,
        condition: Condition,
        bank: Arc<GestureBank>,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        if scenes.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(Self {
            scenes,
            condition,
            bank,
            noise_sigma,
            rng: ChaCha8Rng::seed_from_u64(seed),
            eligible: HashMap::new(),
        })
    }

    pub fn scenes(&self) -> &[Arc<Scene>] {
        &self.scenes
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn bank(&self) -> &Arc<GestureBank> {
        &self.bank
    }

    fn eligible(&mut self, scene_idx: usize, instance_id: u32) -> Option<Arc<Vec<Cell>>> {
        if let Some(c) = self.eligible.get(&(scene_idx, instance_id)) {
            return Some(c.clone());
        }
        let scene = &self.scenes[scene_idx];
        let inst = scene.object(instance_id)?;
        let cells = Arc::new(eligible_goal_cells(scene, inst).ok()?);
        self.eligible.insert((scene_idx, instance_id), cells.clone());
        Some(cells)
    }

    /// Samples a scene uniformly, then a target instance uniformly, then a
    /// free start cell outside the goal region with a uniform heading.
    pub fn sample(&mut self) -> Result<EpisodeSpec> {
        let scene_idx = self.rng.random_range(0..self.scenes.len());
        self.sample_in(scene_idx)
    }

    pub fn sample_in(&mut self, scene_idx: usize) -> Result<EpisodeSpec> {
        let scene = self.scenes.get(scene_idx).cloned().ok_or(Error::IndexOutOfRange {
            index: scene_idx,
            limit: self.scenes.len(),
        })?;
        for _ in 0..1000 {
            if scene.objects().is_empty() {
                break;
            }
            let inst = scene.objects()[self.rng.random_range(0..scene.objects().len())].clone();
            let Some(goals) = self.eligible(scene_idx, inst.instance_id) else {
                continue;
            };
            let free: Vec<Cell> = scene.free_cells().filter(|c| !goals.contains(c)).collect();
            if free.is_empty() {
                continue;
            }
            let start = free[self.rng.random_range(0..free.len())];
            let heading = self.rng.random_range(0..NUM_HEADINGS);
            let style_seed: u64 = self.rng.random();
            let l = shortest_path_length(&scene, start, &goals);
            if !matches!(l, Ok(d) if d > 0.0) {
                continue;
            }
            let pose = Pose::new(start, heading);
            let p = pose.position();
            let world = (inst.anchor.y - p.y).atan2(inst.anchor.x - p.x);
            let bearing = wrap_angle(world - pose.heading_rad());
            let gesture = if self.condition == Condition::Referencing {
                Arc::new(referencing_gesture(
                    bearing,
                    &self.bank.anatomy,
                    style_seed,
                    self.noise_sigma,
                )?)
            } else {
                self.bank.zero()
            };
            return Ok(EpisodeSpec {
                scene,
                start: pose,
                target_category: inst.category,
                target_instance: inst.instance_id,
                condition: self.condition,
                referencing_bearing: bearing,
                referencing_gesture: gesture,
                max_steps: MAX_STEPS,
                anatomy_seed: self.bank.anatomy.anatomy_seed,
                style_seed,
            });
        }
        Err(Error::InvalidSpec(format!(
            "could not sample a valid episode in scene {}",
            scene.scene_id()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use crate::scene::{generate_scene, SceneGenParams, SceneType};
    use crate::sim::NavEnv;

    fn sampler(condition: Condition, seed: u64) -> EpisodeSampler {
        let scenes = (0..3)
            .map(|s| Arc::new(generate_scene(s, SceneType::Kitchen, &SceneGenParams::default()).unwrap()))
            .collect();
        let bank = Arc::new(GestureBank::new(GestureAnatomy::from_seed(0)));
        EpisodeSampler::new(scenes, condition, bank, 0.05, seed).unwrap()
    }

    #[test]
    fn sampled_specs_are_valid() {
        let mut s = sampler(Condition::Referencing, 4);
        for _ in 0..50 {
            let spec = s.sample().unwrap();
            assert!(spec.referencing_bearing > -PI && spec.referencing_bearing <= PI);
            assert!(!spec.referencing_gesture.is_zero());
            let inst = spec.scene.object(spec.target_instance).unwrap();
            assert_eq!(inst.category, spec.target_category);
            let bank = s.bank().clone();
            let (env, _) = NavEnv::reset(spec, bank).unwrap();
            assert!(env.l_len_m() > 0.0);
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let mut a = sampler(Condition::Baseline, 9);
        let mut b = sampler(Condition::Baseline, 9);
        for _ in 0..20 {
            let (x, y) = (a.sample().unwrap(), b.sample().unwrap());
            assert_eq!(x.start, y.start);
            assert_eq!(x.target_instance, y.target_instance);
            assert_eq!(x.style_seed, y.style_seed);
        }
    }
}
