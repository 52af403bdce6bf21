use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{eligible_goal_cells, CategoryId, Cell, ObjectInstance, Scene, SceneType, CELL_M};
use crate::error::{Error, Result};

const MAX_RETRIES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneGenParams {
    pub min_size_m: f64,
    pub max_size_m: f64,
    pub min_objects: usize,
    pub max_objects: usize,
    pub min_multiplicity: usize,
    pub max_multiplicity: usize,
    pub max_obstacles: usize,
}

impl Default for SceneGenParams {
    fn default() -> Self {
        Self {
            min_size_m: 4.0,
            max_size_m: 8.0,
            min_objects: 4,
            max_objects: 12,
            min_multiplicity: 1,
            max_multiplicity: 3,
            max_obstacles: 3,
        }
    }
}

impl SceneGenParams {
    pub fn validate(&self) -> Result<()> {
        let quarter = |v: f64| ((v / CELL_M) - (v / CELL_M).round()).abs() < 1e-9;
        if !(4.0..=8.0).contains(&self.min_size_m)
            || !(4.0..=8.0).contains(&self.max_size_m)
            || self.min_size_m > self.max_size_m
            || !quarter(self.min_size_m)
            || !quarter(self.max_size_m)
        {
            return Err(Error::InvalidParams(format!(
                "room size range [{}, {}] must be multiples of 0.25 within 4.0..=8.0",
                self.min_size_m, self.max_size_m
            )));
        }
        if self.min_objects < 4 || self.max_objects > 12 || self.min_objects > self.max_objects {
            return Err(Error::InvalidParams(format!(
                "object count range [{}, {}] must lie within 4..=12",
                self.min_objects, self.max_objects
            )));
        }
        if self.min_multiplicity < 1
            || self.max_multiplicity > 3
            || self.min_multiplicity > self.max_multiplicity
        {
            return Err(Error::InvalidParams(format!(
                "multiplicity range [{}, {}] must lie within 1..=3",
                self.min_multiplicity, self.max_multiplicity
            )));
        }
        Ok(())
    }
}

/// Dataset split of the seeded scene pool (20/5/5 per scene type).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// Scene seeds belonging to a split.
pub fn scene_seeds(split: Split) -> Vec<u64> {
    match split {
        Split::Train => (0..20).collect(),
        Split::Val => (20..25).collect(),
        Split::Test => (25..30).collect(),
    }
}

struct Layout {
    cols: usize,
    rows: usize,
    blocked: Vec<bool>,
}

impl Layout {
    fn idx(&self, c: Cell) -> usize {
        c.row as usize * self.cols + c.col as usize
    }

    fn rect(col: i32, row: i32, w: i32, h: i32) -> Vec<Cell> {
        (row..row + h)
            .flat_map(|r| (col..col + w).map(move |c| Cell::new(c, r)))
            .collect()
    }

    fn all_free(&self, cells: &[Cell]) -> bool {
        cells.iter().all(|&c| !self.blocked[self.idx(c)])
    }

    fn set(&mut self, cells: &[Cell], v: bool) {
        for &c in cells {
            let i = self.idx(c);
            self.blocked[i] = v;
        }
    }

    fn connected(&self) -> bool {
        let probe = Scene::from_grid(
            "",
            0,
            SceneType::Kitchen,
            self.cols,
            self.rows,
            self.blocked.clone(),
            vec![],
        )
        .expect("layout dimensions are consistent");
        probe.free_space_connected()
    }

    /// Places a random rectangle of free cells, keeping free space connected.
    fn place(&mut self, rng: &mut ChaCha8Rng, w: i32, h: i32, retries: &mut usize) -> Result<Vec<Cell>> {
        loop {
            let max_c = self.cols as i32 - 1 - w;
            let max_r = self.rows as i32 - 1 - h;
            if max_c >= 1 && max_r >= 1 {
                let col = rng.random_range(1..=max_c);
                let row = rng.random_range(1..=max_r);
                let cells = Self::rect(col, row, w, h);
                if self.all_free(&cells) {
                    self.set(&cells, true);
                    if self.connected() {
                        return Ok(cells);
                    }
                    self.set(&cells, false);
                }
            }
            *retries += 1;
            if *retries >= MAX_RETRIES {
                return Err(Error::GenerationFailed(MAX_RETRIES));
            }
        }
    }
}

/// Draws per-category instance counts summing to a total within the
/// requested object range.
fn draw_multiplicities(
    rng: &mut ChaCha8Rng,
    palette: &[u32],
    params: &SceneGenParams,
    retries: &mut usize,
) -> Result<Vec<(u32, usize)>> {
    let cap = palette.len() * params.max_multiplicity;
    if params.min_objects > cap {
        return Err(Error::InvalidParams(format!(
            "palette of {} categories cannot hold {} objects",
            palette.len(),
            params.min_objects
        )));
    }
    let hi = params.max_objects.min(cap);
    loop {
        let total = rng.random_range(params.min_objects..=hi);
        let mut cats = palette.to_vec();
        cats.shuffle(rng);
        let mut out = Vec::new();
        let mut remaining = total;
        let mut ok = true;
        for (k, &cat) in cats.iter().enumerate() {
            if remaining == 0 {
                break;
            }
            let left_after = cats.len() - k - 1;
            let lower = params
                .min_multiplicity
                .max(remaining.saturating_sub(left_after * params.max_multiplicity));
            let upper = params.max_multiplicity.min(remaining);
            if lower > upper {
                ok = false;
                break;
            }
            let m = rng.random_range(lower..=upper);
            out.push((cat, m));
            remaining -= m;
        }
        if ok && remaining == 0 {
            return Ok(out);
        }
        *retries += 1;
        if *retries >= MAX_RETRIES {
            return Err(Error::GenerationFailed(MAX_RETRIES));
        }
    }
}

/// Generates a closed room with obstacles and object instances.
/// Deterministic in `(seed, scene_type, params)`.
pub fn generate_scene(seed: u64, scene_type: SceneType, params: &SceneGenParams) -> Result<Scene> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ scene_type.salt());
    let steps = |m: f64| (m / CELL_M).round() as usize;
    let mut retries = 0usize;

    loop {
        let cols = rng.random_range(steps(params.min_size_m)..=steps(params.max_size_m));
        let rows = rng.random_range(steps(params.min_size_m)..=steps(params.max_size_m));
        let mut layout = Layout {
            cols,
            rows,
            blocked: vec![false; cols * rows],
        };
        for r in 0..rows as i32 {
            for c in 0..cols as i32 {
                if r == 0 || c == 0 || r == rows as i32 - 1 || c == cols as i32 - 1 {
                    let i = layout.idx(Cell::new(c, r));
                    layout.blocked[i] = true;
                }
            }
        }

        let n_obstacles = rng.random_range(0..=params.max_obstacles);
        for _ in 0..n_obstacles {
            let (a, b) = (rng.random_range(1..=2), rng.random_range(2..=4));
            let (w, h) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
            layout.place(&mut rng, w, h, &mut retries)?;
        }

        let counts = draw_multiplicities(&mut rng, scene_type.palette(), params, &mut retries)?;
        let mut objects = Vec::new();
        let mut next_id = 0u32;
        for (cat, m) in counts {
            for _ in 0..m {
                let (a, b) = (rng.random_range(1..=3), rng.random_range(1..=2));
                let (w, h) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
                let cells = layout.place(&mut rng, w, h, &mut retries)?;
                objects.push(ObjectInstance::new(next_id, CategoryId::new(cat)?, cells));
                next_id += 1;
            }
        }

        // obstacle cells are blocked in `layout`; object cells are re-marked by from_grid
        let scene = Scene::from_grid(
            format!("{}_{:03}", scene_type.as_str(), seed),
            seed,
            scene_type,
            cols,
            rows,
            layout.blocked,
            objects,
        )?;
        let all_eligible = scene
            .objects()
            .iter()
            .all(|o| eligible_goal_cells(&scene, o).is_ok());
        if all_eligible && scene.free_space_connected() {
            return Ok(scene);
        }
        retries += 1;
        if retries >= MAX_RETRIES {
            return Err(Error::GenerationFailed(MAX_RETRIES));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let p = SceneGenParams::default();
        let a = generate_scene(7, SceneType::Kitchen, &p).unwrap();
        let b = generate_scene(7, SceneType::Kitchen, &p).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn object_count_in_range() {
        let p = SceneGenParams::default();
        for t in SceneType::ALL {
            let s = generate_scene(7, t, &p).unwrap();
            assert!((4..=12).contains(&s.objects().len()), "{t}: {}", s.objects().len());
        }
    }

    #[test]
    fn invariants_hold_across_seeds() {
        let p = SceneGenParams::default();
        for t in SceneType::ALL {
            for seed in 0..30 {
                let s = generate_scene(seed, t, &p).unwrap();
                // border closed
                for c in 0..s.cols() as i32 {
                    assert!(s.is_blocked(Cell::new(c, 0)));
                    assert!(s.is_blocked(Cell::new(c, s.rows() as i32 - 1)));
                }
                for r in 0..s.rows() as i32 {
                    assert!(s.is_blocked(Cell::new(0, r)));
                    assert!(s.is_blocked(Cell::new(s.cols() as i32 - 1, r)));
                }
                assert!(s.free_space_connected());
                assert!((4.0..=8.0).contains(&s.width_m()));
                let mut ids = std::collections::HashSet::new();
                for o in s.objects() {
                    assert!(ids.insert(o.instance_id));
                    assert!(t.palette().contains(&(o.category.index() as u32)));
                    let (min_c, max_c) = o.footprint.iter().fold((i32::MAX, i32::MIN), |(a, b), c| (a.min(c.col), b.max(c.col)));
                    let (min_r, max_r) = o.footprint.iter().fold((i32::MAX, i32::MIN), |(a, b), c| (a.min(c.row), b.max(c.row)));
                    assert!(o.anchor.x >= min_c as f64 * CELL_M && o.anchor.x <= (max_c + 1) as f64 * CELL_M);
                    assert!(o.anchor.y >= min_r as f64 * CELL_M && o.anchor.y <= (max_r + 1) as f64 * CELL_M);
                    for &c in &o.footprint {
                        assert!(s.in_bounds(c) && s.is_blocked(c));
                    }
                    assert!(eligible_goal_cells(&s, o).is_ok());
                }
            }
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let p = SceneGenParams {
            min_objects: 2,
            ..Default::default()
        };
        assert!(matches!(generate_scene(1, SceneType::Kitchen, &p), Err(Error::InvalidParams(_))));
        let p = SceneGenParams {
            max_multiplicity: 4,
            ..Default::default()
        };
        assert!(generate_scene(1, SceneType::Kitchen, &p).is_err());
        let p = SceneGenParams {
            min_size_m: 4.1,
            ..Default::default()
        };
        assert!(generate_scene(1, SceneType::Kitchen, &p).is_err());
    }

    #[test]
    fn infeasible_room_fails_after_retries() {
        // bedroom palette holds at most 6 objects
        let p = SceneGenParams {
            min_objects: 7,
            max_objects: 12,
            ..Default::default()
        };
        assert!(matches!(generate_scene(1, SceneType::Bedroom, &p), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn splits_are_disjoint() {
        let tr = scene_seeds(Split::Train);
        let va = scene_seeds(Split::Val);
        let te = scene_seeds(Split::Test);
        assert_eq!((tr.len(), va.len(), te.len()), (20, 5, 5));
        assert!(te.iter().all(|s| !tr.contains(s) && !va.contains(s)));
    }
}
