//! Indoor scenes on a 0.25 m occupancy grid.
//!
//! A [`Scene`] is a closed rectangular room: border cells are blocked, a few
//! uncategorized obstacles and a set of category-labelled object instances
//! occupy interior cells, and the remaining free cells form one
//! 4-connected component. Scenes are immutable once built.

mod generate;
mod geometry;
mod path;

pub use generate::{generate_scene, scene_seeds, SceneGenParams, Split};
pub use geometry::{eligible_goal_cells, line_of_sight, line_of_sight_to_instance, raycast, RayHit};
pub use path::{shortest_path_length, DistanceField};
pub(crate) use path::step_allowed;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid resolution and forward step length, in meters.
pub const CELL_M: f64 = 0.25;
/// Number of object categories across all scene types.
pub const NUM_CATEGORIES: usize = 10;
/// Maximum stopping distance to the target anchor.
pub const GOAL_RADIUS_M: f64 = 1.5;

/// Object category index in `[0, NUM_CATEGORIES)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct CategoryId(u32);

impl CategoryId {
    pub fn new(index: u32) -> Result<Self> {
        if (index as usize) < NUM_CATEGORIES {
            Ok(Self(index))
        } else {
            Err(Error::IndexOutOfRange {
                index: index as usize,
                limit: NUM_CATEGORIES,
            })
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl TryFrom<u32> for CategoryId {
    type Error = Error;
    fn try_from(v: u32) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CategoryId> for u32 {
    fn from(c: CategoryId) -> u32 {
        c.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneType {
    Kitchen,
    LivingRoom,
    Bedroom,
    Bathroom,
}

impl SceneType {
    pub const ALL: [SceneType; 4] = [
        SceneType::Kitchen,
        SceneType::LivingRoom,
        SceneType::Bedroom,
        SceneType::Bathroom,
    ];

    /// Categories that may appear in this room type. Palettes are disjoint.
    pub fn palette(self) -> &'static [u32] {
        match self {
            SceneType::Kitchen => &[0, 1, 2],
            SceneType::LivingRoom => &[3, 4, 5],
            SceneType::Bedroom => &[6, 7],
            SceneType::Bathroom => &[8, 9],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SceneType::Kitchen => "kitchen",
            SceneType::LivingRoom => "living_room",
            SceneType::Bedroom => "bedroom",
            SceneType::Bathroom => "bathroom",
        }
    }

    fn salt(self) -> u64 {
        match self {
            SceneType::Kitchen => 0x6b69_7463,
            SceneType::LivingRoom => 0x6c69_7669,
            SceneType::Bedroom => 0x6265_6472,
            SceneType::Bathroom => 0x6261_7468,
        }
    }
}

impl fmt::Display for SceneType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SceneType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kitchen" => Ok(SceneType::Kitchen),
            "living_room" => Ok(SceneType::LivingRoom),
            "bedroom" => Ok(SceneType::Bedroom),
            "bathroom" => Ok(SceneType::Bathroom),
            other => Err(Error::Config(format!("unknown scene type {other:?}"))),
        }
    }
}

/// Grid cell. Column grows east (+x), row grows north (+y).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub col: i32,
    pub row: i32,
}

impl Cell {
    pub const fn new(col: i32, row: i32) -> Self {
        Self { col, row }
    }

    pub fn center(self) -> Point {
        Point {
            x: (self.col as f64 + 0.5) * CELL_M,
            y: (self.row as f64 + 0.5) * CELL_M,
        }
    }

    pub fn offset(self, dc: i32, dr: i32) -> Self {
        Self::new(self.col + dc, self.row + dr)
    }
}

/// Continuous position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Cell containing this point.
    pub fn cell(self) -> Cell {
        Cell::new(
            (self.x / CELL_M).floor() as i32,
            (self.y / CELL_M).floor() as i32,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub instance_id: u32,
    pub category: CategoryId,
    /// Footprint centroid.
    pub anchor: Point,
    pub footprint: Vec<Cell>,
}

impl ObjectInstance {
    /// Builds an instance whose anchor is the centroid of the footprint cell centers.
    pub fn new(instance_id: u32, category: CategoryId, footprint: Vec<Cell>) -> Self {
        let n = footprint.len().max(1) as f64;
        let (sx, sy) = footprint.iter().fold((0.0, 0.0), |(sx, sy), c| {
            let p = c.center();
            (sx + p.x, sy + p.y)
        });
        Self {
            instance_id,
            category,
            anchor: Point::new(sx / n, sy / n),
            footprint,
        }
    }
}

/// On-disk scene layout. `grid` is row-major, 1 = blocked.
#[derive(Serialize, Deserialize)]
struct SceneFile {
    scene_id: String,
    seed: u64,
    scene_type: SceneType,
    width_m: f64,
    height_m: f64,
    grid: Vec<u8>,
    objects: Vec<ObjectInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SceneFile", into = "SceneFile")]
pub struct Scene {
    scene_id: String,
    seed: u64,
    scene_type: SceneType,
    cols: usize,
    rows: usize,
    blocked: Vec<bool>,
    objects: Vec<ObjectInstance>,
    /// Per-cell index into `objects`, for footprint cells.
    owner: Vec<Option<usize>>,
}

impl Scene {
    /// Assembles a scene from an explicit grid. Object footprints are marked
    /// blocked. Fails if any footprint leaves the grid or instance ids repeat.
    pub fn from_grid(
        scene_id: impl Into<String>,
        seed: u64,
        scene_type: SceneType,
        cols: usize,
        rows: usize,
        mut blocked: Vec<bool>,
        objects: Vec<ObjectInstance>,
    ) -> Result<Self> {
        if blocked.len() != cols * rows {
            return Err(Error::ShapeMismatch(format!(
                "grid has {} cells, expected {}x{}",
                blocked.len(),
                cols,
                rows
            )));
        }
        let mut owner = vec![None; cols * rows];
        let mut seen = std::collections::HashSet::new();
        for (k, obj) in objects.iter().enumerate() {
            if !seen.insert(obj.instance_id) {
                return Err(Error::InvalidParams(format!(
                    "duplicate instance id {}",
                    obj.instance_id
                )));
            }
            for &c in &obj.footprint {
                if c.col < 0 || c.row < 0 || c.col as usize >= cols || c.row as usize >= rows {
                    return Err(Error::InvalidParams(format!(
                        "instance {} footprint leaves the grid",
                        obj.instance_id
                    )));
                }
                let i = c.row as usize * cols + c.col as usize;
                blocked[i] = true;
                owner[i] = Some(k);
            }
        }
        Ok(Self {
            scene_id: scene_id.into(),
            seed,
            scene_type,
            cols,
            rows,
            blocked,
            objects,
            owner,
        })
    }

    /// Empty closed room of the given size in cells (border blocked).
    pub fn empty_room(cols: usize, rows: usize) -> Self {
        let mut blocked = vec![false; cols * rows];
        for r in 0..rows {
            for c in 0..cols {
                if r == 0 || c == 0 || r == rows - 1 || c == cols - 1 {
                    blocked[r * cols + c] = true;
                }
            }
        }
        Self::from_grid("empty", 0, SceneType::Kitchen, cols, rows, blocked, Vec::new())
            .expect("empty room is well formed")
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scene_type(&self) -> SceneType {
        self.scene_type
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width_m(&self) -> f64 {
        self.cols as f64 * CELL_M
    }

    pub fn height_m(&self) -> f64 {
        self.rows as f64 * CELL_M
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    pub fn object(&self, instance_id: u32) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.instance_id == instance_id)
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.col >= 0 && c.row >= 0 && (c.col as usize) < self.cols && (c.row as usize) < self.rows
    }

    fn index(&self, c: Cell) -> usize {
        c.row as usize * self.cols + c.col as usize
    }

    /// Out-of-bounds cells count as blocked.
    pub fn is_blocked(&self, c: Cell) -> bool {
        !self.in_bounds(c) || self.blocked[self.index(c)]
    }

    pub fn is_free(&self, c: Cell) -> bool {
        !self.is_blocked(c)
    }

    /// Object occupying `c`, if any.
    pub fn object_at(&self, c: Cell) -> Option<&ObjectInstance> {
        if !self.in_bounds(c) {
            return None;
        }
        self.owner[self.index(c)].map(|k| &self.objects[k])
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.rows as i32)
            .flat_map(move |r| (0..self.cols as i32).map(move |c| Cell::new(c, r)))
            .filter(|&c| self.is_free(c))
    }

    pub fn free_count(&self) -> usize {
        self.blocked.iter().filter(|b| !**b).count()
    }

    /// Number of free cells reachable from `start` with 4-connectivity.
    pub fn flood_fill_count(&self, start: Cell) -> usize {
        if self.is_blocked(start) {
            return 0;
        }
        let mut seen = vec![false; self.blocked.len()];
        let mut queue = VecDeque::from([start]);
        seen[self.index(start)] = true;
        let mut count = 0;
        while let Some(c) = queue.pop_front() {
            count += 1;
            for (dc, dr) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let n = c.offset(dc, dr);
                if self.is_free(n) && !seen[self.index(n)] {
                    seen[self.index(n)] = true;
                    queue.push_back(n);
                }
            }
        }
        count
    }

    /// True when all free cells form a single 4-connected component.
    pub fn free_space_connected(&self) -> bool {
        match self.free_cells().next() {
            Some(start) => self.flood_fill_count(start) == self.free_count(),
            None => true,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl TryFrom<SceneFile> for Scene {
    type Error = Error;
    fn try_from(f: SceneFile) -> Result<Self> {
        let cols = (f.width_m / CELL_M).round() as usize;
        let rows = (f.height_m / CELL_M).round() as usize;
        if f.grid.iter().any(|&v| v > 1) {
            return Err(Error::InvalidParams("grid values must be 0 or 1".into()));
        }
        let blocked = f.grid.iter().map(|&v| v == 1).collect();
        Scene::from_grid(f.scene_id, f.seed, f.scene_type, cols, rows, blocked, f.objects)
    }
}

impl From<Scene> for SceneFile {
    fn from(s: Scene) -> SceneFile {
        SceneFile {
            width_m: s.width_m(),
            height_m: s.height_m(),
            scene_id: s.scene_id,
            seed: s.seed,
            scene_type: s.scene_type,
            grid: s.blocked.iter().map(|&b| b as u8).collect(),
            objects: s.objects,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_bounds() {
        assert!(CategoryId::new(9).is_ok());
        assert!(matches!(
            CategoryId::new(10),
            Err(Error::IndexOutOfRange { index: 10, .. })
        ));
    }

    #[test]
    fn palettes_are_disjoint_and_cover_all_categories() {
        let mut all: Vec<u32> = SceneType::ALL.iter().flat_map(|t| t.palette().to_vec()).collect();
        all.sort();
        assert_eq!(all, (0..NUM_CATEGORIES as u32).collect::<Vec<_>>());
    }

    #[test]
    fn anchor_is_footprint_centroid() {
        let obj = ObjectInstance::new(
            0,
            CategoryId::new(1).unwrap(),
            vec![Cell::new(2, 2), Cell::new(3, 2)],
        );
        assert!((obj.anchor.x - 0.75).abs() < 1e-12);
        assert!((obj.anchor.y - 0.625).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_preserves_scene() {
        let obj = ObjectInstance::new(3, CategoryId::new(4).unwrap(), vec![Cell::new(2, 3)]);
        let mut s = Scene::empty_room(8, 6);
        s = Scene::from_grid("t", 1, SceneType::LivingRoom, 8, 6, s.blocked.clone(), vec![obj])
            .unwrap();
        let back = Scene::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
        assert!(back.object_at(Cell::new(2, 3)).is_some());
    }

    #[test]
    fn footprint_outside_grid_is_rejected() {
        let obj = ObjectInstance::new(0, CategoryId::new(0).unwrap(), vec![Cell::new(9, 1)]);
        let r = Scene::from_grid("t", 0, SceneType::Kitchen, 4, 4, vec![false; 16], vec![obj]);
        assert!(r.is_err());
    }
}
