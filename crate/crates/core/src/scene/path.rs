use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use super::{Cell, Scene, CELL_M};
use crate::error::{Error, Result};

const NEIGHBORS: [(i32, i32); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

/// Whether an 8-connected step from `from` by `(dc, dr)` is allowed: the
/// target must be free, and a diagonal may not squeeze between two blocked
/// orthogonal neighbours.
pub(crate) fn step_allowed(scene: &Scene, from: Cell, dc: i32, dr: i32) -> bool {
    if scene.is_blocked(from.offset(dc, dr)) {
        return false;
    }
    if dc != 0 && dr != 0 {
        let side_a = scene.is_blocked(from.offset(dc, 0));
        let side_b = scene.is_blocked(from.offset(0, dr));
        if side_a && side_b {
            return false;
        }
    }
    true
}

fn step_cost(dc: i32, dr: i32) -> f64 {
    if dc != 0 && dr != 0 {
        CELL_M * SQRT_2
    } else {
        CELL_M
    }
}

#[derive(PartialEq)]
struct Entry(f64, Cell);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Grid distance (meters) from every free cell to the nearest goal cell.
#[derive(Debug, Clone)]
pub struct DistanceField {
    cols: usize,
    dist: Vec<f64>,
}

impl DistanceField {
    /// Multi-source Dijkstra over the 8-connected, no-corner-cutting grid.
    /// Blocked goal cells are ignored.
    pub fn from_goals(scene: &Scene, goals: &[Cell]) -> Self {
        let cols = scene.cols();
        let mut dist = vec![f64::INFINITY; cols * scene.rows()];
        let mut heap = BinaryHeap::new();
        for &g in goals {
            if scene.is_free(g) {
                let i = g.row as usize * cols + g.col as usize;
                dist[i] = 0.0;
                heap.push(Entry(0.0, g));
            }
        }
        while let Some(Entry(d, c)) = heap.pop() {
            if d > dist[c.row as usize * cols + c.col as usize] {
                continue;
            }
            // step_allowed is symmetric, so relaxing outward from goals
            // yields distances *to* the goals
            for (dc, dr) in NEIGHBORS {
                if !step_allowed(scene, c, dc, dr) {
                    continue;
                }
                let n = c.offset(dc, dr);
                let nd = d + step_cost(dc, dr);
                let i = n.row as usize * cols + n.col as usize;
                if nd < dist[i] {
                    dist[i] = nd;
                    heap.push(Entry(nd, n));
                }
            }
        }
        Self { cols, dist }
    }

    /// Distance at `c`, `None` if unreachable or out of bounds.
    pub fn get(&self, c: Cell) -> Option<f64> {
        if c.col < 0 || c.row < 0 || c.col as usize >= self.cols {
            return None;
        }
        self.dist
            .get(c.row as usize * self.cols + c.col as usize)
            .copied()
            .filter(|d| d.is_finite())
    }

    /// Neighbour of `c` lying on a shortest path toward the goals.
    pub fn next_step(&self, scene: &Scene, c: Cell) -> Option<Cell> {
        let here = self.get(c)?;
        let mut best: Option<(f64, Cell)> = None;
        for (dc, dr) in NEIGHBORS {
            if !step_allowed(scene, c, dc, dr) {
                continue;
            }
            let n = c.offset(dc, dr);
            if let Some(d) = self.get(n) {
                let total = d + step_cost(dc, dr);
                if total <= here + 1e-9 && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, n));
                }
            }
        }
        best.map(|(_, n)| n)
    }
}

/// Length of the shortest 8-connected path from `start` to any goal cell.
pub fn shortest_path_length(scene: &Scene, start: Cell, goals: &[Cell]) -> Result<f64> {
    if goals.is_empty() || scene.is_blocked(start) {
        return Err(Error::Unreachable);
    }
    DistanceField::from_goals(scene, goals)
        .get(start)
        .ok_or(Error::Unreachable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::SceneType;
    use proptest::prelude::*;

    fn corridor() -> Scene {
        // 5x3 grid: single free row of 3 cells
        let mut blocked = vec![true; 15];
        for c in 1..4 {
            blocked[5 + c] = false;
        }
        Scene::from_grid("c", 0, SceneType::Kitchen, 5, 3, blocked, vec![]).unwrap()
    }

    #[test]
    fn adjacent_goal_is_one_step() {
        let s = Scene::empty_room(6, 6);
        let d = shortest_path_length(&s, Cell::new(2, 2), &[Cell::new(3, 2)]).unwrap();
        assert!((d - 0.25).abs() < 1e-12);
    }

    #[test]
    fn goal_at_start_is_zero() {
        let s = Scene::empty_room(6, 6);
        let d = shortest_path_length(&s, Cell::new(2, 2), &[Cell::new(2, 2)]).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn corridor_far_end() {
        let s = corridor();
        let d = shortest_path_length(&s, Cell::new(1, 1), &[Cell::new(3, 1)]).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn disconnected_goal_is_unreachable() {
        let mut blocked = vec![false; 25];
        for r in 0..5 {
            blocked[r * 5 + 2] = true;
        }
        let s = Scene::from_grid("d", 0, SceneType::Kitchen, 5, 5, blocked, vec![]).unwrap();
        assert!(matches!(
            shortest_path_length(&s, Cell::new(0, 0), &[Cell::new(4, 4)]),
            Err(Error::Unreachable)
        ));
        assert!(matches!(
            shortest_path_length(&s, Cell::new(0, 0), &[]),
            Err(Error::Unreachable)
        ));
    }

    #[test]
    fn no_corner_cutting() {
        // diagonal squeeze between (1,0) and (0,1) blocked
        let mut blocked = vec![false; 9];
        blocked[1] = true; // (1,0)
        blocked[3] = true; // (0,1)
        let s = Scene::from_grid("k", 0, SceneType::Kitchen, 3, 3, blocked, vec![]).unwrap();
        assert!(shortest_path_length(&s, Cell::new(0, 0), &[Cell::new(1, 1)]).is_err());
    }

    #[test]
    fn diagonal_costs_sqrt2() {
        let s = Scene::empty_room(8, 8);
        let d = shortest_path_length(&s, Cell::new(1, 1), &[Cell::new(4, 4)]).unwrap();
        assert!((d - 3.0 * CELL_M * SQRT_2).abs() < 1e-12);
    }

    fn cluttered(seed: u64) -> Scene {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (cols, rows) = (12usize, 10usize);
        let mut blocked = vec![false; cols * rows];
        for b in blocked.iter_mut() {
            *b = rng.random_bool(0.25);
        }
        Scene::from_grid("r", seed, SceneType::Kitchen, cols, rows, blocked, vec![]).unwrap()
    }

    proptest! {
        #[test]
        fn symmetric_and_triangle(seed in 0u64..200, picks in prop::array::uniform3(0usize..1000)) {
            let s = cluttered(seed);
            let free: Vec<Cell> = s.free_cells().collect();
            prop_assume!(free.len() >= 3);
            let a = free[picks[0] % free.len()];
            let b = free[picks[1] % free.len()];
            let c = free[picks[2] % free.len()];
            let ab = shortest_path_length(&s, a, &[b]).ok();
            let ba = shortest_path_length(&s, b, &[a]).ok();
            match (ab, ba) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
                (None, None) => {}
                _ => prop_assert!(false, "asymmetric reachability"),
            }
            if let (Some(ab), Some(bc), Some(ac)) = (
                ab,
                shortest_path_length(&s, b, &[c]).ok(),
                shortest_path_length(&s, a, &[c]).ok(),
            ) {
                prop_assert!(ac <= ab + bc + 1e-9);
            }
        }
    }
}
