use super::{Cell, ObjectInstance, Point, Scene, CELL_M, GOAL_RADIUS_M};
use crate::error::{Error, Result};

const TIE_EPS: f64 = 1e-9;

/// Walks the cells whose interior the segment `a -> b` passes through, in
/// order. `visit` returns `false` to stop early. When the segment passes
/// exactly through a grid vertex the two side cells are only touched at a
/// corner and are skipped.
fn traverse(a: Point, b: Point, mut visit: impl FnMut(Cell) -> bool) {
    let (ax, ay) = (a.x / CELL_M, a.y / CELL_M);
    let (bx, by) = (b.x / CELL_M, b.y / CELL_M);
    let (dx, dy) = (bx - ax, by - ay);
    let mut cell = Cell::new(ax.floor() as i32, ay.floor() as i32);
    let step_c = if dx > 0.0 { 1 } else { -1 };
    let step_r = if dy > 0.0 { 1 } else { -1 };
    let (mut t_max_x, t_delta_x) = if dx.abs() < 1e-15 {
        (f64::INFINITY, f64::INFINITY)
    } else if dx > 0.0 {
        ((ax.floor() + 1.0 - ax) / dx, 1.0 / dx)
    } else {
        ((ax - ax.floor()) / -dx, -1.0 / dx)
    };
    let (mut t_max_y, t_delta_y) = if dy.abs() < 1e-15 {
        (f64::INFINITY, f64::INFINITY)
    } else if dy > 0.0 {
        ((ay.floor() + 1.0 - ay) / dy, 1.0 / dy)
    } else {
        ((ay - ay.floor()) / -dy, -1.0 / dy)
    };
    // a point sitting exactly on a boundary while moving in the negative
    // direction leaves its floor cell immediately
    if t_max_x == 0.0 {
        t_max_x = t_delta_x;
        cell.col += step_c;
    }
    if t_max_y == 0.0 {
        t_max_y = t_delta_y;
        cell.row += step_r;
    }
    loop {
        if !visit(cell) {
            return;
        }
        let t_next = t_max_x.min(t_max_y);
        if t_next >= 1.0 - TIE_EPS {
            return;
        }
        if (t_max_x - t_max_y).abs() <= TIE_EPS {
            cell.col += step_c;
            cell.row += step_r;
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
        } else if t_max_x < t_max_y {
            cell.col += step_c;
            t_max_x += t_delta_x;
        } else {
            cell.row += step_r;
            t_max_y += t_delta_y;
        }
    }
}

/// True iff the segment `a -> b` crosses no blocked cell interior.
pub fn line_of_sight(scene: &Scene, a: Point, b: Point) -> bool {
    segment_clear(scene, a, b, None)
}

/// Line of sight from `from` to an instance's anchor; the instance's own
/// footprint does not occlude.
pub fn line_of_sight_to_instance(scene: &Scene, from: Point, instance: &ObjectInstance) -> bool {
    segment_clear(scene, from, instance.anchor, Some(instance))
}

fn segment_clear(scene: &Scene, a: Point, b: Point, ignore: Option<&ObjectInstance>) -> bool {
    let mut clear = true;
    traverse(a, b, |c| {
        if scene.is_blocked(c) {
            let own = ignore.is_some_and(|o| o.footprint.contains(&c));
            if !own {
                clear = false;
                return false;
            }
        }
        true
    });
    clear
}

/// First blocked cell along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    /// Distance to the entry point of the hit cell, meters.
    pub distance_m: f64,
    pub cell: Cell,
}

/// Casts a ray from `origin` along `angle_rad` (0 = east, counterclockwise)
/// up to `max_m`; returns the first blocked cell, or `None` if nothing is hit.
pub fn raycast(scene: &Scene, origin: Point, angle_rad: f64, max_m: f64) -> Option<RayHit> {
    let end = Point::new(
        origin.x + max_m * angle_rad.cos(),
        origin.y + max_m * angle_rad.sin(),
    );
    let (dx, dy) = ((end.x - origin.x) / CELL_M, (end.y - origin.y) / CELL_M);
    let (ox, oy) = (origin.x / CELL_M, origin.y / CELL_M);
    let mut hit = None;
    traverse(origin, end, |c| {
        if scene.is_blocked(c) {
            // entry parameter: largest of the per-axis entry times into the cell
            let tx = if dx > 0.0 {
                (c.col as f64 - ox) / dx
            } else if dx < 0.0 {
                (c.col as f64 + 1.0 - ox) / dx
            } else {
                0.0
            };
            let ty = if dy > 0.0 {
                (c.row as f64 - oy) / dy
            } else if dy < 0.0 {
                (c.row as f64 + 1.0 - oy) / dy
            } else {
                0.0
            };
            let t = tx.max(ty).clamp(0.0, 1.0);
            hit = Some(RayHit {
                distance_m: t * max_m,
                cell: c,
            });
            return false;
        }
        true
    });
    hit
}

/// Free cells whose center lies within the goal radius of the instance
/// anchor and sees it unobstructed.
pub fn eligible_goal_cells(scene: &Scene, instance: &ObjectInstance) -> Result<Vec<Cell>> {
    let r_cells = (GOAL_RADIUS_M / CELL_M).ceil() as i32 + 1;
    let center = instance.anchor.cell();
    let mut cells = Vec::new();
    for row in center.row - r_cells..=center.row + r_cells {
        for col in center.col - r_cells..=center.col + r_cells {
            let c = Cell::new(col, row);
            if scene.is_free(c)
                && c.center().distance(instance.anchor) <= GOAL_RADIUS_M + 1e-12
                && line_of_sight_to_instance(scene, c.center(), instance)
            {
                cells.push(c);
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::EmptyEligibleSet(instance.instance_id));
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{CategoryId, SceneType};

    fn room_with_wall(cols: usize, rows: usize, wall_col: i32) -> Scene {
        let base = Scene::empty_room(cols, rows);
        let mut blocked: Vec<bool> = (0..rows as i32)
            .flat_map(|r| (0..cols as i32).map(move |c| Cell::new(c, r)))
            .map(|c| base.is_blocked(c))
            .collect();
        for r in 0..rows {
            blocked[r * cols + wall_col as usize] = true;
        }
        Scene::from_grid("wall", 0, SceneType::Kitchen, cols, rows, blocked, vec![]).unwrap()
    }

    /// Independent oracle: dense sampling along the segment, collecting
    /// every cell whose interior a sample lands in.
    fn sampled_cells(a: Point, b: Point) -> Vec<Cell> {
        let n = 20_000;
        let mut out: Vec<Cell> = Vec::new();
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let p = Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
            let (fx, fy) = (p.x / CELL_M, p.y / CELL_M);
            // skip samples on a cell boundary
            if (fx - fx.round()).abs() < 1e-9 || (fy - fy.round()).abs() < 1e-9 {
                continue;
            }
            let c = p.cell();
            if out.last() != Some(&c) {
                out.push(c);
            }
        }
        out
    }

    #[test]
    fn same_point_has_sight() {
        let s = Scene::empty_room(10, 10);
        let p = Cell::new(3, 3).center();
        assert!(line_of_sight(&s, p, p));
    }

    #[test]
    fn empty_room_always_has_sight() {
        let s = Scene::empty_room(12, 9);
        let cells: Vec<Cell> = s.free_cells().collect();
        for &a in cells.iter().step_by(7) {
            for &b in cells.iter().step_by(5) {
                assert!(line_of_sight(&s, a.center(), b.center()));
            }
        }
    }

    #[test]
    fn wall_column_blocks_sight() {
        let s = room_with_wall(12, 8, 6);
        let a = Cell::new(2, 3).center();
        let b = Cell::new(9, 5).center();
        assert!(!line_of_sight(&s, a, b));
        let oracle_blocked = sampled_cells(a, b).into_iter().any(|c| s.is_blocked(c));
        assert!(oracle_blocked);
    }

    #[test]
    fn traversal_matches_sampling_oracle() {
        let pts = [
            (Cell::new(1, 1), Cell::new(9, 4)),
            (Cell::new(8, 7), Cell::new(2, 1)),
            (Cell::new(1, 6), Cell::new(7, 2)),
            (Cell::new(3, 3), Cell::new(3, 8)),
        ];
        for (a, b) in pts {
            let mut visited = Vec::new();
            traverse(a.center(), b.center(), |c| {
                visited.push(c);
                true
            });
            assert_eq!(visited, sampled_cells(a.center(), b.center()), "{a:?}->{b:?}");
        }
    }

    #[test]
    fn raycast_depth_to_wall() {
        let s = Scene::empty_room(20, 20);
        // center of cell (5,5) is at 1.375 m; east wall cell column 19 starts at 4.75 m
        let hit = raycast(&s, Cell::new(5, 5).center(), 0.0, 10.0).unwrap();
        assert!((hit.distance_m - (4.75 - 1.375)).abs() < 1e-9);
        assert_eq!(hit.cell, Cell::new(19, 5));
    }

    #[test]
    fn raycast_misses_in_large_arena() {
        let s = Scene::empty_room(100, 100);
        assert!(raycast(&s, Cell::new(50, 50).center(), 0.3, 10.0).is_none());
    }

    #[test]
    fn eligible_cells_match_brute_force() {
        // 6x6 m open room, object in the middle
        let base = Scene::empty_room(24, 24);
        let blocked: Vec<bool> = (0..24)
            .flat_map(|r| (0..24).map(move |c| Cell::new(c, r)))
            .map(|c| base.is_blocked(c))
            .collect();
        let obj = ObjectInstance::new(0, CategoryId::new(2).unwrap(), vec![Cell::new(12, 12)]);
        let s = Scene::from_grid("e", 0, SceneType::Kitchen, 24, 24, blocked, vec![obj]).unwrap();
        let inst = &s.objects()[0];
        let got = eligible_goal_cells(&s, inst).unwrap();
        let mut want = Vec::new();
        for r in 0..24 {
            for c in 0..24 {
                let cell = Cell::new(c, r);
                let near = cell.center().distance(inst.anchor) <= 1.5 + 1e-12;
                let blocked_on_path = sampled_cells(cell.center(), inst.anchor)
                    .into_iter()
                    .any(|x| s.is_blocked(x) && !inst.footprint.contains(&x));
                if s.is_free(cell) && near && !blocked_on_path {
                    want.push(cell);
                }
            }
        }
        assert_eq!(got, want);
        // boundary: 1.5 m exactly is eligible, 1.6 m is not
        let exact = Cell::new(12 + 6, 12);
        assert!((exact.center().distance(inst.anchor) - 1.5).abs() < 1e-12);
        assert!(got.contains(&exact));
        assert!(!got.contains(&Cell::new(12 + 7, 12)));
    }

    #[test]
    fn enclosed_object_has_no_eligible_cells() {
        let base = Scene::empty_room(5, 5);
        let mut blocked: Vec<bool> = (0..5)
            .flat_map(|r| (0..5).map(move |c| Cell::new(c, r)))
            .map(|c| base.is_blocked(c))
            .collect();
        for (c, r) in [(1, 1), (2, 1), (3, 1), (1, 2), (3, 2), (1, 3), (2, 3), (3, 3)] {
            blocked[r * 5 + c] = true;
        }
        let obj = ObjectInstance::new(7, CategoryId::new(0).unwrap(), vec![Cell::new(2, 2)]);
        let s = Scene::from_grid("x", 0, SceneType::Kitchen, 5, 5, blocked, vec![obj]).unwrap();
        assert!(matches!(
            eligible_goal_cells(&s, &s.objects()[0]),
            Err(Error::EmptyEligibleSet(7))
        ));
    }
}
