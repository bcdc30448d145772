//! Octile A* over the inflated costmap.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::costmap::{is_lethal, Costmap, INSCRIBED, LETHAL, MAX_DECAY};
use super::grid::Cell;
use super::PlanError;
use crate::geometry::{polyline_length, Point2, Pose};

/// Integer cost of an axis-aligned step.
pub const STRAIGHT: u64 = 1000;
/// Integer cost of a diagonal step (√2 scaled and truncated).
pub const DIAGONAL: u64 = 1414;
/// Extra traversal cost per unit of normalized cell cost.
pub const PENALTY_WEIGHT: u64 = 4;

pub const NEIGHBORS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Cost of stepping into a cell of cost `target_cost`.
pub fn step_cost(diagonal: bool, target_cost: u8) -> u64 {
    let base = if diagonal { DIAGONAL } else { STRAIGHT };
    base + base * PENALTY_WEIGHT * u64::from(target_cost.min(MAX_DECAY)) / u64::from(MAX_DECAY)
}

/// Octile distance heuristic in the integer cost unit.
pub fn octile(a: Cell, b: Cell) -> u64 {
    let dx = a.0.abs_diff(b.0) as u64;
    let dy = a.1.abs_diff(b.1) as u64;
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    STRAIGHT * (hi - lo) + DIAGONAL * lo
}

/// Whether a step from `from` into `to` is allowed.
///
/// Lethal cells are never entered, except that an agent standing in an
/// inscribed cell may move through inscribed cells whose obstacle distance
/// does not decrease, so it can escape.
pub fn passable(costmap: &Costmap, from: usize, to: usize) -> bool {
    let c_to = costmap.cost_at_index(to);
    if c_to == LETHAL {
        return false;
    }
    if !is_lethal(c_to) {
        return true;
    }
    costmap.cost_at_index(from) >= INSCRIBED && costmap.distance_at_index(to) >= costmap.distance_at_index(from)
}

/// Successors of `cell` with their step costs. Diagonal moves require both
/// orthogonal neighbours to be passable (no corner cutting).
pub fn successors(costmap: &Costmap, cell: Cell) -> Vec<(Cell, u64)> {
    let grid = costmap.grid();
    let from = grid.index(cell);
    let (c, r) = (cell.0 as i64, cell.1 as i64);
    let mut out = Vec::with_capacity(8);
    for &(dc, dr) in &NEIGHBORS {
        let (nc, nr) = (c + dc, r + dr);
        if !grid.in_bounds(nc, nr) {
            continue;
        }
        let to = grid.index((nc as usize, nr as usize));
        if !passable(costmap, from, to) {
            continue;
        }
        let diagonal = dc != 0 && dr != 0;
        if diagonal {
            let o1 = grid.index(((c + dc) as usize, r as usize));
            let o2 = grid.index((c as usize, (r + dr) as usize));
            if !passable(costmap, from, o1) || !passable(costmap, from, o2) {
                continue;
            }
        }
        out.push(((nc as usize, nr as usize), step_cost(diagonal, costmap.cost_at_index(to))));
    }
    out
}

/// Raw grid search result.
#[derive(Debug, Clone)]
pub struct GridPath {
    pub cells: Vec<Cell>,
    pub cost: u64,
    /// `(cell index, f-value)` of every node in expansion order.
    pub expanded: Vec<(usize, u64)>,
}

/// A* between two cells. Fails with `Unreachable` when the goal is lethal or
/// disconnected from the start.
pub fn search(costmap: &Costmap, start: Cell, goal: Cell) -> Result<GridPath, PlanError> {
    let grid = costmap.grid();
    let n = grid.len();
    let start_i = grid.index(start);
    let goal_i = grid.index(goal);
    if costmap.cost_at_index(start_i) == LETHAL {
        return Err(PlanError::StartBlocked);
    }
    if is_lethal(costmap.cost_at_index(goal_i)) {
        return Err(PlanError::Unreachable("goal lies in lethal cost".into()));
    }
    let mut g = vec![u64::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let mut expanded = Vec::new();
    g[start_i] = 0;
    // ties on f broken by larger g (deeper first), then lower index
    open.push(Reverse((octile(start, goal), Reverse(0u64), start_i)));
    while let Some(Reverse((f, Reverse(gc), i))) = open.pop() {
        if closed[i] || gc != g[i] {
            continue;
        }
        closed[i] = true;
        expanded.push((i, f));
        if i == goal_i {
            let mut cells = vec![grid.cell_of_index(i)];
            let mut cur = i;
            while cur != start_i {
                cur = parent[cur];
                cells.push(grid.cell_of_index(cur));
            }
            cells.reverse();
            return Ok(GridPath { cells, cost: gc, expanded });
        }
        let cell = grid.cell_of_index(i);
        for (next, step) in successors(costmap, cell) {
            let j = grid.index(next);
            if closed[j] {
                continue;
            }
            let cand = gc + step;
            if cand < g[j] {
                g[j] = cand;
                parent[j] = i;
                open.push(Reverse((cand + octile(next, goal), Reverse(cand), j)));
            }
        }
    }
    Err(PlanError::Unreachable("no path between start and goal".into()))
}

/// Ordered ground waypoints from the global planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPlan {
    /// Smoothed waypoints used for tracking and display.
    pub waypoints: Vec<Point2>,
    /// Unsmoothed cell centers from the grid search.
    pub raw: Vec<Point2>,
    /// Integer search cost of the raw path.
    pub cost: u64,
    /// Length of `waypoints` in meters.
    pub total_length: f64,
    pub created_at: f64,
    pub goal: Point2,
}

impl PathPlan {
    pub fn raw_length(&self) -> f64 {
        polyline_length(&self.raw)
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }
}

/// Global plan from `start` to `goal` on the costmap.
pub fn plan_global(costmap: &Costmap, start: &Pose, goal: &Point2, now: f64) -> Result<PathPlan, PlanError> {
    if !start.is_finite() || !goal.is_finite() {
        return Err(PlanError::InvalidInput("non-finite start or goal".into()));
    }
    let grid = costmap.grid();
    let start_cell = grid
        .world_to_cell(&start.position())
        .ok_or_else(|| PlanError::InvalidInput("start outside the map".into()))?;
    let goal_cell = grid
        .world_to_cell(goal)
        .ok_or_else(|| PlanError::InvalidInput("goal outside the map".into()))?;
    let path = search(costmap, start_cell, goal_cell)?;
    let raw: Vec<Point2> = path.cells.iter().map(|&c| grid.cell_center(c)).collect();
    let waypoints = smooth(costmap, &path.cells);
    Ok(PathPlan {
        total_length: polyline_length(&waypoints),
        waypoints,
        raw,
        cost: path.cost,
        created_at: now,
        goal: *goal,
    })
}

/// Greedy line-of-sight shortcutting. A shortcut is taken only if every cell
/// it crosses is non-lethal and no costlier than the worst raw cell it replaces.
pub fn smooth(costmap: &Costmap, cells: &[Cell]) -> Vec<Point2> {
    let grid = costmap.grid();
    let centers: Vec<Point2> = cells.iter().map(|&c| grid.cell_center(c)).collect();
    if centers.len() <= 2 {
        return centers;
    }
    let mut out = vec![centers[0]];
    let mut i = 0;
    while i < centers.len() - 1 {
        let mut best = i + 1;
        let mut worst = costmap.cost(cells[i]).max(costmap.cost(cells[i + 1]));
        for j in (i + 2)..centers.len() {
            worst = worst.max(costmap.cost(cells[j]));
            if line_of_sight(costmap, &centers[i], &centers[j], worst) {
                best = j;
            } else {
                break;
            }
        }
        out.push(centers[best]);
        i = best;
    }
    out
}

fn line_of_sight(costmap: &Costmap, a: &Point2, b: &Point2, max_cost: u8) -> bool {
    let step = costmap.resolution() / 4.0;
    let n = (a.distance(b) / step).ceil().max(1.0) as usize;
    (0..=n).all(|k| {
        let c = costmap.cost_at(&a.lerp(b, k as f64 / n as f64));
        c != LETHAL && c <= max_cost
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::costmap::CostmapParams;
    use crate::planner::grid::OccupancyGrid;

    fn bare(params: CostmapParams, w: usize, h: usize, res: f64) -> Costmap {
        Costmap::new(OccupancyGrid::new(res, w, h, Point2::new(0.0, 0.0)).unwrap(), params)
    }

    fn no_inflation() -> CostmapParams {
        CostmapParams {
            inflation_radius: 0.0,
            cost_falloff: 0.0,
            live_expiry: 2.0,
        }
    }

    #[test]
    fn empty_grid_diagonal_length() {
        let cm = bare(no_inflation(), 10, 10, 1.0);
        let plan = plan_global(&cm, &Pose::new(0.5, 0.5, 0.0), &Point2::new(9.5, 9.5), 0.0).unwrap();
        assert!((plan.raw_length() - 9.0 * 2f64.sqrt()).abs() < 1e-9);
        assert!((plan.total_length - 9.0 * 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(plan.cost, 9 * DIAGONAL);
        assert_eq!(plan.waypoints.len(), 2);
    }

    #[test]
    fn goal_in_lethal_is_unreachable() {
        let mut g = OccupancyGrid::new(0.1, 50, 50, Point2::new(0.0, 0.0)).unwrap();
        g.set((25, 25), true);
        let cm = Costmap::new(g, CostmapParams::default());
        let err = plan_global(&cm, &Pose::new(0.5, 0.5, 0.0), &Point2::new(2.62, 2.55), 0.0).unwrap_err();
        assert!(matches!(err, PlanError::Unreachable(_)), "{err:?}");
        let err = plan_global(&cm, &Pose::new(0.5, 0.5, 0.0), &Point2::new(20.0, 2.0), 0.0).unwrap_err();
        assert!(matches!(err, PlanError::InvalidInput(_)));
    }

    #[test]
    fn raw_waypoints_are_adjacent_and_not_lethal() {
        let mut g = OccupancyGrid::new(0.1, 60, 40, Point2::new(0.0, 0.0)).unwrap();
        for row in 0..30 {
            g.set((30, row), true);
        }
        let cm = Costmap::new(g, CostmapParams::default());
        let plan = plan_global(&cm, &Pose::new(0.5, 0.5, 0.0), &Point2::new(5.5, 0.5), 0.0).unwrap();
        for w in plan.raw.windows(2) {
            assert!(w[0].distance(&w[1]) <= 0.1 * 2f64.sqrt() + 1e-9);
        }
        for p in plan.raw.iter().chain(&plan.waypoints) {
            assert!(!cm.is_lethal_at(p));
        }
    }

    #[test]
    fn escape_from_inscribed_start() {
        let mut g = OccupancyGrid::new(0.1, 60, 60, Point2::new(0.0, 0.0)).unwrap();
        g.set((30, 30), true);
        let cm = Costmap::new(g, CostmapParams::default());
        let start = Pose::new(3.25, 3.05, 0.0);
        assert!(cm.is_lethal_at(&start.position()));
        let plan = plan_global(&cm, &start, &Point2::new(5.5, 5.5), 0.0).unwrap();
        assert!(plan.raw.len() > 2);
    }
}
