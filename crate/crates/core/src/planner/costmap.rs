use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::grid::{Cell, OccupancyGrid};
use crate::geometry::Point2;

/// Cost of an occupied cell.
pub const LETHAL: u8 = 254;
/// Cost of a cell within the inflation radius of an occupied cell: the agent
/// footprint plus margin would overlap the obstacle.
pub const INSCRIBED: u8 = 253;
/// Highest cost in the decaying band outside the inflation radius.
pub const MAX_DECAY: u8 = 252;
pub const FREE: u8 = 0;

/// Lethal for planning and local control: occupied or inscribed.
pub fn is_lethal(cost: u8) -> bool {
    cost >= INSCRIBED
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostmapParams {
    /// Distance from an occupied cell within which cells are inscribed (lethal).
    pub inflation_radius: f64,
    /// Width of the band beyond `inflation_radius` over which cost decays to zero.
    pub cost_falloff: f64,
    /// Live cells are dropped after this many seconds in view without
    /// re-observation.
    pub live_expiry: f64,
}

impl Default for CostmapParams {
    fn default() -> Self {
        Self {
            inflation_radius: 0.45,
            cost_falloff: 0.6,
            live_expiry: 2.0,
        }
    }
}

/// Inflated cost grid with a static base layer and an expiring live layer.
///
/// Distances are measured from a cell center to the nearest occupied cell
/// square, so a cell touching an obstacle cell sits at half a cell.
#[derive(Debug, Clone)]
pub struct Costmap {
    base: OccupancyGrid,
    params: CostmapParams,
    kernel: Vec<(i64, i64, f64)>,
    base_dist: Vec<f64>,
    /// Live cell index to seconds spent observable but not re-observed.
    live: BTreeMap<usize, f64>,
    live_clock: Option<f64>,
    live_dist: Vec<f64>,
    costs: Vec<u8>,
}

impl Costmap {
    pub fn new(base: OccupancyGrid, params: CostmapParams) -> Self {
        let cap = params.inflation_radius + params.cost_falloff + base.resolution();
        let kernel = build_kernel(base.resolution(), cap);
        let n = base.len();
        let mut map = Self {
            base_dist: vec![cap; n],
            live_dist: vec![cap; n],
            costs: vec![FREE; n],
            live: BTreeMap::new(),
            live_clock: None,
            kernel,
            params,
            base,
        };
        let seeds: Vec<usize> = (0..n).filter(|&i| map.base.occupied_at_index(i) && map.is_boundary(i)).collect();
        let mut dist = std::mem::take(&mut map.base_dist);
        map.stamp(&seeds, &mut dist);
        for (i, d) in dist.iter_mut().enumerate() {
            if map.base.occupied_at_index(i) {
                *d = 0.0;
            }
        }
        map.base_dist = dist;
        map.recompute_costs();
        map
    }

    fn is_boundary(&self, index: usize) -> bool {
        let (c, r) = self.base.cell_of_index(index);
        let (c, r) = (c as i64, r as i64);
        [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .iter()
            .any(|(dc, dr)| self.base.in_bounds(c + dc, r + dr) && !self.base.is_occupied_signed(c + dc, r + dr))
    }

    fn stamp(&self, seeds: &[usize], dist: &mut [f64]) {
        let (w, h) = (self.base.width() as i64, self.base.height() as i64);
        for &s in seeds {
            let (c, r) = self.base.cell_of_index(s);
            for &(dc, dr, d) in &self.kernel {
                let (cc, rr) = (c as i64 + dc, r as i64 + dr);
                if cc < 0 || rr < 0 || cc >= w || rr >= h {
                    continue;
                }
                let i = (rr * w + cc) as usize;
                if d < dist[i] {
                    dist[i] = d;
                }
            }
        }
    }

    fn recompute_costs(&mut self) {
        let infl = self.params.inflation_radius;
        let fall = self.params.cost_falloff;
        for i in 0..self.costs.len() {
            let occupied = self.base.occupied_at_index(i) || self.live.contains_key(&i);
            self.costs[i] = if occupied {
                LETHAL
            } else {
                cost_from_distance(self.base_dist[i].min(self.live_dist[i]), infl, fall)
            };
        }
    }

    pub fn params(&self) -> &CostmapParams {
        &self.params
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.base
    }

    pub fn resolution(&self) -> f64 {
        self.base.resolution()
    }

    pub fn width(&self) -> usize {
        self.base.width()
    }

    pub fn height(&self) -> usize {
        self.base.height()
    }

    pub fn cost(&self, cell: Cell) -> u8 {
        self.costs[self.base.index(cell)]
    }

    pub fn cost_at_index(&self, index: usize) -> u8 {
        self.costs[index]
    }

    /// Cost at a world point; outside the grid is lethal.
    pub fn cost_at(&self, p: &Point2) -> u8 {
        self.base.world_to_cell(p).map_or(LETHAL, |c| self.cost(c))
    }

    pub fn is_lethal_at(&self, p: &Point2) -> bool {
        is_lethal(self.cost_at(p))
    }

    /// Distance from the cell center containing `p` to the nearest occupied
    /// square, capped one cell beyond `inflation_radius + cost_falloff`. Outside is zero.
    pub fn distance_at(&self, p: &Point2) -> f64 {
        self.base
            .world_to_cell(p)
            .map_or(0.0, |c| self.distance_at_index(self.base.index(c)))
    }

    pub fn distance_at_index(&self, index: usize) -> f64 {
        if self.base.occupied_at_index(index) || self.live.contains_key(&index) {
            0.0
        } else {
            self.base_dist[index].min(self.live_dist[index])
        }
    }

    pub fn distance_cap(&self) -> f64 {
        self.params.inflation_radius + self.params.cost_falloff + self.base.resolution()
    }

    pub fn live_cells(&self) -> &BTreeMap<usize, f64> {
        &self.live
    }

    /// Records sensed obstacle points at time `now`, drops expired live cells
    /// and refreshes costs. Every live cell counts as observable. Points on or
    /// touching statically occupied cells are ignored. Returns the number of
    /// live cells after the update.
    pub fn update_live(&mut self, points: &[Point2], now: f64) -> usize {
        self.update_live_observed(points, now, |_| true)
    }

    /// Like [`Costmap::update_live`], but the expiry clock of a live cell only
    /// runs while `observable(cell_center)` holds, i.e. while an obstacle
    /// there would have produced a point. Cells out of view or occluded keep
    /// their state.
    pub fn update_live_observed(&mut self, points: &[Point2], now: f64, observable: impl Fn(&Point2) -> bool) -> usize {
        let dt = self.live_clock.map_or(0.0, |last| (now - last).max(0.0));
        self.live_clock = Some(now);
        let mut seen = std::collections::BTreeSet::new();
        for p in points {
            if let Some(cell) = self.base.world_to_cell(p) {
                if !self.touches_static(cell, p) {
                    seen.insert(self.base.index(cell));
                }
            }
        }
        for (i, missed) in self.live.iter_mut() {
            if !seen.contains(i) && observable(&self.base.cell_center(self.base.cell_of_index(*i))) {
                *missed += dt;
            }
        }
        for i in seen {
            self.live.insert(i, 0.0);
        }
        let expiry = self.params.live_expiry;
        self.live.retain(|_, missed| *missed < expiry);
        self.refresh_live();
        self.live.len()
    }

    fn touches_static(&self, cell: Cell, p: &Point2) -> bool {
        const EPS: f64 = 1e-6;
        let (c, r) = (cell.0 as i64, cell.1 as i64);
        (-1..=1).any(|dr| {
            (-1..=1).any(|dc| {
                let (cc, rr) = (c + dc, r + dr);
                self.base.in_bounds(cc, rr)
                    && self.base.is_occupied_signed(cc, rr)
                    && self.base.cell_bounds((cc as usize, rr as usize)).distance(p) <= EPS
            })
        })
    }

    /// Drops every live cell.
    pub fn clear_live(&mut self) {
        self.live.clear();
        self.live_clock = None;
        self.refresh_live();
    }

    fn refresh_live(&mut self) {
        let cap = self.distance_cap();
        let mut dist = vec![cap; self.base.len()];
        let seeds: Vec<usize> = self.live.keys().copied().collect();
        self.stamp(&seeds, &mut dist);
        for &s in &seeds {
            dist[s] = 0.0;
        }
        self.live_dist = dist;
        self.recompute_costs();
    }
}

/// Cost as a function of distance to the nearest occupied square.
pub fn cost_from_distance(d: f64, inflation_radius: f64, falloff: f64) -> u8 {
    if d <= 0.0 {
        LETHAL
    } else if d <= inflation_radius {
        INSCRIBED
    } else if falloff > 0.0 && d < inflation_radius + falloff {
        let frac = 1.0 - (d - inflation_radius) / falloff;
        (1.0 + (MAX_DECAY as f64 - 1.0) * frac).floor().clamp(1.0, MAX_DECAY as f64) as u8
    } else {
        FREE
    }
}

fn build_kernel(resolution: f64, radius: f64) -> Vec<(i64, i64, f64)> {
    let reach = (radius / resolution).ceil() as i64 + 1;
    let mut kernel = Vec::new();
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            let gx = (dc.abs() as f64 - 0.5).max(0.0);
            let gy = (dr.abs() as f64 - 0.5).max(0.0);
            let d = if dc == 0 && dr == 0 { 0.0 } else { resolution * gx.hypot(gy) };
            if d < radius {
                kernel.push((dc, dr, d));
            }
        }
    }
    kernel
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Region};

    fn grid_with_block() -> OccupancyGrid {
        let mut g = OccupancyGrid::new(0.1, 40, 40, Point2::new(0.0, 0.0)).unwrap();
        g.rasterize(&Region::Rect {
            bounds: Aabb::new(Point2::new(1.5, 1.5), Point2::new(2.5, 2.5)),
        });
        g
    }

    #[test]
    fn occupied_cells_are_lethal_and_cost_decays() {
        let cm = Costmap::new(grid_with_block(), CostmapParams::default());
        assert_eq!(cm.cost_at(&Point2::new(2.0, 2.0)), LETHAL);
        // 0.25 m from the block face: inscribed
        assert_eq!(cm.cost_at(&Point2::new(2.75, 2.0)), INSCRIBED);
        let c1 = cm.cost_at(&Point2::new(3.05, 2.0));
        let c2 = cm.cost_at(&Point2::new(3.35, 2.0));
        assert!(c1 < INSCRIBED && c1 > c2 && c2 > FREE, "{c1} {c2}");
        assert_eq!(cm.cost_at(&Point2::new(3.85, 2.0)), FREE);
    }

    #[test]
    fn distance_matches_brute_force_to_squares() {
        let g = grid_with_block();
        let cm = Costmap::new(g.clone(), CostmapParams::default());
        for row in 0..g.height() {
            for col in 0..g.width() {
                let c = g.cell_center((col, row));
                let mut best = cm.distance_cap();
                for r2 in 0..g.height() {
                    for c2 in 0..g.width() {
                        if g.is_occupied((c2, r2)) {
                            best = best.min(g.cell_bounds((c2, r2)).distance(&c));
                        }
                    }
                }
                let got = cm.distance_at(&c);
                assert!((got - best).abs() < 1e-9, "cell {col},{row}: {got} vs {best}");
            }
        }
    }

    #[test]
    fn live_cells_expire_without_reobservation() {
        let g = OccupancyGrid::new(0.1, 40, 40, Point2::new(0.0, 0.0)).unwrap();
        let mut cm = Costmap::new(g, CostmapParams::default());
        let p = Point2::new(2.0, 2.0);
        cm.update_live(&[p], 0.0);
        assert_eq!(cm.cost_at(&p), LETHAL);
        cm.update_live(&[], 1.9);
        assert_eq!(cm.cost_at(&p), LETHAL);
        cm.update_live(&[p], 1.95);
        cm.update_live(&[], 3.9);
        assert_eq!(cm.cost_at(&p), LETHAL);
        cm.update_live(&[], 3.96);
        assert_eq!(cm.cost_at(&p), FREE);
    }

    #[test]
    fn unobservable_cells_do_not_age() {
        let g = OccupancyGrid::new(0.1, 40, 40, Point2::new(0.0, 0.0)).unwrap();
        let mut cm = Costmap::new(g, CostmapParams::default());
        let p = Point2::new(2.0, 2.0);
        cm.update_live(&[p], 0.0);
        cm.update_live_observed(&[], 1.5, |_| true);
        cm.update_live_observed(&[], 10.0, |_| false);
        assert_eq!(cm.cost_at(&p), LETHAL);
        cm.update_live_observed(&[], 10.4, |_| true);
        assert_eq!(cm.cost_at(&p), LETHAL);
        cm.update_live_observed(&[], 10.6, |_| true);
        assert_eq!(cm.cost_at(&p), FREE);
    }
}
