//! Deterministic 2D world: environments, unicycle kinematics with contact
//! clamping, bump detection and goal checks.

pub mod env;

use serde::{Deserialize, Serialize};

pub use env::{bundled, EnvError, EnvironmentSpec, Goal, GoalKind, HighlightRegion, Obstacle, Shape};

use crate::geometry::{Aabb, Point2, Pose, Prism, Segment, Twist};
use crate::planner::{AgentState, OccupancyGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldParams {
    pub resolution: f64,
    pub agent_radius: f64,
    pub v_max: f64,
    pub w_max: f64,
    pub max_dt: f64,
    pub wall_height: f64,
    /// Center distance below which an obstacle counts as bumped.
    pub bump_distance: f64,
    /// Center distance above which a bumped obstacle re-arms.
    pub bump_rearm_distance: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            resolution: 0.1,
            agent_radius: 0.3,
            v_max: 1.0,
            w_max: 1.5,
            max_dt: 0.2,
            wall_height: 2.5,
            bump_distance: 1.0,
            bump_rearm_distance: 1.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorldError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("non-finite command")]
    NonFiniteCommand,
    #[error("dt must satisfy 0 < dt <= {max}, got {dt}")]
    InvalidDt { dt: f64, max: f64 },
    #[error("start pose {index} is not in free space")]
    StartOccupied { index: usize },
    #[error("goal {0} anchor is not in free space")]
    AnchorOccupied(GoalKind),
    #[error("obstacle {0}: duplicate id")]
    DuplicateObstacle(String),
    #[error("grid: {0}")]
    Grid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpEvent {
    pub obstacle_id: String,
    pub distance: f64,
    pub time: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepEvents {
    /// Motion was clamped at contact.
    pub blocked: bool,
    pub bumps: Vec<BumpEvent>,
    /// Goals satisfied after this step.
    pub goals_reached: Vec<GoalKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub name: String,
    pub params: WorldParams,
    /// Walls and goal solids; obstacles are kept separately.
    pub static_grid: OccupancyGrid,
    pub walls: Vec<Aabb>,
    pub obstacles: Vec<Obstacle>,
    pub goals: Vec<Goal>,
    pub agent: AgentState,
    pub prev_pose: Pose,
    pub clock: f64,
    pub starts: Vec<Pose>,
    armed: Vec<bool>,
}

impl World {
    /// Parses, validates and instantiates an environment at its first start pose.
    pub fn load(text: &str, params: WorldParams) -> Result<Self, WorldError> {
        let spec = EnvironmentSpec::parse(text)?;
        Self::from_spec(&spec, params)
    }

    pub fn load_bundled(name: &str, params: WorldParams) -> Result<Self, WorldError> {
        let text = bundled(name).ok_or_else(|| EnvError::Validation(format!("no bundled environment {name:?}")))?;
        Self::load(text, params)
    }

    pub fn from_spec(spec: &EnvironmentSpec, params: WorldParams) -> Result<Self, WorldError> {
        let extent = spec.extent();
        let res = params.resolution;
        let snap = |v: f64| (v / res).floor() * res;
        let bounds = Aabb::new(
            Point2::new(snap(extent.min.x) - 2.0 * res, snap(extent.min.y) - 2.0 * res),
            Point2::new(extent.max.x + 2.0 * res, extent.max.y + 2.0 * res),
        );
        let mut grid = OccupancyGrid::covering(&bounds, params.resolution).map_err(|e| WorldError::Grid(e.to_string()))?;
        for w in &spec.walls {
            grid.rasterize(&crate::geometry::Region::Rect { bounds: *w });
        }
        for g in &spec.goals {
            for s in &g.highlight.solids {
                grid.rasterize(&s.footprint);
            }
        }
        let mut world = Self {
            name: spec.name.clone(),
            params,
            static_grid: grid,
            walls: spec.walls.clone(),
            obstacles: Vec::new(),
            goals: spec.goals.clone(),
            agent: AgentState {
                pose: spec.starts[0],
                twist: Twist::ZERO,
            },
            prev_pose: spec.starts[0],
            clock: 0.0,
            starts: spec.starts.clone(),
            armed: Vec::new(),
        };
        for o in &spec.obstacles {
            world.add_obstacle(o.clone())?;
        }
        for (index, s) in spec.starts.iter().enumerate() {
            if !world.disc_free(&s.position()) {
                return Err(WorldError::StartOccupied { index });
            }
        }
        for g in &world.goals {
            if !world.point_free(&g.anchor) {
                return Err(WorldError::AnchorOccupied(g.id));
            }
        }
        world.reset_agent(spec.starts[0]);
        Ok(world)
    }

    /// Places the agent at rest and re-arms bump detection.
    pub fn reset_agent(&mut self, pose: Pose) {
        self.agent = AgentState { pose, twist: Twist::ZERO };
        self.prev_pose = pose;
        self.armed = self.obstacles.iter().map(|o| self.arm_state(o)).collect();
    }

    fn arm_state(&self, o: &Obstacle) -> bool {
        self.agent.pose.position().distance(&o.center()) >= self.params.bump_distance
    }

    /// Adds an obstacle; it starts armed only if the agent is already clear of it.
    pub fn add_obstacle(&mut self, obstacle: Obstacle) -> Result<(), WorldError> {
        if self.obstacles.iter().any(|o| o.id == obstacle.id) {
            return Err(WorldError::DuplicateObstacle(obstacle.id));
        }
        self.armed.push(self.arm_state(&obstacle));
        self.obstacles.push(obstacle);
        Ok(())
    }

    pub fn goal(&self, kind: GoalKind) -> Option<&Goal> {
        self.goals.iter().find(|g| g.id == kind)
    }

    /// Static grid plus every obstacle marked as known to the map.
    pub fn planning_grid(&self) -> OccupancyGrid {
        let mut grid = self.static_grid.clone();
        for o in self.obstacles.iter().filter(|o| o.known_to_map) {
            grid.rasterize(&o.footprint());
        }
        grid
    }

    /// Grid without obstacles of any kind.
    pub fn walls_grid(&self) -> OccupancyGrid {
        self.static_grid.clone()
    }

    /// All goal solids, for rendering.
    pub fn goal_solids(&self) -> impl Iterator<Item = (GoalKind, &Prism)> {
        self.goals.iter().flat_map(|g| g.highlight.solids.iter().map(move |s| (g.id, s)))
    }

    fn point_free(&self, p: &Point2) -> bool {
        let inside_static = match self.static_grid.world_to_cell(p) {
            Some(c) => self.static_grid.is_occupied(c),
            None => true,
        };
        !inside_static && !self.obstacles.iter().any(|o| o.footprint().contains(p))
    }

    /// True if the agent disc at `p` overlaps no occupied static cell, no
    /// out-of-grid area and no obstacle footprint.
    pub fn disc_free(&self, p: &Point2) -> bool {
        let r = self.params.agent_radius;
        let g = &self.static_grid;
        let res = g.resolution();
        let o = g.origin();
        let c0 = ((p.x - r - o.x) / res).floor() as i64;
        let c1 = ((p.x + r - o.x) / res).floor() as i64;
        let r0 = ((p.y - r - o.y) / res).floor() as i64;
        let r1 = ((p.y + r - o.y) / res).floor() as i64;
        for row in r0..=r1 {
            for col in c0..=c1 {
                if !g.is_occupied_signed(col, row) {
                    continue;
                }
                let cell = Aabb::new(
                    Point2::new(o.x + col as f64 * res, o.y + row as f64 * res),
                    Point2::new(o.x + (col + 1) as f64 * res, o.y + (row + 1) as f64 * res),
                );
                if cell.distance(p) < r {
                    return false;
                }
            }
        }
        self.obstacles.iter().all(|ob| ob.footprint().distance(p) >= r)
    }

    /// Advances the simulation by `dt` under `cmd` (clamped to the limits).
    /// A rejected call leaves the world untouched.
    pub fn step(&mut self, cmd: Twist, dt: f64) -> Result<StepEvents, WorldError> {
        if !cmd.is_finite() {
            return Err(WorldError::NonFiniteCommand);
        }
        if !(dt > 0.0 && dt <= self.params.max_dt) {
            return Err(WorldError::InvalidDt {
                dt,
                max: self.params.max_dt,
            });
        }
        let cmd = cmd.clamped(self.params.v_max, self.params.w_max);
        let start = self.agent.pose;
        let target = start.integrate(cmd, dt);
        let (pose, blocked) = if self.disc_free(&target.position()) {
            (target, false)
        } else {
            let (a, b) = (start.position(), target.position());
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..48 {
                let mid = 0.5 * (lo + hi);
                if self.disc_free(&a.lerp(&b, mid)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let p = a.lerp(&b, lo);
            (Pose::new(p.x, p.y, target.theta), true)
        };
        self.prev_pose = start;
        self.agent.pose = pose;
        self.agent.twist = if blocked { Twist::new(0.0, cmd.w) } else { cmd };
        self.clock += dt;
        let bumps = self.detect_bump();
        let goals_reached = self.goals.iter().filter(|g| self.goal_reached(g)).map(|g| g.id).collect();
        Ok(StepEvents {
            blocked,
            bumps,
            goals_reached,
        })
    }

    /// Emits one event per obstacle whose center distance has just dropped
    /// below the bump distance while armed.
    pub fn detect_bump(&mut self) -> Vec<BumpEvent> {
        let p = self.agent.pose.position();
        let mut out = Vec::new();
        for (o, armed) in self.obstacles.iter().zip(self.armed.iter_mut()) {
            let d = p.distance(&o.center());
            if *armed && d < self.params.bump_distance {
                *armed = false;
                out.push(BumpEvent {
                    obstacle_id: o.id.clone(),
                    distance: d,
                    time: self.clock,
                });
            } else if !*armed && d > self.params.bump_rearm_distance {
                *armed = true;
            }
        }
        out
    }

    /// Door: the last step's motion segment touches the threshold.
    /// Bin and other goals: agent within reach radius of the anchor.
    pub fn goal_reached(&self, goal: &Goal) -> bool {
        match goal.threshold {
            Some(t) => Segment::new(self.prev_pose.position(), self.agent.pose.position()).intersects(&t),
            None => self.agent.pose.position().distance(&goal.anchor) <= goal.reach_radius,
        }
    }
}

/// Offline bump count over a pose trace with the same hysteresis as [`World`].
pub fn recount_bumps(trace: &[Point2], centers: &[Point2], bump: f64, rearm: f64) -> usize {
    let Some(first) = trace.first() else { return 0 };
    let mut count = 0;
    for c in centers {
        let mut armed = first.distance(c) >= bump;
        for p in &trace[1..] {
            let d = p.distance(c);
            if armed && d < bump {
                armed = false;
                count += 1;
            } else if !armed && d > rearm {
                armed = true;
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROOM: &str = r#"
format = 1
name = "room"
[map]
walls = [
  { from = [-3.0, -3.0], to = [3.0, -3.0], thickness = 0.2 },
  { from = [-3.0, 3.0], to = [3.0, 3.0], thickness = 0.2 },
  { from = [-3.0, -3.0], to = [-3.0, 3.0], thickness = 0.2 },
  { from = [3.0, -3.0], to = [3.0, 3.0], thickness = 0.2 },
]
[[starts]]
pose = [0.0, 0.0, 0.0]
"#;

    fn room() -> World {
        World::load(ROOM, WorldParams::default()).unwrap()
    }

    #[test]
    fn straight_and_turn() {
        let mut w = room();
        w.step(Twist::new(1.0, 0.0), 0.1).unwrap();
        assert!((w.agent.pose.x - 0.1).abs() < 1e-12 && w.agent.pose.y.abs() < 1e-12);
        let mut w = room();
        w.params.w_max = 4.0;
        for _ in 0..5 {
            w.step(Twist::new(0.0, std::f64::consts::PI), 0.1).unwrap();
        }
        assert!((w.agent.pose.theta - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert_eq!(w.agent.pose.position(), Point2::new(0.0, 0.0));
    }

    #[test]
    fn invalid_inputs_leave_world_unchanged() {
        let mut w = room();
        let before = w.clone();
        assert_eq!(w.step(Twist::new(f64::NAN, 0.0), 0.1), Err(WorldError::NonFiniteCommand));
        assert!(matches!(w.step(Twist::new(1.0, 0.0), 0.0), Err(WorldError::InvalidDt { .. })));
        assert!(matches!(w.step(Twist::new(1.0, 0.0), 0.25), Err(WorldError::InvalidDt { .. })));
        assert_eq!(w, before);
    }

    #[test]
    fn empty_room_has_no_obstacles() {
        let w = room();
        assert!(w.obstacles.is_empty());
    }

    #[test]
    fn start_inside_wall_is_rejected() {
        let text = ROOM.replace("pose = [0.0, 0.0, 0.0]", "pose = [3.0, 0.0, 0.0]");
        assert_eq!(
            World::load(&text, WorldParams::default()),
            Err(WorldError::StartOccupied { index: 0 })
        );
    }

    #[test]
    fn contact_clamp_stops_at_wall() {
        let mut w = room();
        // Inner wall face at x = 2.9; disc touches at x = 2.6.
        w.reset_agent(Pose::new(2.55, 0.0, 0.0));
        let ev = w.step(Twist::new(1.0, 0.0), 0.1).unwrap();
        assert!(ev.blocked);
        assert!((w.agent.pose.x - 2.6).abs() < 1e-6, "{}", w.agent.pose.x);
        assert!(w.agent.pose.x <= 2.6);
    }
}
