//! Scripted stand-in for a human pilot.
//!
//! With a path overlay the follower pure-pursues the displayed plan. Without
//! one it pure-pursues its own route planned on walls alone, so unmapped and
//! mapped obstacles are only discovered by running into them; on contact it
//! turns away, advances a little and re-routes. Heading and speed noise come
//! from a seeded generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::GuidanceMode;
use crate::geometry::{wrap_angle, Point2, Twist};
use crate::planner::dwa::carrot;
use crate::planner::{plan_global, Costmap, CostmapParams, PathPlan};
use crate::worldsim::{Goal, GoalKind, World};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowerParams {
    pub speed: f64,
    pub lookahead: f64,
    pub gain: f64,
    pub w_noise: f64,
    pub v_noise: f64,
    pub recovery_turn_time: f64,
    pub recovery_advance_time: f64,
}

impl Default for FollowerParams {
    fn default() -> Self {
        Self {
            speed: 0.8,
            lookahead: 1.0,
            gain: 2.0,
            w_noise: 0.25,
            v_noise: 0.05,
            recovery_turn_time: 0.6,
            recovery_advance_time: 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Recovery {
    Turn(f64),
    Advance(f64),
}

#[derive(Debug, Clone)]
pub struct NoisyFollower {
    params: FollowerParams,
    rng: ChaCha8Rng,
    w_dist: Normal<f64>,
    v_dist: Normal<f64>,
    walls: Option<Costmap>,
    costmap_params: CostmapParams,
    route: Option<(GoalKind, PathPlan)>,
    recovery: Option<Recovery>,
}

impl NoisyFollower {
    pub fn new(params: FollowerParams, costmap_params: CostmapParams, seed: u64) -> Self {
        Self {
            w_dist: Normal::new(0.0, params.w_noise.max(0.0)).expect("finite sigma"),
            v_dist: Normal::new(0.0, params.v_noise.max(0.0)).expect("finite sigma"),
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            walls: None,
            costmap_params,
            route: None,
            recovery: None,
        }
    }

    fn own_route(&mut self, world: &World, goal: &Goal, force: bool) -> Option<&PathPlan> {
        let walls = self
            .walls
            .get_or_insert_with(|| Costmap::new(world.walls_grid(), self.costmap_params));
        let stale = !matches!(&self.route, Some((k, _)) if *k == goal.id);
        if force || stale {
            self.route = plan_global(walls, &world.agent.pose, &goal.anchor, world.clock)
                .ok()
                .map(|p| (goal.id, p));
        }
        self.route.as_ref().map(|(_, p)| p)
    }

    fn pursue(&mut self, world: &World, target: Point2) -> Twist {
        let pose = world.agent.pose;
        let alpha = wrap_angle(pose.position().bearing_to(&target) - pose.theta);
        let w = self.params.gain * alpha + self.w_dist.sample(&mut self.rng);
        let v = (self.params.speed * alpha.cos().max(0.0) + self.v_dist.sample(&mut self.rng)).max(0.0);
        Twist::new(v, w)
    }

    /// Next command. `blocked` reports whether the previous step was clamped.
    pub fn command(
        &mut self,
        mode: GuidanceMode,
        world: &World,
        displayed: Option<&PathPlan>,
        goal: &Goal,
        blocked: bool,
        dt: f64,
    ) -> Twist {
        if blocked && self.recovery.is_none() {
            self.recovery = Some(Recovery::Turn(self.params.recovery_turn_time));
        }
        match self.recovery {
            Some(Recovery::Turn(left)) => {
                self.recovery = Some(if left - dt > 1e-9 {
                    Recovery::Turn(left - dt)
                } else {
                    Recovery::Advance(self.params.recovery_advance_time)
                });
                return Twist::new(0.0, 1.5);
            }
            Some(Recovery::Advance(left)) => {
                if left - dt > 1e-9 {
                    self.recovery = Some(Recovery::Advance(left - dt));
                } else {
                    self.recovery = None;
                    if !mode.overlays().path {
                        self.own_route(world, goal, true);
                    }
                }
                return Twist::new(self.params.speed, 0.0);
            }
            None => {}
        }
        let lookahead = self.params.lookahead;
        let pos = world.agent.pose.position();
        let target = match (mode.overlays().path, displayed) {
            (true, Some(plan)) if !plan.waypoints.is_empty() => carrot(plan, &pos, lookahead),
            _ => match self.own_route(world, goal, false) {
                Some(route) if !route.waypoints.is_empty() => carrot(route, &pos, lookahead),
                _ => goal.anchor,
            },
        };
        self.pursue(world, target)
    }
}
