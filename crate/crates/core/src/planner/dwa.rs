//! Dynamic window local controller.
//!
//! Candidates are sampled from the velocities reachable within one control
//! period. A candidate is admissible if, after holding it for one control
//! period and then braking at the acceleration limits, the agent never enters
//! lethal cost. Admissible candidates are scored by heading toward a carrot on
//! the global path, clearance along the horizon rollout, and forward speed.

use serde::{Deserialize, Serialize};

use super::astar::PathPlan;
use super::costmap::{is_lethal, Costmap, LETHAL};
use crate::geometry::{wrap_angle, Point2, Pose, Segment, Twist};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DwaParams {
    pub v_max: f64,
    pub w_max: f64,
    pub acc_v: f64,
    pub acc_w: f64,
    pub control_period: f64,
    pub horizon: f64,
    /// Integration step for rollouts and braking checks.
    pub sim_step: f64,
    pub n_v: usize,
    pub n_w: usize,
    pub heading_weight: f64,
    pub clearance_weight: f64,
    pub velocity_weight: f64,
    /// Arc length along the plan from the agent's projection to the carrot.
    pub carrot_distance: f64,
    /// Clearance saturates at this distance.
    pub clearance_cap: f64,
    /// Stop once this close to the final waypoint.
    pub goal_tolerance: f64,
    /// Deceleration used to cap speed near the end of the plan:
    /// `v <= sqrt(2 * approach_decel * remaining)`. Zero disables the cap.
    pub approach_decel: f64,
}

impl Default for DwaParams {
    fn default() -> Self {
        Self {
            v_max: 1.0,
            w_max: 1.5,
            acc_v: 0.8,
            acc_w: 3.0,
            control_period: 0.1,
            horizon: 2.0,
            sim_step: 0.05,
            n_v: 11,
            n_w: 21,
            heading_weight: 0.8,
            clearance_weight: 0.2,
            velocity_weight: 0.2,
            carrot_distance: 1.0,
            clearance_cap: 0.6,
            goal_tolerance: 0.15,
            approach_decel: 0.5,
        }
    }
}

/// Current agent pose and velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState {
    pub pose: Pose,
    pub twist: Twist,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub twist: Twist,
    pub admissible: bool,
    pub heading: f64,
    pub clearance: f64,
    pub velocity: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DwaDiagnostics {
    pub all_blocked: bool,
    pub at_goal: bool,
    pub candidates: usize,
    pub admissible: usize,
    pub best_score: f64,
    pub carrot: Option<Point2>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DwaOutput {
    pub twist: Twist,
    pub diagnostics: DwaDiagnostics,
}

/// Sampled velocities inside the dynamic window, v-major, endpoints included.
pub fn sample_window(current: Twist, params: &DwaParams) -> Vec<Twist> {
    let dv = params.acc_v * params.control_period;
    let dw = params.acc_w * params.control_period;
    let v_lo = (current.v - dv).clamp(0.0, params.v_max);
    let v_hi = (current.v + dv).clamp(0.0, params.v_max);
    let w_lo = (current.w - dw).clamp(-params.w_max, params.w_max);
    let w_hi = (current.w + dw).clamp(-params.w_max, params.w_max);
    let lin = |lo: f64, hi: f64, n: usize, k: usize| {
        if n <= 1 || hi == lo {
            lo
        } else if k + 1 == n {
            hi
        } else {
            lo + (hi - lo) * k as f64 / (n - 1) as f64
        }
    };
    let mut out: Vec<Twist> = Vec::with_capacity(params.n_v * params.n_w);
    for i in 0..params.n_v {
        let v = lin(v_lo, v_hi, params.n_v, i);
        for j in 0..params.n_w {
            let w = lin(w_lo, w_hi, params.n_w, j);
            let t = Twist::new(v, w);
            if !out.contains(&t) {
                out.push(t);
            }
        }
    }
    out
}

/// Poses from holding `twist` over the horizon, starting pose included.
pub fn rollout(pose: &Pose, twist: Twist, params: &DwaParams) -> Vec<Pose> {
    let steps = (params.horizon / params.sim_step).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut p = *pose;
    out.push(p);
    for _ in 0..steps {
        p = p.integrate(twist, params.sim_step);
        out.push(p);
    }
    out
}

/// Poses from holding `twist` for one control period and then decelerating
/// both velocities to zero at the acceleration limits.
pub fn braking_trajectory(pose: &Pose, twist: Twist, params: &DwaParams) -> Vec<Pose> {
    let mut out = vec![*pose];
    let mut p = *pose;
    let hold = (params.control_period / params.sim_step).round().max(1.0) as usize;
    for _ in 0..hold {
        p = p.integrate(twist, params.sim_step);
        out.push(p);
    }
    let (mut v, mut w) = (twist.v, twist.w);
    let dv = params.acc_v * params.sim_step;
    let dw = params.acc_w * params.sim_step;
    while v != 0.0 || w != 0.0 {
        v = if v > 0.0 { (v - dv).max(0.0) } else { (v + dv).min(0.0) };
        w = if w > 0.0 { (w - dw).max(0.0) } else { (w + dw).min(0.0) };
        p = p.integrate(Twist::new(v, w), params.sim_step);
        out.push(p);
    }
    out
}

/// True if a pose trace never enters lethal cost. An agent that starts in
/// inscribed cost may stay in it only while its obstacle distance does not
/// shrink.
pub fn trace_is_safe(costmap: &Costmap, trace: &[Pose]) -> bool {
    let Some(first) = trace.first() else {
        return true;
    };
    let start = first.position();
    let escaping = costmap.is_lethal_at(&start);
    let mut last_dist = costmap.distance_at(&start);
    for p in &trace[1..] {
        let q = p.position();
        let c = costmap.cost_at(&q);
        if c == LETHAL {
            return false;
        }
        if is_lethal(c) {
            let d = costmap.distance_at(&q);
            if !escaping || d < last_dist {
                return false;
            }
            last_dist = d;
        }
    }
    true
}

/// Closest point on the waypoint polyline and the arc length at which it sits.
pub fn project_onto_path(waypoints: &[Point2], p: &Point2) -> (Point2, f64) {
    if waypoints.len() == 1 {
        return (waypoints[0], 0.0);
    }
    let mut best = (waypoints[0], 0.0, f64::INFINITY);
    let mut acc = 0.0;
    for w in waypoints.windows(2) {
        let seg = Segment::new(w[0], w[1]);
        let (q, s) = seg.closest_point(p);
        let d = q.distance(p);
        if d < best.2 {
            best = (q, acc + s * seg.length(), d);
        }
        acc += seg.length();
    }
    (best.0, best.1)
}

/// Point at arc length `s` along the polyline (clamped to its ends).
pub fn point_at_arc_length(waypoints: &[Point2], s: f64) -> Point2 {
    let mut acc = 0.0;
    for w in waypoints.windows(2) {
        let len = w[0].distance(&w[1]);
        if acc + len >= s && len > 0.0 {
            return w[0].lerp(&w[1], ((s - acc) / len).clamp(0.0, 1.0));
        }
        acc += len;
    }
    *waypoints.last().expect("non-empty polyline")
}

/// Carrot point `carrot_distance` ahead of the agent's projection on the plan.
pub fn carrot(plan: &PathPlan, agent: &Point2, carrot_distance: f64) -> Point2 {
    let (_, s) = project_onto_path(&plan.waypoints, agent);
    point_at_arc_length(&plan.waypoints, s + carrot_distance)
}

fn heading_score(agent: &Pose, roll: &[Pose], carrot: &Point2) -> f64 {
    let origin = agent.position();
    let target = carrot.distance(&origin);
    let want = origin.bearing_to(carrot);
    let mut travelled = 0.0;
    let mut probe = None;
    for w in roll.windows(2) {
        travelled += w[0].position().distance(&w[1].position());
        if travelled >= target {
            probe = Some(w[1].position());
            break;
        }
    }
    let end = roll.last().expect("rollout has the start pose");
    let probe = probe.unwrap_or_else(|| end.position());
    let got = if probe.distance(&origin) > 1e-6 && travelled > 1e-6 {
        origin.bearing_to(&probe)
    } else {
        end.theta
    };
    1.0 - wrap_angle(want - got).abs() / std::f64::consts::PI
}

fn clearance_score(costmap: &Costmap, roll: &[Pose], cap: f64) -> f64 {
    let mut best = cap;
    for p in roll {
        let q = p.position();
        let d = if costmap.cost_at(&q) == LETHAL {
            0.0
        } else {
            costmap.distance_at(&q)
        };
        best = best.min(d);
    }
    (best / cap).clamp(0.0, 1.0)
}

/// Scores every sampled candidate. Inadmissible candidates keep their terms
/// but are excluded from selection. Candidates faster than `v_cap` are
/// inadmissible, except those at the window's lowest speed.
pub fn evaluate_candidates(agent: &AgentState, carrot: &Point2, costmap: &Costmap, params: &DwaParams, v_cap: f64) -> Vec<Candidate> {
    let window = sample_window(agent.twist, params);
    let v_floor = window.iter().map(|t| t.v).fold(f64::INFINITY, f64::min);
    let v_limit = v_cap.max(v_floor);
    window
        .into_iter()
        .map(|twist| {
            let braking = braking_trajectory(&agent.pose, twist, params);
            let admissible = twist.v <= v_limit && trace_is_safe(costmap, &braking);
            let roll = rollout(&agent.pose, twist, params);
            let heading = heading_score(&agent.pose, &roll, carrot);
            let clearance = clearance_score(costmap, &braking, params.clearance_cap);
            let velocity = if params.v_max > 0.0 { twist.v / params.v_max } else { 0.0 };
            let score = params.heading_weight * heading + params.clearance_weight * clearance + params.velocity_weight * velocity;
            Candidate {
                twist,
                admissible,
                heading,
                clearance,
                velocity,
                score,
            }
        })
        .collect()
}

/// Deterministic preference between two admissible candidates: higher score,
/// then lower |w|, then lower v.
pub fn better(a: &Candidate, b: &Candidate) -> bool {
    if a.score != b.score {
        return a.score > b.score;
    }
    if a.twist.w.abs() != b.twist.w.abs() {
        return a.twist.w.abs() < b.twist.w.abs();
    }
    if a.twist.v != b.twist.v {
        return a.twist.v < b.twist.v;
    }
    // symmetric ±w with equal score: prefer left
    a.twist.w > b.twist.w
}

/// One DWA control decision.
pub fn dwa_step(agent: &AgentState, plan: &PathPlan, costmap: &Costmap, params: &DwaParams) -> DwaOutput {
    let position = agent.pose.position();
    let Some(last) = plan.waypoints.last() else {
        return DwaOutput {
            twist: Twist::ZERO,
            diagnostics: DwaDiagnostics {
                all_blocked: true,
                ..Default::default()
            },
        };
    };
    if position.distance(last) <= params.goal_tolerance {
        return DwaOutput {
            twist: Twist::ZERO,
            diagnostics: DwaDiagnostics {
                at_goal: true,
                carrot: Some(*last),
                ..Default::default()
            },
        };
    }
    let target = carrot(plan, &position, params.carrot_distance);
    select(agent, &target, costmap, params, approach_cap(plan, &position, params))
}

/// Speed from which the agent can stop at the final waypoint decelerating at
/// `approach_decel`, using the remaining arc length past its projection.
pub fn approach_cap(plan: &PathPlan, agent: &Point2, params: &DwaParams) -> f64 {
    if params.approach_decel <= 0.0 {
        return f64::INFINITY;
    }
    let (_, s) = project_onto_path(&plan.waypoints, agent);
    let total: f64 = plan.waypoints.windows(2).map(|w| w[0].distance(&w[1])).sum();
    let remaining = (total - s)
        .max(0.0)
        .max(agent.distance(plan.waypoints.last().expect("non-empty plan")));
    (2.0 * params.approach_decel * (remaining - params.goal_tolerance).max(0.0)).sqrt()
}

/// DWA selection toward an explicit target point instead of a plan carrot.
pub fn dwa_toward(agent: &AgentState, target: &Point2, costmap: &Costmap, params: &DwaParams) -> DwaOutput {
    select(agent, target, costmap, params, f64::INFINITY)
}

fn select(agent: &AgentState, target: &Point2, costmap: &Costmap, params: &DwaParams, v_cap: f64) -> DwaOutput {
    let candidates = evaluate_candidates(agent, target, costmap, params, v_cap);
    let mut best: Option<&Candidate> = None;
    for c in candidates.iter().filter(|c| c.admissible) {
        if best.is_none_or(|b| better(c, b)) {
            best = Some(c);
        }
    }
    let admissible = candidates.iter().filter(|c| c.admissible).count();
    let diagnostics = DwaDiagnostics {
        all_blocked: best.is_none(),
        at_goal: false,
        candidates: candidates.len(),
        admissible,
        best_score: best.map_or(0.0, |b| b.score),
        carrot: Some(*target),
    };
    DwaOutput {
        twist: best.map_or(Twist::ZERO, |b| b.twist),
        diagnostics,
    }
}

/// Heading, among `n` evenly spaced ones, whose probe point `reach` ahead
/// has the largest obstacle distance. Ties go to the smallest turn.
pub fn freest_heading(costmap: &Costmap, pose: &Pose, reach: f64, n: usize) -> f64 {
    let p = pose.position();
    let mut best = (f64::NEG_INFINITY, f64::INFINITY, pose.theta);
    for k in 0..n {
        let turn = wrap_angle(2.0 * std::f64::consts::PI * k as f64 / n as f64);
        let heading = pose.theta + turn;
        let q = Point2::new(p.x + reach * heading.cos(), p.y + reach * heading.sin());
        let d = if costmap.cost_at(&q) == LETHAL {
            0.0
        } else {
            costmap.distance_at(&q)
        };
        if d > best.0 || (d == best.0 && turn.abs() < best.1) {
            best = (d, turn.abs(), wrap_angle(heading));
        }
    }
    best.2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::costmap::CostmapParams;
    use crate::planner::grid::OccupancyGrid;

    fn straight_plan(from: Point2, to: Point2) -> PathPlan {
        PathPlan {
            waypoints: vec![from, to],
            raw: vec![from, to],
            cost: 0,
            total_length: from.distance(&to),
            created_at: 0.0,
            goal: to,
        }
    }

    fn open_costmap() -> Costmap {
        Costmap::new(
            OccupancyGrid::new(0.1, 200, 100, Point2::new(0.0, 0.0)).unwrap(),
            CostmapParams::default(),
        )
    }

    #[test]
    fn window_has_requested_samples() {
        let p = DwaParams::default();
        let w = sample_window(Twist::new(0.5, 0.0), &p);
        assert_eq!(w.len(), 11 * 21);
        assert!(w.iter().all(|t| t.v >= 0.42 - 1e-12 && t.v <= 0.58 + 1e-12));
    }

    #[test]
    fn open_field_goes_straight_near_top_speed() {
        let p = DwaParams::default();
        let cm = open_costmap();
        let agent = AgentState {
            pose: Pose::new(2.0, 5.0, 0.0),
            twist: Twist::new(p.v_max, 0.0),
        };
        let plan = straight_plan(Point2::new(2.0, 5.0), Point2::new(18.0, 5.0));
        let out = dwa_step(&agent, &plan, &cm, &p);
        let v_step = p.acc_v * p.control_period / (p.n_v - 1) as f64;
        assert!(out.twist.w.abs() < 1e-12, "{:?}", out.twist);
        assert!(p.v_max - out.twist.v <= v_step + 1e-12, "{:?}", out.twist);
    }

    #[test]
    fn at_goal_stops() {
        let p = DwaParams::default();
        let cm = open_costmap();
        let agent = AgentState {
            pose: Pose::new(5.0, 5.0, 0.0),
            twist: Twist::ZERO,
        };
        let plan = straight_plan(Point2::new(2.0, 5.0), Point2::new(5.0, 5.0));
        let out = dwa_step(&agent, &plan, &cm, &p);
        assert_eq!(out.twist, Twist::ZERO);
        assert!(out.diagnostics.at_goal);
    }

    #[test]
    fn braking_distance_matches_kinematics() {
        let p = DwaParams::default();
        let tr = braking_trajectory(&Pose::new(0.0, 0.0, 0.0), Twist::new(1.0, 0.0), &p);
        let end = tr.last().unwrap();
        // hold 0.1 s at 1 m/s then discrete braking: Σ_{k=1..20} (1 - 0.04k)·0.05
        let expected = 0.1 + (1..=25).map(|k| (1.0 - 0.04 * k as f64).max(0.0) * 0.05).sum::<f64>();
        assert!((end.x - expected).abs() < 1e-9, "{} vs {}", end.x, expected);
        // continuous v²/(2a) bound, within one integration step
        assert!((end.x - 0.1 - 1.0 / (2.0 * p.acc_v)).abs() < 0.05);
    }
}
