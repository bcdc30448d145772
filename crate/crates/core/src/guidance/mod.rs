//! Guidance modes and per-tick frame composition.
//!
//! | mode        | path overlay | goal overlay |
//! |-------------|--------------|--------------|
//! | RoboticG    | yes          | yes          |
//! | PerceptualG | no           | yes          |
//! | DirectG     | no           | no           |

pub mod follower;

use serde::{Deserialize, Serialize};

pub use follower::{FollowerParams, NoisyFollower};

use crate::phosphene::{apply_overlays, sample_and_quantize, PhospheneFrame, PhospheneLayout};
use crate::planner::dwa::{point_at_arc_length, project_onto_path};
use crate::planner::{dwa_step, Costmap, DwaOutput, DwaParams, PathPlan};
use crate::sensing::camera::{dot, sub, Vec3};
use crate::sensing::{goal_mask_from_scene, render_scene, CameraModel, SceneImage, SensingParams};
use crate::worldsim::{GoalKind, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GuidanceMode {
    RoboticG,
    PerceptualG,
    DirectG,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Overlays {
    pub path: bool,
    pub goal: bool,
}

impl GuidanceMode {
    pub const ALL: [GuidanceMode; 3] = [GuidanceMode::RoboticG, GuidanceMode::PerceptualG, GuidanceMode::DirectG];

    pub fn overlays(self) -> Overlays {
        match self {
            GuidanceMode::RoboticG => Overlays { path: true, goal: true },
            GuidanceMode::PerceptualG => Overlays { path: false, goal: true },
            GuidanceMode::DirectG => Overlays { path: false, goal: false },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GuidanceMode::RoboticG => "RoboticG",
            GuidanceMode::PerceptualG => "PerceptualG",
            GuidanceMode::DirectG => "DirectG",
        }
    }
}

impl std::fmt::Display for GuidanceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for GuidanceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "roboticg" | "robotic" => Ok(GuidanceMode::RoboticG),
            "perceptualg" | "perceptual" => Ok(GuidanceMode::PerceptualG),
            "directg" | "direct" => Ok(GuidanceMode::DirectG),
            _ => Err(format!("unknown guidance mode {s:?} (expected RoboticG, PerceptualG or DirectG)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceParams {
    /// Path stroke width as a multiple of the phosphene pitch.
    pub stroke_factor: f64,
    /// Plan arc length drawn ahead of the agent, metres.
    pub path_range: f64,
    pub path_sample_step: f64,
}

impl Default for GuidanceParams {
    fn default() -> Self {
        Self {
            stroke_factor: 1.5,
            path_range: 6.0,
            path_sample_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GuidanceError {
    #[error("RoboticG needs a plan")]
    MissingPlan,
    #[error("plan has no waypoints")]
    EmptyPlan,
}

/// Projected plan: image-space samples (one polyline per visible piece)
/// and the rasterized stroke mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOverlay {
    pub polylines: Vec<Vec<(f64, f64)>>,
    pub stroke_px: f64,
    pub mask: Vec<bool>,
}

impl PathOverlay {
    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }
}

/// Clips a camera-space segment to `z >= near`.
fn clip_near(a: Vec3, b: Vec3, near: f64) -> Option<(Vec3, Vec3)> {
    match (a[2] >= near, b[2] >= near) {
        (true, true) => Some((a, b)),
        (false, false) => None,
        (a_in, _) => {
            let s = (near - a[2]) / (b[2] - a[2]);
            let m = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1]), near];
            Some(if a_in { (a, m) } else { (m, b) })
        }
    }
}

fn stamp_capsule(mask: &mut [bool], width: usize, height: usize, a: (f64, f64), b: (f64, f64), radius: f64) {
    let lo_u = (a.0.min(b.0) - radius).floor().max(0.0);
    let hi_u = (a.0.max(b.0) + radius).ceil().min(width as f64);
    let lo_v = (a.1.min(b.1) - radius).floor().max(0.0);
    let hi_v = (a.1.max(b.1) + radius).ceil().min(height as f64);
    if lo_u >= hi_u || lo_v >= hi_v {
        return;
    }
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    for v in lo_v as usize..hi_v as usize {
        for u in lo_u as usize..hi_u as usize {
            let (px, py) = (u as f64 + 0.5, v as f64 + 0.5);
            let s = if len2 > 0.0 {
                (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (qx, qy) = (a.0 + s * dx - px, a.1 + s * dy - py);
            if qx * qx + qy * qy <= radius * radius {
                mask[v * width + u] = true;
            }
        }
    }
}

/// Lifts the plan ahead of the agent to the floor, clips it against the near
/// plane and rasterizes it as a stroke of `stroke_px` pixels.
pub fn project_path(
    plan: &PathPlan,
    camera: &CameraModel,
    agent: &crate::geometry::Pose,
    stroke_px: f64,
    range: f64,
    sample_step: f64,
) -> PathOverlay {
    let (w, h) = (camera.width, camera.height);
    let mut overlay = PathOverlay {
        polylines: Vec::new(),
        stroke_px,
        mask: vec![false; w * h],
    };
    if plan.waypoints.is_empty() {
        return overlay;
    }
    let frame = camera.frame(agent);
    let to_cam = |s: f64| {
        let p = point_at_arc_length(&plan.waypoints, s);
        let rel = sub([p.x, p.y, 0.0], frame.origin);
        [dot(rel, frame.right), dot(rel, frame.down), dot(rel, frame.forward)]
    };
    let pix = |c: Vec3| (camera.cx() + camera.fx() * c[0] / c[2], camera.cy() + camera.fy() * c[1] / c[2]);
    let (_, s0) = project_onto_path(&plan.waypoints, &agent.position());
    let s_end = (s0 + range).min(plan.total_length);
    let n = ((s_end - s0) / sample_step).ceil().max(1.0) as usize;
    let samples: Vec<Vec3> = (0..=n).map(|k| to_cam((s0 + k as f64 * sample_step).min(s_end))).collect();
    let mut current: Vec<(f64, f64)> = Vec::new();
    for pair in samples.windows(2) {
        match clip_near(pair[0], pair[1], camera.near) {
            Some((a, b)) => {
                let (pa, pb) = (pix(a), pix(b));
                if current.last() != Some(&pa) {
                    if !current.is_empty() {
                        overlay.polylines.push(std::mem::take(&mut current));
                    }
                    current.push(pa);
                }
                current.push(pb);
                stamp_capsule(&mut overlay.mask, w, h, pa, pb, stroke_px / 2.0);
            }
            None => {
                if !current.is_empty() {
                    overlay.polylines.push(std::mem::take(&mut current));
                }
            }
        }
    }
    if !current.is_empty() {
        overlay.polylines.push(current);
    }
    overlay
}

/// Everything produced for one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    pub frame: PhospheneFrame,
    /// The frame before overlays.
    pub scene_frame: PhospheneFrame,
    pub scene: SceneImage,
    pub path_mask: Option<Vec<bool>>,
    pub goal_mask: Option<Vec<bool>>,
    pub goal_distance: Option<f64>,
}

/// Owns the layout and parameters needed to compose frames.
#[derive(Debug, Clone)]
pub struct Composer {
    pub sensing: SensingParams,
    pub guidance: GuidanceParams,
    pub layout: PhospheneLayout,
}

impl Composer {
    pub fn new(sensing: SensingParams, guidance: GuidanceParams, layout: PhospheneLayout) -> Self {
        Self { sensing, guidance, layout }
    }

    pub fn stroke_px(&self) -> f64 {
        self.guidance.stroke_factor * self.layout.pitch
    }

    /// Renders the scene and builds the mode's overlays. Only `active_goal`
    /// is ever highlighted.
    pub fn compose(
        &self,
        mode: GuidanceMode,
        world: &World,
        plan: Option<&PathPlan>,
        active_goal: Option<GoalKind>,
        tick: u64,
    ) -> Result<Composition, GuidanceError> {
        let scene = render_scene(world, &self.sensing);
        self.compose_with_scene(mode, world, plan, active_goal, tick, scene)
    }

    pub fn compose_with_scene(
        &self,
        mode: GuidanceMode,
        world: &World,
        plan: Option<&PathPlan>,
        active_goal: Option<GoalKind>,
        tick: u64,
        scene: SceneImage,
    ) -> Result<Composition, GuidanceError> {
        let ov = mode.overlays();
        if ov.path && plan.is_none() {
            return Err(GuidanceError::MissingPlan);
        }
        let scene_frame = sample_and_quantize(&scene.intensity, &self.layout, tick);
        let path_mask = match (ov.path, plan) {
            (true, Some(p)) => Some(
                project_path(
                    p,
                    &self.sensing.camera,
                    &world.agent.pose,
                    self.stroke_px(),
                    self.guidance.path_range,
                    self.guidance.path_sample_step,
                )
                .mask,
            ),
            _ => None,
        };
        let goal = active_goal.and_then(|k| world.goal(k));
        let (goal_mask, goal_distance) = match (ov.goal, goal) {
            (true, Some(g)) => {
                let (m, d) = goal_mask_from_scene(&scene, world, g, &self.sensing);
                (Some(m), Some(d))
            }
            _ => (None, None),
        };
        let masks: Vec<&[bool]> = path_mask.iter().chain(goal_mask.iter()).map(|m| m.as_slice()).collect();
        let frame = apply_overlays(&scene_frame, &self.layout, &masks);
        Ok(Composition {
            frame,
            scene_frame,
            scene,
            path_mask,
            goal_mask,
            goal_distance,
        })
    }
}

/// One-shot composition returning just the frame.
pub fn compose_tick(
    composer: &Composer,
    mode: GuidanceMode,
    world: &World,
    plan: Option<&PathPlan>,
    active_goal: Option<GoalKind>,
    tick: u64,
) -> Result<PhospheneFrame, GuidanceError> {
    composer.compose(mode, world, plan, active_goal, tick).map(|c| c.frame)
}

/// Autopilot command: the DWA output for the current plan.
pub fn autopilot_step(world: &World, plan: &PathPlan, costmap: &Costmap, params: &DwaParams) -> Result<DwaOutput, GuidanceError> {
    if plan.waypoints.is_empty() {
        return Err(GuidanceError::EmptyPlan);
    }
    Ok(dwa_step(&world.agent, plan, costmap, params))
}
