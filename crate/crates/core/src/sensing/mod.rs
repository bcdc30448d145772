//! Simulated head-mounted camera: analytic ray casting of the world into a
//! grayscale image with depth and per-pixel hit labels, back-projection of
//! depth into obstacle points, and goal visibility masks.

pub mod camera;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use camera::{CameraFrame, CameraModel, Vec3};

use crate::geometry::{Aabb, Point2, Pose, Prism, Region};
use crate::worldsim::{Goal, GoalKind, World};
use camera::{add, scale};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingParams {
    pub camera: CameraModel,
    pub albedo_floor: f64,
    pub albedo_wall: f64,
    pub albedo_obstacle: f64,
    pub albedo_goal: f64,
    /// Intensity is `albedo / (1 + d / attenuation_distance)`.
    pub attenuation_distance: f64,
    pub point_min_height: f64,
    pub point_max_height: f64,
    /// Goals are highlighted only closer than this.
    pub goal_highlight_distance: f64,
}

impl Default for SensingParams {
    fn default() -> Self {
        Self {
            camera: CameraModel::default(),
            albedo_floor: 0.35,
            albedo_wall: 0.55,
            albedo_obstacle: 0.75,
            albedo_goal: 0.85,
            attenuation_distance: 8.0,
            point_min_height: 0.1,
            point_max_height: 2.0,
            goal_highlight_distance: 5.0,
        }
    }
}

/// What the primary ray of a pixel hit first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    None,
    Floor,
    Wall,
    Obstacle(u32),
    Goal(GoalKind),
}

/// Row-major grayscale image with range depth (metres along the ray).
#[derive(Debug, Clone, PartialEq)]
pub struct SceneImage {
    pub width: usize,
    pub height: usize,
    pub intensity: Vec<f64>,
    pub depth: Vec<f64>,
    pub labels: Vec<Label>,
}

impl SceneImage {
    pub fn uniform(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            intensity: vec![value; width * height],
            depth: vec![f64::INFINITY; width * height],
            labels: vec![Label::None; width * height],
        }
    }

    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.intensity[row * self.width + col]
    }
}

/// Nearest positive ray parameter hitting an axis-aligned box
/// `[min.x,max.x] x [min.y,max.y] x [0,h]`.
pub fn ray_box(o: Vec3, d: Vec3, b: &Aabb, h: f64) -> Option<f64> {
    let lo = [b.min.x, b.min.y, 0.0];
    let hi = [b.max.x, b.max.y, h];
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k] < lo[k] || o[k] > hi[k] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[k];
        let (mut a, mut c) = ((lo[k] - o[k]) * inv, (hi[k] - o[k]) * inv);
        if a > c {
            std::mem::swap(&mut a, &mut c);
        }
        t0 = t0.max(a);
        t1 = t1.min(c);
        if t0 > t1 {
            return None;
        }
    }
    (t0 > 0.0).then_some(t0)
}

/// Nearest positive ray parameter hitting a capped vertical cylinder.
pub fn ray_cylinder(o: Vec3, d: Vec3, center: Point2, r: f64, h: f64) -> Option<f64> {
    let mut best = f64::INFINITY;
    let (ox, oy) = (o[0] - center.x, o[1] - center.y);
    let a = d[0] * d[0] + d[1] * d[1];
    if a > 1e-15 {
        let b = 2.0 * (ox * d[0] + oy * d[1]);
        let c = ox * ox + oy * oy - r * r;
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                let z = o[2] + t * d[2];
                if t > 0.0 && (0.0..=h).contains(&z) {
                    best = best.min(t);
                    break;
                }
            }
        }
    }
    if d[2].abs() > 1e-15 {
        for zc in [h, 0.0] {
            let t = (zc - o[2]) / d[2];
            if t > 0.0 {
                let (x, y) = (ox + t * d[0], oy + t * d[1]);
                if x * x + y * y <= r * r {
                    best = best.min(t);
                }
            }
        }
    }
    best.is_finite().then_some(best)
}

pub fn ray_prism(o: Vec3, d: Vec3, prism: &Prism) -> Option<f64> {
    match prism.footprint {
        Region::Circle { center, radius } => ray_cylinder(o, d, center, radius, prism.height),
        Region::Rect { bounds } => ray_box(o, d, &bounds, prism.height),
    }
}

/// Nearest hit of a world ray: parameter and label.
pub fn cast(world: &World, o: Vec3, d: Vec3) -> (f64, Label) {
    let mut best = (f64::INFINITY, Label::None);
    let mut consider = |t: Option<f64>, label: Label| {
        if let Some(t) = t {
            if t < best.0 {
                best = (t, label);
            }
        }
    };
    if d[2] < 0.0 {
        let t = -o[2] / d[2];
        let p = Point2::new(o[0] + t * d[0], o[1] + t * d[1]);
        let label = world
            .goals
            .iter()
            .find(|g| g.highlight.floor_patches.iter().any(|b| b.contains(&p)))
            .map_or(Label::Floor, |g| Label::Goal(g.id));
        consider(Some(t), label);
    }
    for w in &world.walls {
        consider(ray_box(o, d, w, world.params.wall_height), Label::Wall);
    }
    for (i, ob) in world.obstacles.iter().enumerate() {
        consider(ray_prism(o, d, &ob.prism()), Label::Obstacle(i as u32));
    }
    for (kind, s) in world.goal_solids() {
        consider(ray_prism(o, d, s), Label::Goal(kind));
    }
    best
}

fn albedo(params: &SensingParams, label: Label) -> f64 {
    match label {
        Label::None => 0.0,
        Label::Floor => params.albedo_floor,
        Label::Wall => params.albedo_wall,
        Label::Obstacle(_) => params.albedo_obstacle,
        Label::Goal(_) => params.albedo_goal,
    }
}

/// Renders the agent's camera view. Rows are cast in parallel.
pub fn render_scene(world: &World, params: &SensingParams) -> SceneImage {
    render_scene_at(world, params, &world.agent.pose)
}

pub fn render_scene_at(world: &World, params: &SensingParams, pose: &Pose) -> SceneImage {
    let cam = &params.camera;
    let frame = cam.frame(pose);
    let pixels: Vec<(f64, f64, Label)> = (0..cam.height)
        .into_par_iter()
        .flat_map_iter(|row| {
            (0..cam.width).map(move |col| {
                let d = cam.pixel_ray(&frame, col, row);
                let (t, label) = cast(world, frame.origin, d);
                let value = if t.is_finite() {
                    albedo(params, label) / (1.0 + t / params.attenuation_distance)
                } else {
                    0.0
                };
                (value, t, label)
            })
        })
        .collect();
    let mut img = SceneImage::uniform(cam.width, cam.height, 0.0);
    for (i, (v, t, l)) in pixels.into_iter().enumerate() {
        img.intensity[i] = v;
        img.depth[i] = t;
        img.labels[i] = l;
    }
    img
}

/// Back-projects finite-depth pixels and keeps points whose height lies in
/// the obstacle band, flattened onto the floor plane.
pub fn depth_to_costmap_points(scene: &SceneImage, params: &SensingParams, agent: &Pose) -> Vec<Point2> {
    let cam = &params.camera;
    let frame = cam.frame(agent);
    let mut out = Vec::new();
    for row in 0..scene.height {
        for col in 0..scene.width {
            let t = scene.depth[row * scene.width + col];
            if !t.is_finite() {
                continue;
            }
            let q = add(frame.origin, scale(cam.pixel_ray(&frame, col, row), t));
            if q[2] >= params.point_min_height && q[2] <= params.point_max_height {
                out.push(Point2::new(q[0], q[1]));
            }
        }
    }
    out
}

/// Whether an obstacle standing on floor point `p` would have shown up in
/// `scene`: the point at `point_min_height` above `p` projects into the image
/// and the depth at that pixel reaches it within `tolerance`. Cells too close
/// to the agent (below the lowest ray), outside the field of view, or behind
/// a nearer hit are not observable.
pub fn observable(scene: &SceneImage, params: &SensingParams, agent: &Pose, p: &Point2, tolerance: f64) -> bool {
    let cam = &params.camera;
    let frame = cam.frame(agent);
    let q = [p.x, p.y, params.point_min_height];
    let Some((u, v, _)) = cam.project(&frame, q) else {
        return false;
    };
    if !cam.in_image(u, v) {
        return false;
    }
    let (col, row) = (u as usize, v as usize);
    let rel = camera::sub(q, frame.origin);
    let range = camera::dot(rel, rel).sqrt();
    scene.depth[row * scene.width + col] >= range - tolerance
}

/// Pixels whose nearest hit belongs to `goal`, plus the agent-to-anchor
/// distance. The mask is empty at or beyond the highlight distance.
pub fn goal_mask_from_scene(scene: &SceneImage, world: &World, goal: &Goal, params: &SensingParams) -> (Vec<bool>, f64) {
    let distance = world.agent.pose.position().distance(&goal.anchor);
    let mask = if distance >= params.goal_highlight_distance {
        vec![false; scene.labels.len()]
    } else {
        scene.labels.iter().map(|l| *l == Label::Goal(goal.id)).collect()
    };
    (mask, distance)
}

pub fn goal_mask(world: &World, params: &SensingParams, goal: &Goal) -> (Vec<bool>, f64) {
    goal_mask_from_scene(&render_scene(world, params), world, goal, params)
}

/// Binary 8-bit PGM of intensities in `[0, 1]`.
pub fn to_pgm(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Twist;

    #[test]
    fn box_hit_from_outside() {
        let b = Aabb::new(Point2::new(2.0, -1.0), Point2::new(3.0, 1.0));
        let t = ray_box([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], &b, 2.0).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
        assert!(ray_box([0.0, 0.0, 3.0], [1.0, 0.0, 0.0], &b, 2.0).is_none());
    }

    #[test]
    fn cylinder_side_and_cap() {
        let c = Point2::new(3.0, 0.0);
        let t = ray_cylinder([0.0, 0.0, 0.5], [1.0, 0.0, 0.0], c, 0.5, 1.0).unwrap();
        assert!((t - 2.5).abs() < 1e-12);
        let d = camera::normalize([1.0, 0.0, -1.0]);
        let t = ray_cylinder([2.0, 0.0, 2.0], d, c, 0.5, 1.0).unwrap();
        let z = 2.0 + t * d[2];
        assert!((z - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pgm_header() {
        let pgm = to_pgm(2, 1, &[0.0, 1.0]);
        assert_eq!(&pgm[..11], b"P5\n2 1\n255\n");
        assert_eq!(&pgm[11..], &[0, 255]);
    }

    #[test]
    fn render_is_deterministic() {
        let mut w = World::load_bundled("env3", Default::default()).unwrap();
        w.step(Twist::new(0.5, 0.2), 0.1).unwrap();
        let p = SensingParams::default();
        assert_eq!(render_scene(&w, &p), render_scene(&w, &p));
    }

    #[test]
    fn observability_needs_view_range_and_line_of_sight() {
        let text = r#"
format = 1
name = "hall"
[map]
walls = [
  { from = [-1.0, -3.0], to = [12.0, -3.0], thickness = 0.2 },
  { from = [-1.0, 3.0], to = [12.0, 3.0], thickness = 0.2 },
  { from = [-1.0, -3.0], to = [-1.0, 3.0], thickness = 0.2 },
  { from = [12.0, -3.0], to = [12.0, 3.0], thickness = 0.2 },
]
[[obstacles]]
id = "pillar"
shape = "circle"
position = [5.0, 0.0]
radius = 0.3
height = 1.8
known_to_map = false
[[starts]]
pose = [0.0, 0.0, 0.0]
"#;
        let w = World::load(text, Default::default()).unwrap();
        let p = SensingParams::default();
        let scene = render_scene(&w, &p);
        let pose = w.agent.pose;
        let seen = |x: f64, y: f64| observable(&scene, &p, &pose, &Point2::new(x, y), 0.1);
        assert!(seen(4.0, 0.0));
        assert!(seen(4.6, 0.0));
        // behind the pillar, below the lowest ray, outside the field of view
        assert!(!seen(6.0, 0.0));
        assert!(!seen(1.5, 0.0));
        assert!(!seen(4.0, 2.0));
        assert!(!seen(-2.0, 0.0));
    }
}
