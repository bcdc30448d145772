use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spv_core::sensing::{depth_to_costmap_points, goal_mask, render_scene, render_scene_at, Label, SceneImage, SensingParams};
use spv_core::worldsim::{GoalKind, World};
use spv_core::{Point2, Pose};

/// 40 x 40 m hall, agent at the centre facing +x, plus `extra` TOML.
fn hall(extra: &str) -> World {
    let text = format!(
        r#"
format = 1
name = "hall"
[map]
walls = [
  {{ from = [-20.0, -20.0], to = [20.0, -20.0], thickness = 0.2 }},
  {{ from = [-20.0, 20.0], to = [20.0, 20.0], thickness = 0.2 }},
  {{ from = [-20.0, -20.0], to = [-20.0, 20.0], thickness = 0.2 }},
  {{ from = [20.0, -20.0], to = [20.0, 20.0], thickness = 0.2 }},
]
[[starts]]
pose = [0.0, 0.0, 0.0]
{extra}
"#
    );
    World::load(&text, Default::default()).unwrap()
}

fn pillar(x: f64, y: f64, r: f64) -> String {
    format!(
        r#"
[[obstacles]]
id = "p{x}_{y}"
shape = "circle"
position = [{x}, {y}]
radius = {r}
height = 1.8
known_to_map = false
"#
    )
}

/// Bin whose anchor is at `x` on the x axis, with the solid 1 m farther out.
fn bin_at(x: f64) -> String {
    let sx = x + x.signum();
    format!(
        r#"
[[goals]]
kind = "bin"
anchor = [{x}, 0.0]
reach_radius = 0.8
solids = [{{ shape = "circle", center = [{sx}, 0.0], radius = 0.25, height = 0.8 }}]
"#
    )
}

/// Unit ray of pixel (col, row) for an agent at the origin facing +x, from
/// the pinhole model written out longhand.
fn oracle_ray(p: &SensingParams, col: usize, row: usize) -> [f64; 3] {
    let cam = &p.camera;
    let fx = cam.width as f64 / 2.0 / (cam.hfov_deg.to_radians() / 2.0).tan();
    let fy = cam.height as f64 / 2.0 / (cam.vfov_deg.to_radians() / 2.0).tan();
    let a = (col as f64 + 0.5 - cam.width as f64 / 2.0) / fx;
    let b = (row as f64 + 0.5 - cam.height as f64 / 2.0) / fy;
    let (sp, cp) = cam.pitch_deg.to_radians().sin_cos();
    // forward (cp, 0, -sp), right (0, -1, 0), down (-sp, 0, -cp)
    let d = [cp - b * sp, -a, -sp - b * cp];
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    [d[0] / n, d[1] / n, d[2] / n]
}

#[test]
fn open_floor_fills_the_view_with_floor_albedo() {
    let w = hall("");
    let p = SensingParams::default();
    let img = render_scene(&w, &p);
    let h = p.camera.mount_height;
    for row in (0..256).step_by(17) {
        for col in (0..256).step_by(13) {
            let i = row * 256 + col;
            assert_eq!(img.labels[i], Label::Floor, "({col},{row})");
            let d = oracle_ray(&p, col, row);
            let t = h / -d[2];
            assert!((img.depth[i] - t).abs() < 1e-9, "({col},{row}) {} vs {t}", img.depth[i]);
            let expected = p.albedo_floor / (1.0 + t / p.attenuation_distance);
            assert!((img.intensity[i] - expected).abs() < 1e-12);
        }
    }
    // the top row sees farther floor, so it is darker than the bottom row
    assert!(img.at(128, 0) < img.at(128, 255));
}

#[test]
fn wall_two_metres_ahead_fills_the_view() {
    let w = hall(
        r#"
[[obstacles]]
id = "slab"
shape = "box"
position = [2.5, 0.0]
size = [1.0, 30.0]
height = 2.5
known_to_map = true
"#,
    );
    let p = SensingParams::default();
    let img = render_scene(&w, &p);
    for row in (0..256).step_by(11) {
        for col in (0..256).step_by(11) {
            let i = row * 256 + col;
            assert!(matches!(img.labels[i], Label::Obstacle(_)), "({col},{row}) {:?}", img.labels[i]);
            let d = oracle_ray(&p, col, row);
            assert!((img.depth[i] - 2.0 / d[0]).abs() < 1e-9);
        }
    }
}

/// Nearest hit of the oracle ray against one pillar and the floor.
fn pillar_first(p: &SensingParams, col: usize, row: usize, c: Point2, r: f64, h: f64) -> bool {
    let d = oracle_ray(p, col, row);
    let o = [0.0, 0.0, p.camera.mount_height];
    let floor = o[2] / -d[2];
    let (ox, oy) = (o[0] - c.x, o[1] - c.y);
    let qa = d[0] * d[0] + d[1] * d[1];
    let qb = 2.0 * (ox * d[0] + oy * d[1]);
    let qc = ox * ox + oy * oy - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return false;
    }
    let t = (-qb - disc.sqrt()) / (2.0 * qa);
    let z = o[2] + t * d[2];
    // side hit, or the cap when the ray enters through the top
    let side = t > 0.0 && (0.0..=h).contains(&z);
    let cap = {
        let tc = (h - o[2]) / d[2];
        let (x, y) = (o[0] + tc * d[0], o[1] + tc * d[1]);
        tc > 0.0 && (x - c.x).powi(2) + (y - c.y).powi(2) <= r * r
    };
    let t_hit = match (side, cap) {
        (true, true) => t.min((h - o[2]) / d[2]),
        (true, false) => t,
        (false, true) => (h - o[2]) / d[2],
        _ => return false,
    };
    t_hit < floor
}

#[test]
fn pillar_ahead_renders_as_a_centred_column() {
    let w = hall(&pillar(4.0, 0.0, 0.3));
    let p = SensingParams::default();
    let img = render_scene(&w, &p);
    let mut mismatches = 0;
    for row in 0..256 {
        for col in 0..256 {
            let hit = matches!(img.labels[row * 256 + col], Label::Obstacle(_));
            if hit != pillar_first(&p, col, row, Point2::new(4.0, 0.0), 0.3, 1.8) {
                mismatches += 1;
            }
        }
    }
    assert!(mismatches <= 2, "{mismatches} pixels disagree with the oracle");
    let cols: Vec<usize> = (0..256)
        .filter(|&c| matches!(img.labels[128 * 256 + c], Label::Obstacle(_)))
        .collect();
    assert!(!cols.is_empty());
    assert_eq!(cols.last().unwrap() - cols[0] + 1, cols.len(), "contiguous");
    assert_eq!(cols[0] + cols.last().unwrap(), 255, "centred");
    assert!(img.depth[128 * 256 + 128].is_finite());
}

#[test]
fn floor_only_and_empty_views_give_no_points() {
    let p = SensingParams::default();
    let w = hall("");
    let pose = w.agent.pose;
    assert!(depth_to_costmap_points(&render_scene(&w, &p), &p, &pose).is_empty());
    assert!(depth_to_costmap_points(&SceneImage::uniform(256, 256, 0.0), &p, &pose).is_empty());
}

#[test]
fn pillar_points_land_on_its_footprint() {
    let p = SensingParams::default();
    let w = hall(&pillar(3.0, 0.0, 0.3));
    let pts = depth_to_costmap_points(&render_scene(&w, &p), &p, &w.agent.pose);
    assert!(pts.len() > 100, "{}", pts.len());
    let c = Point2::new(3.0, 0.0);
    for q in &pts {
        assert!(q.distance(&c) <= 0.3 + 0.1, "{q:?}");
    }
}

#[test]
fn goal_mask_follows_distance_and_view() {
    let p = SensingParams::default();
    let mask_of = |w: &World| {
        let g = w.goal(GoalKind::Bin).unwrap();
        goal_mask(w, &p, g)
    };
    let near = hall(&bin_at(3.0));
    let (m, d) = mask_of(&near);
    assert!((d - 3.0).abs() < 1e-12);
    assert!(m.iter().any(|&x| x));

    let (m, d) = mask_of(&hall(&bin_at(6.0)));
    assert!((d - 6.0).abs() < 1e-12);
    assert!(!m.iter().any(|&x| x));

    let (m, _) = mask_of(&hall(&bin_at(-3.0)));
    assert!(!m.iter().any(|&x| x));

    // a pillar in front hides part of the bin; masked pixels stay goal hits
    let blocked = hall(&format!("{}{}", bin_at(3.0), pillar(2.5, 0.12, 0.1)));
    let (mb, _) = mask_of(&blocked);
    let img = render_scene(&blocked, &p);
    let shown = mb.iter().filter(|&&x| x).count();
    assert!(shown > 0 && shown < m_count(&near, &p));
    for (i, &on) in mb.iter().enumerate() {
        if on {
            assert_eq!(img.labels[i], Label::Goal(GoalKind::Bin));
        }
    }
}

fn m_count(w: &World, p: &SensingParams) -> usize {
    goal_mask(w, p, w.goal(GoalKind::Bin).unwrap()).0.iter().filter(|&&x| x).count()
}

#[test]
fn nearer_pillar_is_brighter() {
    let p = SensingParams::default();
    let peak = |x: f64| {
        let img = render_scene(&hall(&pillar(x, 0.0, 0.3)), &p);
        img.labels
            .iter()
            .zip(&img.intensity)
            .filter(|(l, _)| matches!(l, Label::Obstacle(_)))
            .map(|(_, v)| *v)
            .fold(0.0, f64::max)
    };
    let (near, far) = (peak(3.5), peak(6.0));
    assert!(near > 0.0 && far > 0.0);
    assert!(near >= far, "{near} vs {far}");
}

#[test]
fn geometry_outside_the_frustum_is_invisible() {
    let p = SensingParams::default();
    // widest bearing any pixel ray reaches; the lower corners of a pitched camera
    let widest = [(0, 0), (0, 255), (255, 0), (255, 255)]
        .iter()
        .map(|&(c, r)| {
            let d = oracle_ray(&p, c, r);
            d[1].abs().atan2(d[0])
        })
        .fold(0.0, f64::max);
    let (range, radius) = (3.0f64, 0.2f64);
    let b = widest + (radius / range).asin() + 1f64.to_radians();
    let img = render_scene(&hall(&pillar(range * b.cos(), range * b.sin(), radius)), &p);
    assert!(!img.labels.iter().any(|l| matches!(l, Label::Obstacle(_))));
    let b = widest - 1f64.to_radians();
    let img = render_scene(&hall(&pillar(range * b.cos(), range * b.sin(), radius)), &p);
    assert!(img.labels.iter().any(|l| matches!(l, Label::Obstacle(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn back_projection_returns_to_the_pixel(x in 1.0f64..13.0, y in 1.0f64..9.0, theta in -3.1f64..3.1, seed in any::<u64>()) {
        let w = World::load_bundled("env1", Default::default()).unwrap();
        let p = SensingParams::default();
        let pose = Pose::new(x, y, theta);
        let img = render_scene_at(&w, &p, &pose);
        let cam = &p.camera;
        let frame = cam.frame(&pose);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..64 {
            let idx = rng.random_range(0..256 * 256);
            let t = img.depth[idx];
            if !t.is_finite() {
                continue;
            }
            let (col, row) = (idx % 256, idx / 256);
            let d = cam.pixel_ray(&frame, col, row);
            let q = [frame.origin[0] + t * d[0], frame.origin[1] + t * d[1], frame.origin[2] + t * d[2]];
            let (u, v, _) = cam.project(&frame, q).unwrap();
            prop_assert!((u - (col as f64 + 0.5)).abs() <= 0.5 && (v - (row as f64 + 0.5)).abs() <= 0.5);
        }
    }
}
