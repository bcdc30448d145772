//! Environment files (TOML, `format = 1`).

use serde::Deserialize;

use crate::geometry::{Aabb, Point2, Pose, Prism, Region, Segment};

pub const FORMAT_VERSION: u32 = 1;

pub const BUNDLED: [(&str, &str); 3] = [
    ("env1", include_str!("../../environments/env1.toml")),
    ("env2", include_str!("../../environments/env2.toml")),
    ("env3", include_str!("../../environments/env3.toml")),
];

/// Source text of a bundled environment.
pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("environment parse error: {0}")]
    Parse(String),
    #[error("environment validation error: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvFile {
    format: u32,
    name: String,
    #[serde(default)]
    description: String,
    map: MapFile,
    #[serde(default)]
    obstacles: Vec<ObstacleFile>,
    #[serde(default)]
    goals: Vec<GoalFile>,
    starts: Vec<StartFile>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFile {
    #[serde(default)]
    walls: Vec<WallFile>,
    raster: Option<RasterFile>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct WallFile {
    from: [f64; 2],
    to: [f64; 2],
    thickness: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RasterFile {
    resolution: f64,
    origin: [f64; 2],
    /// Top row first; `#` is wall, `.` or space is free.
    rows: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
enum ObstacleFile {
    Circle {
        id: String,
        position: [f64; 2],
        radius: f64,
        height: f64,
        known_to_map: bool,
    },
    Box {
        id: String,
        position: [f64; 2],
        size: [f64; 2],
        height: f64,
        known_to_map: bool,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
enum SolidFile {
    Circle { center: [f64; 2], radius: f64, height: f64 },
    Box { min: [f64; 2], max: [f64; 2], height: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RectFile {
    min: [f64; 2],
    max: [f64; 2],
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum GoalKindFile {
    Door,
    Bin,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalFile {
    kind: GoalKindFile,
    anchor: [f64; 2],
    reach_radius: f64,
    threshold: Option<[[f64; 2]; 2]>,
    #[serde(default)]
    solids: Vec<SolidFile>,
    #[serde(default)]
    floor_patches: Vec<RectFile>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct StartFile {
    pose: [f64; 3],
}

/// Obstacle footprint shape; boxes are axis-aligned.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    Circle { radius: f64 },
    Box { width: f64, height: f64 },
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Obstacle {
    pub id: String,
    pub shape: Shape,
    pub pose: Pose,
    pub known_to_map: bool,
    /// Extrusion height used by the renderer.
    pub height: f64,
}

impl Obstacle {
    pub fn center(&self) -> Point2 {
        self.pose.position()
    }

    pub fn footprint(&self) -> Region {
        match self.shape {
            Shape::Circle { radius } => Region::Circle {
                center: self.center(),
                radius,
            },
            Shape::Box { width, height } => Region::Rect {
                bounds: Aabb::centered(self.center(), width, height),
            },
        }
    }

    pub fn prism(&self) -> Prism {
        Prism {
            footprint: self.footprint(),
            height: self.height,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalKind {
    Door,
    Bin,
}

impl std::fmt::Display for GoalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GoalKind::Door => "door",
            GoalKind::Bin => "bin",
        })
    }
}

/// Surfaces that count as "the goal" for highlighting.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HighlightRegion {
    /// Solid parts, rendered with goal albedo; they also block motion.
    pub solids: Vec<Prism>,
    /// Floor areas rendered and labelled as goal.
    pub floor_patches: Vec<Aabb>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Goal {
    pub id: GoalKind,
    /// Planning target.
    pub anchor: Point2,
    pub reach_radius: f64,
    /// Doors are reached by crossing this segment.
    pub threshold: Option<Segment>,
    pub highlight: HighlightRegion,
}

/// Parsed and validated environment description, independent of resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSpec {
    pub name: String,
    pub description: String,
    pub walls: Vec<Aabb>,
    pub obstacles: Vec<Obstacle>,
    pub goals: Vec<Goal>,
    pub starts: Vec<Pose>,
}

fn p2(a: [f64; 2]) -> Point2 {
    Point2::new(a[0], a[1])
}

fn finite(values: &[f64], what: &str) -> Result<(), EnvError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(EnvError::Validation(format!("{what}: non-finite coordinate")))
    }
}

impl EnvironmentSpec {
    /// Parses environment text. Syntax errors carry line and column.
    pub fn parse(text: &str) -> Result<Self, EnvError> {
        let file: EnvFile = toml::from_str(text).map_err(|e| EnvError::Parse(e.to_string()))?;
        Self::from_file(file)
    }

    fn from_file(file: EnvFile) -> Result<Self, EnvError> {
        if file.format != FORMAT_VERSION {
            return Err(EnvError::Validation(format!(
                "unsupported format {} (expected {FORMAT_VERSION})",
                file.format
            )));
        }
        let mut walls = Vec::new();
        for (i, w) in file.map.walls.iter().enumerate() {
            finite(&[w.from[0], w.from[1], w.to[0], w.to[1], w.thickness], &format!("wall {i}"))?;
            if !(w.thickness > 0.0) {
                return Err(EnvError::Validation(format!("wall {i}: thickness must be > 0")));
            }
            let h = w.thickness / 2.0;
            let (a, b) = (p2(w.from), p2(w.to));
            let bounds = if a.y == b.y {
                Aabb::new(Point2::new(a.x.min(b.x) - h, a.y - h), Point2::new(a.x.max(b.x) + h, a.y + h))
            } else if a.x == b.x {
                Aabb::new(Point2::new(a.x - h, a.y.min(b.y) - h), Point2::new(a.x + h, a.y.max(b.y) + h))
            } else {
                return Err(EnvError::Validation(format!("wall {i}: segments must be axis-aligned")));
            };
            walls.push(bounds);
        }
        if let Some(r) = &file.map.raster {
            walls.extend(raster_walls(r)?);
        }
        if walls.is_empty() {
            return Err(EnvError::Validation("map needs walls or a raster".into()));
        }

        let mut obstacles = Vec::new();
        for o in &file.obstacles {
            let (id, pos, shape, height, known) = match o {
                ObstacleFile::Circle {
                    id,
                    position,
                    radius,
                    height,
                    known_to_map,
                } => (id, position, Shape::Circle { radius: *radius }, *height, *known_to_map),
                ObstacleFile::Box {
                    id,
                    position,
                    size,
                    height,
                    known_to_map,
                } => (
                    id,
                    position,
                    Shape::Box {
                        width: size[0],
                        height: size[1],
                    },
                    *height,
                    *known_to_map,
                ),
            };
            finite(&[pos[0], pos[1], height], &format!("obstacle {id}"))?;
            let extents_ok = match shape {
                Shape::Circle { radius } => radius > 0.0,
                Shape::Box { width, height } => width > 0.0 && height > 0.0,
            };
            if !extents_ok || !(height > 0.0) {
                return Err(EnvError::Validation(format!("obstacle {id}: extents must be > 0")));
            }
            if obstacles.iter().any(|x: &Obstacle| &x.id == id) {
                return Err(EnvError::Validation(format!("obstacle {id}: duplicate id")));
            }
            obstacles.push(Obstacle {
                id: id.clone(),
                shape,
                pose: Pose::new(pos[0], pos[1], 0.0),
                known_to_map: known,
                height,
            });
        }

        let mut goals = Vec::new();
        for g in &file.goals {
            let id = match g.kind {
                GoalKindFile::Door => GoalKind::Door,
                GoalKindFile::Bin => GoalKind::Bin,
            };
            finite(&[g.anchor[0], g.anchor[1], g.reach_radius], &format!("goal {id}"))?;
            if !(g.reach_radius > 0.0) {
                return Err(EnvError::Validation(format!("goal {id}: reach_radius must be > 0")));
            }
            if goals.iter().any(|x: &Goal| x.id == id) {
                return Err(EnvError::Validation(format!("goal {id}: duplicate goal kind")));
            }
            let threshold = g.threshold.map(|[a, b]| Segment::new(p2(a), p2(b)));
            if id == GoalKind::Door && threshold.is_none() {
                return Err(EnvError::Validation("goal door: threshold segment required".into()));
            }
            let solids = g
                .solids
                .iter()
                .map(|s| match *s {
                    SolidFile::Circle { center, radius, height } => Prism {
                        footprint: Region::Circle {
                            center: p2(center),
                            radius,
                        },
                        height,
                    },
                    SolidFile::Box { min, max, height } => Prism {
                        footprint: Region::Rect {
                            bounds: Aabb::new(p2(min), p2(max)),
                        },
                        height,
                    },
                })
                .collect();
            let floor_patches = g.floor_patches.iter().map(|r| Aabb::new(p2(r.min), p2(r.max))).collect();
            goals.push(Goal {
                id,
                anchor: p2(g.anchor),
                reach_radius: g.reach_radius,
                threshold,
                highlight: HighlightRegion { solids, floor_patches },
            });
        }

        if file.starts.is_empty() {
            return Err(EnvError::Validation("at least one start pose is required".into()));
        }
        let mut starts = Vec::new();
        for (i, s) in file.starts.iter().enumerate() {
            finite(&s.pose, &format!("start {i}"))?;
            starts.push(Pose::new(s.pose[0], s.pose[1], s.pose[2]));
        }

        Ok(Self {
            name: file.name,
            description: file.description,
            walls,
            obstacles,
            goals,
            starts,
        })
    }

    /// Bounding box of all static geometry and start poses.
    pub fn extent(&self) -> Aabb {
        let mut b = self.walls[0];
        for w in &self.walls {
            b = b.union(w);
        }
        for g in &self.goals {
            for s in &g.highlight.solids {
                b = b.union(&s.footprint.bounds());
            }
        }
        for o in &self.obstacles {
            b = b.union(&o.footprint().bounds());
        }
        for s in &self.starts {
            b = b.union(&Aabb::new(s.position(), s.position()));
        }
        b
    }
}

fn raster_walls(r: &RasterFile) -> Result<Vec<Aabb>, EnvError> {
    if !(r.resolution > 0.0 && r.resolution.is_finite()) {
        return Err(EnvError::Validation("raster resolution must be > 0".into()));
    }
    let n = r.rows.len();
    let mut out = Vec::new();
    for (ri, row) in r.rows.iter().enumerate() {
        let y0 = r.origin[1] + (n - 1 - ri) as f64 * r.resolution;
        let mut run: Option<usize> = None;
        let chars: Vec<char> = row.chars().collect();
        for ci in 0..=chars.len() {
            let wall = match chars.get(ci) {
                Some('#') => true,
                Some('.') | Some(' ') | None => false,
                Some(c) => {
                    return Err(EnvError::Validation(format!(
                        "raster row {} column {}: unexpected character {c:?}",
                        ri + 1,
                        ci + 1
                    )))
                }
            };
            match (wall, run) {
                (true, None) => run = Some(ci),
                (false, Some(start)) => {
                    out.push(Aabb::new(
                        Point2::new(r.origin[0] + start as f64 * r.resolution, y0),
                        Point2::new(r.origin[0] + ci as f64 * r.resolution, y0 + r.resolution),
                    ));
                    run = None;
                }
                _ => {}
            }
        }
    }
    Ok(out)
}
