//! Strict TOML configuration. Every field is required and unknown keys are
//! rejected. The content hash is SHA-256 over the canonical JSON form.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::guidance::GuidanceParams;
use crate::phosphene::{PhospheneLayout, PhospheneParams};
use crate::planner::{CostmapParams, DwaParams, ReplanPolicy};
use crate::sensing::SensingParams;
use crate::worldsim::WorldParams;

pub const DEFAULT_CONFIG: &str = include_str!("../../../config/default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialsParams {
    /// Simulation step per tick, seconds.
    pub dt: f64,
    pub n_scenarios: usize,
    pub short_break: f64,
    pub long_break: f64,
    /// The long break follows this scenario (1-based).
    pub long_break_after: usize,
    /// Trials still running after this much simulated time are aborted.
    pub max_trial_time: f64,
}

impl Default for TrialsParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            n_scenarios: 6,
            short_break: 60.0,
            long_break: 120.0,
            long_break_after: 3,
            max_trial_time: 240.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayParams {
    pub host: String,
    pub port: u16,
    pub tick_hz: f64,
    /// Directory of static UI assets; empty disables static serving.
    pub static_dir: String,
    /// Directory for session logs; empty disables logging.
    pub log_dir: String,
}

impl Default for GatewayParams {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            tick_hz: 10.0,
            static_dir: String::new(),
            log_dir: "logs".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub world: WorldParams,
    pub costmap: CostmapParams,
    pub dwa: DwaParams,
    pub replan: ReplanPolicy,
    pub sensing: SensingParams,
    pub phosphene: PhospheneParams,
    pub guidance: GuidanceParams,
    pub trials: TrialsParams,
    pub gateway: GatewayParams,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            world: WorldParams::default(),
            costmap: CostmapParams::default(),
            dwa: DwaParams::default(),
            replan: ReplanPolicy::default(),
            sensing: SensingParams::default(),
            phosphene: PhospheneParams::default(),
            guidance: GuidanceParams::default(),
            trials: TrialsParams::default(),
            gateway: GatewayParams::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config field {field}: expected {expected}, got {got}")]
    Range {
        field: &'static str,
        expected: &'static str,
        got: String,
    },
}

fn check<T: std::fmt::Display>(ok: bool, field: &'static str, expected: &'static str, got: T) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Range {
            field,
            expected,
            got: got.to_string(),
        })
    }
}

fn positive(v: f64, field: &'static str) -> Result<(), ConfigError> {
    check(v > 0.0 && v.is_finite(), field, "a finite value > 0", v)
}

fn unit(v: f64, field: &'static str) -> Result<(), ConfigError> {
    check((0.0..=1.0).contains(&v), field, "a value in [0, 1]", v)
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn bundled_default() -> Self {
        Self::parse(DEFAULT_CONFIG).expect("bundled default config is valid")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = &self.world;
        positive(w.resolution, "world.resolution")?;
        positive(w.agent_radius, "world.agent_radius")?;
        positive(w.v_max, "world.v_max")?;
        positive(w.w_max, "world.w_max")?;
        positive(w.max_dt, "world.max_dt")?;
        positive(w.wall_height, "world.wall_height")?;
        positive(w.bump_distance, "world.bump_distance")?;
        check(
            w.bump_rearm_distance >= w.bump_distance,
            "world.bump_rearm_distance",
            "a value >= world.bump_distance",
            w.bump_rearm_distance,
        )?;

        let c = &self.costmap;
        positive(c.inflation_radius, "costmap.inflation_radius")?;
        check(c.cost_falloff >= 0.0, "costmap.cost_falloff", "a value >= 0", c.cost_falloff)?;
        positive(c.live_expiry, "costmap.live_expiry")?;

        let d = &self.dwa;
        check(
            d.v_max > 0.0 && d.v_max <= w.v_max,
            "dwa.v_max",
            "a value in (0, world.v_max]",
            d.v_max,
        )?;
        check(
            d.w_max > 0.0 && d.w_max <= w.w_max,
            "dwa.w_max",
            "a value in (0, world.w_max]",
            d.w_max,
        )?;
        positive(d.acc_v, "dwa.acc_v")?;
        positive(d.acc_w, "dwa.acc_w")?;
        positive(d.control_period, "dwa.control_period")?;
        positive(d.horizon, "dwa.horizon")?;
        positive(d.sim_step, "dwa.sim_step")?;
        check(d.n_v >= 3, "dwa.n_v", "an integer >= 3", d.n_v)?;
        check(d.n_w >= 3, "dwa.n_w", "an integer >= 3", d.n_w)?;
        positive(d.heading_weight, "dwa.heading_weight")?;
        positive(d.clearance_weight, "dwa.clearance_weight")?;
        positive(d.velocity_weight, "dwa.velocity_weight")?;
        positive(d.carrot_distance, "dwa.carrot_distance")?;
        positive(d.clearance_cap, "dwa.clearance_cap")?;
        positive(d.goal_tolerance, "dwa.goal_tolerance")?;

        positive(self.replan.lookahead, "replan.lookahead")?;
        positive(self.replan.period, "replan.period")?;
        check(
            self.replan.cost_threshold >= 1,
            "replan.cost_threshold",
            "an integer in [1, 254]",
            self.replan.cost_threshold,
        )?;

        let s = &self.sensing;
        let cam = &s.camera;
        check(cam.width >= 1, "sensing.camera.width", "an integer >= 1", cam.width)?;
        check(cam.height >= 1, "sensing.camera.height", "an integer >= 1", cam.height)?;
        check(
            cam.hfov_deg > 0.0 && cam.hfov_deg < 180.0,
            "sensing.camera.hfov_deg",
            "a value in (0, 180)",
            cam.hfov_deg,
        )?;
        check(
            cam.vfov_deg > 0.0 && cam.vfov_deg < 180.0,
            "sensing.camera.vfov_deg",
            "a value in (0, 180)",
            cam.vfov_deg,
        )?;
        positive(cam.mount_height, "sensing.camera.mount_height")?;
        check(
            cam.pitch_deg > -90.0 && cam.pitch_deg < 90.0,
            "sensing.camera.pitch_deg",
            "a value in (-90, 90)",
            cam.pitch_deg,
        )?;
        positive(cam.near, "sensing.camera.near")?;
        unit(s.albedo_floor, "sensing.albedo_floor")?;
        unit(s.albedo_wall, "sensing.albedo_wall")?;
        unit(s.albedo_obstacle, "sensing.albedo_obstacle")?;
        unit(s.albedo_goal, "sensing.albedo_goal")?;
        positive(s.attenuation_distance, "sensing.attenuation_distance")?;
        check(
            s.point_min_height >= 0.0,
            "sensing.point_min_height",
            "a value >= 0",
            s.point_min_height,
        )?;
        check(
            s.point_max_height > s.point_min_height,
            "sensing.point_max_height",
            "a value > sensing.point_min_height",
            s.point_max_height,
        )?;
        positive(s.goal_highlight_distance, "sensing.goal_highlight_distance")?;

        let p = &self.phosphene;
        check(
            p.rows >= 2 && p.rows <= cam.height,
            "phosphene.rows",
            "an integer in [2, camera height]",
            p.rows,
        )?;
        check(
            p.cols >= 2 && p.cols <= cam.width,
            "phosphene.cols",
            "an integer in [2, camera width]",
            p.cols,
        )?;
        check(p.rows <= u16::MAX as usize, "phosphene.rows", "an integer <= 65535", p.rows)?;
        check(p.cols <= u16::MAX as usize, "phosphene.cols", "an integer <= 65535", p.cols)?;
        positive(p.sigma_factor, "phosphene.sigma_factor")?;

        let g = &self.guidance;
        positive(g.stroke_factor, "guidance.stroke_factor")?;
        positive(g.path_range, "guidance.path_range")?;
        positive(g.path_sample_step, "guidance.path_sample_step")?;

        let t = &self.trials;
        check(t.dt > 0.0 && t.dt <= w.max_dt, "trials.dt", "a value in (0, world.max_dt]", t.dt)?;
        check(t.n_scenarios >= 1, "trials.n_scenarios", "an integer >= 1", t.n_scenarios)?;
        check(t.short_break >= 0.0, "trials.short_break", "a value >= 0", t.short_break)?;
        check(t.long_break >= 0.0, "trials.long_break", "a value >= 0", t.long_break)?;
        positive(t.max_trial_time, "trials.max_trial_time")?;

        positive(self.gateway.tick_hz, "gateway.tick_hz")?;
        Ok(())
    }

    /// Canonical JSON (struct field order, round-trip floats).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn layout(&self) -> PhospheneLayout {
        PhospheneLayout::from_params(&self.phosphene, self.sensing.camera.width, self.sensing.camera.height)
            .expect("validated phosphene grid")
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Config, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Config::parse(&text)
}
