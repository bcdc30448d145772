//! Simulated prosthetic vision navigation.
//!
//! A deterministic 2D world with a head-mounted camera is rendered as a grid
//! of quantized Gaussian phosphenes. Three guidance modes are supported:
//! `RoboticG` overlays the planned ground path and the active goal,
//! `PerceptualG` overlays only the goal, and `DirectG` shows the scene alone.
//! The global path comes from A* on an inflated costmap; a dynamic window
//! controller drives the autopilot and replanning reacts to sensed obstacles.
//! The [`trials`] module runs the experiment protocol and analyses its logs.

pub mod config;
pub mod geometry;
pub mod guidance;
pub mod phosphene;
pub mod planner;
pub mod sensing;
pub mod trials;
pub mod worldsim;

pub use config::{load_config, Config, ConfigError};
pub use geometry::{Point2, Pose, Twist};
