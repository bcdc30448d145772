//! Tick-driven trial execution.
//!
//! Each tick: add due scripted obstacles, render the camera view, feed sensed
//! points to the live costmap layer, plan or replan toward the active goal,
//! compose the phosphene frame for the trial's mode, ask the pilot for a
//! command, step the world and record bumps and goal progress.

use serde::{Deserialize, Serialize};

use super::conditions::{BreakSchedule, Session, TrialCondition};
use super::log::{LogRecord, LOG_SCHEMA};
use super::metrics::{compute_metrics, Outcome, TraceSample, TrialEvent, TrialRecord};
use crate::config::Config;
use crate::geometry::{Point2, Pose, Twist};
use crate::guidance::{autopilot_step, Composer, Composition, GuidanceMode, NoisyFollower};
use crate::phosphene::PhospheneFrame;
use crate::planner::{dwa_toward, freest_heading, maybe_replan, plan_global, Costmap, DwaDiagnostics, DwaParams, PathPlan, ReplanOutcome};
use crate::sensing::{depth_to_costmap_points, observable, render_scene};
use crate::worldsim::{Goal, GoalKind, Obstacle, World, WorldError};

/// What a pilot may look at when choosing a command.
pub struct PilotContext<'a> {
    pub world: &'a World,
    pub plan: Option<&'a PathPlan>,
    pub costmap: &'a Costmap,
    pub goal: &'a Goal,
    pub mode: GuidanceMode,
    pub frame: &'a PhospheneFrame,
    /// The previous step was clamped at contact.
    pub blocked: bool,
    pub dt: f64,
}

pub trait Pilot {
    fn command(&mut self, ctx: &PilotContext) -> Twist;
}

/// Drives with the DWA output on the current plan.
///
/// When the output has stayed near standstill for `STUCK_TICKS` ticks away
/// from the goal, the pilot spends `RECOVERY_TICKS` ticks running the same
/// controller toward a point in the freest direction, then resumes.
#[derive(Debug, Clone)]
pub struct Autopilot {
    pub dwa: DwaParams,
    pub last: Option<DwaDiagnostics>,
    stuck: u32,
    recovery: Option<(u32, Point2)>,
}

impl Autopilot {
    pub const STUCK_TICKS: u32 = 10;
    pub const RECOVERY_TICKS: u32 = 15;
    const STALL_SPEED: f64 = 0.05;
    const PROBE: f64 = 0.5;

    pub fn new(dwa: DwaParams) -> Self {
        Self {
            dwa,
            last: None,
            stuck: 0,
            recovery: None,
        }
    }

    pub fn recovering(&self) -> bool {
        self.recovery.is_some()
    }
}

impl Pilot for Autopilot {
    fn command(&mut self, ctx: &PilotContext) -> Twist {
        if let Some((left, target)) = self.recovery {
            let out = dwa_toward(&ctx.world.agent, &target, ctx.costmap, &self.dwa);
            self.recovery = (left > 1).then_some((left - 1, target));
            self.last = Some(out.diagnostics);
            return out.twist;
        }
        match ctx.plan.map(|p| autopilot_step(ctx.world, p, ctx.costmap, &self.dwa)) {
            Some(Ok(out)) => {
                let stalled = !out.diagnostics.at_goal && out.twist.v < Self::STALL_SPEED && ctx.world.agent.twist.v < Self::STALL_SPEED;
                self.stuck = if stalled { self.stuck + 1 } else { 0 };
                if self.stuck >= Self::STUCK_TICKS {
                    self.stuck = 0;
                    let pose = ctx.world.agent.pose;
                    let heading = freest_heading(ctx.costmap, &pose, Self::PROBE, 24);
                    let target = Point2::new(pose.x + heading.cos(), pose.y + heading.sin());
                    self.recovery = Some((Self::RECOVERY_TICKS, target));
                }
                self.last = Some(out.diagnostics);
                out.twist
            }
            _ => {
                self.last = None;
                Twist::ZERO
            }
        }
    }
}

pub struct FollowerPilot(pub NoisyFollower);

impl Pilot for FollowerPilot {
    fn command(&mut self, ctx: &PilotContext) -> Twist {
        let displayed = if ctx.mode.overlays().path { ctx.plan } else { None };
        self.0.command(ctx.mode, ctx.world, displayed, ctx.goal, ctx.blocked, ctx.dt)
    }
}

/// Applies the most recent externally supplied command.
#[derive(Debug, Clone, Copy, Default)]
pub struct ManualPilot {
    pub latest: Twist,
}

impl Pilot for ManualPilot {
    fn command(&mut self, _ctx: &PilotContext) -> Twist {
        self.latest
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedObstacle {
    /// Added at the first tick whose clock reaches this time.
    pub at_time: f64,
    pub obstacle: Obstacle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSetup {
    pub trial: usize,
    pub subject: String,
    pub seed: u64,
    pub condition: TrialCondition,
    /// Start pose index, taken modulo the environment's start count.
    pub start_index: usize,
    /// Overrides `start_index` when set.
    pub start_pose: Option<Pose>,
    pub scripted: Vec<ScriptedObstacle>,
}

impl TrialSetup {
    pub fn new(condition: TrialCondition) -> Self {
        Self {
            trial: 0,
            subject: "autopilot".into(),
            seed: 0,
            condition,
            start_index: 0,
            start_pose: None,
            scripted: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("environment {env} has no {goal} goal")]
    MissingGoal { env: String, goal: GoalKind },
    #[error("trial already finished")]
    Finished,
}

#[derive(Debug, Clone)]
pub struct TickReport {
    /// Index of the state the frame was composed from.
    pub tick: u64,
    pub composition: Composition,
    pub command: Twist,
    pub events: Vec<TrialEvent>,
    pub done: bool,
}

pub struct TrialEngine {
    config: Config,
    composer: Composer,
    world: World,
    costmap: Costmap,
    plan: Option<PathPlan>,
    setup: TrialSetup,
    order: [GoalKind; 2],
    goal_idx: usize,
    tick: u64,
    start_pose: Pose,
    initial_obstacles: Vec<Obstacle>,
    trace: Vec<TraceSample>,
    events: Vec<TrialEvent>,
    outcome: Option<Outcome>,
    blocked: bool,
    last_failure: Option<String>,
    pending: Vec<LogRecord>,
}

pub fn header(config: &Config, subject: &str, seed: u64) -> LogRecord {
    LogRecord::Header {
        schema: LOG_SCHEMA,
        config_hash: config.hash(),
        subject: subject.to_string(),
        seed,
        dt: config.trials.dt,
    }
}

impl TrialEngine {
    pub fn new(config: &Config, setup: TrialSetup) -> Result<Self, EngineError> {
        let world = World::load_bundled(&setup.condition.environment, config.world)?;
        Self::with_world(config, world, setup)
    }

    pub fn with_world(config: &Config, mut world: World, setup: TrialSetup) -> Result<Self, EngineError> {
        let order = setup.condition.goal_order.goals();
        for g in order {
            if world.goal(g).is_none() {
                return Err(EngineError::MissingGoal {
                    env: world.name.clone(),
                    goal: g,
                });
            }
        }
        let start = setup.start_pose.unwrap_or(world.starts[setup.start_index % world.starts.len()]);
        if !world.disc_free(&start.position()) {
            return Err(WorldError::StartOccupied { index: setup.start_index }.into());
        }
        world.clock = 0.0;
        world.reset_agent(start);
        let costmap = Costmap::new(world.planning_grid(), config.costmap);
        let composer = Composer::new(config.sensing, config.guidance, config.layout());
        let pending = vec![LogRecord::TrialStart {
            trial: setup.trial,
            condition: setup.condition.clone(),
            start_pose: start,
            obstacles: world.obstacles.clone(),
        }];
        Ok(Self {
            config: config.clone(),
            composer,
            costmap,
            plan: None,
            order,
            goal_idx: 0,
            tick: 0,
            start_pose: start,
            initial_obstacles: world.obstacles.clone(),
            trace: vec![TraceSample {
                tick: 0,
                t: 0.0,
                pose: start,
            }],
            events: Vec::new(),
            outcome: None,
            blocked: false,
            last_failure: None,
            pending,
            world,
            setup,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn plan(&self) -> Option<&PathPlan> {
        self.plan.as_ref()
    }

    pub fn costmap(&self) -> &Costmap {
        &self.costmap
    }

    pub fn mode(&self) -> GuidanceMode {
        self.setup.condition.mode
    }

    pub fn condition(&self) -> &TrialCondition {
        &self.setup.condition
    }

    pub fn trial(&self) -> usize {
        self.setup.trial
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn active_goal(&self) -> Option<GoalKind> {
        self.order.get(self.goal_idx).copied()
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    pub fn is_done(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn events(&self) -> &[TrialEvent] {
        &self.events
    }

    pub fn trace(&self) -> &[TraceSample] {
        &self.trace
    }

    /// Log lines produced since the last call.
    pub fn drain_log(&mut self) -> Vec<LogRecord> {
        std::mem::take(&mut self.pending)
    }

    fn push_event(&mut self, event: TrialEvent) {
        self.pending.push(LogRecord::Event {
            trial: self.setup.trial,
            event: event.clone(),
        });
        self.events.push(event);
    }

    pub fn annotate_aid(&mut self, note: impl Into<String>) -> Result<TrialEvent, EngineError> {
        if self.is_done() {
            return Err(EngineError::Finished);
        }
        let event = TrialEvent::Aid {
            tick: self.tick,
            t: self.world.clock,
            note: note.into(),
        };
        self.push_event(event.clone());
        Ok(event)
    }

    pub fn abort(&mut self) -> Result<(), EngineError> {
        if self.is_done() {
            return Err(EngineError::Finished);
        }
        self.push_event(TrialEvent::Aborted {
            tick: self.tick,
            t: self.world.clock,
        });
        self.finish(Outcome::Aborted);
        Ok(())
    }

    fn finish(&mut self, outcome: Outcome) {
        self.outcome = Some(outcome);
        let metrics = compute_metrics(&self.trace, &self.events, outcome);
        self.pending.push(LogRecord::TrialEnd {
            trial: self.setup.trial,
            tick: self.tick,
            t: self.world.clock,
            outcome,
            metrics,
        });
    }

    fn plan_failed(&mut self, message: String) {
        if self.last_failure.as_deref() != Some(message.as_str()) {
            self.push_event(TrialEvent::PlanFailed {
                tick: self.tick,
                t: self.world.clock,
                message: message.clone(),
            });
        }
        self.last_failure = Some(message);
    }

    fn update_plan(&mut self, goal: &Goal) {
        let now = self.world.clock;
        let pose = self.world.agent.pose;
        match &self.plan {
            None => match plan_global(&self.costmap, &pose, &goal.anchor, now) {
                Ok(plan) => {
                    self.last_failure = None;
                    self.push_event(TrialEvent::LegPlanned {
                        tick: self.tick,
                        t: now,
                        goal: goal.id,
                        length: plan.total_length,
                    });
                    self.plan = Some(plan);
                }
                Err(e) => self.plan_failed(e.to_string()),
            },
            Some(plan) => match maybe_replan(plan, &self.costmap, &pose, now, &self.config.replan) {
                Ok(ReplanOutcome::Unchanged) => {}
                Ok(ReplanOutcome::Replanned { plan, reason }) => {
                    self.last_failure = None;
                    self.push_event(TrialEvent::Replan {
                        tick: self.tick,
                        t: now,
                        reason,
                        length: plan.total_length,
                    });
                    self.plan = Some(plan);
                }
                Err(e) => self.plan_failed(e.to_string()),
            },
        }
    }

    /// Advances one tick under `pilot`.
    pub fn step(&mut self, pilot: &mut dyn Pilot) -> Result<TickReport, EngineError> {
        if self.is_done() {
            return Err(EngineError::Finished);
        }
        let n = self.tick;
        let now = self.world.clock;
        let due: Vec<ScriptedObstacle> = self
            .setup
            .scripted
            .iter()
            .filter(|s| s.at_time <= now + 1e-9 && !self.world.obstacles.iter().any(|o| o.id == s.obstacle.id))
            .cloned()
            .collect();
        for s in due {
            self.world.add_obstacle(s.obstacle.clone())?;
            self.push_event(TrialEvent::ObstacleAdded {
                tick: n,
                t: now,
                obstacle: s.obstacle,
            });
        }

        let scene = render_scene(&self.world, &self.config.sensing);
        let points = depth_to_costmap_points(&scene, &self.config.sensing, &self.world.agent.pose);
        let pose = self.world.agent.pose;
        let tolerance = 2.0 * self.costmap.resolution();
        let sensing = &self.config.sensing;
        self.costmap
            .update_live_observed(&points, now, |p| observable(&scene, sensing, &pose, p, tolerance));

        let goal_kind = self.order[self.goal_idx];
        let goal = self.world.goal(goal_kind).expect("checked at construction").clone();
        self.update_plan(&goal);

        let mode = self.mode();
        let compose_mode = if mode == GuidanceMode::RoboticG && self.plan.is_none() {
            GuidanceMode::PerceptualG
        } else {
            mode
        };
        let composition = self
            .composer
            .compose_with_scene(compose_mode, &self.world, self.plan.as_ref(), Some(goal_kind), n, scene)
            .expect("plan present for path overlays");

        let dt = self.config.trials.dt;
        let command = pilot.command(&PilotContext {
            world: &self.world,
            plan: self.plan.as_ref(),
            costmap: &self.costmap,
            goal: &goal,
            mode,
            frame: &composition.frame,
            blocked: self.blocked,
            dt,
        });
        let command = if command.is_finite() { command } else { Twist::ZERO };
        let step = self.world.step(command, dt)?;
        self.blocked = step.blocked;
        self.tick += 1;
        let t = self.world.clock;
        let pose = self.world.agent.pose;
        self.trace.push(TraceSample { tick: self.tick, t, pose });
        self.pending.push(LogRecord::Tick {
            trial: self.setup.trial,
            tick: self.tick,
            t,
            pose,
            cmd: command,
        });

        let first_new = self.events.len();
        for b in step.bumps {
            self.push_event(TrialEvent::Bump {
                tick: self.tick,
                t,
                obstacle_id: b.obstacle_id,
                distance: b.distance,
            });
        }
        if step.goals_reached.contains(&goal_kind) {
            self.push_event(TrialEvent::GoalReached {
                tick: self.tick,
                t,
                goal: goal_kind,
            });
            self.goal_idx += 1;
            self.plan = None;
            if self.goal_idx == self.order.len() {
                self.finish(Outcome::Completed);
            }
        }
        if !self.is_done() && t >= self.config.trials.max_trial_time - 1e-9 {
            self.finish(Outcome::Timeout);
        }
        Ok(TickReport {
            tick: n,
            composition,
            command,
            events: self.events[first_new..].to_vec(),
            done: self.is_done(),
        })
    }

    /// The trial so far as a record; metrics are recomputed from trace and events.
    pub fn record(&self) -> TrialRecord {
        let outcome = self.outcome.unwrap_or(Outcome::Aborted);
        TrialRecord {
            trial: self.setup.trial,
            subject: self.setup.subject.clone(),
            seed: self.setup.seed,
            condition: self.setup.condition.clone(),
            start_pose: self.start_pose,
            obstacles: self.initial_obstacles.clone(),
            trace: self.trace.clone(),
            events: self.events.clone(),
            outcome,
            metrics: compute_metrics(&self.trace, &self.events, outcome),
        }
    }

    /// Runs until the trial ends.
    pub fn run(&mut self, pilot: &mut dyn Pilot) -> Result<TrialRecord, EngineError> {
        while !self.is_done() {
            self.step(pilot)?;
        }
        Ok(self.record())
    }
}

/// Runs one trial to completion and returns its record with its log lines.
pub fn run_trial(config: &Config, setup: TrialSetup, pilot: &mut dyn Pilot) -> Result<(TrialRecord, Vec<LogRecord>), EngineError> {
    let mut engine = TrialEngine::new(config, setup)?;
    let record = engine.run(pilot)?;
    Ok((record, engine.drain_log()))
}

pub fn break_schedule(config: &Config) -> BreakSchedule {
    BreakSchedule {
        short: config.trials.short_break,
        long: config.trials.long_break,
        long_after: config.trials.long_break_after,
    }
}

/// Runs every scenario of a session back to back (breaks are logged, not waited).
pub fn run_session(
    config: &Config,
    session: &Session,
    subject: &str,
    mut make_pilot: impl FnMut(&TrialSetup) -> Box<dyn Pilot>,
) -> Result<(Vec<TrialRecord>, Vec<LogRecord>), EngineError> {
    let mut log = vec![
        header(config, subject, session.seed),
        LogRecord::Session {
            scenarios: session.scenarios.clone(),
        },
    ];
    let mut records = Vec::new();
    for sc in &session.scenarios {
        let setup = TrialSetup {
            trial: sc.index,
            subject: subject.to_string(),
            seed: session.seed,
            condition: sc.condition.clone(),
            start_index: sc.start_index,
            start_pose: None,
            scripted: Vec::new(),
        };
        let mut pilot = make_pilot(&setup);
        let (record, lines) = run_trial(config, setup, pilot.as_mut())?;
        log.extend(lines);
        if sc.break_after > 0.0 {
            log.push(LogRecord::Break {
                after_trial: sc.index,
                seconds: sc.break_after,
            });
        }
        records.push(record);
    }
    Ok((records, log))
}
