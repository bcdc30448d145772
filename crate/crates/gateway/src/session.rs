//! Live session state machine driven one tick at a time.
//!
//! `Ready -> Running -> Break -> Ready ... -> Finished`. A trial starts on
//! `start_trial`; the scheduled break after it counts down in simulated time
//! and can be skipped by starting the next trial early.

use std::io::Write;

use spv_core::geometry::{Point2, Twist};
use spv_core::guidance::autopilot_step;
use spv_core::phosphene::wire::encode_frame;
use spv_core::planner::{DwaDiagnostics, DwaParams};
use spv_core::trials::engine::{break_schedule, header};
use spv_core::trials::{
    compute_metrics, full_grid, generate_session, LogRecord, LogWriter, Outcome, Pilot, PilotContext, Session, TrialCondition, TrialEngine,
    TrialRecord, TrialSetup,
};
use spv_core::Config;

use crate::messages::{Phase, ServerMessage, TrialView};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("a trial is already running")]
    TrialRunning,
    #[error("no trial is running")]
    NoTrial,
    #[error("all scheduled scenarios are done")]
    SessionFinished,
    #[error(transparent)]
    Engine(#[from] spv_core::trials::EngineError),
    #[error(transparent)]
    Schedule(#[from] spv_core::trials::SessionError),
    #[error("log write failed: {0}")]
    Log(#[from] std::io::Error),
}

/// Output of one tick or command. Frames go to every client, text messages
/// to experimenters only.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Frame(Vec<u8>),
    Text(ServerMessage),
}

/// Applies the externally supplied command and records what the autopilot
/// would have done.
struct GatewayPilot {
    latest: Twist,
    dwa: DwaParams,
    diagnostics: Option<DwaDiagnostics>,
}

impl Pilot for GatewayPilot {
    fn command(&mut self, ctx: &PilotContext) -> Twist {
        self.diagnostics = ctx
            .plan
            .and_then(|p| autopilot_step(ctx.world, p, ctx.costmap, &self.dwa).ok())
            .map(|o| o.diagnostics);
        self.latest
    }
}

enum State {
    Ready,
    Running {
        engine: Box<TrialEngine>,
        scheduled: Option<usize>,
    },
    Break {
        after_trial: usize,
        remaining: f64,
    },
    Finished,
}

pub struct SimSession {
    config: Config,
    session: Session,
    subject: String,
    next_scenario: usize,
    trials_started: usize,
    state: State,
    pilot: GatewayPilot,
    pending: Option<Twist>,
    dropped: u64,
    tick: u64,
    log: Option<LogWriter<Box<dyn Write + Send>>>,
    records: Vec<TrialRecord>,
}

impl SimSession {
    /// Schedules `config.trials.n_scenarios` scenarios from `seed`. When `log`
    /// is given the header and schedule are written immediately.
    pub fn new(config: Config, seed: u64, subject: &str, log: Option<Box<dyn Write + Send>>) -> Result<Self, SessionError> {
        let session = generate_session(seed, &full_grid(), config.trials.n_scenarios, break_schedule(&config))?;
        let mut log = log.map(LogWriter::new);
        if let Some(w) = log.as_mut() {
            w.write(&header(&config, subject, seed))?;
            w.write(&LogRecord::Session {
                scenarios: session.scenarios.clone(),
            })?;
            w.flush()?;
        }
        Ok(Self {
            pilot: GatewayPilot {
                latest: Twist::ZERO,
                dwa: config.dwa,
                diagnostics: None,
            },
            config,
            session,
            subject: subject.to_string(),
            next_scenario: 0,
            trials_started: 0,
            state: State::Ready,
            pending: None,
            dropped: 0,
            tick: 0,
            log,
            records: Vec::new(),
        })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    /// Number of frames produced so far; the next frame carries this index.
    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn dropped_controls(&self) -> u64 {
        self.dropped
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn engine(&self) -> Option<&TrialEngine> {
        match &self.state {
            State::Running { engine, .. } => Some(engine),
            _ => None,
        }
    }

    pub fn phase(&self) -> Phase {
        match &self.state {
            State::Ready => Phase::Ready {
                next_trial: self.session.scenarios.get(self.next_scenario).map(|s| s.index),
            },
            State::Running { engine, .. } => Phase::Running { trial: engine.trial() },
            State::Break { after_trial, remaining } => Phase::Break {
                after_trial: *after_trial,
                remaining: *remaining,
            },
            State::Finished => Phase::Finished,
        }
    }

    /// Latest-wins: a command replaced before the next tick counts as dropped.
    pub fn set_control(&mut self, twist: Twist) {
        if self.pending.replace(twist).is_some() {
            self.dropped += 1;
        }
    }

    /// Stops the agent, e.g. when the controlling client leaves.
    pub fn release_control(&mut self) {
        self.pending = None;
        self.pilot.latest = Twist::ZERO;
    }

    fn write_log(&mut self, lines: &[LogRecord]) -> Result<(), SessionError> {
        if let Some(w) = self.log.as_mut() {
            w.write_all(lines)?;
        }
        Ok(())
    }

    /// Starts `condition` as an unscheduled trial, or the next scheduled
    /// scenario when `None`. A pending break is skipped.
    pub fn start_trial(&mut self, condition: Option<TrialCondition>) -> Result<Vec<Output>, SessionError> {
        match self.state {
            State::Running { .. } => return Err(SessionError::TrialRunning),
            State::Finished if condition.is_none() => return Err(SessionError::SessionFinished),
            _ => {}
        }
        let (condition, start_index, scheduled) = match condition {
            Some(c) => (c, 0, None),
            None => {
                let sc = self
                    .session
                    .scenarios
                    .get(self.next_scenario)
                    .ok_or(SessionError::SessionFinished)?;
                (sc.condition.clone(), sc.start_index, Some(self.next_scenario))
            }
        };
        let setup = TrialSetup {
            trial: self.trials_started,
            subject: self.subject.clone(),
            seed: self.session.seed,
            condition,
            start_index,
            start_pose: None,
            scripted: Vec::new(),
        };
        let mut engine = Box::new(TrialEngine::new(&self.config, setup)?);
        if let Some(i) = scheduled {
            self.next_scenario = i + 1;
        }
        self.trials_started += 1;
        let lines = engine.drain_log();
        self.write_log(&lines)?;
        self.release_control();
        let started = ServerMessage::TrialStarted {
            seq: 0,
            trial: engine.trial(),
            condition: engine.condition().clone(),
            start_pose: engine.world().agent.pose,
        };
        self.state = State::Running { engine, scheduled };
        Ok(vec![Output::Text(started)])
    }

    pub fn abort_trial(&mut self) -> Result<Vec<Output>, SessionError> {
        let State::Running { engine, .. } = &mut self.state else {
            return Err(SessionError::NoTrial);
        };
        engine.abort()?;
        let trial = engine.trial();
        let out = engine
            .events()
            .last()
            .cloned()
            .map(|event| Output::Text(ServerMessage::TrialEvent { seq: 0, trial, event }))
            .into_iter()
            .collect();
        Ok(self.after_step(out))
    }

    pub fn annotate_aid(&mut self, note: &str) -> Result<Vec<Output>, SessionError> {
        let State::Running { engine, .. } = &mut self.state else {
            return Err(SessionError::NoTrial);
        };
        let trial = engine.trial();
        let event = engine.annotate_aid(note)?;
        let lines = engine.drain_log();
        self.write_log(&lines)?;
        Ok(vec![Output::Text(ServerMessage::TrialEvent { seq: 0, trial, event })])
    }

    /// Advances the session by one tick of `config.trials.dt`.
    pub fn step(&mut self) -> Result<Vec<Output>, SessionError> {
        let dt = self.config.trials.dt;
        let mut out = Vec::new();
        match &mut self.state {
            State::Running { engine, .. } => {
                if let Some(t) = self.pending.take() {
                    self.pilot.latest = t;
                }
                let report = engine.step(&mut self.pilot)?;
                let mut frame = report.composition.frame;
                frame.tick = self.tick;
                self.tick += 1;
                out.push(Output::Frame(encode_frame(&frame)));
                let trial = engine.trial();
                out.extend(
                    report
                        .events
                        .into_iter()
                        .map(|event| Output::Text(ServerMessage::TrialEvent { seq: 0, trial, event })),
                );
                out.push(Output::Text(self.state_message()));
                return Ok(self.after_step(out));
            }
            State::Break { after_trial, remaining } => {
                *remaining -= dt;
                let (after, left) = (*after_trial, *remaining);
                let next_trial = self.session.scenarios.get(self.next_scenario).map(|s| s.index);
                out.push(Output::Text(ServerMessage::BreakTimer {
                    seq: 0,
                    after_trial: after,
                    remaining: left.max(0.0),
                    next_trial,
                }));
                if left <= 1e-9 {
                    self.state = self.idle_state();
                }
            }
            State::Ready | State::Finished => {}
        }
        out.push(Output::Text(self.state_message()));
        Ok(out)
    }

    fn idle_state(&self) -> State {
        if self.next_scenario >= self.session.scenarios.len() {
            State::Finished
        } else {
            State::Ready
        }
    }

    /// Flushes log lines and closes the trial if it ended.
    fn after_step(&mut self, mut out: Vec<Output>) -> Vec<Output> {
        let State::Running { engine, scheduled } = &mut self.state else {
            return out;
        };
        let lines = engine.drain_log();
        let done = engine.is_done();
        let scheduled = *scheduled;
        let record = done.then(|| engine.record());
        if let Err(e) = self.write_log(&lines) {
            tracing::warn!("session log: {e}");
        }
        let Some(record) = record else {
            return out;
        };
        out.push(Output::Text(ServerMessage::TrialEnded {
            seq: 0,
            trial: record.trial,
            outcome: record.outcome,
            metrics: record.metrics.clone(),
        }));
        let pause = scheduled.map_or(0.0, |i| self.session.scenarios[i].break_after);
        self.release_control();
        self.state = if pause > 0.0 {
            let after_trial = record.trial;
            if let Err(e) = self.write_log(&[LogRecord::Break {
                after_trial,
                seconds: pause,
            }]) {
                tracing::warn!("session log: {e}");
            }
            State::Break {
                after_trial,
                remaining: pause,
            }
        } else {
            self.idle_state()
        };
        self.records.push(record);
        out
    }

    pub fn state_message(&self) -> ServerMessage {
        let trial = self.engine().map(|e| {
            let world = e.world();
            let grid = e.costmap().grid();
            let outcome = e.outcome().unwrap_or(Outcome::Aborted);
            Box::new(TrialView {
                trial: e.trial(),
                condition: e.condition().clone(),
                active_goal: e.active_goal(),
                trial_tick: e.tick(),
                t: world.clock,
                pose: world.agent.pose,
                twist: world.agent.twist,
                plan: e.plan().map(|p| p.waypoints.clone()),
                obstacles: world.obstacles.clone(),
                sensed: e
                    .costmap()
                    .live_cells()
                    .keys()
                    .map(|&i| grid.cell_center(grid.cell_of_index(i)))
                    .collect::<Vec<Point2>>(),
                metrics: compute_metrics(e.trace(), e.events(), outcome),
                dwa: self.pilot.diagnostics.clone(),
            })
        });
        ServerMessage::ExperimenterState {
            seq: 0,
            tick: self.tick,
            phase: self.phase(),
            trial,
            dropped_controls: self.dropped,
            subjects: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_config() -> Config {
        let mut c = Config::bundled_default();
        c.trials.n_scenarios = 2;
        c.trials.short_break = 0.3;
        c.trials.long_break = 0.3;
        c
    }

    #[test]
    fn latest_wins_counts_drops() {
        let mut s = SimSession::new(short_config(), 1, "t", None).unwrap();
        s.start_trial(None).unwrap();
        s.set_control(Twist::new(0.2, 0.0));
        s.set_control(Twist::new(0.4, 0.0));
        s.set_control(Twist::new(1.0, 0.0));
        s.step().unwrap();
        assert_eq!(s.dropped_controls(), 2);
        assert_eq!(s.engine().unwrap().world().agent.twist.v, 1.0);
    }

    #[test]
    fn abort_then_break_then_ready() {
        let mut s = SimSession::new(short_config(), 1, "t", None).unwrap();
        assert!(matches!(s.abort_trial(), Err(SessionError::NoTrial)));
        s.start_trial(None).unwrap();
        assert!(matches!(s.start_trial(None), Err(SessionError::TrialRunning)));
        s.step().unwrap();
        let out = s.abort_trial().unwrap();
        assert!(out.iter().any(|o| matches!(
            o,
            Output::Text(ServerMessage::TrialEnded {
                outcome: Outcome::Aborted,
                ..
            })
        )));
        assert!(matches!(s.phase(), Phase::Break { .. }));
        for _ in 0..3 {
            s.step().unwrap();
        }
        assert!(matches!(s.phase(), Phase::Ready { next_trial: Some(1) }));
        s.start_trial(None).unwrap();
        s.abort_trial().unwrap();
        assert_eq!(s.phase(), Phase::Finished);
        assert!(matches!(s.start_trial(None), Err(SessionError::SessionFinished)));
        assert_eq!(s.records().len(), 2);
    }

    #[test]
    fn frames_carry_consecutive_ticks() {
        let mut s = SimSession::new(short_config(), 3, "t", None).unwrap();
        s.start_trial(None).unwrap();
        let ticks: Vec<u64> = (0..3)
            .flat_map(|_| s.step().unwrap())
            .filter_map(|o| match o {
                Output::Frame(b) => Some(spv_core::phosphene::wire::decode_frame(&b).unwrap().tick),
                _ => None,
            })
            .collect();
        assert_eq!(ticks, vec![0, 1, 2]);
    }
}
