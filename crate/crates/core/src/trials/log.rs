//! Append-only JSON-lines session log.
//!
//! Every line is one object with a `type` field. A file starts with a
//! `header`, optionally followed by `session`, then per trial a
//! `trial_start`, one `tick` per simulation step, `event` lines and a
//! closing `trial_end`. `break` lines mark the pause after a trial.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::conditions::{Scenario, TrialCondition};
use super::metrics::{Metrics, Outcome, TraceSample, TrialEvent, TrialRecord};
use crate::geometry::{Pose, Twist};
use crate::worldsim::Obstacle;

pub const LOG_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Header {
        schema: u32,
        config_hash: String,
        subject: String,
        seed: u64,
        dt: f64,
    },
    Session {
        scenarios: Vec<Scenario>,
    },
    TrialStart {
        trial: usize,
        condition: TrialCondition,
        start_pose: Pose,
        obstacles: Vec<Obstacle>,
    },
    Tick {
        trial: usize,
        tick: u64,
        t: f64,
        pose: Pose,
        cmd: Twist,
    },
    Event {
        trial: usize,
        event: TrialEvent,
    },
    TrialEnd {
        trial: usize,
        tick: u64,
        t: f64,
        outcome: Outcome,
        metrics: Metrics,
    },
    Break {
        after_trial: usize,
        seconds: f64,
    },
}

pub struct LogWriter<W: Write> {
    out: W,
}

impl<W: Write> LogWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, record: &LogRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    pub fn write_all(&mut self, records: &[LogRecord]) -> std::io::Result<()> {
        records.iter().try_for_each(|r| self.write(r))?;
        self.out.flush()
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("log has no header line")]
    MissingHeader,
    #[error("unsupported log schema {0}")]
    Schema(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLog {
    pub config_hash: String,
    pub subject: String,
    pub seed: u64,
    pub dt: f64,
    pub scenarios: Vec<Scenario>,
    /// Completed `trial_start` .. `trial_end` blocks, in file order.
    pub trials: Vec<TrialRecord>,
    /// Trials whose `trial_end` is missing (e.g. a crashed session).
    pub unfinished: Vec<usize>,
}

/// Reassembles trial records from log text. Blank lines are skipped.
pub fn parse_log(text: &str) -> Result<ParsedLog, LogError> {
    let mut parsed: Option<ParsedLog> = None;
    let mut open: Option<TrialRecord> = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let err = |message: String| LogError::Line { line: line_no, message };
        let record: LogRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if let LogRecord::Header {
            schema,
            config_hash,
            subject,
            seed,
            dt,
        } = &record
        {
            if *schema != LOG_SCHEMA {
                return Err(LogError::Schema(*schema));
            }
            if parsed.is_some() {
                return Err(err("duplicate header".into()));
            }
            parsed = Some(ParsedLog {
                config_hash: config_hash.clone(),
                subject: subject.clone(),
                seed: *seed,
                dt: *dt,
                scenarios: Vec::new(),
                trials: Vec::new(),
                unfinished: Vec::new(),
            });
            continue;
        }
        let log = parsed.as_mut().ok_or(LogError::MissingHeader)?;
        match record {
            LogRecord::Header { .. } => unreachable!(),
            LogRecord::Session { scenarios } => log.scenarios = scenarios,
            LogRecord::TrialStart {
                trial,
                condition,
                start_pose,
                obstacles,
            } => {
                if let Some(prev) = open.take() {
                    log.unfinished.push(prev.trial);
                }
                open = Some(TrialRecord {
                    trial,
                    subject: log.subject.clone(),
                    seed: log.seed,
                    condition,
                    start_pose,
                    obstacles,
                    trace: vec![TraceSample {
                        tick: 0,
                        t: 0.0,
                        pose: start_pose,
                    }],
                    events: Vec::new(),
                    outcome: Outcome::Aborted,
                    metrics: super::metrics::compute_metrics(&[], &[], Outcome::Aborted),
                });
            }
            LogRecord::Tick { trial, tick, t, pose, .. } => {
                let rec = open
                    .as_mut()
                    .filter(|r| r.trial == trial)
                    .ok_or_else(|| err(format!("tick for trial {trial} outside its block")))?;
                rec.trace.push(TraceSample { tick, t, pose });
            }
            LogRecord::Event { trial, event } => {
                let rec = open
                    .as_mut()
                    .filter(|r| r.trial == trial)
                    .ok_or_else(|| err(format!("event for trial {trial} outside its block")))?;
                rec.events.push(event);
            }
            LogRecord::TrialEnd {
                trial, outcome, metrics, ..
            } => {
                let mut rec = open
                    .take()
                    .filter(|r| r.trial == trial)
                    .ok_or_else(|| err(format!("trial_end for trial {trial} without trial_start")))?;
                rec.outcome = outcome;
                rec.metrics = metrics;
                log.trials.push(rec);
            }
            LogRecord::Break { .. } => {}
        }
    }
    let mut log = parsed.ok_or(LogError::MissingHeader)?;
    if let Some(rec) = open {
        log.unfinished.push(rec.trial);
    }
    Ok(log)
}

/// Serializes a finished record back into its log lines.
pub fn record_lines(record: &TrialRecord, cmds: Option<&[Twist]>) -> Vec<LogRecord> {
    let mut out = vec![LogRecord::TrialStart {
        trial: record.trial,
        condition: record.condition.clone(),
        start_pose: record.start_pose,
        obstacles: record.obstacles.clone(),
    }];
    let mut events = record.events.iter().peekable();
    for (i, s) in record.trace.iter().enumerate() {
        while let Some(e) = events.next_if(|e| e.tick() <= s.tick) {
            out.push(LogRecord::Event {
                trial: record.trial,
                event: e.clone(),
            });
        }
        if i > 0 {
            out.push(LogRecord::Tick {
                trial: record.trial,
                tick: s.tick,
                t: s.t,
                pose: s.pose,
                cmd: cmds.and_then(|c| c.get(i - 1)).copied().unwrap_or(Twist::ZERO),
            });
        }
    }
    out.extend(events.map(|e| LogRecord::Event {
        trial: record.trial,
        event: e.clone(),
    }));
    let last = record.trace.last().copied();
    out.push(LogRecord::TrialEnd {
        trial: record.trial,
        tick: last.map_or(0, |s| s.tick),
        t: last.map_or(0.0, |s| s.t),
        outcome: record.outcome,
        metrics: record.metrics.clone(),
    });
    out
}
