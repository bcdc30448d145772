//! Headless commands behind the `spv-nav` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use spv_core::guidance::{FollowerParams, GuidanceMode, NoisyFollower};
use spv_core::phosphene::render_dots;
use spv_core::sensing::to_pgm;
use spv_core::trials::engine::break_schedule;
use spv_core::trials::log::record_lines;
use spv_core::trials::{
    format_table, full_grid, generate_session, parse_log, run_session, write_report, Autopilot, FollowerPilot, GoalOrder, LogRecord,
    LogWriter, MetricsSummary, Pilot, TrialCondition, TrialEngine, TrialRecord, TrialSetup,
};
use spv_core::Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PilotKind {
    /// DWA on the global plan.
    Autopilot,
    /// Seeded noisy follower of whatever the mode displays.
    Follower,
}

impl PilotKind {
    pub fn build(self, config: &Config, seed: u64) -> Box<dyn Pilot> {
        match self {
            PilotKind::Autopilot => Box::new(Autopilot::new(config.dwa)),
            PilotKind::Follower => Box::new(FollowerPilot(NoisyFollower::new(FollowerParams::default(), config.costmap, seed))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AutopilotArgs {
    pub env: String,
    pub mode: GuidanceMode,
    pub order: GoalOrder,
    pub seed: u64,
    pub start: usize,
    pub pilot: PilotKind,
    pub log: Option<PathBuf>,
    pub dump_pgm: Option<PathBuf>,
    pub dump_every: u64,
}

pub fn trial_line(r: &TrialRecord) -> String {
    let m = &r.metrics;
    let time = m.time_to_goal2.map_or("n/a".to_string(), |t| format!("{t:.1} s"));
    let ratio = if m.plan_length > 0.0 {
        format!("{:.3}", m.distance / m.plan_length)
    } else {
        "n/a".into()
    };
    format!(
        "trial {} {} {} {}: {:?} time {} distance {:.2} m plan {:.2} m ratio {} bumps {} replans {} aids {}",
        r.trial,
        r.condition.environment,
        r.condition.goal_order,
        r.condition.mode,
        r.outcome,
        time,
        m.distance,
        m.plan_length,
        ratio,
        m.bump_count,
        m.replan_count,
        m.aid_count
    )
}

fn write_lines(path: &Path, lines: &[LogRecord]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    LogWriter::new(std::io::BufWriter::new(file)).write_all(lines)?;
    Ok(())
}

/// One trial. With `dump_pgm`, every `dump_every`-th tick writes the rendered
/// phosphene view as `phosphenes_<tick>.pgm` and the camera image as
/// `scene_<tick>.pgm`.
pub fn run_autopilot(config: &Config, args: &AutopilotArgs) -> anyhow::Result<TrialRecord> {
    let condition = TrialCondition {
        environment: args.env.clone(),
        goal_order: args.order,
        mode: args.mode,
    };
    let mut setup = TrialSetup::new(condition);
    setup.seed = args.seed;
    setup.start_index = args.start;
    let mut pilot = args.pilot.build(config, args.seed);
    let mut engine = TrialEngine::new(config, setup)?;
    let layout = config.layout();
    if let Some(dir) = &args.dump_pgm {
        std::fs::create_dir_all(dir)?;
    }
    let mut lines = vec![spv_core::trials::engine::header(config, "autopilot", args.seed)];
    while !engine.is_done() {
        let report = engine.step(pilot.as_mut())?;
        if let Some(dir) = &args.dump_pgm {
            if report.tick % args.dump_every.max(1) == 0 {
                let c = &report.composition;
                let dots = render_dots(&c.frame, &layout);
                std::fs::write(
                    dir.join(format!("phosphenes_{:05}.pgm", report.tick)),
                    to_pgm(layout.width, layout.height, &dots),
                )?;
                std::fs::write(
                    dir.join(format!("scene_{:05}.pgm", report.tick)),
                    to_pgm(c.scene.width, c.scene.height, &c.scene.intensity),
                )?;
            }
        }
    }
    lines.extend(engine.drain_log());
    if let Some(path) = &args.log {
        write_lines(path, &lines)?;
    }
    Ok(engine.record())
}

/// A full scheduled session; trial `i` gets follower seed `seed + i`.
pub fn run_full_session(config: &Config, seed: u64, subject: &str, pilot: PilotKind, out: &Path) -> anyhow::Result<Vec<TrialRecord>> {
    let session = generate_session(seed, &full_grid(), config.trials.n_scenarios, break_schedule(config))?;
    let (records, lines) = run_session(config, &session, subject, |setup| {
        pilot.build(config, seed.wrapping_add(setup.trial as u64))
    })?;
    write_lines(out, &lines)?;
    Ok(records)
}

pub struct Analysis {
    pub records: Vec<TrialRecord>,
    pub summary: MetricsSummary,
    pub table: String,
    pub warnings: Vec<String>,
}

/// Reads session logs, summarizes their completed trial blocks and writes
/// the report files into `out`.
pub fn analyze(paths: &[PathBuf], out: &Path) -> anyhow::Result<Analysis> {
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut hashes = std::collections::BTreeSet::new();
    for p in paths {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let log = parse_log(&text).with_context(|| format!("parsing {}", p.display()))?;
        if !log.unfinished.is_empty() {
            warnings.push(format!("{}: unfinished trials {:?} skipped", p.display(), log.unfinished));
        }
        hashes.insert(log.config_hash.clone());
        records.extend(log.trials);
    }
    if hashes.len() > 1 {
        warnings.push(format!("logs come from {} different configurations", hashes.len()));
    }
    let summary = write_report(out, &records)?;
    let table = format_table(&summary);
    Ok(Analysis {
        records,
        summary,
        table,
        warnings,
    })
}

/// Writes one finished record as a standalone single-trial log.
pub fn write_record_log(config: &Config, record: &TrialRecord, path: &Path) -> anyhow::Result<()> {
    let mut lines = vec![spv_core::trials::engine::header(config, &record.subject, record.seed)];
    lines.extend(record_lines(record, None));
    write_lines(path, &lines)
}

pub fn session_report(records: &[TrialRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = writeln!(s, "{}", trial_line(r));
    }
    s
}
