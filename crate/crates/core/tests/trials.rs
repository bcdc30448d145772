use spv_core::geometry::Pose;
use spv_core::guidance::GuidanceMode;
use spv_core::planner::dwa::{point_at_arc_length, project_onto_path};
use spv_core::planner::ReplanReason;
use spv_core::trials::engine::{header, Autopilot, ManualPilot, ScriptedObstacle, TrialEngine, TrialSetup};
use spv_core::trials::report::{Metric, TestStatus, TABLE_COLUMNS};
use spv_core::trials::{
    compute_metrics, parse_log, summarize, write_report, GoalOrder, LogWriter, Metrics, Outcome, TraceSample, TrialCondition, TrialEvent,
    TrialRecord,
};
use spv_core::worldsim::{Obstacle, Shape};
use spv_core::{Config, Point2, Twist};

fn condition(env: &str, order: GoalOrder, mode: GuidanceMode) -> TrialCondition {
    TrialCondition {
        environment: env.into(),
        goal_order: order,
        mode,
    }
}

fn post(id: &str, x: f64, y: f64) -> Obstacle {
    Obstacle {
        id: id.into(),
        shape: Shape::Circle { radius: 0.25 },
        pose: Pose::new(x, y, 0.0),
        known_to_map: true,
        height: 1.0,
    }
}

fn synthetic(subject: &str, mode: GuidanceMode, time: Option<f64>, distance: f64, bumps: usize) -> TrialRecord {
    TrialRecord {
        trial: 0,
        subject: subject.into(),
        seed: 0,
        condition: condition("env1", GoalOrder::DoorThenBin, mode),
        start_pose: Pose::new(0.0, 0.0, 0.0),
        obstacles: Vec::new(),
        trace: Vec::new(),
        events: Vec::new(),
        outcome: if time.is_some() { Outcome::Completed } else { Outcome::Aborted },
        metrics: Metrics {
            time_to_goal2: time,
            distance,
            bump_count: bumps,
            aid_count: 0,
            replan_count: 0,
            goals_reached: if time.is_some() { 2 } else { 0 },
            plan_length: distance,
        },
    }
}

#[test]
fn manual_trial_log_replays_to_the_same_record() {
    let cfg = Config::bundled_default();
    let mut setup = TrialSetup::new(condition("env1", GoalOrder::BinThenDoor, GuidanceMode::DirectG));
    setup.subject = "s01".into();
    setup.seed = 11;
    let mut engine = TrialEngine::new(&cfg, setup).unwrap();
    let mut pilot = ManualPilot {
        latest: Twist::new(0.4, 0.15),
    };
    for _ in 0..30 {
        engine.step(&mut pilot).unwrap();
    }
    engine.annotate_aid("verbal cue").unwrap();
    for _ in 0..10 {
        engine.step(&mut pilot).unwrap();
    }
    engine.abort().unwrap();
    let record = engine.record();
    assert_eq!(record.outcome, Outcome::Aborted);
    assert_eq!(record.metrics.aid_count, 1);
    assert_eq!(record.metrics.time_to_goal2, None);
    assert!(record.metrics.distance > 1.0);

    let mut writer = LogWriter::new(Vec::new());
    writer.write(&header(&cfg, "s01", 11)).unwrap();
    writer.write_all(&engine.drain_log()).unwrap();
    let text = String::from_utf8(writer.into_inner()).unwrap();
    let parsed = parse_log(&text).unwrap();
    assert_eq!(parsed.subject, "s01");
    assert_eq!(parsed.seed, 11);
    assert!(parsed.unfinished.is_empty());
    assert_eq!(parsed.trials.len(), 1);
    let replayed = &parsed.trials[0];
    assert_eq!(replayed, &record);
    assert_eq!(replayed.recompute(), record.metrics);
}

#[test]
fn two_bump_trace_matches_offline_recount() {
    // passes one post at 0.9 m and another at 0.8 m
    let trace: Vec<TraceSample> = (0..=100)
        .map(|k| TraceSample {
            tick: k,
            t: k as f64 * 0.1,
            pose: Pose::new(-5.0 + 0.1 * k as f64, 0.0, 0.0),
        })
        .collect();
    let events = vec![
        TrialEvent::Bump {
            tick: 30,
            t: 3.0,
            obstacle_id: "a".into(),
            distance: 0.9,
        },
        TrialEvent::Bump {
            tick: 70,
            t: 7.0,
            obstacle_id: "b".into(),
            distance: 0.8,
        },
    ];
    let metrics = compute_metrics(&trace, &events, Outcome::Timeout);
    assert_eq!(metrics.bump_count, 2);
    assert!((metrics.distance - 10.0).abs() < 1e-9);
    let mut record = synthetic("s01", GuidanceMode::DirectG, None, metrics.distance, 2);
    record.trace = trace;
    record.events = events;
    record.obstacles = vec![post("a", -2.0, 0.9), post("b", 2.0, -0.8), post("far", 0.0, 1.5)];
    record.metrics = metrics;
    assert_eq!(record.recount_bumps(1.0, 1.1), 2);
    assert_eq!(record.recompute(), record.metrics);
}

#[test]
fn strictly_faster_mode_wins_with_significance() {
    let mut records = Vec::new();
    for s in 0..12 {
        let subject = format!("s{s:02}");
        let base = 40.0 + 3.0 * s as f64;
        let jitter = ((s * 7) % 5) as f64 * 0.4;
        for (mode, extra) in [
            (GuidanceMode::RoboticG, 0.0),
            (GuidanceMode::PerceptualG, 8.0),
            (GuidanceMode::DirectG, 15.0),
        ] {
            for rep in 0..2 {
                let noise = if extra > 0.0 { jitter * (1 + rep) as f64 } else { 0.0 };
                let t = base + extra + noise;
                records.push(synthetic(&subject, mode, Some(t), t * 0.5, 0));
            }
        }
    }
    let summary = summarize(&records).unwrap();
    assert_eq!(summary.subjects, 12);
    let robotic = &summary.modes[0];
    assert_eq!(robotic.mode, GuidanceMode::RoboticG);
    assert_eq!(robotic.records, 24);
    for other in &summary.modes[1..] {
        assert!(robotic.time_mean.unwrap() < other.time_mean.unwrap());
    }
    for t in summary
        .tests
        .iter()
        .filter(|t| t.metric == Metric::Time && t.a == GuidanceMode::RoboticG)
    {
        assert_eq!(t.n, 12);
        assert_eq!(t.status, TestStatus::Ok);
        assert!(t.p.unwrap() < 0.05, "{t:?}");
        assert!(t.p_holm.unwrap() >= t.p.unwrap());
        assert_ne!(t.stars, "ns");
    }
}

#[test]
fn single_record_per_mode_is_insufficient() {
    let records: Vec<TrialRecord> = GuidanceMode::ALL
        .iter()
        .map(|&m| synthetic("s01", m, Some(50.0), 20.0, 0))
        .collect();
    let err = summarize(&records).unwrap_err();
    assert!(err.to_string().contains("insufficient"), "{err}");
}

#[test]
fn identical_records_give_zero_variance() {
    let mut records = Vec::new();
    for s in ["s01", "s02", "s03"] {
        for &m in &GuidanceMode::ALL {
            records.push(synthetic(s, m, Some(50.0), 20.0, 1));
        }
    }
    let summary = summarize(&records).unwrap();
    for m in &summary.modes {
        assert_eq!(m.time_sd, Some(0.0));
        assert_eq!(m.total_bumps, 3);
    }
    for t in &summary.tests {
        assert_eq!(t.status, TestStatus::ZeroVariance);
        assert_eq!(t.p, None);
        assert_eq!(t.stars, "ns");
    }
}

#[test]
fn aborted_trials_count_bumps_but_not_means() {
    let mut records = Vec::new();
    for &m in &GuidanceMode::ALL {
        records.push(synthetic("s01", m, Some(40.0), 20.0, 1));
        records.push(synthetic("s01", m, None, 3.0, 4));
    }
    let summary = summarize(&records).unwrap();
    for m in &summary.modes {
        assert_eq!((m.records, m.completed), (2, 1));
        assert_eq!(m.time_mean, Some(40.0));
        assert_eq!(m.distance_mean, Some(20.0));
        assert_eq!(m.total_bumps, 5);
    }
}

#[test]
fn report_files_carry_the_table() {
    let mut records = Vec::new();
    for (i, &m) in GuidanceMode::ALL.iter().enumerate() {
        for s in ["s01", "s02"] {
            let mut r = synthetic(s, m, Some(40.0 + i as f64), 20.0, 0);
            r.trace = vec![TraceSample {
                tick: 0,
                t: 0.0,
                pose: Pose::new(1.0, 2.0, 0.0),
            }];
            records.push(r);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    write_report(dir.path(), &records).unwrap();
    let table = std::fs::read_to_string(dir.path().join("table.txt")).unwrap();
    let first = table.lines().next().unwrap();
    let cols: Vec<&str> = first.split("  ").map(str::trim).filter(|c| !c.is_empty()).collect();
    assert_eq!(cols, TABLE_COLUMNS);
    assert!(table.contains("41.00 ± 0.00"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["subjects"], 2);
    let csv = std::fs::read_to_string(dir.path().join("trajectories_env1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
}

#[test]
fn dropped_obstacle_triggers_replan_within_a_second() {
    let cfg = Config::bundled_default();
    let cond = condition("env2", GoalOrder::DoorThenBin, GuidanceMode::RoboticG);
    let drop_t = 4.0;
    let mut probe = TrialEngine::new(&cfg, TrialSetup::new(cond.clone())).unwrap();
    let mut pilot = Autopilot::new(cfg.dwa);
    while probe.world().clock < drop_t - 1e-9 {
        probe.step(&mut pilot).unwrap();
    }
    let plan = probe.plan().unwrap().clone();
    let here = probe.world().agent.pose.position();
    let (_, s) = project_onto_path(&plan.waypoints, &here);
    let c: Point2 = point_at_arc_length(&plan.waypoints, s + 3.0);
    assert!(c.distance(&here) >= 2.5);

    let mut setup = TrialSetup::new(cond);
    setup.scripted = vec![ScriptedObstacle {
        at_time: drop_t,
        obstacle: Obstacle {
            id: "dropped".into(),
            shape: Shape::Circle { radius: 0.65 },
            pose: Pose::new(c.x, c.y, 0.0),
            known_to_map: false,
            height: 1.8,
        },
    }];
    let mut engine = TrialEngine::new(&cfg, setup).unwrap();
    let mut pilot = Autopilot::new(cfg.dwa);
    while engine.world().clock < drop_t + 1.0 + 1e-9 {
        engine.step(&mut pilot).unwrap();
    }
    let added = engine
        .events()
        .iter()
        .find_map(|e| match e {
            TrialEvent::ObstacleAdded { t, .. } => Some(*t),
            _ => None,
        })
        .expect("obstacle added");
    let replanned = engine.events().iter().any(
        |e| matches!(e, TrialEvent::Replan { t, reason: ReplanReason::Blocked, .. } if *t >= added - 1e-9 && *t <= added + 1.0 + 1e-9),
    );
    assert!(replanned, "{:?}", engine.events());
    assert!(!engine.events().iter().any(|e| matches!(e, TrialEvent::Bump { .. })));
}
