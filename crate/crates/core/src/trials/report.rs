//! Per-mode summaries, pairwise tests and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::TrialRecord;
use super::stats::{holm, mean, paired_t_test, sample_sd, stars, StatsError};
use crate::guidance::GuidanceMode;

pub const TABLE_COLUMNS: [&str; 5] = ["Method", "Time (s)", "Distance (m)", "Total bumps", "Aids / Interventions"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: GuidanceMode,
    pub records: usize,
    pub completed: usize,
    pub time_mean: Option<f64>,
    pub time_sd: Option<f64>,
    pub distance_mean: Option<f64>,
    pub distance_sd: Option<f64>,
    /// Over all records, aborted ones included.
    pub total_bumps: usize,
    pub total_aids: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Ok,
    ZeroVariance,
    Insufficient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Time,
    Distance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub metric: Metric,
    pub a: GuidanceMode,
    pub b: GuidanceMode,
    /// Subjects with completed trials under both modes.
    pub n: usize,
    pub status: TestStatus,
    pub t: Option<f64>,
    pub df: Option<f64>,
    pub p: Option<f64>,
    pub p_holm: Option<f64>,
    /// Significance code of the raw p-value.
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub subjects: usize,
    pub modes: Vec<ModeSummary>,
    pub tests: Vec<PairwiseTest>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("insufficient records: {0}")]
    Insufficient(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn opt_stats(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        (None, None)
    } else {
        (Some(mean(xs)), Some(sample_sd(xs)))
    }
}

/// Per-subject mean of a metric over completed trials of one mode.
fn subject_means(records: &[TrialRecord], mode: GuidanceMode, metric: Metric) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.condition.mode == mode) {
        if let Some(t) = r.metrics.time_to_goal2 {
            let v = match metric {
                Metric::Time => t,
                Metric::Distance => r.metrics.distance,
            };
            acc.entry(r.subject.clone()).or_default().push(v);
        }
    }
    acc.into_iter().map(|(k, v)| (k, mean(&v))).collect()
}

/// Requires at least two records per mode.
pub fn summarize(records: &[TrialRecord]) -> Result<MetricsSummary, ReportError> {
    let missing: Vec<String> = GuidanceMode::ALL
        .iter()
        .filter_map(|&m| {
            let n = records.iter().filter(|r| r.condition.mode == m).count();
            (n < 2).then(|| format!("{m} has {n} record(s), need 2"))
        })
        .collect();
    if !missing.is_empty() {
        return Err(ReportError::Insufficient(missing.join("; ")));
    }
    let modes = GuidanceMode::ALL
        .iter()
        .map(|&mode| {
            let rs: Vec<&TrialRecord> = records.iter().filter(|r| r.condition.mode == mode).collect();
            let done: Vec<&&TrialRecord> = rs.iter().filter(|r| r.metrics.time_to_goal2.is_some()).collect();
            let times: Vec<f64> = done.iter().filter_map(|r| r.metrics.time_to_goal2).collect();
            let dists: Vec<f64> = done.iter().map(|r| r.metrics.distance).collect();
            let (time_mean, time_sd) = opt_stats(&times);
            let (distance_mean, distance_sd) = opt_stats(&dists);
            ModeSummary {
                mode,
                records: rs.len(),
                completed: done.len(),
                time_mean,
                time_sd,
                distance_mean,
                distance_sd,
                total_bumps: rs.iter().map(|r| r.metrics.bump_count).sum(),
                total_aids: rs.iter().map(|r| r.metrics.aid_count).sum(),
            }
        })
        .collect();

    let pairs = [
        (GuidanceMode::RoboticG, GuidanceMode::PerceptualG),
        (GuidanceMode::RoboticG, GuidanceMode::DirectG),
        (GuidanceMode::PerceptualG, GuidanceMode::DirectG),
    ];
    let mut tests = Vec::new();
    for metric in [Metric::Time, Metric::Distance] {
        let start = tests.len();
        for (a, b) in pairs {
            let ma = subject_means(records, a, metric);
            let mb = subject_means(records, b, metric);
            let (xa, xb): (Vec<f64>, Vec<f64>) = ma.iter().filter_map(|(s, va)| mb.get(s).map(|vb| (*va, *vb))).unzip();
            let mut test = PairwiseTest {
                metric,
                a,
                b,
                n: xa.len(),
                status: TestStatus::Ok,
                t: None,
                df: None,
                p: None,
                p_holm: None,
                stars: "ns".into(),
            };
            match paired_t_test(&xa, &xb) {
                Ok(r) => {
                    test.t = Some(r.t);
                    test.df = Some(r.df);
                    test.p = Some(r.p);
                    test.stars = stars(r.p).into();
                }
                Err(StatsError::ZeroVariance) => test.status = TestStatus::ZeroVariance,
                Err(_) => test.status = TestStatus::Insufficient,
            }
            tests.push(test);
        }
        let family: Vec<usize> = (start..tests.len()).filter(|&i| tests[i].p.is_some()).collect();
        let adjusted = holm(&family.iter().map(|&i| tests[i].p.unwrap()).collect::<Vec<_>>());
        for (&i, adj) in family.iter().zip(adjusted) {
            tests[i].p_holm = Some(adj);
        }
    }
    let subjects = records
        .iter()
        .map(|r| r.subject.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    Ok(MetricsSummary { subjects, modes, tests })
}

fn mean_sd(m: Option<f64>, sd: Option<f64>) -> String {
    match (m, sd) {
        (Some(m), Some(sd)) => format!("{m:.2} ± {sd:.2}"),
        _ => "n/a".into(),
    }
}

/// Plain-text table with one row per mode, followed by the pairwise tests.
pub fn format_table(summary: &MetricsSummary) -> String {
    let widths = [12, 18, 18, 13, 20];
    let mut out = String::new();
    let row = |cells: [String; 5]| -> String {
        let mut line = String::new();
        for (c, w) in cells.iter().zip(widths) {
            let _ = write!(line, "{c:<w$}  ");
        }
        line.trim_end().to_string() + "\n"
    };
    out.push_str(&row(TABLE_COLUMNS.map(String::from)));
    for m in &summary.modes {
        out.push_str(&row([
            m.mode.to_string(),
            mean_sd(m.time_mean, m.time_sd),
            mean_sd(m.distance_mean, m.distance_sd),
            m.total_bumps.to_string(),
            m.total_aids.to_string(),
        ]));
    }
    let _ = writeln!(
        out,
        "\nPaired two-tailed t-tests over {} subject(s); stars: ***=p<.001; **=p<.01; *=p<.05; ns=p>.05",
        summary.subjects
    );
    for t in &summary.tests {
        let metric = match t.metric {
            Metric::Time => "Time",
            Metric::Distance => "Distance",
        };
        let body = match t.status {
            TestStatus::Ok => format!(
                "t({:.0}) = {:.3}  p = {:.4}  p_holm = {:.4}",
                t.df.unwrap_or(0.0),
                t.t.unwrap_or(0.0),
                t.p.unwrap_or(1.0),
                t.p_holm.unwrap_or(1.0)
            ),
            TestStatus::ZeroVariance => "zero variance in paired differences".into(),
            TestStatus::Insufficient => format!("insufficient pairs (n = {})", t.n),
        };
        let _ = writeln!(
            out,
            "{metric:<9} {:<11} vs {:<11}  {body}  {}",
            t.a.to_string(),
            t.b.to_string(),
            t.stars
        );
    }
    out
}

/// CSV of pose traces for one environment, one series per (mode, subject, trial).
pub fn trajectories_csv(records: &[TrialRecord], environment: &str) -> String {
    let mut out = String::from("environment,mode,subject,trial,tick,t,x,y,theta\n");
    for r in records.iter().filter(|r| r.condition.environment == environment) {
        for s in &r.trace {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                environment, r.condition.mode, r.subject, r.trial, s.tick, s.t, s.pose.x, s.pose.y, s.pose.theta
            );
        }
    }
    out
}

/// Writes `table.txt`, `summary.json` and `trajectories_<env>.csv` into `dir`.
pub fn write_report(dir: &Path, records: &[TrialRecord]) -> Result<MetricsSummary, ReportError> {
    let summary = summarize(records)?;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("table.txt"), format_table(&summary))?;
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    let envs: std::collections::BTreeSet<&str> = records.iter().map(|r| r.condition.environment.as_str()).collect();
    for env in envs {
        std::fs::write(dir.join(format!("trajectories_{env}.csv")), trajectories_csv(records, env))?;
    }
    Ok(summary)
}
