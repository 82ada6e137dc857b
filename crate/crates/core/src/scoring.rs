//! Per-level and per-game efficiency scores, two-stage aggregation and
//! report rendering.
//!
//! A solved level scores `min(1, h / a)` for baseline `h` and agent actions
//! `a`; a game scores the mean over all of its levels, as a percentage.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use crate::protocol::codec::{as_object, as_str, as_u64, check_keys, object, parse_line, to_line, ProtocolError};

/// The shipped reference fixture of 29 recorded runs.
pub const TABLE1_FIXTURE: &str = include_str!("../fixtures/table1.fixture");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoringError {
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("no reports to aggregate")]
    EmptyInput,
    #[error("line {line}: {reason}")]
    Fixture { line: usize, reason: String },
    #[error("bad report: {0}")]
    Report(String),
}

pub fn level_rhae(h: u64, a: u64, solved: bool) -> Result<f64, ScoringError> {
    if h == 0 {
        return Err(ScoringError::InvalidCounts("baseline must be at least 1".into()));
    }
    if !solved {
        return Ok(0.0);
    }
    if a == 0 {
        return Err(ScoringError::InvalidCounts("a solved level takes at least one action".into()));
    }
    Ok((h as f64 / a as f64).min(1.0))
}

/// Percentage over `level_count` levels; levels not listed count as 0.
pub fn game_rhae(levels: &[LevelReport], level_count: usize) -> Result<f64, ScoringError> {
    if level_count == 0 || levels.len() > level_count {
        return Err(ScoringError::InvalidCounts(format!(
            "{} level entries for {level_count} levels",
            levels.len()
        )));
    }
    let mut sum = 0.0;
    for l in levels {
        sum += level_rhae(l.baseline, l.actions, l.solved)?;
    }
    Ok(100.0 * sum / level_count as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelReport {
    pub solved: bool,
    /// Actions spent on the level, RESETs included.
    pub actions: u64,
    pub baseline: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Termination {
    Normal,
    BudgetExhausted,
    /// The run was cut off by the environment after `steps` actions.
    EnvironmentError { steps: Option<u64> },
}

impl Termination {
    pub fn label(&self) -> String {
        match self {
            Termination::Normal => "normal termination".into(),
            Termination::BudgetExhausted => "budget exhausted".into(),
            Termination::EnvironmentError { steps: Some(n) } => format!("interrupted, {n} steps"),
            Termination::EnvironmentError { steps: None } => "interrupted".into(),
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "normal termination" => Some(Termination::Normal),
            "budget exhausted" => Some(Termination::BudgetExhausted),
            "interrupted" => Some(Termination::EnvironmentError { steps: None }),
            _ => {
                let n = text.strip_prefix("interrupted, ")?.strip_suffix(" steps")?.parse().ok()?;
                Some(Termination::EnvironmentError { steps: Some(n) })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub game_id: String,
    pub run_index: u32,
    pub level_count: usize,
    pub levels_solved: usize,
    /// Per-level detail; empty for externally supplied rows.
    pub levels: Vec<LevelReport>,
    /// Percentage in [0, 100].
    pub rhae: f64,
    pub termination: Termination,
    pub total_actions: u64,
    pub mismatches: usize,
    pub notes: Vec<String>,
}

impl RunReport {
    /// Builds a report from per-level accounting, scoring it.
    pub fn from_levels(
        game_id: &str,
        run_index: u32,
        levels: Vec<LevelReport>,
        termination: Termination,
    ) -> Result<Self, ScoringError> {
        let level_count = levels.len();
        let rhae = game_rhae(&levels, level_count)?;
        Ok(RunReport {
            game_id: game_id.to_string(),
            run_index,
            level_count,
            levels_solved: levels.iter().filter(|l| l.solved).count(),
            total_actions: levels.iter().map(|l| l.actions).sum(),
            levels,
            rhae,
            termination,
            mismatches: 0,
            notes: Vec::new(),
        })
    }

    pub fn fully_solved(&self) -> bool {
        self.levels_solved == self.level_count
    }

    pub fn to_line(&self) -> String {
        let levels: Vec<Value> = self
            .levels
            .iter()
            .map(|l| {
                object([
                    ("solved", l.solved.into()),
                    ("actions", l.actions.into()),
                    ("baseline", l.baseline.into()),
                ])
            })
            .collect();
        to_line(&object([
            ("game_id", self.game_id.as_str().into()),
            ("run_index", self.run_index.into()),
            ("levels", levels.into()),
            ("termination", self.termination.label().into()),
            ("mismatches", self.mismatches.into()),
            ("notes", self.notes.iter().map(|n| Value::from(n.as_str())).collect::<Vec<_>>().into()),
        ]))
    }

    /// Inverse of [`to_line`](Self::to_line); the score is recomputed from
    /// the levels.
    pub fn parse_line(line: &str) -> Result<Self, ScoringError> {
        let bad = |e: ProtocolError| ScoringError::Report(e.to_string());
        let m = parse_line(line).map_err(bad)?;
        check_keys(&m, &["game_id", "run_index", "levels", "termination", "mismatches", "notes"], &[]).map_err(bad)?;
        let mut levels = Vec::new();
        for v in m["levels"].as_array().ok_or_else(|| ScoringError::Report("levels must be a list".into()))? {
            let l = as_object(v, "level").map_err(bad)?;
            check_keys(l, &["solved", "actions", "baseline"], &[]).map_err(bad)?;
            levels.push(LevelReport {
                solved: l["solved"].as_bool().ok_or_else(|| ScoringError::Report("solved must be a boolean".into()))?,
                actions: as_u64(&l["actions"], "actions").map_err(bad)?,
                baseline: as_u64(&l["baseline"], "baseline").map_err(bad)?,
            });
        }
        let label = as_str(&m["termination"], "termination").map_err(bad)?;
        let termination = Termination::parse(label).ok_or_else(|| ScoringError::Report(format!("bad termination {label:?}")))?;
        let mut report = RunReport::from_levels(
            as_str(&m["game_id"], "game_id").map_err(bad)?,
            as_u64(&m["run_index"], "run_index").map_err(bad)? as u32,
            levels,
            termination,
        )?;
        report.mismatches = as_u64(&m["mismatches"], "mismatches").map_err(bad)? as usize;
        for n in m["notes"].as_array().ok_or_else(|| ScoringError::Report("notes must be a list".into()))? {
            report.notes.push(as_str(n, "note").map_err(bad)?.to_string());
        }
        Ok(report)
    }

    pub fn load(path: &Path) -> Result<Self, ScoringError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScoringError::Report(format!("{}: {e}", path.display())))?;
        RunReport::parse_line(text.trim_end())
    }
}

/// Parses fixture rows: `game run solved/total rhae status...`, `#` comments.
pub fn parse_fixture(text: &str) -> Result<Vec<RunReport>, ScoringError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fail = |reason: &str| ScoringError::Fixture {
            line: i + 1,
            reason: reason.to_string(),
        };
        let mut parts = line.splitn(5, char::is_whitespace);
        let (Some(game), Some(run), Some(levels), Some(rhae), Some(status)) =
            (parts.next(), parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(fail("expected five fields"));
        };
        let run_index = run.parse().map_err(|_| fail("bad run index"))?;
        let (solved, total) = levels.split_once('/').ok_or_else(|| fail("levels must be solved/total"))?;
        let levels_solved: usize = solved.parse().map_err(|_| fail("bad solved count"))?;
        let level_count: usize = total.parse().map_err(|_| fail("bad level count"))?;
        if level_count == 0 || levels_solved > level_count {
            return Err(fail("solved count exceeds level count"));
        }
        let rhae: f64 = rhae.trim_end_matches('%').parse().map_err(|_| fail("bad rhae"))?;
        if !(0.0..=100.0).contains(&rhae) {
            return Err(fail("rhae outside [0, 100]"));
        }
        let termination = Termination::parse(status.trim()).ok_or_else(|| fail("bad status"))?;
        let total_actions = match termination {
            Termination::EnvironmentError { steps: Some(n) } => n,
            _ => 0,
        };
        out.push(RunReport {
            game_id: game.to_string(),
            run_index,
            level_count,
            levels_solved,
            levels: Vec::new(),
            rhae,
            termination,
            total_actions,
            mismatches: 0,
            notes: Vec::new(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub per_game: BTreeMap<String, f64>,
    pub overall_mean: f64,
    pub median: f64,
    pub fully_solved: usize,
    pub above_75: usize,
    pub below_5: usize,
    pub levels_solved: usize,
    pub levels_attempted: usize,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Averages runs per game, then summarizes the per-game means.
pub fn aggregate(reports: &[RunReport]) -> Result<AggregateReport, ScoringError> {
    if reports.is_empty() {
        return Err(ScoringError::EmptyInput);
    }
    let mut runs: BTreeMap<&str, Vec<&RunReport>> = BTreeMap::new();
    for r in reports {
        runs.entry(r.game_id.as_str()).or_default().push(r);
    }
    let mut per_game = BTreeMap::new();
    let mut fully_solved = 0;
    for (game, rs) in &runs {
        // sum in a fixed order so the mean is independent of input order
        let mut values: Vec<f64> = rs.iter().map(|r| r.rhae).collect();
        values.sort_by(f64::total_cmp);
        per_game.insert(game.to_string(), values.iter().sum::<f64>() / values.len() as f64);
        if rs.iter().any(|r| r.fully_solved()) {
            fully_solved += 1;
        }
    }
    let mut means: Vec<f64> = per_game.values().copied().collect();
    means.sort_by(f64::total_cmp);
    Ok(AggregateReport {
        overall_mean: means.iter().sum::<f64>() / means.len() as f64,
        median: median(&means),
        fully_solved,
        above_75: means.iter().filter(|&&m| m > 75.0).count(),
        below_5: means.iter().filter(|&&m| m < 5.0).count(),
        levels_solved: reports.iter().map(|r| r.levels_solved).sum(),
        levels_attempted: reports.iter().map(|r| r.level_count).sum(),
        per_game,
    })
}

impl AggregateReport {
    pub fn to_line(&self) -> String {
        let per_game: serde_json::Map<String, Value> = self
            .per_game
            .iter()
            .map(|(g, m)| (g.clone(), Value::from(format!("{m:.2}"))))
            .collect();
        to_line(&object([
            ("per_game_mean", Value::Object(per_game)),
            ("overall_mean", format!("{:.2}", self.overall_mean).into()),
            ("median", format!("{:.2}", self.median).into()),
            ("fully_solved", self.fully_solved.into()),
            ("above_75", self.above_75.into()),
            ("below_5", self.below_5.into()),
            ("levels_solved", self.levels_solved.into()),
            ("levels_attempted", self.levels_attempted.into()),
        ]))
    }
}

/// Fixed-width run table ordered by (game, run index), followed by the
/// aggregate summary when one is given.
pub fn render_report(aggregate: Option<&AggregateReport>, reports: &[RunReport]) -> String {
    let mut rows: Vec<&RunReport> = reports.iter().collect();
    rows.sort_by(|a, b| (&a.game_id, a.run_index).cmp(&(&b.game_id, b.run_index)));
    let gw = rows.iter().map(|r| r.game_id.len()).max().unwrap_or(0).max(4);
    let mut out = String::new();
    let _ = writeln!(out, "{:<gw$}  {:<9}  {:<13}  {:>8}  Status", "Game", "Run Index", "Levels solved", "RHAE");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<gw$}  {:<9}  {:<13}  {:>8}  {}",
            r.game_id,
            format!("{:02}", r.run_index),
            format!("{}/{}", r.levels_solved, r.level_count),
            format!("{:.2}%", r.rhae),
            r.termination.label()
        );
    }
    if let Some(a) = aggregate {
        let _ = writeln!(out);
        let _ = writeln!(out, "games: {}", a.per_game.len());
        let _ = writeln!(out, "mean RHAE (per-game means): {:.2}%", a.overall_mean);
        let _ = writeln!(out, "median RHAE (per-game means): {:.2}%", a.median);
        let _ = writeln!(out, "fully solved games: {}", a.fully_solved);
        let _ = writeln!(out, "games above 75%: {}", a.above_75);
        let _ = writeln!(out, "games below 5%: {}", a.below_5);
        let _ = writeln!(out, "levels solved: {}/{}", a.levels_solved, a.levels_attempted);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lvl(solved: bool, actions: u64, baseline: u64) -> LevelReport {
        LevelReport {
            solved,
            actions,
            baseline,
        }
    }

    fn squash(s: &str) -> String {
        s.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn level_scores() {
        assert_eq!(level_rhae(10, 10, true), Ok(1.0));
        assert_eq!(level_rhae(10, 20, true), Ok(0.5));
        assert_eq!(level_rhae(10, 5, true), Ok(1.0));
        assert_eq!(level_rhae(10, 999, false), Ok(0.0));
        assert!(level_rhae(0, 1, true).is_err());
        assert!(level_rhae(3, 0, true).is_err());
    }

    #[test]
    fn game_scores() {
        let all = vec![lvl(true, 4, 4), lvl(true, 9, 9)];
        assert!((game_rhae(&all, 2).unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(game_rhae(&[], 3).unwrap(), 0.0);
        let half = vec![lvl(true, 5, 5), lvl(true, 7, 7)];
        assert!((game_rhae(&half, 4).unwrap() - 50.0).abs() < 1e-9);
        assert!(game_rhae(&all, 1).is_err());
    }

    #[test]
    fn fixture_aggregates() {
        let rows = parse_fixture(TABLE1_FIXTURE).unwrap();
        assert_eq!(rows.len(), 29);
        let a = aggregate(&rows).unwrap();
        assert_eq!(a.per_game.len(), 25);
        assert!((a.per_game["cn04"] - 31.08).abs() < 0.005);
        assert_eq!(a.per_game["ar25"], 100.0);
        assert_eq!((a.levels_solved, a.levels_attempted), (106, 209));
    }

    #[test]
    fn rendering() {
        let rows = parse_fixture(TABLE1_FIXTURE).unwrap();
        let text = render_report(None, &rows);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(squash(lines[1]), "ar25 01 8/8 100.00% normal termination");
        assert!(lines.iter().any(|l| squash(l) == "ka59 02 1/7 0.01% normal termination"));
        assert!(lines.iter().any(|l| squash(l) == "cn04 01 5/6 62.15% interrupted, 1041 steps"));
        assert_eq!(render_report(None, &[]).lines().count(), 1);
    }

    #[test]
    fn empty_aggregate_fails() {
        assert_eq!(aggregate(&[]), Err(ScoringError::EmptyInput));
    }

    #[test]
    fn report_line_round_trip() {
        let mut r = RunReport::from_levels("corridor", 1, vec![lvl(true, 4, 4), lvl(false, 30, 9)], Termination::BudgetExhausted).unwrap();
        r.notes.push("x".into());
        let back = RunReport::parse_line(r.to_line().trim_end()).unwrap();
        assert_eq!(back, r);
        assert!((r.rhae - 50.0).abs() < 1e-9);
        assert_eq!(r.total_actions, 34);
    }

    #[test]
    fn termination_labels() {
        for t in [
            Termination::Normal,
            Termination::BudgetExhausted,
            Termination::EnvironmentError { steps: Some(12) },
            Termination::EnvironmentError { steps: None },
        ] {
            assert_eq!(Termination::parse(&t.label()), Some(t));
        }
    }
}
