//! Replay checks: the model against recorded transitions, and the planner
//! against levels already solved for real.

use std::collections::BTreeMap;

use serde_json::Value;

use crate::env::{ActionId, Frame, GameStatus};
use crate::model::{ModelError, Prediction, WorldModel};
use crate::par::Execution;
use crate::plan::{NoPlanReason, Planner};
use crate::protocol::codec::{object, to_line};
use crate::trace::{Locator, TransitionRecord};

/// How a prediction differs from an observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    pub predicted: String,
    pub observed: String,
    /// `None` for an Unknown prediction.
    pub predicted_status: Option<GameStatus>,
    pub observed_status: GameStatus,
    pub diff: Vec<(usize, usize)>,
}

/// Placeholder rendering for an Unknown prediction: `?` in every cell.
pub fn unknown_ascii(shape: &Frame) -> String {
    vec!["?".repeat(shape.width()); shape.height()].join("\n")
}

/// Cells (x, y) whose characters differ, over the union of both shapes.
pub fn ascii_diff(predicted: &str, observed: &str) -> Vec<(usize, usize)> {
    let p: Vec<Vec<char>> = predicted.lines().map(|l| l.chars().collect()).collect();
    let o: Vec<Vec<char>> = observed.lines().map(|l| l.chars().collect()).collect();
    let mut out = Vec::new();
    for y in 0..p.len().max(o.len()) {
        let (pr, or) = (p.get(y), o.get(y));
        let width = pr.map_or(0, Vec::len).max(or.map_or(0, Vec::len));
        for x in 0..width {
            if pr.and_then(|r| r.get(x)) != or.and_then(|r| r.get(x)) {
                out.push((x, y));
            }
        }
    }
    out
}

/// Predicts `action` from `before` and compares with the settled `after`
/// and its status. This is the one comparison used by both the executor
/// and the world-model verifier.
pub fn check_transition<M: WorldModel + ?Sized>(
    model: &M,
    before: &Frame,
    action: ActionId,
    after: &Frame,
    status: GameStatus,
) -> Result<Option<Divergence>, ModelError> {
    let state = model.reconstruct(before)?;
    let observed = after.canonical_ascii();
    let (predicted, predicted_status) = match model.predict(&state, action)? {
        Prediction::Next { state, status } => (model.render(&state)?, Some(status)),
        Prediction::Unknown { .. } => (unknown_ascii(after), None),
    };
    let status_ok = predicted_status.is_some_and(|p| p.agrees_with(status));
    if status_ok && predicted == observed {
        return Ok(None);
    }
    let diff = ascii_diff(&predicted, &observed);
    Ok(Some(Divergence {
        predicted,
        observed,
        predicted_status,
        observed_status: status,
        diff,
    }))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyFailure {
    pub locator: Locator,
    pub action: ActionId,
    pub divergence: Divergence,
}

impl VerifyFailure {
    pub fn first_diff(&self) -> Option<(usize, usize)> {
        self.divergence.diff.first().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VerifierReport {
    pub checked: usize,
    /// Ordered by record locator.
    pub failures: Vec<VerifyFailure>,
    pub pass: bool,
}

impl VerifierReport {
    pub fn to_value(&self) -> Value {
        let failures: Vec<Value> = self
            .failures
            .iter()
            .map(|f| {
                let first = f
                    .first_diff()
                    .map_or(Value::Null, |(x, y)| Value::from(vec![x as u64, y as u64]));
                object([
                    ("level", f.locator.level.into()),
                    ("attempt", f.locator.attempt.into()),
                    ("step", f.locator.step.into()),
                    ("first_diff", first),
                ])
            })
            .collect();
        object([
            ("checked", self.checked.into()),
            ("pass", self.pass.into()),
            ("failures", failures.into()),
        ])
    }

    pub fn to_line(&self) -> String {
        to_line(&self.to_value())
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "world model: {} ({} transitions checked, {} failures)\n",
            if self.pass { "PASS" } else { "FAIL" },
            self.checked,
            self.failures.len()
        );
        for f in &self.failures {
            let status = match f.divergence.predicted_status {
                Some(s) => s.as_str(),
                None => "UNKNOWN",
            };
            out.push_str(&format!(
                "  level {} attempt {} step {} {}: predicted {} observed {}",
                f.locator.level,
                f.locator.attempt,
                f.locator.step,
                f.action,
                status,
                f.divergence.observed_status.as_str()
            ));
            if let Some((x, y)) = f.first_diff() {
                out.push_str(&format!(", first diff at ({x}, {y})"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn verify_world_model<M: WorldModel + Sync + ?Sized>(
    model: &M,
    records: &[TransitionRecord],
) -> Result<VerifierReport, ModelError> {
    verify_world_model_with(model, records, Execution::default())
}

/// Replays every non-RESET record through the model.
pub fn verify_world_model_with<M: WorldModel + Sync + ?Sized>(
    model: &M,
    records: &[TransitionRecord],
    execution: Execution,
) -> Result<VerifierReport, ModelError> {
    let replayed: Vec<&TransitionRecord> = records.iter().filter(|r| !r.action.is_reset()).collect();
    let outcomes = execution.map(&replayed, |r| check_transition(model, &r.before, r.action, &r.after, r.status));
    let mut failures = Vec::new();
    for (r, outcome) in replayed.iter().zip(outcomes) {
        if let Some(divergence) = outcome? {
            failures.push(VerifyFailure {
                locator: r.locator(),
                action: r.action,
                divergence,
            });
        }
    }
    failures.sort_by_key(|f| f.locator);
    Ok(VerifierReport {
        checked: replayed.len(),
        pass: failures.is_empty(),
        failures,
    })
}

/// One level's planner check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LevelCheck {
    Pass { plan_length: usize },
    NoPlanFound(NoPlanReason),
    /// A plan came back but its simulation does not end in completion.
    BadPlan(String),
    /// The level was never completed in the traces.
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannerCase {
    pub level: usize,
    pub initial: Frame,
    pub solved: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PlannerReport {
    pub levels: Vec<(usize, LevelCheck)>,
    pub pass: bool,
}

impl PlannerReport {
    pub fn failed_levels(&self) -> Vec<usize> {
        self.levels
            .iter()
            .filter(|(_, c)| !matches!(c, LevelCheck::Pass { .. } | LevelCheck::NotApplicable))
            .map(|(l, _)| *l)
            .collect()
    }

    pub fn to_line(&self) -> String {
        let levels: Vec<Value> = self
            .levels
            .iter()
            .map(|(level, check)| {
                let (result, detail): (&str, Value) = match check {
                    LevelCheck::Pass { plan_length } => ("pass", (*plan_length).into()),
                    LevelCheck::NoPlanFound(r) => ("no_plan", format!("{r:?}").into()),
                    LevelCheck::BadPlan(why) => ("bad_plan", why.as_str().into()),
                    LevelCheck::NotApplicable => ("not_applicable", Value::Null),
                };
                object([("level", (*level).into()), ("result", result.into()), ("detail", detail)])
            })
            .collect();
        to_line(&object([("pass", self.pass.into()), ("levels", levels.into())]))
    }

    pub fn summary(&self) -> String {
        let mut out = format!("planner: {}\n", if self.pass { "PASS" } else { "FAIL" });
        for (level, check) in &self.levels {
            let line = match check {
                LevelCheck::Pass { plan_length } => format!("plan of {plan_length} actions"),
                LevelCheck::NoPlanFound(r) => format!("no plan found ({r:?})"),
                LevelCheck::BadPlan(why) => format!("bad plan: {why}"),
                LevelCheck::NotApplicable => "not applicable".into(),
            };
            out.push_str(&format!("  level {level}: {line}\n"));
        }
        out
    }
}

/// Levels with a recorded completion, each with its initial frame (the
/// `before` of the first step of its first attempt).
pub fn planner_cases(records: &[TransitionRecord]) -> Vec<PlannerCase> {
    let mut cases: BTreeMap<usize, PlannerCase> = BTreeMap::new();
    for r in records {
        let case = cases.entry(r.level).or_insert_with(|| PlannerCase {
            level: r.level,
            initial: r.before.clone(),
            solved: false,
        });
        if r.attempt == 1 && r.step == 0 {
            case.initial = r.before.clone();
        }
        if r.status.is_win() {
            case.solved = true;
        }
    }
    cases.into_values().collect()
}

fn simulate<M: WorldModel + ?Sized>(model: &M, initial: &Frame, actions: &[ActionId]) -> Result<GameStatus, String> {
    let mut state = model.reconstruct(initial).map_err(|e| e.to_string())?;
    let mut status = GameStatus::Running;
    for (i, &a) in actions.iter().enumerate() {
        if status != GameStatus::Running {
            return Err(format!("plan continues after {} at step {i}", status.as_str()));
        }
        match model.predict(&state, a).map_err(|e| e.to_string())? {
            Prediction::Next { state: s, status: st } => {
                state = s;
                status = st;
            }
            Prediction::Unknown { reason } => return Err(format!("step {i}: {reason}")),
        }
    }
    Ok(status)
}

/// Runs the planner inside the model from every solved level's initial
/// state.
pub fn verify_planner<M: WorldModel + Sync>(model: &M, planner: &dyn Planner, cases: &[PlannerCase], actions: &[ActionId]) -> PlannerReport {
    let mut levels = Vec::new();
    for case in cases {
        if !case.solved {
            levels.push((case.level, LevelCheck::NotApplicable));
            continue;
        }
        let check = match model.reconstruct(&case.initial) {
            Err(e) => LevelCheck::NoPlanFound(NoPlanReason::Model(e)),
            Ok(start) => match planner.plan(model, &start, actions) {
                Err(e) => LevelCheck::NoPlanFound(e.reason),
                Ok(plan) => match simulate(model, &case.initial, plan.actions()) {
                    Ok(GameStatus::LevelCompleted) => LevelCheck::Pass { plan_length: plan.len() },
                    Ok(s) => LevelCheck::BadPlan(format!("simulation ends {}", s.as_str())),
                    Err(why) => LevelCheck::BadPlan(why),
                },
            },
        };
        levels.push((case.level, check));
    }
    let pass = levels
        .iter()
        .all(|(_, c)| matches!(c, LevelCheck::Pass { .. } | LevelCheck::NotApplicable));
    PlannerReport { levels, pass }
}
