//! Lockstep plan execution: simulate in the model, act in the environment,
//! record, compare.

use std::path::PathBuf;

use serde_json::Value;
use thiserror::Error;

use crate::env::{ActionId, Environment, EnvironmentError, Frame, GameStatus, Observation};
use crate::model::{ModelError, WorldModel};
use crate::plan::Plan;
use crate::protocol::codec::{
    as_u64, check_keys, decode_action, decode_status, encode_action, encode_status, object, parse_line, to_line,
    ProtocolError,
};
use crate::trace::{Locator, RunDirectory, TraceError, TransitionRecord};
use crate::verify::{check_transition, Divergence};

#[derive(Debug, Error)]
pub enum ExecError {
    #[error(transparent)]
    Environment(#[from] EnvironmentError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Where the agent is in the playthrough, as seen from observations alone.
#[derive(Debug, Clone)]
pub struct Tracker {
    game_id: String,
    level: usize,
    attempt: u32,
    step: u32,
    frame: Frame,
    finished: bool,
}

impl Tracker {
    pub fn new(game_id: &str, initial: Frame) -> Self {
        Tracker {
            game_id: game_id.to_string(),
            level: initial.level(),
            attempt: 1,
            step: 0,
            frame: initial,
            finished: false,
        }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn attempt(&self) -> u32 {
        self.attempt
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Builds the record for `action` and advances to the new observation.
    pub fn observe(&mut self, action: ActionId, obs: &Observation) -> TransitionRecord {
        let rec = TransitionRecord {
            game_id: self.game_id.clone(),
            level: self.level,
            attempt: self.attempt,
            step: self.step,
            before: self.frame.clone(),
            action,
            after: obs.step.settled.clone(),
            status: obs.step.status,
        };
        if action.is_reset() {
            self.attempt += 1;
            self.step = 0;
        } else if obs.step.status == GameStatus::LevelCompleted {
            self.level += 1;
            self.attempt = 1;
            self.step = 0;
        } else {
            self.finished = obs.step.status == GameStatus::GameCompleted;
            self.step += 1;
        }
        self.frame = obs.step.frame.clone();
        rec
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MismatchArtifact {
    /// 0-based index of the diverging action within the plan.
    pub plan_step: usize,
    pub action: ActionId,
    pub locator: Locator,
    pub divergence: Divergence,
}

impl MismatchArtifact {
    /// Header object line, predicted block, `---`, observed block.
    pub fn to_text(&self) -> String {
        let d = &self.divergence;
        let diff: Vec<Value> = d.diff.iter().map(|&(x, y)| Value::from(vec![x as u64, y as u64])).collect();
        let header = object([
            ("plan_step", self.plan_step.into()),
            ("action", encode_action(self.action)),
            ("level", self.locator.level.into()),
            ("attempt", self.locator.attempt.into()),
            ("step", self.locator.step.into()),
            ("predicted_status", d.predicted_status.map_or(Value::Null, encode_status)),
            ("observed_status", encode_status(d.observed_status)),
            ("diff", diff.into()),
        ]);
        format!("{}{}\n---\n{}\n", to_line(&header), d.predicted, d.observed)
    }

    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        let (header, rest) = text.split_once('\n').ok_or_else(|| ProtocolError::Malformed("no header".into()))?;
        let m = parse_line(header)?;
        check_keys(
            &m,
            &["plan_step", "action", "level", "attempt", "step", "predicted_status", "observed_status", "diff"],
            &[],
        )?;
        let (predicted, observed) = rest
            .trim_end_matches('\n')
            .split_once("\n---\n")
            .ok_or_else(|| ProtocolError::Malformed("no separator".into()))?;
        let cells = m["diff"]
            .as_array()
            .ok_or_else(|| ProtocolError::Schema("diff must be a list".into()))?;
        let mut diff = Vec::with_capacity(cells.len());
        for c in cells {
            let pair = c.as_array().filter(|p| p.len() == 2).ok_or_else(|| ProtocolError::Schema("bad cell".into()))?;
            diff.push((as_u64(&pair[0], "x")? as usize, as_u64(&pair[1], "y")? as usize));
        }
        let predicted_status = match &m["predicted_status"] {
            Value::Null => None,
            v => Some(decode_status(v)?),
        };
        let small = |k: &str| as_u64(&m[k], k).map(|v| v as u32);
        Ok(MismatchArtifact {
            plan_step: as_u64(&m["plan_step"], "plan_step")? as usize,
            action: decode_action(&m["action"])?,
            locator: Locator {
                level: as_u64(&m["level"], "level")? as usize,
                attempt: small("attempt")?,
                step: small("step")?,
            },
            divergence: Divergence {
                predicted: predicted.to_string(),
                observed: observed.to_string(),
                predicted_status,
                observed_status: decode_status(&m["observed_status"])?,
                diff,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecOutcome {
    /// LEVEL_COMPLETED or GAME_COMPLETED observed.
    Completed,
    GameOver,
    Mismatch,
    PlanExhausted,
}

#[derive(Debug, Clone)]
pub struct ExecutionReport {
    pub outcome: ExecOutcome,
    pub steps_executed: usize,
    pub artifact: Option<(MismatchArtifact, PathBuf)>,
    /// Observed status after the last executed action.
    pub final_status: GameStatus,
    /// Records appended during this execution, in order.
    pub records: Vec<TransitionRecord>,
}

/// Executes `plan` against `env`, checking every step against `model`.
///
/// Every action is recorded before the next is issued. Execution stops at
/// the first divergence (status on any step, frame on every step; RESET is
/// not predicted) or on an observed completion or GAME_OVER.
pub fn execute_plan<M, E>(
    plan: &Plan,
    model: &M,
    env: &mut E,
    run: &mut RunDirectory,
    tracker: &mut Tracker,
) -> Result<ExecutionReport, ExecError>
where
    M: WorldModel + ?Sized,
    E: Environment + ?Sized,
{
    let mut records = Vec::new();
    let mut final_status = GameStatus::Running;
    for (i, &action) in plan.actions().iter().enumerate() {
        let obs = env.step(action)?;
        let rec = tracker.observe(action, &obs);
        run.append(&rec)?;
        final_status = rec.status;
        let divergence = if action.is_reset() {
            None
        } else {
            check_transition(model, &rec.before, action, &rec.after, rec.status)?
        };
        let locator = rec.locator();
        records.push(rec);
        if let Some(divergence) = divergence {
            let artifact = MismatchArtifact {
                plan_step: i,
                action,
                locator,
                divergence,
            };
            let path = run.write_artifact(&artifact.to_text())?;
            return Ok(ExecutionReport {
                outcome: ExecOutcome::Mismatch,
                steps_executed: i + 1,
                artifact: Some((artifact, path)),
                final_status,
                records,
            });
        }
        let outcome = match final_status {
            s if s.is_win() => Some(ExecOutcome::Completed),
            GameStatus::GameOver => Some(ExecOutcome::GameOver),
            _ => None,
        };
        if let Some(outcome) = outcome {
            return Ok(ExecutionReport {
                outcome,
                steps_executed: i + 1,
                artifact: None,
                final_status,
                records,
            });
        }
    }
    Ok(ExecutionReport {
        outcome: ExecOutcome::PlanExhausted,
        steps_executed: plan.len(),
        artifact: None,
        final_status,
        records,
    })
}
