//! Executable world models.
//!
//! A world model reconstructs a state from an observed frame, predicts the
//! settled next state for an action, renders states back to ASCII, and
//! reports its description length. [`RuleModel`] is the in-process
//! implementation; [`ExternalModel`] drives a subprocess over the `wm_*`
//! protocol ops.

pub mod external;
pub mod rules;
pub mod rules_file;

use thiserror::Error;

use crate::env::{ActionId, Frame, GameStatus};
use crate::palette;

pub use external::ExternalModel;
pub use rules::{ActionSelector, Pattern, PatternError, RewriteRule, RuleModel, RuleModelError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("could not spawn model process: {0}")]
    SpawnFailure(String),
    #[error("model call timed out")]
    CallTimeout,
    #[error("model protocol violation: {0}")]
    ProtocolViolation(String),
}

/// The model's view of one observation: the canonical grid plus
/// annotations derived from it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelState {
    grid: Frame,
    agent: Option<(usize, usize)>,
}

impl ModelState {
    /// Identity reconstruction; the agent is annotated when exactly one
    /// agent symbol is present.
    pub fn from_frame(frame: &Frame) -> Self {
        let mut found = frame
            .cells()
            .iter()
            .enumerate()
            .filter(|(_, &c)| palette::is_agent(c))
            .map(|(i, _)| (i % frame.width(), i / frame.width()));
        let first = found.next();
        let agent = if found.next().is_none() { first } else { None };
        ModelState {
            grid: frame.clone(),
            agent,
        }
    }

    pub fn grid(&self) -> &Frame {
        &self.grid
    }

    pub fn into_grid(self) -> Frame {
        self.grid
    }

    pub fn agent(&self) -> Option<(usize, usize)> {
        self.agent
    }

    pub fn level(&self) -> usize {
        self.grid.level()
    }
}

pub fn render(state: &ModelState) -> String {
    state.grid.canonical_ascii()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Prediction {
    Next { state: ModelState, status: GameStatus },
    Unknown { reason: String },
}

impl Prediction {
    pub fn next_state(&self) -> Option<&ModelState> {
        match self {
            Prediction::Next { state, .. } => Some(state),
            Prediction::Unknown { .. } => None,
        }
    }
}

pub trait WorldModel {
    fn reconstruct(&self, frame: &Frame) -> Result<ModelState, ModelError>;
    fn predict(&self, state: &ModelState, action: ActionId) -> Result<Prediction, ModelError>;
    fn render(&self, state: &ModelState) -> Result<String, ModelError>;
    fn description_length(&self) -> Result<u64, ModelError>;

    /// Status the model assigns to a bare state. Models that cannot judge
    /// one report RUNNING.
    fn status(&self, _state: &ModelState) -> Result<GameStatus, ModelError> {
        Ok(GameStatus::Running)
    }

    /// The in-process rule model behind this handle, if there is one.
    fn as_rules(&self) -> Option<&RuleModel> {
        None
    }
}

impl<M: WorldModel + ?Sized> WorldModel for &M {
    fn reconstruct(&self, frame: &Frame) -> Result<ModelState, ModelError> {
        (**self).reconstruct(frame)
    }
    fn predict(&self, state: &ModelState, action: ActionId) -> Result<Prediction, ModelError> {
        (**self).predict(state, action)
    }
    fn render(&self, state: &ModelState) -> Result<String, ModelError> {
        (**self).render(state)
    }
    fn description_length(&self) -> Result<u64, ModelError> {
        (**self).description_length()
    }
    fn status(&self, state: &ModelState) -> Result<GameStatus, ModelError> {
        (**self).status(state)
    }
    fn as_rules(&self) -> Option<&RuleModel> {
        (**self).as_rules()
    }
}
