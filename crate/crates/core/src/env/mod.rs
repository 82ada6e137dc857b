//! Deterministic level-based grid environments.
//!
//! A session walks through a game's levels in order. LEVEL_COMPLETED
//! auto-advances to the next level, GAME_OVER freezes the attempt until a
//! RESET, and every action (RESET included) counts against the session's
//! totals.

mod frame;
pub mod games;
pub mod spec_file;

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use thiserror::Error;

pub use frame::{ActionId, Frame, FrameError, GameStatus, MAX_SIDE};
pub use games::{apply_action, grid_status, GameSpec, GameSpecError, LevelSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("unknown game {0:?}")]
    UnknownGame(String),
    #[error("session already completed the game")]
    SessionFinished,
    #[error("action {0} is not legal in this game")]
    IllegalAction(ActionId),
}

impl EnvError {
    pub fn code(&self) -> &'static str {
        match self {
            EnvError::UnknownGame(_) => "UnknownGame",
            EnvError::SessionFinished => "SessionFinished",
            EnvError::IllegalAction(_) => "IllegalAction",
        }
    }
}

/// Registered games, keyed by id.
#[derive(Debug, Clone, Default)]
pub struct GameRegistry {
    games: BTreeMap<String, Arc<GameSpec>>,
}

impl GameRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The three built-in games.
    pub fn builtin() -> Self {
        builtin_registry().clone()
    }

    pub fn insert(&mut self, spec: GameSpec) {
        self.games.insert(spec.id().to_string(), Arc::new(spec));
    }

    pub fn get(&self, game_id: &str) -> Result<&Arc<GameSpec>, EnvError> {
        self.games
            .get(game_id)
            .ok_or_else(|| EnvError::UnknownGame(game_id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.games.keys().map(String::as_str)
    }

    pub fn new_session(&self, game_id: &str) -> Result<(EnvSession, Frame), EnvError> {
        let spec = self.get(game_id)?.clone();
        Ok(EnvSession::new(spec))
    }
}

fn builtin_registry() -> &'static GameRegistry {
    static REGISTRY: OnceLock<GameRegistry> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg = GameRegistry::empty();
        reg.insert(games::corridor());
        reg.insert(games::keydoor());
        reg.insert(games::pushblock());
        reg
    })
}

/// Action accounting reported alongside every observation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Counters {
    pub total_actions: u64,
    pub level_actions: Vec<u64>,
}

/// A step result together with the session's counters after the step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub step: StepResult,
    pub counters: Counters,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvironmentError {
    /// The environment refused the request; the session is still usable.
    #[error("{code}: {text}")]
    Rejected { code: String, text: String },
    /// The connection to the environment failed; the session is lost.
    #[error("transport failure: {0}")]
    Transport(String),
}

impl From<EnvError> for EnvironmentError {
    fn from(e: EnvError) -> Self {
        EnvironmentError::Rejected {
            code: e.code().to_string(),
            text: e.to_string(),
        }
    }
}

/// Anything an agent can play: an in-process session or a remote one.
pub trait Environment {
    fn game_id(&self) -> &str;
    fn step(&mut self, action: ActionId) -> Result<Observation, EnvironmentError>;
    fn legal_actions(&mut self) -> Result<Vec<ActionId>, EnvironmentError>;
}

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepResult {
    /// The observation the session is now in. After a non-final
    /// LEVEL_COMPLETED this is the next level's initial frame.
    pub frame: Frame,
    /// The settled frame of the level the action was taken in. Equal to
    /// `frame` unless the step advanced to a new level.
    pub settled: Frame,
    pub status: GameStatus,
}

impl StepResult {
    pub fn advanced(&self) -> bool {
        self.frame.level() != self.settled.level()
    }
}

/// Per-playthrough environment state.
#[derive(Debug, Clone)]
pub struct EnvSession {
    spec: Arc<GameSpec>,
    level: usize,
    attempt: u32,
    frame: Frame,
    level_actions: Vec<u64>,
    completed: Vec<bool>,
    finished: bool,
}

impl EnvSession {
    pub fn new(spec: Arc<GameSpec>) -> (Self, Frame) {
        let frame = spec.initial_frame(0).clone();
        let n = spec.level_count();
        let session = EnvSession {
            spec,
            level: 0,
            attempt: 1,
            frame: frame.clone(),
            level_actions: vec![0; n],
            completed: vec![false; n],
            finished: false,
        };
        (session, frame)
    }

    pub fn spec(&self) -> &GameSpec {
        &self.spec
    }

    pub fn game_id(&self) -> &str {
        self.spec.id()
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

    pub fn total_actions(&self) -> u64 {
        self.level_actions.iter().sum()
    }

    pub fn level_actions(&self) -> &[u64] {
        &self.level_actions
    }

    pub fn completed(&self) -> &[bool] {
        &self.completed
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// The game's legal subset plus RESET; empty once the game is complete.
    pub fn legal_actions(&self) -> Vec<ActionId> {
        if self.finished {
            return Vec::new();
        }
        let mut actions = self.spec.legal().to_vec();
        actions.push(ActionId::Reset);
        actions
    }

    pub fn step(&mut self, action: ActionId) -> Result<StepResult, EnvError> {
        if self.finished {
            return Err(EnvError::SessionFinished);
        }
        if !self.spec.is_legal(action) || !action.fits(&self.frame) {
            return Err(EnvError::IllegalAction(action));
        }
        self.level_actions[self.level] += 1;
        if action.is_reset() {
            self.attempt += 1;
            self.frame = self.spec.initial_frame(self.level).clone();
            return Ok(StepResult {
                frame: self.frame.clone(),
                settled: self.frame.clone(),
                status: GameStatus::Running,
            });
        }
        let (settled, status) = apply_action(&self.frame, action);
        if status == GameStatus::LevelCompleted {
            self.completed[self.level] = true;
            if self.level + 1 == self.spec.level_count() {
                self.finished = true;
                self.frame = settled.clone();
                return Ok(StepResult {
                    frame: settled.clone(),
                    settled,
                    status: GameStatus::GameCompleted,
                });
            }
            self.level += 1;
            self.attempt = 1;
            self.frame = self.spec.initial_frame(self.level).clone();
            return Ok(StepResult {
                frame: self.frame.clone(),
                settled,
                status,
            });
        }
        self.frame = settled.clone();
        Ok(StepResult {
            frame: settled.clone(),
            settled,
            status,
        })
    }
}

impl EnvSession {
    pub fn counters(&self) -> Counters {
        Counters {
            total_actions: self.total_actions(),
            level_actions: self.level_actions.clone(),
        }
    }
}

impl Environment for EnvSession {
    fn game_id(&self) -> &str {
        self.spec.id()
    }

    fn step(&mut self, action: ActionId) -> Result<Observation, EnvironmentError> {
        let step = EnvSession::step(self, action)?;
        Ok(Observation {
            step,
            counters: self.counters(),
        })
    }

    fn legal_actions(&mut self) -> Result<Vec<ActionId>, EnvironmentError> {
        Ok(EnvSession::legal_actions(self))
    }
}
