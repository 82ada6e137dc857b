//! Scripted modelers: the agents that propose world models.
//!
//! The controller talks to a modeler through three calls: feed it new
//! records, ask it to simplify its model, and ask it for one exploratory
//! action.

pub mod explore;
pub mod induce;
pub mod oracle;

use thiserror::Error;

use crate::env::{ActionId, EnvError, Frame, GameRegistry};
use crate::model::RuleModel;
use crate::trace::TransitionRecord;

pub use explore::{CountExplorer, RandomExplorer};
pub use induce::{InducedRuleSet, InductionError};
pub use oracle::{oracle_model, oracle_update};

/// Environment variable seeding every random choice.
pub const SEED_VAR: &str = "WORLDLOOP_SEED";

/// `WORLDLOOP_SEED` as a number, 0 when unset or unparsable.
pub fn seed_from_env() -> u64 {
    std::env::var(SEED_VAR).ok().and_then(|s| s.trim().parse().ok()).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelerError {
    #[error(transparent)]
    Induction(#[from] InductionError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

pub trait Modeler {
    fn name(&self) -> &'static str;

    /// Incorporates newly recorded transitions.
    fn update(&mut self, records: &[TransitionRecord]) -> Result<(), ModelerError>;

    /// Simplifies the model against everything seen so far. Returns whether
    /// the model changed.
    fn refactor(&mut self) -> bool;

    /// One action to try from `state`.
    fn explore(&mut self, state: &Frame, legal: &[ActionId]) -> ActionId;

    fn model(&self) -> &RuleModel;
}

/// Frames searched when walking to the exploration frontier.
const FRONTIER_NODES: usize = 5000;

/// Knows the true dynamics from the start.
pub struct OracleModeler {
    model: RuleModel,
    explorer: CountExplorer,
}

impl OracleModeler {
    pub fn new(registry: &GameRegistry, game_id: &str) -> Result<Self, ModelerError> {
        Ok(OracleModeler {
            model: oracle_update(registry, game_id)?,
            explorer: CountExplorer::default(),
        })
    }
}

impl Modeler for OracleModeler {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn update(&mut self, records: &[TransitionRecord]) -> Result<(), ModelerError> {
        self.explorer.observe(records);
        Ok(())
    }

    fn refactor(&mut self) -> bool {
        false
    }

    fn explore(&mut self, state: &Frame, legal: &[ActionId]) -> ActionId {
        self.explorer.choose_guided(&self.model, state, legal, FRONTIER_NODES)
    }

    fn model(&self) -> &RuleModel {
        &self.model
    }
}

/// Learns local rewrite rules from its observations, merging them after
/// every update.
#[derive(Default)]
pub struct RuleLearner {
    set: InducedRuleSet,
    explorer: CountExplorer,
}

impl RuleLearner {
    pub fn new() -> Self {
        RuleLearner::default()
    }

    pub fn rule_set(&self) -> &InducedRuleSet {
        &self.set
    }
}

impl Modeler for RuleLearner {
    fn name(&self) -> &'static str {
        "rules"
    }

    fn update(&mut self, records: &[TransitionRecord]) -> Result<(), ModelerError> {
        self.explorer.observe(records);
        self.set = self.set.induce_update(records)?.refactor();
        Ok(())
    }

    fn refactor(&mut self) -> bool {
        let next = self.set.refactor();
        let changed = next.model() != self.set.model();
        self.set = next;
        changed
    }

    fn explore(&mut self, state: &Frame, legal: &[ActionId]) -> ActionId {
        self.explorer.choose_guided(self.set.model(), state, legal, FRONTIER_NODES)
    }

    fn model(&self) -> &RuleModel {
        self.set.model()
    }
}

/// Never learns: keeps the identity model and explores at random.
pub struct RandomModeler {
    model: RuleModel,
    explorer: RandomExplorer,
}

impl RandomModeler {
    pub fn new(seed: u64) -> Self {
        RandomModeler {
            model: RuleModel::identity(),
            explorer: RandomExplorer::new(seed),
        }
    }
}

impl Modeler for RandomModeler {
    fn name(&self) -> &'static str {
        "random"
    }

    fn update(&mut self, _records: &[TransitionRecord]) -> Result<(), ModelerError> {
        Ok(())
    }

    fn refactor(&mut self) -> bool {
        false
    }

    fn explore(&mut self, _state: &Frame, legal: &[ActionId]) -> ActionId {
        self.explorer.choose(legal)
    }

    fn model(&self) -> &RuleModel {
        &self.model
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelerKind {
    Oracle,
    Rules,
    Random,
}

impl ModelerKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "oracle" => Some(ModelerKind::Oracle),
            "rules" => Some(ModelerKind::Rules),
            "random" => Some(ModelerKind::Random),
            _ => None,
        }
    }

    pub fn build(self, registry: &GameRegistry, game_id: &str, seed: u64) -> Result<Box<dyn Modeler>, ModelerError> {
        Ok(match self {
            ModelerKind::Oracle => Box::new(OracleModeler::new(registry, game_id)?),
            ModelerKind::Rules => Box::new(RuleLearner::new()),
            ModelerKind::Random => Box::new(RandomModeler::new(seed)),
        })
    }
}
