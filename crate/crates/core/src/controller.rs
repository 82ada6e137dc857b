//! The agent loop.
//!
//! ```text
//! INIT -> MODEL_UPDATE -> PLAN -> EXECUTE -> MODEL_UPDATE ...
//!              |  ^                  |  \-> LEVEL_DONE -> (REFACTOR) -> MODEL_UPDATE
//!              v  |                  \----> REFACTOR -> RESET_PENDING -> MODEL_UPDATE
//!           probe (one explored action while verification fails)
//! ```
//!
//! Every action goes through [`execute_plan`], so the budget check, trace
//! append and model comparison happen in one place. A plan is only
//! executed while the model reproduces every recorded transition.

use std::collections::{HashSet, VecDeque};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

use crate::env::{ActionId, EnvError, Environment, Frame, GameRegistry, GameSpec, GameStatus};
use crate::exec::{execute_plan, ExecError, ExecutionReport, Tracker};
use crate::model::external::DEFAULT_CALL_TIMEOUT;
use crate::model::rules_file::save_rules;
use crate::model::{ExternalModel, RuleModel, WorldModel};
use crate::modelers::{Modeler, ModelerError, ModelerKind};
use crate::par::Execution;
use crate::plan::{AStarPlanner, BfsPlanner, NoPlanReason, Plan, Planner, SearchBudget};
use crate::protocol::codec::{object, to_line};
use crate::scoring::{LevelReport, RunReport, ScoringError, Termination};
use crate::trace::{Manifest, RunDirectory, TraceError, TransitionRecord};
use crate::verify::verify_world_model_with;

/// File the current model is saved to inside a run directory.
pub const MODEL_FILE: &str = "model.rules";
/// File the run report line is written to inside a run directory.
pub const REPORT_FILE: &str = "report";

/// In-loop search budget. Smaller than the planner verifier's: the loop
/// replans after every observation and a wrong model can have a huge
/// state space.
pub const LOOP_SEARCH: SearchBudget = SearchBudget {
    max_depth: 64,
    max_nodes: 20_000,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlannerKind {
    #[default]
    Bfs,
    AStar,
}

impl PlannerKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bfs" => Some(PlannerKind::Bfs),
            "astar" => Some(PlannerKind::AStar),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::Bfs => "bfs",
            PlannerKind::AStar => "astar",
        }
    }

    pub fn build(self, budget: SearchBudget, execution: Execution) -> Box<dyn Planner> {
        match self {
            PlannerKind::Bfs => Box::new(BfsPlanner { budget, execution }),
            PlannerKind::AStar => Box::new(AStarPlanner { budget }),
        }
    }
}

/// Where the controller's model is evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ModelBackend {
    #[default]
    InProcess,
    /// A child process started as `command --rules <path>` each time the
    /// model changes, answering `wm_*` ops on stdio.
    External(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("action budget must be positive")]
    ZeroBudget,
    #[error("stall window must be positive")]
    ZeroStallWindow,
    #[error("external model command is empty")]
    EmptyCommand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    /// Environment actions allowed per game, RESETs included.
    pub action_budget: u64,
    /// Actions without a new frame or a completed level before a refactor.
    pub stall_window: usize,
    /// Refactor after this many completed levels; 0 never.
    pub refactor_every: usize,
    pub search: SearchBudget,
    pub planner: PlannerKind,
    pub backend: ModelBackend,
    pub model_timeout: Duration,
    pub execution: Execution,
    pub run_index: u32,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            action_budget: 4000,
            stall_window: 50,
            refactor_every: 1,
            search: LOOP_SEARCH,
            planner: PlannerKind::Bfs,
            backend: ModelBackend::InProcess,
            model_timeout: DEFAULT_CALL_TIMEOUT,
            execution: Execution::default(),
            run_index: 1,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.action_budget == 0 {
            return Err(ConfigError::ZeroBudget);
        }
        if self.stall_window == 0 {
            return Err(ConfigError::ZeroStallWindow);
        }
        if let ModelBackend::External(cmd) = &self.backend {
            if cmd.is_empty() {
                return Err(ConfigError::EmptyCommand);
            }
        }
        Ok(())
    }

    /// Canonical one-line JSON form, digested into the run manifest.
    pub fn to_line(&self) -> String {
        let backend = match &self.backend {
            ModelBackend::InProcess => Value::from("inproc"),
            ModelBackend::External(cmd) => Value::from(cmd.clone()),
        };
        let line = to_line(&object([
            ("action_budget", Value::from(self.action_budget)),
            ("stall_window", Value::from(self.stall_window)),
            ("refactor_every", Value::from(self.refactor_every)),
            ("max_depth", Value::from(self.search.max_depth)),
            ("max_nodes", Value::from(self.search.max_nodes)),
            ("planner", Value::from(self.planner.name())),
            ("backend", backend),
            ("model_timeout_ms", Value::from(self.model_timeout.as_millis() as u64)),
            ("run_index", Value::from(self.run_index)),
        ]));
        line.trim_end().to_string()
    }
}

/// Controller phases. Probes run inside `ModelUpdate`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControllerState {
    Init,
    ModelUpdate,
    Plan,
    Execute(Plan),
    Refactor { then_reset: bool },
    ResetPending,
    LevelDone,
    Done(DoneReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init,
    ModelUpdate,
    Probe,
    Plan,
    Execute,
    Refactor,
    ResetPending,
    LevelDone,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DoneReason {
    Completed,
    BudgetExhausted,
    EnvironmentError(String),
}

impl DoneReason {
    /// Process exit code for a finished run.
    pub fn exit_code(&self) -> i32 {
        match self {
            DoneReason::Completed => 0,
            DoneReason::BudgetExhausted => 2,
            DoneReason::EnvironmentError(_) => 3,
        }
    }
}

/// One entered phase, with whether the model verified at that moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseRecord {
    pub phase: Phase,
    pub verified: bool,
    pub actions: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub done: DoneReason,
    pub phases: Vec<PhaseRecord>,
    pub model_path: PathBuf,
    pub report_path: PathBuf,
}

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Modeler(#[from] ModelerError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error("run directory already holds records")]
    NotFresh,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Whether the last `window` entries of a level's frame history made no
/// progress: no completed level and no frame unseen earlier in the
/// history. `history[0]` is the frame the level started from.
pub fn detect_stall(history: &[(Frame, GameStatus)], window: usize) -> bool {
    if window == 0 || history.len() < window + 1 {
        return false;
    }
    let start = history.len() - window;
    let mut seen: HashSet<&Frame> = history[..start].iter().map(|(f, _)| f).collect();
    for (frame, status) in &history[start..] {
        if status.is_win() || seen.insert(frame) {
            return false;
        }
    }
    true
}

/// Incremental form of [`detect_stall`] over recorded transitions.
#[derive(Debug, Clone)]
pub struct StallMonitor {
    window: usize,
    level: Option<usize>,
    seen: HashSet<Frame>,
    recent: VecDeque<bool>,
}

impl StallMonitor {
    pub fn new(window: usize) -> Self {
        StallMonitor {
            window,
            level: None,
            seen: HashSet::new(),
            recent: VecDeque::new(),
        }
    }

    pub fn push(&mut self, rec: &TransitionRecord) {
        if self.level != Some(rec.level) {
            self.level = Some(rec.level);
            self.seen.clear();
            self.recent.clear();
            self.seen.insert(rec.before.clone());
        }
        let progress = rec.status.is_win() || self.seen.insert(rec.after.clone());
        self.recent.push_back(progress);
        if self.recent.len() > self.window {
            self.recent.pop_front();
        }
    }

    pub fn stalled(&self) -> bool {
        self.window > 0 && self.recent.len() >= self.window && !self.recent.iter().any(|&p| p)
    }

    /// Starts a fresh window; frames seen so far stay seen.
    pub fn clear(&mut self) {
        self.recent.clear();
    }
}

enum ActiveModel {
    Local(RuleModel),
    External { rules: RuleModel, process: ExternalModel },
}

impl ActiveModel {
    fn rules(&self) -> &RuleModel {
        match self {
            ActiveModel::Local(m) => m,
            ActiveModel::External { rules, .. } => rules,
        }
    }

    fn world(&self) -> &(dyn WorldModel + Sync) {
        match self {
            ActiveModel::Local(m) => m,
            ActiveModel::External { process, .. } => process,
        }
    }
}

struct Loop<'a, E: Environment + ?Sized> {
    spec: &'a GameSpec,
    env: &'a mut E,
    modeler: &'a mut dyn Modeler,
    config: &'a ControllerConfig,
    run: &'a mut RunDirectory,
    tracker: Tracker,
    planner: Box<dyn Planner>,
    legal: Vec<ActionId>,
    records: Vec<TransitionRecord>,
    /// Records not yet handed to the modeler start here.
    fed: usize,
    model: ActiveModel,
    adopted: bool,
    /// Set when search ran out of nodes; cleared when the model or the
    /// level changes.
    search_blocked: Option<usize>,
    /// Records already checked against the current model.
    verified: usize,
    verify_failed: bool,
    stall: StallMonitor,
    levels_since_refactor: usize,
    mismatches: usize,
    notes: Vec<String>,
    phases: Vec<PhaseRecord>,
}

/// Plays one game to completion, budget exhaustion or environment failure.
///
/// `initial` is the frame the session opened with; `spec` is used only to
/// score the finished run. The run directory must hold no records.
pub fn run_game<E: Environment + ?Sized>(
    spec: &GameSpec,
    env: &mut E,
    initial: Frame,
    modeler: &mut dyn Modeler,
    config: &ControllerConfig,
    run: &mut RunDirectory,
) -> Result<RunOutcome, ControllerError> {
    config.validate()?;
    if !run.load(None)?.is_empty() {
        return Err(ControllerError::NotFresh);
    }
    let mut lp = Loop {
        spec,
        tracker: Tracker::new(env.game_id(), initial),
        env,
        planner: config.planner.build(config.search, config.execution),
        modeler,
        config,
        run,
        legal: Vec::new(),
        records: Vec::new(),
        fed: 0,
        model: ActiveModel::Local(RuleModel::identity()),
        adopted: false,
        search_blocked: None,
        verified: 0,
        verify_failed: false,
        stall: StallMonitor::new(config.stall_window),
        levels_since_refactor: 0,
        mismatches: 0,
        notes: Vec::new(),
        phases: Vec::new(),
    };
    let mut state = ControllerState::Init;
    let done = loop {
        state = match state {
            ControllerState::Done(reason) => break reason,
            s => lp.step_state(s),
        };
    };
    lp.enter(Phase::Done);
    lp.finish(done)
}

impl<E: Environment + ?Sized> Loop<'_, E> {
    fn enter(&mut self, phase: Phase) {
        self.phases.push(PhaseRecord {
            phase,
            verified: !self.verify_failed && self.verified == self.records.len(),
            actions: self.records.len() as u64,
        });
    }

    fn note(&mut self, note: String) {
        if !self.notes.contains(&note) {
            self.notes.push(note);
        }
    }

    fn step_state(&mut self, state: ControllerState) -> ControllerState {
        let result = match state {
            ControllerState::Init => self.init(),
            ControllerState::ModelUpdate => self.model_update(),
            ControllerState::Plan => self.plan(),
            ControllerState::Execute(plan) => self.execute(plan),
            ControllerState::Refactor { then_reset } => self.refactor(then_reset),
            ControllerState::ResetPending => self.reset(),
            ControllerState::LevelDone => Ok(self.level_done()),
            ControllerState::Done(r) => Ok(ControllerState::Done(r)),
        };
        result.unwrap_or_else(ControllerState::Done)
    }

    fn init(&mut self) -> Result<ControllerState, DoneReason> {
        self.enter(Phase::Init);
        let legal = self.env.legal_actions().map_err(|e| DoneReason::EnvironmentError(e.to_string()))?;
        self.legal = legal.into_iter().filter(|a| !a.is_reset()).collect();
        self.sync_model()?;
        Ok(ControllerState::ModelUpdate)
    }

    fn feed(&mut self) {
        if self.fed < self.records.len() {
            if let Err(e) = self.modeler.update(&self.records[self.fed..]) {
                self.note(format!("model update rejected: {e}"));
            }
            self.fed = self.records.len();
        }
    }

    /// Adopts the modeler's current model if it changed, saving it.
    fn sync_model(&mut self) -> Result<(), DoneReason> {
        if self.adopted && self.modeler.model() == self.model.rules() {
            return Ok(());
        }
        let rules = self.modeler.model().clone();
        let path = self.run.root().join(MODEL_FILE);
        save_rules(&rules, &path).map_err(|e| DoneReason::EnvironmentError(format!("saving model: {e}")))?;
        self.model = match &self.config.backend {
            ModelBackend::InProcess => ActiveModel::Local(rules),
            ModelBackend::External(cmd) => {
                let mut command = cmd.clone();
                command.push("--rules".into());
                command.push(path.to_string_lossy().into_owned());
                let process = ExternalModel::spawn(&command, self.run.root(), self.config.model_timeout)
                    .map_err(|e| DoneReason::EnvironmentError(format!("model: {e}")))?;
                ActiveModel::External { rules, process }
            }
        };
        self.adopted = true;
        self.search_blocked = None;
        self.verified = 0;
        self.verify_failed = false;
        Ok(())
    }

    /// Checks records not yet verified against the current model.
    fn verify(&mut self) -> Result<bool, DoneReason> {
        if self.verified < self.records.len() {
            let report = verify_world_model_with(self.model.world(), &self.records[self.verified..], self.config.execution)
                .map_err(|e| DoneReason::EnvironmentError(format!("model: {e}")))?;
            self.verify_failed |= !report.pass;
            self.verified = self.records.len();
        }
        Ok(!self.verify_failed)
    }

    fn model_update(&mut self) -> Result<ControllerState, DoneReason> {
        self.enter(Phase::ModelUpdate);
        self.feed();
        self.sync_model()?;
        if self.verify()? {
            return Ok(ControllerState::Plan);
        }
        self.enter(Phase::Probe);
        let action = self.modeler.explore(self.tracker.frame(), &self.legal);
        let report = self.run_plan(Plan::single(action))?;
        Ok(self.after(report))
    }

    fn plan(&mut self) -> Result<ControllerState, DoneReason> {
        self.enter(Phase::Plan);
        let world = self.model.world();
        let state = world
            .reconstruct(self.tracker.frame())
            .map_err(|e| DoneReason::EnvironmentError(format!("model: {e}")))?;
        let level = self.tracker.level();
        let found = if self.search_blocked == Some(level) {
            None
        } else {
            match self.planner.plan(world, &state, &self.legal) {
                Ok(plan) => Some(plan),
                Err(e) => {
                    if e.reason == NoPlanReason::BudgetExhausted {
                        self.search_blocked = Some(level);
                    }
                    None
                }
            }
        };
        let plan = found.unwrap_or_else(|| Plan::single(self.modeler.explore(self.tracker.frame(), &self.legal)));
        Ok(ControllerState::Execute(plan))
    }

    fn execute(&mut self, plan: Plan) -> Result<ControllerState, DoneReason> {
        self.enter(Phase::Execute);
        debug_assert!(self.phases.last().is_some_and(|p| p.verified));
        let report = self.run_plan(plan)?;
        Ok(self.after(report))
    }

    fn refactor(&mut self, then_reset: bool) -> Result<ControllerState, DoneReason> {
        self.enter(Phase::Refactor);
        self.feed();
        self.modeler.refactor();
        self.sync_model()?;
        self.levels_since_refactor = 0;
        Ok(if then_reset {
            ControllerState::ResetPending
        } else {
            ControllerState::ModelUpdate
        })
    }

    fn reset(&mut self) -> Result<ControllerState, DoneReason> {
        self.enter(Phase::ResetPending);
        let report = self.run_plan(Plan::single(ActionId::Reset))?;
        Ok(self.after(report))
    }

    fn level_done(&mut self) -> ControllerState {
        self.enter(Phase::LevelDone);
        self.levels_since_refactor += 1;
        if self.config.refactor_every > 0 && self.levels_since_refactor >= self.config.refactor_every {
            ControllerState::Refactor { then_reset: false }
        } else {
            ControllerState::ModelUpdate
        }
    }

    /// Executes at most the remaining budget of `plan`.
    fn run_plan(&mut self, plan: Plan) -> Result<ExecutionReport, DoneReason> {
        let remaining = self.config.action_budget.saturating_sub(self.records.len() as u64);
        let Some(plan) = plan.truncated(remaining.min(usize::MAX as u64) as usize) else {
            return Err(DoneReason::BudgetExhausted);
        };
        match execute_plan(&plan, self.model.world(), self.env, self.run, &mut self.tracker) {
            Ok(report) => {
                for rec in &report.records {
                    self.stall.push(rec);
                }
                self.records.extend(report.records.iter().cloned());
                self.mismatches += report.artifact.is_some() as usize;
                Ok(report)
            }
            Err(e) => {
                // recover what was recorded before the failure
                if let Ok(all) = self.run.load(None) {
                    self.records = all;
                }
                Err(DoneReason::EnvironmentError(match e {
                    ExecError::Model(m) => format!("model: {m}"),
                    other => other.to_string(),
                }))
            }
        }
    }

    fn after(&mut self, report: ExecutionReport) -> ControllerState {
        if self.tracker.is_finished() {
            return ControllerState::Done(DoneReason::Completed);
        }
        if report.final_status.is_win() {
            return ControllerState::LevelDone;
        }
        if report.final_status == GameStatus::GameOver {
            return ControllerState::Refactor { then_reset: true };
        }
        if self.stall.stalled() {
            self.stall.clear();
            return ControllerState::Refactor { then_reset: false };
        }
        if self.records.len() as u64 >= self.config.action_budget {
            return ControllerState::Done(DoneReason::BudgetExhausted);
        }
        ControllerState::ModelUpdate
    }

    fn finish(mut self, done: DoneReason) -> Result<RunOutcome, ControllerError> {
        // the saved model accounts for the whole trace
        self.feed();
        let model_path = self.run.root().join(MODEL_FILE);
        save_rules(self.modeler.model(), &model_path)?;
        let baselines = self.spec.baselines();
        let levels: Vec<LevelReport> = (0..self.spec.level_count())
            .map(|l| {
                let mine = self.records.iter().filter(|r| r.level == l);
                LevelReport {
                    solved: mine.clone().any(|r| r.status.is_win()),
                    actions: mine.count() as u64,
                    baseline: baselines[l] as u64,
                }
            })
            .collect();
        let termination = match &done {
            DoneReason::Completed => Termination::Normal,
            DoneReason::BudgetExhausted => Termination::BudgetExhausted,
            DoneReason::EnvironmentError(why) => {
                self.note(format!("environment error: {why}"));
                Termination::EnvironmentError {
                    steps: Some(self.records.len() as u64),
                }
            }
        };
        let mut report = RunReport::from_levels(self.spec.id(), self.config.run_index, levels, termination)?;
        report.mismatches = self.mismatches;
        report.notes = self.notes;
        let report_path = self.run.root().join(REPORT_FILE);
        std::fs::write(&report_path, report.to_line())?;
        Ok(RunOutcome {
            report,
            done,
            phases: self.phases,
            model_path,
            report_path,
        })
    }
}

/// Opens an in-process session of `game_id` and plays it with a freshly
/// built modeler into a new run directory at `run_root`.
pub fn play_local(
    registry: &GameRegistry,
    game_id: &str,
    kind: ModelerKind,
    config: &ControllerConfig,
    run_root: &Path,
    seed: u64,
) -> Result<RunOutcome, ControllerError> {
    config.validate()?;
    let spec = registry.get(game_id)?.clone();
    let (mut session, initial) = registry.new_session(game_id)?;
    let mut modeler = kind.build(registry, game_id, seed)?;
    let mut run = RunDirectory::create(run_root, Manifest::new(game_id, &config.to_line()))?;
    run_game(&spec, &mut session, initial, modeler.as_mut(), config, &mut run)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("record {index} diverges from a fresh session")]
    Diverged { index: usize },
}

/// Replays the recorded actions through a fresh in-process session and
/// checks every frame and status. Returns the number of records replayed.
pub fn replay(registry: &GameRegistry, game_id: &str, records: &[TransitionRecord]) -> Result<usize, ReplayError> {
    let (mut session, initial) = registry.new_session(game_id)?;
    let mut tracker = Tracker::new(game_id, initial);
    for (index, rec) in records.iter().enumerate() {
        let step = session.step(rec.action)?;
        let obs = crate::env::Observation {
            step,
            counters: session.counters(),
        };
        if &tracker.observe(rec.action, &obs) != rec {
            return Err(ReplayError::Diverged { index });
        }
    }
    Ok(records.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::games;
    use crate::model::rules_file::load_rules;
    use crate::modelers::OracleModeler;

    fn reg() -> GameRegistry {
        GameRegistry::builtin()
    }

    fn play(game: &str, kind: ModelerKind, config: &ControllerConfig) -> (tempfile::TempDir, RunOutcome) {
        let dir = tempfile::tempdir().unwrap();
        let out = play_local(&reg(), game, kind, config, &dir.path().join("run"), 0).unwrap();
        (dir, out)
    }

    #[test]
    fn oracle_plays_optimally() {
        for game in ["corridor", "keydoor", "pushblock"] {
            let (_d, out) = play(game, ModelerKind::Oracle, &ControllerConfig::default());
            assert_eq!(out.done, DoneReason::Completed, "{game}");
            assert_eq!(out.report.mismatches, 0);
            assert!(out.report.levels.iter().all(|l| l.solved && l.actions == l.baseline), "{game}: {:?}", out.report.levels);
            assert!((out.report.rhae - 100.0).abs() < 1e-9);
            assert_eq!(load_rules(&out.model_path).unwrap(), games_oracle(game));
            let line = std::fs::read_to_string(&out.report_path).unwrap();
            assert_eq!(RunReport::parse_line(line.trim()).unwrap().rhae, out.report.rhae);
        }
    }

    fn games_oracle(game: &str) -> RuleModel {
        crate::modelers::oracle_model(reg().get(game).unwrap())
    }

    #[test]
    fn executes_only_when_verified() {
        for kind in [ModelerKind::Oracle, ModelerKind::Rules, ModelerKind::Random] {
            let config = ControllerConfig {
                action_budget: 300,
                ..Default::default()
            };
            let (_d, out) = play("corridor", kind, &config);
            assert!(out.phases.iter().filter(|p| p.phase == Phase::Execute).all(|p| p.verified));
            assert!(out.report.total_actions <= 300);
        }
    }

    #[test]
    fn random_spends_exact_budget() {
        let config = ControllerConfig {
            action_budget: 10,
            ..Default::default()
        };
        let (_d, out) = play("corridor", ModelerKind::Random, &config);
        assert_eq!(out.done, DoneReason::BudgetExhausted);
        assert_eq!(out.report.total_actions, 10);
        assert_eq!(out.report.termination, Termination::BudgetExhausted);
    }

    #[test]
    fn replay_reproduces_a_run() {
        let (d, out) = play("keydoor", ModelerKind::Oracle, &ControllerConfig::default());
        let mut records = RunDirectory::open(d.path().join("run")).unwrap().load(None).unwrap();
        assert_eq!(replay(&reg(), "keydoor", &records), Ok(out.report.total_actions as usize));
        records[3].after.set(0, 0, crate::palette::FLOOR);
        assert_eq!(replay(&reg(), "keydoor", &records), Err(ReplayError::Diverged { index: 3 }));
    }

    #[test]
    fn run_directory_must_be_fresh() {
        let dir = tempfile::tempdir().unwrap();
        let registry = reg();
        let spec = registry.get("corridor").unwrap().clone();
        let mut run = RunDirectory::create(dir.path().join("run"), Manifest::new("corridor", "{}")).unwrap();
        let (mut s, initial) = registry.new_session("corridor").unwrap();
        let mut m = OracleModeler::new(&registry, "corridor").unwrap();
        run_game(&spec, &mut s, initial.clone(), &mut m, &ControllerConfig::default(), &mut run).unwrap();
        let (mut s, initial) = registry.new_session("corridor").unwrap();
        let again = run_game(&spec, &mut s, initial, &mut m, &ControllerConfig::default(), &mut run);
        assert!(matches!(again, Err(ControllerError::NotFresh)));
    }

    #[test]
    fn config_validation_and_line() {
        let mut c = ControllerConfig::default();
        assert!(c.validate().is_ok());
        assert!(c.to_line().starts_with("{\"action_budget\":4000,"));
        c.action_budget = 0;
        assert_eq!(c.validate(), Err(ConfigError::ZeroBudget));
        c.action_budget = 1;
        c.backend = ModelBackend::External(Vec::new());
        assert_eq!(c.validate(), Err(ConfigError::EmptyCommand));
    }

    #[test]
    fn stall_detection() {
        let a = Frame::from_ascii(0, "#@.#").unwrap();
        let b = Frame::from_ascii(0, "#.@#").unwrap();
        let run = GameStatus::Running;
        let bounce: Vec<(Frame, GameStatus)> =
            [&a, &b, &a, &b, &a].iter().map(|f| ((*f).clone(), run)).collect();
        assert!(!detect_stall(&bounce, 4));
        assert!(detect_stall(&bounce, 3));
        assert!(!detect_stall(&bounce[..2], 1));
        let mut won = bounce.clone();
        won.push((a.clone(), GameStatus::LevelCompleted));
        assert!(!detect_stall(&won, 3));
    }

    #[test]
    fn stall_monitor_matches_detect_stall() {
        let spec = games::corridor();
        let mut frame = spec.initial_frame(0).clone();
        let mut history = vec![(frame.clone(), GameStatus::Running)];
        let mut monitor = StallMonitor::new(3);
        let actions = [ActionId::RIGHT, ActionId::LEFT, ActionId::RIGHT, ActionId::LEFT, ActionId::UP, ActionId::DOWN];
        for (step, &action) in actions.iter().enumerate() {
            let (after, status) = games::apply_action(&frame, action);
            monitor.push(&TransitionRecord {
                game_id: "corridor".into(),
                level: 0,
                attempt: 1,
                step: step as u32,
                before: frame.clone(),
                action,
                after: after.clone(),
                status,
            });
            history.push((after.clone(), status));
            assert_eq!(monitor.stalled(), detect_stall(&history, 3), "step {step}");
            frame = after;
        }
    }
}
