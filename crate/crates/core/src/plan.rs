//! Plans and planners that search inside a world model.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::env::{ActionId, Frame, GameStatus};
use crate::model::{ModelError, ModelState, Prediction, WorldModel};
use crate::par::Execution;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("a plan needs at least one action")]
    Empty,
    #[error("RESET may only open a plan, found at position {0}")]
    MisplacedReset(usize),
}

/// A non-empty action sequence; RESET may appear only first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Plan(Vec<ActionId>);

impl Plan {
    pub fn new(actions: Vec<ActionId>) -> Result<Self, PlanError> {
        if actions.is_empty() {
            return Err(PlanError::Empty);
        }
        if let Some(i) = actions.iter().skip(1).position(|a| a.is_reset()) {
            return Err(PlanError::MisplacedReset(i + 1));
        }
        Ok(Plan(actions))
    }

    pub fn single(action: ActionId) -> Self {
        Plan(vec![action])
    }

    pub fn actions(&self) -> &[ActionId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The first `n` actions, or `None` when `n` is zero.
    pub fn truncated(&self, n: usize) -> Option<Plan> {
        (n > 0).then(|| Plan(self.0[..n.min(self.0.len())].to_vec()))
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join(" "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBudget {
    pub max_depth: usize,
    pub max_nodes: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            max_depth: 64,
            max_nodes: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NoPlanReason {
    /// The start state already satisfies the goal predicate.
    AlreadyComplete,
    /// Depth or node budget ran out.
    BudgetExhausted,
    /// Every reachable state was expanded without reaching the goal.
    SearchExhausted,
    Model(ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no plan found ({reason:?}) after {expanded} expansions")]
pub struct NoPlanFound {
    pub reason: NoPlanReason,
    pub expanded: usize,
}

impl NoPlanFound {
    fn new(reason: NoPlanReason, expanded: usize) -> Self {
        NoPlanFound { reason, expanded }
    }
}

pub trait Planner: Send + Sync {
    fn name(&self) -> &'static str;

    /// Searches for a plan whose simulated execution ends in
    /// LEVEL_COMPLETED, using only `actions` (never RESET).
    fn plan(&self, model: &(dyn WorldModel + Sync), start: &ModelState, actions: &[ActionId]) -> Result<Plan, NoPlanFound>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BfsPlanner {
    pub budget: SearchBudget,
    pub execution: Execution,
}

impl Planner for BfsPlanner {
    fn name(&self) -> &'static str {
        "bfs"
    }

    fn plan(&self, model: &(dyn WorldModel + Sync), start: &ModelState, actions: &[ActionId]) -> Result<Plan, NoPlanFound> {
        plan_bfs(model, start, actions, self.budget, self.execution)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AStarPlanner {
    pub budget: SearchBudget,
}

impl Planner for AStarPlanner {
    fn name(&self) -> &'static str {
        "astar"
    }

    fn plan(&self, model: &(dyn WorldModel + Sync), start: &ModelState, actions: &[ActionId]) -> Result<Plan, NoPlanFound> {
        plan_astar(model, start, actions, self.budget)
    }
}

fn already_complete<M: WorldModel + ?Sized>(model: &M, start: &ModelState) -> Result<(), NoPlanFound> {
    match model.status(start) {
        Ok(s) if s.is_win() => Err(NoPlanFound::new(NoPlanReason::AlreadyComplete, 0)),
        Ok(_) => Ok(()),
        Err(e) => Err(NoPlanFound::new(NoPlanReason::Model(e), 0)),
    }?;
    // a rule model without goal patterns never predicts a win
    match model.as_rules() {
        Some(rules) if rules.goal().is_empty() => Err(NoPlanFound::new(NoPlanReason::SearchExhausted, 0)),
        _ => Ok(()),
    }
}

struct Node {
    state: ModelState,
    parent: Option<(usize, ActionId)>,
}

fn unwind(nodes: &[Node], mut at: usize, last: ActionId) -> Plan {
    let mut actions = vec![last];
    while let Some((parent, a)) = nodes[at].parent {
        actions.push(a);
        at = parent;
    }
    actions.reverse();
    Plan(actions)
}

/// Breadth-first search in the model. Expands one layer at a time; with
/// [`Execution::Parallel`] the layer's predictions are computed in parallel
/// and then consumed in order, so the result matches the sequential search
/// exactly. Frontier states are tested for the goal when generated.
pub fn plan_bfs<M: WorldModel + Sync + ?Sized>(
    model: &M,
    start: &ModelState,
    actions: &[ActionId],
    budget: SearchBudget,
    execution: Execution,
) -> Result<Plan, NoPlanFound> {
    already_complete(model, start)?;
    let mut nodes = vec![Node {
        state: start.clone(),
        parent: None,
    }];
    let mut seen: HashMap<Frame, ()> = HashMap::new();
    seen.insert(start.grid().clone(), ());
    let mut frontier = vec![0usize];
    let mut expanded = 0usize;
    let mut depth = 0usize;
    while !frontier.is_empty() {
        if depth >= budget.max_depth {
            return Err(NoPlanFound::new(NoPlanReason::BudgetExhausted, expanded));
        }
        let room = budget.max_nodes.saturating_sub(expanded);
        let layer = &frontier[..frontier.len().min(room)];
        let successors = execution.map(layer, |&i| {
            actions
                .iter()
                .map(|&a| model.predict(&nodes[i].state, a))
                .collect::<Vec<_>>()
        });
        let mut next = Vec::new();
        for (&i, preds) in layer.iter().zip(successors) {
            expanded += 1;
            for (&a, pred) in actions.iter().zip(preds) {
                match pred {
                    Err(e) => return Err(NoPlanFound::new(NoPlanReason::Model(e), expanded)),
                    Ok(Prediction::Next { status, .. }) if status.is_win() => return Ok(unwind(&nodes, i, a)),
                    Ok(Prediction::Next {
                        state,
                        status: GameStatus::Running,
                    }) => {
                        if seen.insert(state.grid().clone(), ()).is_none() {
                            next.push(nodes.len());
                            nodes.push(Node {
                                state,
                                parent: Some((i, a)),
                            });
                        }
                    }
                    Ok(_) => {}
                }
            }
        }
        if layer.len() < frontier.len() {
            return Err(NoPlanFound::new(NoPlanReason::BudgetExhausted, expanded));
        }
        frontier = next;
        depth += 1;
    }
    Err(NoPlanFound::new(NoPlanReason::SearchExhausted, expanded))
}

/// Symbols a goal-completing rule rewrites: the agent heads for these.
fn heuristic_targets<M: WorldModel + ?Sized>(model: &M) -> Vec<u8> {
    let Some(rules) = model.as_rules() else {
        return Vec::new();
    };
    let goal_symbols: Vec<u8> = rules.goal().iter().filter_map(|p| p.anchor_symbol()).collect();
    let mut targets: Vec<u8> = rules
        .rules()
        .iter()
        .filter(|r| goal_symbols.contains(&r.write))
        .filter_map(|r| r.pattern.anchor_symbol())
        .collect();
    targets.sort_unstable();
    targets.dedup();
    targets
}

/// Manhattan distance from the agent to the nearest target cell, minus one.
/// Never overestimates for entering a goal cell or pushing onto a target.
fn manhattan(state: &ModelState, targets: &[u8]) -> usize {
    let Some((ax, ay)) = state.agent() else {
        return 0;
    };
    let grid = state.grid();
    targets
        .iter()
        .flat_map(|&t| grid.positions_of(t))
        .map(|(x, y)| (ax.abs_diff(x) + ay.abs_diff(y)).saturating_sub(1))
        .min()
        .unwrap_or(0)
}

/// A* with the goal-pattern Manhattan heuristic. Ties on f are broken by
/// depth, then by generation order.
pub fn plan_astar<M: WorldModel + ?Sized>(
    model: &M,
    start: &ModelState,
    actions: &[ActionId],
    budget: SearchBudget,
) -> Result<Plan, NoPlanFound> {
    already_complete(model, start)?;
    let targets = heuristic_targets(model);
    let mut nodes = vec![Node {
        state: start.clone(),
        parent: None,
    }];
    let mut best: HashMap<Frame, usize> = HashMap::new();
    best.insert(start.grid().clone(), 0);
    let mut open = BinaryHeap::new();
    open.push(Reverse((manhattan(start, &targets), 0usize, 0usize)));
    let mut expanded = 0usize;
    let mut truncated = false;
    while let Some(Reverse((_, g, i))) = open.pop() {
        if best.get(nodes[i].state.grid()).is_some_and(|&b| b < g) {
            continue;
        }
        if expanded >= budget.max_nodes {
            return Err(NoPlanFound::new(NoPlanReason::BudgetExhausted, expanded));
        }
        expanded += 1;
        if g >= budget.max_depth {
            truncated = true;
            continue;
        }
        for &a in actions {
            match model.predict(&nodes[i].state, a) {
                Err(e) => return Err(NoPlanFound::new(NoPlanReason::Model(e), expanded)),
                Ok(Prediction::Next { status, .. }) if status.is_win() => return Ok(unwind(&nodes, i, a)),
                Ok(Prediction::Next {
                    state,
                    status: GameStatus::Running,
                }) => {
                    let g2 = g + 1;
                    if best.get(state.grid()).is_some_and(|&b| b <= g2) {
                        continue;
                    }
                    best.insert(state.grid().clone(), g2);
                    let h = manhattan(&state, &targets);
                    nodes.push(Node {
                        state,
                        parent: Some((i, a)),
                    });
                    open.push(Reverse((g2 + h, g2, nodes.len() - 1)));
                }
                Ok(_) => {}
            }
        }
    }
    let reason = if truncated {
        NoPlanReason::BudgetExhausted
    } else {
        NoPlanReason::SearchExhausted
    };
    Err(NoPlanFound::new(reason, expanded))
}
