//! Local rewrite rules: the in-process executable world model.

use std::collections::HashSet;

use thiserror::Error;

use super::{ModelError, ModelState, Prediction, WorldModel};
use crate::env::{ActionId, Frame, GameStatus};
use crate::palette::PALETTE_SIZE;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error("window size {0} not in {{1, 3, 5}}")]
    BadSize(usize),
    #[error("expected {expected} cells, got {actual}")]
    CellCount { expected: usize, actual: usize },
    #[error("anchor ({0}, {1}) outside the window")]
    BadAnchor(usize, usize),
    #[error("symbol {0} outside the palette")]
    BadSymbol(u8),
    #[error("pattern has no literal cells")]
    AllWildcard,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleModelError {
    #[error("duplicate rule priority {0}")]
    DuplicatePriority(i64),
    #[error("rule with priority {0} targets RESET")]
    ResetRule(i64),
    #[error("rule with priority {priority} writes symbol {write} outside the palette")]
    BadWrite { priority: i64, write: u8 },
}

/// A k×k window of literal symbols and wildcards (`None`), with an anchor
/// cell. Cells falling outside the grid match only wildcards.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern {
    size: usize,
    anchor: (usize, usize),
    cells: Vec<Option<u8>>,
}

impl Pattern {
    pub fn new(size: usize, anchor: (usize, usize), cells: Vec<Option<u8>>) -> Result<Self, PatternError> {
        if ![1, 3, 5].contains(&size) {
            return Err(PatternError::BadSize(size));
        }
        if cells.len() != size * size {
            return Err(PatternError::CellCount {
                expected: size * size,
                actual: cells.len(),
            });
        }
        if anchor.0 >= size || anchor.1 >= size {
            return Err(PatternError::BadAnchor(anchor.0, anchor.1));
        }
        if let Some(bad) = cells.iter().flatten().find(|&&s| s as usize >= PALETTE_SIZE) {
            return Err(PatternError::BadSymbol(*bad));
        }
        if cells.iter().all(Option::is_none) {
            return Err(PatternError::AllWildcard);
        }
        Ok(Pattern { size, anchor, cells })
    }

    /// A single literal cell.
    pub fn single(symbol: u8) -> Self {
        Pattern::new(1, (0, 0), vec![Some(symbol)]).expect("single-symbol pattern is valid")
    }

    /// A centre-anchored window whose literals are given as offsets from the
    /// anchor. Everything else is a wildcard.
    pub fn centered(size: usize, literals: &[((i64, i64), u8)]) -> Result<Self, PatternError> {
        let half = (size / 2) as i64;
        let mut cells = vec![None; size * size];
        for &((dx, dy), sym) in literals {
            let (x, y) = (dx + half, dy + half);
            if x < 0 || y < 0 || x >= size as i64 || y >= size as i64 {
                return Err(PatternError::BadAnchor(x.max(0) as usize, y.max(0) as usize));
            }
            cells[y as usize * size + x as usize] = Some(sym);
        }
        Pattern::new(size, (half as usize, half as usize), cells)
    }

    /// The fully literal centre-anchored window around `(x, y)`; positions
    /// outside the grid become wildcards.
    pub fn window(grid: &Frame, x: usize, y: usize, size: usize) -> Self {
        let half = (size / 2) as i64;
        let mut cells = Vec::with_capacity(size * size);
        for wy in 0..size as i64 {
            for wx in 0..size as i64 {
                cells.push(grid.get_signed(x as i64 + wx - half, y as i64 + wy - half));
            }
        }
        Pattern::new(size, (half as usize, half as usize), cells).expect("anchor cell is always inside the grid")
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn anchor(&self) -> (usize, usize) {
        self.anchor
    }

    pub fn cells(&self) -> &[Option<u8>] {
        &self.cells
    }

    /// Literal at the anchor cell, if any.
    pub fn anchor_symbol(&self) -> Option<u8> {
        self.cells[self.anchor.1 * self.size + self.anchor.0]
    }

    /// Literal cells as (offset from anchor, symbol).
    pub fn literals(&self) -> impl Iterator<Item = ((i64, i64), u8)> + '_ {
        let (ax, ay) = (self.anchor.0 as i64, self.anchor.1 as i64);
        let size = self.size;
        self.cells
            .iter()
            .enumerate()
            .filter_map(move |(i, c)| c.map(|s| (((i % size) as i64 - ax, (i / size) as i64 - ay), s)))
    }

    pub fn literal_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Whether the pattern matches with its anchor placed on `(x, y)`.
    pub fn matches_at(&self, grid: &Frame, x: usize, y: usize) -> bool {
        let ox = x as i64 - self.anchor.0 as i64;
        let oy = y as i64 - self.anchor.1 as i64;
        // anchor first: it rejects most placements
        if let Some(s) = self.anchor_symbol() {
            if grid.get(x, y) != s {
                return false;
            }
        }
        self.cells.iter().enumerate().all(|(i, c)| match c {
            None => true,
            Some(s) => grid.get_signed(ox + (i % self.size) as i64, oy + (i / self.size) as i64) == Some(*s),
        })
    }

    pub fn matches_anywhere(&self, grid: &Frame) -> bool {
        (0..grid.height()).any(|y| (0..grid.width()).any(|x| self.matches_at(grid, x, y)))
    }

    /// Number of differing cells, for patterns of the same shape.
    pub fn distance(&self, other: &Pattern) -> Option<usize> {
        if self.size != other.size || self.anchor != other.anchor {
            return None;
        }
        Some(self.cells.iter().zip(&other.cells).filter(|(a, b)| a != b).count())
    }

    /// Keeps shared cells and wildcards the rest. `None` if the shapes
    /// differ or nothing literal would remain.
    pub fn merge(&self, other: &Pattern) -> Option<Pattern> {
        self.distance(other)?;
        let cells = self
            .cells
            .iter()
            .zip(&other.cells)
            .map(|(a, b)| if a == b { *a } else { None })
            .collect();
        Pattern::new(self.size, self.anchor, cells).ok()
    }

    /// Whether every grid this pattern matches is also matched by `other`.
    pub fn is_generalized_by(&self, other: &Pattern) -> bool {
        self.distance(other).is_some()
            && self
                .cells
                .iter()
                .zip(&other.cells)
                .all(|(mine, theirs)| theirs.is_none() || theirs == mine)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionSelector {
    Only(ActionId),
    /// Any non-RESET action.
    Any,
}

impl ActionSelector {
    pub fn applies_to(self, action: ActionId) -> bool {
        match self {
            ActionSelector::Only(a) => a == action,
            ActionSelector::Any => !action.is_reset(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RewriteRule {
    pub selector: ActionSelector,
    pub pattern: Pattern,
    pub write: u8,
    /// Lower fires first.
    pub priority: i64,
}

impl RewriteRule {
    pub fn new(action: ActionId, pattern: Pattern, write: u8, priority: i64) -> Self {
        RewriteRule {
            selector: ActionSelector::Only(action),
            pattern,
            write,
            priority,
        }
    }

    pub fn description_length(&self) -> u64 {
        self.pattern.literal_count() as u64 + 1
    }
}

/// Ordered rewrite rules plus goal and hazard predicates. Each predicate is
/// a disjunction of patterns matched anywhere in the predicted grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleModel {
    rules: Vec<RewriteRule>,
    default_dynamics: bool,
    goal: Vec<Pattern>,
    hazard: Vec<Pattern>,
    /// Per symbol, the rules whose anchor can sit on it, in priority order.
    by_anchor: Vec<Vec<usize>>,
}

fn anchor_index(rules: &[RewriteRule]) -> Vec<Vec<usize>> {
    let mut index = vec![Vec::new(); PALETTE_SIZE];
    for (i, r) in rules.iter().enumerate() {
        match r.pattern.anchor_symbol() {
            Some(s) => index[s as usize].push(i),
            None => index.iter_mut().for_each(|v| v.push(i)),
        }
    }
    index
}

impl RuleModel {
    pub fn new(
        mut rules: Vec<RewriteRule>,
        default_dynamics: bool,
        goal: Vec<Pattern>,
        hazard: Vec<Pattern>,
    ) -> Result<Self, RuleModelError> {
        let mut seen = HashSet::new();
        for r in &rules {
            if !seen.insert(r.priority) {
                return Err(RuleModelError::DuplicatePriority(r.priority));
            }
            if r.selector == ActionSelector::Only(ActionId::Reset) {
                return Err(RuleModelError::ResetRule(r.priority));
            }
            if r.write as usize >= PALETTE_SIZE {
                return Err(RuleModelError::BadWrite {
                    priority: r.priority,
                    write: r.write,
                });
            }
        }
        rules.sort_by_key(|r| r.priority);
        Ok(RuleModel {
            by_anchor: anchor_index(&rules),
            rules,
            default_dynamics,
            goal,
            hazard,
        })
    }

    /// No rules, unmatched cells copy: predicts that nothing ever changes.
    pub fn identity() -> Self {
        RuleModel::new(Vec::new(), true, Vec::new(), Vec::new()).expect("empty model is valid")
    }

    pub fn rules(&self) -> &[RewriteRule] {
        &self.rules
    }

    pub fn default_dynamics(&self) -> bool {
        self.default_dynamics
    }

    pub fn goal(&self) -> &[Pattern] {
        &self.goal
    }

    pub fn hazard(&self) -> &[Pattern] {
        &self.hazard
    }

    pub fn without_goal(&self) -> Self {
        RuleModel {
            goal: Vec::new(),
            ..self.clone()
        }
    }

    /// Sum over rules and predicate patterns of (literal cells + 1).
    pub fn description_length(&self) -> u64 {
        let preds = self.goal.iter().chain(&self.hazard).map(|p| p.literal_count() as u64 + 1);
        self.rules.iter().map(RewriteRule::description_length).chain(preds).sum()
    }

    /// Index (into [`rules`](Self::rules)) of the rule that fires on a cell.
    pub fn firing_rule(&self, grid: &Frame, action: ActionId, x: usize, y: usize) -> Option<usize> {
        self.by_anchor[grid.get(x, y) as usize].iter().copied().find(|&i| {
            let r = &self.rules[i];
            r.selector.applies_to(action) && r.pattern.matches_at(grid, x, y)
        })
    }

    pub fn status_of(&self, grid: &Frame) -> GameStatus {
        if self.goal.iter().any(|p| p.matches_anywhere(grid)) {
            GameStatus::LevelCompleted
        } else if self.hazard.iter().any(|p| p.matches_anywhere(grid)) {
            GameStatus::GameOver
        } else {
            GameStatus::Running
        }
    }

    /// Pure prediction of the settled next grid.
    pub fn predict_grid(&self, grid: &Frame, action: ActionId) -> Prediction {
        if action.is_reset() {
            return Prediction::Unknown {
                reason: "RESET is handled by the environment".into(),
            };
        }
        let mut next = grid.clone();
        for y in 0..grid.height() {
            for x in 0..grid.width() {
                match self.firing_rule(grid, action, x, y) {
                    Some(i) => next.set(x, y, self.rules[i].write),
                    None if self.default_dynamics => {}
                    None => {
                        return Prediction::Unknown {
                            reason: format!("no rule matches cell ({x}, {y}) under {action}"),
                        }
                    }
                }
            }
        }
        let status = self.status_of(&next);
        Prediction::Next {
            state: ModelState::from_frame(&next),
            status,
        }
    }
}

impl WorldModel for RuleModel {
    fn reconstruct(&self, frame: &Frame) -> Result<ModelState, ModelError> {
        Ok(ModelState::from_frame(frame))
    }

    fn predict(&self, state: &ModelState, action: ActionId) -> Result<Prediction, ModelError> {
        Ok(self.predict_grid(state.grid(), action))
    }

    fn render(&self, state: &ModelState) -> Result<String, ModelError> {
        Ok(super::render(state))
    }

    fn description_length(&self) -> Result<u64, ModelError> {
        Ok(RuleModel::description_length(self))
    }

    fn status(&self, state: &ModelState) -> Result<GameStatus, ModelError> {
        Ok(self.status_of(state.grid()))
    }

    fn as_rules(&self) -> Option<&RuleModel> {
        Some(self)
    }
}
