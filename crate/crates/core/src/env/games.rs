//! Game physics, game specifications and the built-in games.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use super::frame::{ActionId, Frame, GameStatus};
use crate::palette::*;

/// Upper bound on states visited by the baseline search.
const SEARCH_LIMIT: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GameSpecError {
    #[error("game id must be non-empty")]
    EmptyId,
    #[error("a game needs at least one level")]
    NoLevels,
    #[error("level {level}: frame carries level index {found}")]
    LevelIndex { level: usize, found: usize },
    #[error("level {0}: initial frame must contain exactly one agent")]
    AgentCount(usize),
    #[error("level {0}: initial frame is already terminal")]
    TerminalStart(usize),
    #[error("level {0} has no solution")]
    Unsolvable(usize),
    #[error("expected {expected} baselines, got {actual}")]
    BaselineCount { expected: usize, actual: usize },
    #[error("baselines must be positive")]
    ZeroBaseline,
    #[error("legal action {0} is RESET or malformed")]
    BadLegalAction(ActionId),
}

/// Status implied by a settled grid.
pub fn grid_status(grid: &Frame) -> GameStatus {
    if grid.contains(AGENT_ON_GOAL) || grid.contains(BLOCK_ON_TARGET) {
        GameStatus::LevelCompleted
    } else if grid.contains(AGENT_DEAD) {
        GameStatus::GameOver
    } else {
        GameStatus::Running
    }
}

fn find_agent(grid: &Frame) -> Option<(i64, i64)> {
    grid.cells()
        .iter()
        .position(|&c| is_agent(c))
        .map(|i| ((i % grid.width()) as i64, (i / grid.width()) as i64))
}

/// In-level dynamics shared by every game. RESET is handled by the session.
pub fn apply_action(grid: &Frame, action: ActionId) -> (Frame, GameStatus) {
    let mut next = grid.clone();
    if let Some((ax, ay)) = find_agent(grid) {
        let mover = grid.get(ax as usize, ay as usize);
        if let Some((dx, dy)) = action.direction() {
            step_mover(&mut next, grid, mover, (ax, ay), (dx, dy));
        } else if action == ActionId::INTERACT && mover == AGENT {
            let mut picked = false;
            for (dx, dy) in [(0, -1), (0, 1), (-1, 0), (1, 0)] {
                if grid.get_signed(ax + dx, ay + dy) == Some(KEY) {
                    next.set((ax + dx) as usize, (ay + dy) as usize, FLOOR);
                    picked = true;
                }
            }
            if picked {
                next.set(ax as usize, ay as usize, AGENT_KEYED);
            }
        }
    }
    let status = grid_status(&next);
    (next, status)
}

fn step_mover(next: &mut Frame, grid: &Frame, mover: u8, (ax, ay): (i64, i64), (dx, dy): (i64, i64)) {
    let (tx, ty) = (ax + dx, ay + dy);
    let Some(target) = grid.get_signed(tx, ty) else {
        return;
    };
    let landing = match target {
        FLOOR => mover,
        GOAL => AGENT_ON_GOAL,
        HAZARD => AGENT_DEAD,
        DOOR if mover == AGENT_KEYED => AGENT_KEYED,
        BLOCK => {
            let (bx, by) = (tx + dx, ty + dy);
            match grid.get_signed(bx, by) {
                Some(FLOOR) => next.set(bx as usize, by as usize, BLOCK),
                Some(TARGET) => next.set(bx as usize, by as usize, BLOCK_ON_TARGET),
                _ => return,
            }
            mover
        }
        _ => return,
    };
    next.set(tx as usize, ty as usize, landing);
    next.set(ax as usize, ay as usize, FLOOR);
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSpec {
    pub initial: Frame,
    /// Human baseline action count for the level.
    pub baseline: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameSpec {
    id: String,
    levels: Vec<LevelSpec>,
    legal: Vec<ActionId>,
}

impl GameSpec {
    /// Validates the levels and fixes baselines. Without explicit baselines,
    /// each level's baseline is its shortest solution length.
    pub fn new(
        id: impl Into<String>,
        initial_frames: Vec<Frame>,
        mut legal: Vec<ActionId>,
        baselines: Option<Vec<u32>>,
    ) -> Result<Self, GameSpecError> {
        let id = id.into();
        if id.is_empty() {
            return Err(GameSpecError::EmptyId);
        }
        if initial_frames.is_empty() {
            return Err(GameSpecError::NoLevels);
        }
        legal.sort();
        legal.dedup();
        for (index, frame) in initial_frames.iter().enumerate() {
            if frame.level() != index {
                return Err(GameSpecError::LevelIndex {
                    level: index,
                    found: frame.level(),
                });
            }
            if frame.cells().iter().filter(|&&c| is_agent(c)).count() != 1 {
                return Err(GameSpecError::AgentCount(index));
            }
            if grid_status(frame) != GameStatus::Running {
                return Err(GameSpecError::TerminalStart(index));
            }
            if let Some(&bad) = legal.iter().find(|a| a.is_reset() || !a.fits(frame)) {
                return Err(GameSpecError::BadLegalAction(bad));
            }
        }
        if let Some(b) = &baselines {
            if b.len() != initial_frames.len() {
                return Err(GameSpecError::BaselineCount {
                    expected: initial_frames.len(),
                    actual: b.len(),
                });
            }
            if b.contains(&0) {
                return Err(GameSpecError::ZeroBaseline);
            }
        }
        let mut levels = Vec::with_capacity(initial_frames.len());
        for (index, initial) in initial_frames.into_iter().enumerate() {
            let shortest = shortest_solution(&initial, &legal).ok_or(GameSpecError::Unsolvable(index))?;
            let baseline = match &baselines {
                Some(b) => b[index],
                None => shortest.len() as u32,
            };
            levels.push(LevelSpec { initial, baseline });
        }
        Ok(GameSpec { id, levels, legal })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[LevelSpec] {
        &self.levels
    }

    pub fn initial_frame(&self, level: usize) -> &Frame {
        &self.levels[level].initial
    }

    pub fn baselines(&self) -> Vec<u32> {
        self.levels.iter().map(|l| l.baseline).collect()
    }

    /// Legal non-RESET actions in stable order.
    pub fn legal(&self) -> &[ActionId] {
        &self.legal
    }

    pub fn is_legal(&self, action: ActionId) -> bool {
        action.is_reset() || self.legal.binary_search(&action).is_ok()
    }

    /// Palette symbols appearing in any initial frame.
    pub fn symbols(&self) -> Vec<u8> {
        let mut seen = [false; PALETTE_SIZE];
        for level in &self.levels {
            for &c in level.initial.cells() {
                seen[c as usize] = true;
            }
        }
        (0..PALETTE_SIZE as u8).filter(|&s| seen[s as usize]).collect()
    }
}

/// Breadth-first search over the real dynamics. Returns a shortest action
/// sequence that wins the level, ties broken by the stable action order.
pub fn shortest_solution(initial: &Frame, actions: &[ActionId]) -> Option<Vec<ActionId>> {
    let mut parent: HashMap<Frame, Option<(Frame, ActionId)>> = HashMap::new();
    let mut queue = VecDeque::new();
    parent.insert(initial.clone(), None);
    queue.push_back(initial.clone());
    while let Some(state) = queue.pop_front() {
        for &action in actions {
            let (next, status) = apply_action(&state, action);
            if status.is_win() {
                let mut plan = vec![action];
                let mut cursor = &state;
                while let Some(Some((prev, a))) = parent.get(cursor) {
                    plan.push(*a);
                    cursor = prev;
                }
                plan.reverse();
                return Some(plan);
            }
            if status == GameStatus::Running && !parent.contains_key(&next) {
                if parent.len() >= SEARCH_LIMIT {
                    return None;
                }
                parent.insert(next.clone(), Some((state.clone(), action)));
                queue.push_back(next);
            }
        }
    }
    None
}

/// Every grid reachable from `initial` through non-RESET actions without
/// passing a win, including GAME_OVER grids. Sorted by discovery order.
pub fn reachable_states(initial: &Frame, actions: &[ActionId]) -> Vec<Frame> {
    let mut seen = std::collections::HashSet::new();
    let mut order = Vec::new();
    let mut queue = VecDeque::new();
    seen.insert(initial.clone());
    queue.push_back(initial.clone());
    while let Some(state) = queue.pop_front() {
        order.push(state.clone());
        for &action in actions {
            let (next, status) = apply_action(&state, action);
            if !status.is_win() && seen.insert(next.clone()) {
                queue.push_back(next);
            }
        }
    }
    order
}

fn level(index: usize, text: &str) -> Frame {
    Frame::from_ascii(index, text).expect("built-in level is well formed")
}

fn arrows() -> Vec<ActionId> {
    vec![ActionId::UP, ActionId::DOWN, ActionId::LEFT, ActionId::RIGHT]
}

pub fn corridor() -> GameSpec {
    let levels = vec![
        level(0, "#######\n#@...G#\n#######"),
        level(1, "########\n#@.....#\n#.####.#\n#X...XG#\n########"),
        level(2, "#########\n#@..X...#\n#.#.#.#.#\n#.X....G#\n#########"),
        level(
            3,
            "##########\n#@.X.....#\n#..X.###.#\n#.......X#\n#.###X...#\n#......XG#\n##########",
        ),
    ];
    GameSpec::new("corridor", levels, arrows(), None).expect("corridor is valid")
}

pub fn keydoor() -> GameSpec {
    let levels = vec![
        level(0, "########\n#@k.D.G#\n########"),
        level(1, "#########\n#@...#..#\n#.##.D..#\n#k...#.G#\n#########"),
        level(2, "#########\n#.k#....#\n#..#.##.#\n#@.D..XG#\n#########"),
        level(
            3,
            "###########\n#@.......k#\n#.#####.#.#\n#...X...#.#\n#####D#####\n#G.......X#\n###########",
        ),
    ];
    let mut legal = arrows();
    legal.push(ActionId::INTERACT);
    GameSpec::new("keydoor", levels, legal, None).expect("keydoor is valid")
}

pub fn pushblock() -> GameSpec {
    let levels = vec![
        level(0, "#######\n#@.B.T#\n#######"),
        level(1, "#######\n#@....#\n#..B..#\n#.....#\n#...T.#\n#######"),
        level(2, "########\n#@.....#\n#.#B#..#\n#......#\n#.##.#T#\n#......#\n########"),
    ];
    GameSpec::new("pushblock", levels, arrows(), None).expect("pushblock is valid")
}
