use std::fmt;

use thiserror::Error;

use crate::palette::{self, PALETTE_SIZE};

pub const MAX_SIDE: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame side {0} outside 1..=64")]
    BadDimension(usize),
    #[error("expected {expected} cells, got {actual}")]
    CellCount { expected: usize, actual: usize },
    #[error("symbol {0} outside 0..=15")]
    BadSymbol(u64),
    #[error("row {row} has width {actual}, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        actual: usize,
    },
    #[error("character {0:?} is not in the palette")]
    UnknownChar(char),
}

/// A settled observation: a rectangular grid of palette symbols plus the
/// level it belongs to.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    width: usize,
    height: usize,
    level: usize,
    cells: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, level: usize, cells: Vec<u8>) -> Result<Self, FrameError> {
        for side in [width, height] {
            if !(1..=MAX_SIDE).contains(&side) {
                return Err(FrameError::BadDimension(side));
            }
        }
        if cells.len() != width * height {
            return Err(FrameError::CellCount {
                expected: width * height,
                actual: cells.len(),
            });
        }
        if let Some(&bad) = cells.iter().find(|&&c| c as usize >= PALETTE_SIZE) {
            return Err(FrameError::BadSymbol(bad as u64));
        }
        Ok(Frame {
            width,
            height,
            level,
            cells,
        })
    }

    /// Parses the canonical ASCII rendering (rows separated by newlines).
    pub fn from_ascii(level: usize, text: &str) -> Result<Self, FrameError> {
        let rows: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut cells = Vec::with_capacity(width * rows.len());
        for (row, line) in rows.iter().enumerate() {
            let actual = line.chars().count();
            if actual != width {
                return Err(FrameError::RaggedRow {
                    row,
                    expected: width,
                    actual,
                });
            }
            for c in line.chars() {
                cells.push(palette::from_char(c).ok_or(FrameError::UnknownChar(c))?);
            }
        }
        Frame::new(width, rows.len(), level, cells)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.cells[y * self.width + x]
    }

    /// Signed lookup; `None` outside the grid.
    pub fn get_signed(&self, x: i64, y: i64) -> Option<u8> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            None
        } else {
            Some(self.get(x as usize, y as usize))
        }
    }

    pub fn set(&mut self, x: usize, y: usize, symbol: u8) {
        debug_assert!((symbol as usize) < PALETTE_SIZE);
        self.cells[y * self.width + x] = symbol;
    }

    pub fn with_level(mut self, level: usize) -> Self {
        self.level = level;
        self
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn contains(&self, symbol: u8) -> bool {
        self.cells.contains(&symbol)
    }

    /// Positions of cells holding `symbol`, row-major.
    pub fn positions_of(&self, symbol: u8) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.cells
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == symbol)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Coordinates where two same-shaped grids differ, row-major. Grids of
    /// different shape differ everywhere in the larger bounding box.
    pub fn diff_cells(&self, other: &Frame) -> Vec<(usize, usize)> {
        if !self.same_shape(other) {
            let w = self.width.max(other.width);
            let h = self.height.max(other.height);
            return (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).collect();
        }
        self.cells
            .iter()
            .zip(&other.cells)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| (i % self.width, i / self.width))
            .collect()
    }

    /// Height lines of width characters joined by `\n`, no trailing newline.
    pub fn canonical_ascii(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for (y, row) in self.cells.chunks(self.width).enumerate() {
            if y > 0 {
                out.push('\n');
            }
            out.extend(row.iter().map(|&c| palette::to_char(c)));
        }
        out
    }
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Frame {}x{} level {}", self.width, self.height, self.level)?;
        f.write_str(&self.canonical_ascii())
    }
}

/// One environment action. The derived ordering is the stable action order
/// used for tie-breaking everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionId {
    Simple(u8),
    Point { x: u8, y: u8 },
    Reset,
}

impl ActionId {
    pub const UP: ActionId = ActionId::Simple(1);
    pub const DOWN: ActionId = ActionId::Simple(2);
    pub const LEFT: ActionId = ActionId::Simple(3);
    pub const RIGHT: ActionId = ActionId::Simple(4);
    pub const INTERACT: ActionId = ActionId::Simple(5);

    pub fn is_reset(self) -> bool {
        self == ActionId::Reset
    }

    /// Structural validity independent of any game: SIMPLE in 1..=6 and
    /// POINT inside the given frame.
    pub fn fits(self, frame: &Frame) -> bool {
        match self {
            ActionId::Simple(k) => (1..=6).contains(&k),
            ActionId::Point { x, y } => (x as usize) < frame.width() && (y as usize) < frame.height(),
            ActionId::Reset => true,
        }
    }

    /// Movement direction for the four arrow actions.
    pub fn direction(self) -> Option<(i64, i64)> {
        match self {
            ActionId::Simple(1) => Some((0, -1)),
            ActionId::Simple(2) => Some((0, 1)),
            ActionId::Simple(3) => Some((-1, 0)),
            ActionId::Simple(4) => Some((1, 0)),
            _ => None,
        }
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionId::Simple(k) => write!(f, "SIMPLE({k})"),
            ActionId::Point { x, y } => write!(f, "POINT({x},{y})"),
            ActionId::Reset => f.write_str("RESET"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GameStatus {
    Running,
    LevelCompleted,
    GameOver,
    GameCompleted,
}

impl GameStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            GameStatus::Running => "RUNNING",
            GameStatus::LevelCompleted => "LEVEL_COMPLETED",
            GameStatus::GameOver => "GAME_OVER",
            GameStatus::GameCompleted => "GAME_COMPLETED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "RUNNING" => GameStatus::Running,
            "LEVEL_COMPLETED" => GameStatus::LevelCompleted,
            "GAME_OVER" => GameStatus::GameOver,
            "GAME_COMPLETED" => GameStatus::GameCompleted,
            _ => return None,
        })
    }

    /// True when the level was won by this step (whether or not it was the
    /// last level).
    pub fn is_win(self) -> bool {
        matches!(self, GameStatus::LevelCompleted | GameStatus::GameCompleted)
    }

    pub fn is_terminal(self) -> bool {
        self != GameStatus::Running
    }

    /// Whether a model's predicted status agrees with an observed one. Models
    /// know nothing about level counts, so a predicted LEVEL_COMPLETED covers
    /// an observed GAME_COMPLETED.
    pub fn agrees_with(self, observed: GameStatus) -> bool {
        self == observed || (self.is_win() && observed.is_win())
    }
}

impl fmt::Display for GameStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
