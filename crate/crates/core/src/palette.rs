//! The 16-symbol palette and its fixed ASCII table.
//!
//! The table is normative: every frame comparison in the harness goes
//! through [`to_char`], so two grids are equal iff their renderings are.

/// Number of palette symbols.
pub const PALETTE_SIZE: usize = 16;

pub const FLOOR: u8 = 0;
pub const WALL: u8 = 1;
pub const AGENT: u8 = 2;
pub const GOAL: u8 = 3;
pub const HAZARD: u8 = 4;
pub const KEY: u8 = 5;
pub const DOOR: u8 = 6;
/// Agent carrying a key.
pub const AGENT_KEYED: u8 = 7;
pub const BLOCK: u8 = 8;
pub const TARGET: u8 = 9;
pub const BLOCK_ON_TARGET: u8 = 10;
/// Agent standing on a goal cell; the level is complete.
pub const AGENT_ON_GOAL: u8 = 11;
/// Agent after stepping on a hazard; the attempt is over.
pub const AGENT_DEAD: u8 = 12;

const TABLE: [char; PALETTE_SIZE] = [
    '.', '#', '@', 'G', 'X', 'k', 'D', 'a', 'B', 'T', '*', '+', '!', '=', '~', '%',
];

pub fn to_char(symbol: u8) -> char {
    TABLE[symbol as usize & 0x0f]
}

pub fn from_char(c: char) -> Option<u8> {
    TABLE.iter().position(|&t| t == c).map(|i| i as u8)
}

/// Symbols that denote the (single) controllable agent.
pub fn is_agent(symbol: u8) -> bool {
    symbol == AGENT || symbol == AGENT_KEYED
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_injective() {
        for a in 0..PALETTE_SIZE as u8 {
            for b in 0..PALETTE_SIZE as u8 {
                if a != b {
                    assert_ne!(to_char(a), to_char(b));
                }
            }
        }
    }

    #[test]
    fn char_round_trip() {
        for s in 0..PALETTE_SIZE as u8 {
            assert_eq!(from_char(to_char(s)), Some(s));
        }
        assert_eq!(from_char('?'), None);
        assert_eq!(to_char(FLOOR), '.');
    }
}
