#![allow(dead_code)]

use rand::Rng;
use worldloop::env::games::shortest_solution;
use worldloop::env::{ActionId, Environment, GameRegistry};
use worldloop::exec::Tracker;
use worldloop::trace::TransitionRecord;

/// Plays `actions` from a fresh session and records every step. Stops early
/// when the game is finished.
pub fn playthrough(reg: &GameRegistry, game: &str, actions: &[ActionId]) -> Vec<TransitionRecord> {
    let (mut session, initial) = reg.new_session(game).unwrap();
    let mut tracker = Tracker::new(game, initial);
    let mut out = Vec::new();
    for &a in actions {
        if tracker.is_finished() {
            break;
        }
        let obs = Environment::step(&mut session, a).unwrap();
        out.push(tracker.observe(a, &obs));
    }
    out
}

/// The concatenated shortest solutions of every level.
pub fn solution(reg: &GameRegistry, game: &str) -> Vec<ActionId> {
    let spec = reg.get(game).unwrap();
    let moves: Vec<ActionId> = spec.legal().iter().copied().filter(|a| !a.is_reset()).collect();
    spec.levels()
        .iter()
        .flat_map(|l| shortest_solution(&l.initial, &moves).unwrap())
        .collect()
}

pub fn moves(reg: &GameRegistry, game: &str) -> Vec<ActionId> {
    reg.get(game).unwrap().legal().iter().copied().filter(|a| !a.is_reset()).collect()
}

/// Random legal actions with occasional RESETs.
pub fn random_actions(rng: &mut impl Rng, legal: &[ActionId], len: usize) -> Vec<ActionId> {
    (0..len)
        .map(|_| {
            if rng.gen_ratio(1, 20) {
                ActionId::Reset
            } else {
                legal[rng.gen_range(0..legal.len())]
            }
        })
        .collect()
}
