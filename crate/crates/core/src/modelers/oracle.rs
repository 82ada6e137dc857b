//! The environment's own dynamics compiled into rewrite rules.

use crate::env::{ActionId, EnvError, GameRegistry, GameSpec};
use crate::model::{Pattern, RewriteRule, RuleModel};
use crate::palette::*;

const DIRECTIONS: [(i64, i64); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];

/// Symbols that can appear while playing a game with these initial symbols.
fn reachable_symbols(initial: &[u8]) -> Vec<u8> {
    let mut out = initial.to_vec();
    out.push(FLOOR);
    let derived = [
        (GOAL, AGENT_ON_GOAL),
        (HAZARD, AGENT_DEAD),
        (KEY, AGENT_KEYED),
        (TARGET, BLOCK_ON_TARGET),
    ];
    for (from, to) in derived {
        if initial.contains(&from) {
            out.push(to);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

struct Builder {
    rules: Vec<RewriteRule>,
    symbols: Vec<u8>,
}

impl Builder {
    fn add(&mut self, action: ActionId, size: usize, literals: &[((i64, i64), u8)], write: u8) {
        if literals.iter().any(|(_, s)| !self.symbols.contains(s)) {
            return;
        }
        let pattern = Pattern::centered(size, literals).expect("oracle patterns are well formed");
        let priority = self.rules.len() as i64;
        self.rules.push(RewriteRule::new(action, pattern, write, priority));
    }
}

/// Compiles the true dynamics of `spec` into a [`RuleModel`].
pub fn oracle_model(spec: &GameSpec) -> RuleModel {
    let mut b = Builder {
        rules: Vec::new(),
        symbols: reachable_symbols(&spec.symbols()),
    };
    for &action in spec.legal() {
        if let Some((dx, dy)) = action.direction() {
            let (d, back, d2, back2) = ((dx, dy), (-dx, -dy), (2 * dx, 2 * dy), (-2 * dx, -2 * dy));
            for mover in [AGENT, AGENT_KEYED] {
                let mut entered = vec![(FLOOR, mover), (GOAL, AGENT_ON_GOAL), (HAZARD, AGENT_DEAD)];
                if mover == AGENT_KEYED {
                    entered.push((DOOR, AGENT_KEYED));
                }
                for &(target, landing) in &entered {
                    b.add(action, 3, &[((0, 0), mover), (d, target)], FLOOR);
                    b.add(action, 3, &[((0, 0), target), (back, mover)], landing);
                }
                for beyond in [FLOOR, TARGET] {
                    b.add(action, 5, &[((0, 0), mover), (d, BLOCK), (d2, beyond)], FLOOR);
                    b.add(action, 5, &[((0, 0), BLOCK), (back, mover), (d, beyond)], mover);
                }
                b.add(action, 5, &[((0, 0), FLOOR), (back, BLOCK), (back2, mover)], BLOCK);
                b.add(action, 5, &[((0, 0), TARGET), (back, BLOCK), (back2, mover)], BLOCK_ON_TARGET);
            }
        } else if action == ActionId::INTERACT {
            for n in DIRECTIONS {
                b.add(action, 3, &[((0, 0), AGENT), (n, KEY)], AGENT_KEYED);
                b.add(action, 3, &[((0, 0), KEY), ((-n.0, -n.1), AGENT)], FLOOR);
            }
        }
    }
    let goal = [AGENT_ON_GOAL, BLOCK_ON_TARGET]
        .into_iter()
        .filter(|s| b.symbols.contains(s))
        .map(Pattern::single)
        .collect();
    let hazard = [AGENT_DEAD]
        .into_iter()
        .filter(|s| b.symbols.contains(s))
        .map(Pattern::single)
        .collect();
    RuleModel::new(b.rules, true, goal, hazard).expect("oracle priorities are unique")
}

/// The oracle model for a registered game.
pub fn oracle_update(registry: &GameRegistry, game_id: &str) -> Result<RuleModel, EnvError> {
    Ok(oracle_model(registry.get(game_id)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::games::{self, apply_action, reachable_states};
    use crate::model::Prediction;

    #[test]
    fn predicts_every_reachable_transition() {
        for spec in [games::corridor(), games::keydoor(), games::pushblock()] {
            let model = oracle_model(&spec);
            for level in 0..spec.level_count() {
                for state in reachable_states(spec.initial_frame(level), spec.legal()) {
                    for &a in spec.legal() {
                        let (next, status) = apply_action(&state, a);
                        match model.predict_grid(&state, a) {
                            Prediction::Next { state: p, status: s } => {
                                assert_eq!(p.grid(), &next, "{} {a}\n{}", spec.id(), state.canonical_ascii());
                                assert_eq!(s, status);
                            }
                            Prediction::Unknown { reason } => panic!("{reason}"),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn corridor_model_has_no_key_rules() {
        let m = oracle_model(&games::corridor());
        assert!(m.rules().iter().all(|r| r.write != AGENT_KEYED));
        assert_eq!(m.goal(), &[Pattern::single(AGENT_ON_GOAL)]);
        assert_eq!(m.hazard(), &[Pattern::single(AGENT_DEAD)]);
    }

    #[test]
    fn unknown_game() {
        assert!(oracle_update(&GameRegistry::builtin(), "nosuch").is_err());
    }
}
