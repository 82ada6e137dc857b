//! Single-action exploration policies.

use std::collections::{HashMap, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{ActionId, Frame};
use crate::model::{Prediction, RuleModel};
use crate::trace::TransitionRecord;

/// Prefers the least-tried (frame, action) pair; ties go to the earliest
/// action in `legal`.
#[derive(Debug, Clone, Default)]
pub struct CountExplorer {
    tried: HashMap<(String, ActionId), u32>,
}

impl CountExplorer {
    pub fn observe(&mut self, records: &[TransitionRecord]) {
        for r in records {
            *self.tried.entry((r.before.canonical_ascii(), r.action)).or_default() += 1;
        }
    }

    pub fn tries(&self, state: &Frame, action: ActionId) -> u32 {
        self.tried
            .get(&(state.canonical_ascii(), action))
            .copied()
            .unwrap_or(0)
    }

    /// # Panics
    /// If `legal` is empty.
    pub fn choose(&self, state: &Frame, legal: &[ActionId]) -> ActionId {
        let ascii = state.canonical_ascii();
        *legal
            .iter()
            .min_by_key(|&&a| self.tried.get(&(ascii.clone(), a)).copied().unwrap_or(0))
            .expect("explore needs at least one legal action")
    }

    /// First action of the shortest path, under `model`, to a frame with
    /// an untried action. Paths through predicted terminal states are not
    /// followed. Falls back to [`choose`](Self::choose) when no such frame
    /// is found within `max_nodes` frames.
    ///
    /// # Panics
    /// If `legal` is empty.
    pub fn choose_guided(&self, model: &RuleModel, state: &Frame, legal: &[ActionId], max_nodes: usize) -> ActionId {
        let untried = |f: &Frame| legal.iter().copied().find(|&a| self.tries(f, a) == 0);
        if let Some(a) = untried(state) {
            return a;
        }
        let mut seen: HashSet<Frame> = HashSet::from([state.clone()]);
        let mut queue: VecDeque<(Frame, Option<ActionId>)> = VecDeque::from([(state.clone(), None)]);
        while let Some((frame, first)) = queue.pop_front() {
            for &a in legal {
                let Prediction::Next { state: next, status } = model.predict_grid(&frame, a) else {
                    continue;
                };
                if status.is_terminal() || seen.len() >= max_nodes {
                    continue;
                }
                let next = next.into_grid();
                if !seen.insert(next.clone()) {
                    continue;
                }
                let first = first.unwrap_or(a);
                if untried(&next).is_some() {
                    return first;
                }
                queue.push_back((next, Some(first)));
            }
        }
        self.choose(state, legal)
    }
}

/// Uniform choice from a seeded stream.
#[derive(Debug, Clone)]
pub struct RandomExplorer {
    rng: ChaCha8Rng,
}

impl RandomExplorer {
    pub fn new(seed: u64) -> Self {
        RandomExplorer {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// # Panics
    /// If `legal` is empty.
    pub fn choose(&mut self, legal: &[ActionId]) -> ActionId {
        *legal.choose(&mut self.rng).expect("explore needs at least one legal action")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::GameStatus;

    fn tried(frame: &Frame, a: ActionId) -> TransitionRecord {
        TransitionRecord {
            game_id: "corridor".into(),
            level: 0,
            attempt: 1,
            step: 0,
            before: frame.clone(),
            action: a,
            after: frame.clone(),
            status: GameStatus::Running,
        }
    }

    #[test]
    fn least_tried_in_stable_order() {
        let frame = Frame::from_ascii(0, "###\n#@#\n###").unwrap();
        let legal = [ActionId::UP, ActionId::DOWN, ActionId::LEFT, ActionId::RIGHT];
        let mut e = CountExplorer::default();
        assert_eq!(e.choose(&frame, &legal), ActionId::UP);
        e.observe(&[tried(&frame, ActionId::UP)]);
        assert_eq!(e.choose(&frame, &legal), ActionId::DOWN);
        e.observe(&[tried(&frame, ActionId::DOWN), tried(&frame, ActionId::LEFT), tried(&frame, ActionId::RIGHT)]);
        assert_eq!(e.choose(&frame, &legal), ActionId::UP);
    }

    #[test]
    fn guided_walks_to_the_frontier() {
        let corridor = crate::env::games::corridor();
        let model = crate::modelers::oracle_model(&corridor);
        let start = Frame::from_ascii(0, "######\n#@...#\n######").unwrap();
        let legal = [ActionId::UP, ActionId::DOWN, ActionId::LEFT, ActionId::RIGHT];
        let mut e = CountExplorer::default();
        let mut frame = start.clone();
        // exhaust the start and the cell to its right
        for _ in 0..2 {
            for &a in &legal {
                e.observe(&[tried(&frame, a)]);
            }
            frame = crate::env::apply_action(&frame, ActionId::RIGHT).0;
        }
        assert_eq!(e.choose(&start, &legal), ActionId::UP);
        assert_eq!(e.choose_guided(&model, &start, &legal, 100), ActionId::RIGHT);
        assert_eq!(e.choose_guided(&RuleModel::identity(), &start, &legal, 100), ActionId::UP);
    }

    #[test]
    fn random_is_seeded() {
        let legal = [ActionId::UP, ActionId::DOWN, ActionId::LEFT, ActionId::RIGHT];
        let mut a = RandomExplorer::new(7);
        let mut b = RandomExplorer::new(7);
        let xs: Vec<ActionId> = (0..32).map(|_| a.choose(&legal)).collect();
        let ys: Vec<ActionId> = (0..32).map(|_| b.choose(&legal)).collect();
        assert_eq!(xs, ys);
    }
}
