//! Rule induction from observed transitions, and the verification-gated
//! merge loop that shrinks the learned model.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::env::{ActionId, Frame, GameStatus};
use crate::model::{ActionSelector, Pattern, RewriteRule, RuleModel};
use crate::par::Execution;
use crate::trace::TransitionRecord;

/// Rounds of conflict repair allowed per update.
const MAX_ROUNDS: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InductionError {
    #[error("irreconcilable observations: {0}")]
    Irreconcilable(String),
}

fn irreconcilable(why: impl Into<String>) -> InductionError {
    InductionError::Irreconcilable(why.into())
}

/// (transition index, x, y)
type Site = (usize, usize, usize);

#[derive(Debug, Clone)]
struct Transition {
    before: Frame,
    action: ActionId,
    after: Frame,
    status: GameStatus,
    seen: u32,
    /// Priority of the rule firing at each cell, row-major.
    firing: Vec<Option<i64>>,
    /// Ids of predicate patterns matching the after grid.
    hits: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct LearnedRule {
    pub rule: RewriteRule,
    /// Recorded steps (with repetition) on which the rule fired.
    pub support: u32,
    /// Whether the pattern is exactly the window read off its sites.
    literal: bool,
}

#[derive(Debug, Clone)]
pub struct LearnedPredicate {
    pub pattern: Pattern,
    pub support: u32,
    literal: bool,
    id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Predicate {
    Goal,
    Hazard,
}

type MergeKey = (ActionSelector, Pattern, Pattern, u8);

/// A learned [`RuleModel`] with per-rule evidence, kept consistent with
/// every transition observed so far.
///
/// Each distinct transition caches which rule fires at each cell and which
/// predicate patterns match, so an update only re-examines transitions that
/// a changed pattern can touch.
#[derive(Debug, Clone)]
pub struct InducedRuleSet {
    rules: Vec<LearnedRule>,
    goal: Vec<LearnedPredicate>,
    hazard: Vec<LearnedPredicate>,
    transitions: Vec<Transition>,
    index: HashMap<(Frame, ActionId), usize>,
    by_action: BTreeMap<ActionId, Vec<usize>>,
    rule_support: HashMap<i64, u32>,
    pred_support: HashMap<u64, u32>,
    writes: HashMap<i64, u8>,
    kinds: HashMap<u64, Predicate>,
    next_low: i64,
    next_high: i64,
    next_pred: u64,
    model: RuleModel,
    /// Merges found to break an observation. Kept across calls.
    rejected: HashSet<MergeKey>,
    execution: Execution,
}

impl Default for InducedRuleSet {
    fn default() -> Self {
        InducedRuleSet::new()
    }
}

fn distinct<T: Copy + Ord>(items: impl IntoIterator<Item = T>) -> BTreeSet<T> {
    items.into_iter().collect()
}

enum Change {
    Rule(ActionSelector, Pattern),
    Predicate(Pattern),
}

impl InducedRuleSet {
    pub fn new() -> Self {
        InducedRuleSet {
            rules: Vec::new(),
            goal: Vec::new(),
            hazard: Vec::new(),
            transitions: Vec::new(),
            index: HashMap::new(),
            by_action: BTreeMap::new(),
            rule_support: HashMap::new(),
            pred_support: HashMap::new(),
            writes: HashMap::new(),
            kinds: HashMap::new(),
            next_low: 0,
            next_high: -1,
            next_pred: 0,
            model: RuleModel::identity(),
            rejected: HashSet::new(),
            execution: Execution::default(),
        }
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn model(&self) -> &RuleModel {
        &self.model
    }

    /// Rules in priority order, with their support.
    pub fn rules(&self) -> &[LearnedRule] {
        &self.rules
    }

    pub fn goal(&self) -> &[LearnedPredicate] {
        &self.goal
    }

    pub fn hazard(&self) -> &[LearnedPredicate] {
        &self.hazard
    }

    /// Distinct (frame, action) transitions observed.
    pub fn transition_count(&self) -> usize {
        self.transitions.len()
    }

    /// Candidate merges not yet rejected, closest pairs first, as indices
    /// into [`rules`](Self::rules).
    pub fn merge_queue(&self) -> Vec<(usize, usize)> {
        self.candidates()
    }

    pub fn description_length(&self) -> u64 {
        self.model.description_length()
    }

    fn rebuild(&mut self) {
        self.rules.sort_by_key(|r| r.rule.priority);
        self.writes = self.rules.iter().map(|r| (r.rule.priority, r.rule.write)).collect();
        self.kinds = self
            .goal
            .iter()
            .map(|p| (p.id, Predicate::Goal))
            .chain(self.hazard.iter().map(|p| (p.id, Predicate::Hazard)))
            .collect();
        self.model = RuleModel::new(
            self.rules.iter().map(|r| r.rule.clone()).collect(),
            true,
            self.goal.iter().map(|p| p.pattern.clone()).collect(),
            self.hazard.iter().map(|p| p.pattern.clone()).collect(),
        )
        .expect("learned priorities are unique");
    }

    fn low(&mut self) -> i64 {
        self.next_low += 1;
        self.next_low - 1
    }

    fn high(&mut self) -> i64 {
        self.next_high -= 1;
        self.next_high + 1
    }

    fn pred_id(&mut self) -> u64 {
        self.next_pred += 1;
        self.next_pred - 1
    }

    fn predicates(&self, kind: Predicate) -> &[LearnedPredicate] {
        match kind {
            Predicate::Goal => &self.goal,
            Predicate::Hazard => &self.hazard,
        }
    }

    fn predicates_mut(&mut self, kind: Predicate) -> &mut Vec<LearnedPredicate> {
        match kind {
            Predicate::Goal => &mut self.goal,
            Predicate::Hazard => &mut self.hazard,
        }
    }

    fn compute_firing(&self, t: &Transition) -> Vec<Option<i64>> {
        let mut out = Vec::with_capacity(t.before.cells().len());
        for y in 0..t.before.height() {
            for x in 0..t.before.width() {
                out.push(
                    self.model
                        .firing_rule(&t.before, t.action, x, y)
                        .map(|i| self.model.rules()[i].priority),
                );
            }
        }
        out
    }

    fn compute_hits(&self, after: &Frame) -> Vec<u64> {
        self.goal
            .iter()
            .chain(self.hazard.iter())
            .filter(|p| p.pattern.matches_anywhere(after))
            .map(|p| p.id)
            .collect()
    }

    fn set_firing(&mut self, t: usize, firing: Vec<Option<i64>>) {
        let tr = &mut self.transitions[t];
        for p in distinct(tr.firing.iter().flatten().copied()) {
            let s = self.rule_support.entry(p).or_default();
            *s = s.saturating_sub(tr.seen);
        }
        for p in distinct(firing.iter().flatten().copied()) {
            *self.rule_support.entry(p).or_default() += tr.seen;
        }
        tr.firing = firing;
    }

    fn set_hits(&mut self, t: usize, hits: Vec<u64>) {
        let tr = &mut self.transitions[t];
        for &id in &tr.hits {
            let s = self.pred_support.entry(id).or_default();
            *s = s.saturating_sub(tr.seen);
        }
        for &id in &hits {
            *self.pred_support.entry(id).or_default() += tr.seen;
        }
        tr.hits = hits;
    }

    fn refresh(&mut self, t: usize) {
        let firing = self.compute_firing(&self.transitions[t]);
        let hits = self.compute_hits(&self.transitions[t].after);
        self.set_firing(t, firing);
        self.set_hits(t, hits);
    }

    fn status_of_hits(&self, hits: &[u64]) -> GameStatus {
        status_from(hits.iter().filter_map(|id| self.kinds.get(id).copied()))
    }

    fn grid_ok(&self, t: &Transition) -> bool {
        let before = t.before.cells();
        t.after.cells().iter().enumerate().all(|(c, &expected)| {
            let predicted = t.firing[c].map_or(before[c], |p| self.writes[&p]);
            predicted == expected
        })
    }

    /// Adds the records and repairs the model until it reproduces every
    /// transition seen so far. On error `self` is unchanged.
    pub fn induce_update(&self, records: &[TransitionRecord]) -> Result<InducedRuleSet, InductionError> {
        let mut next = self.clone();
        let mut fresh = BTreeSet::new();
        for r in records.iter().filter(|r| !r.action.is_reset()) {
            let key = (r.before.clone(), r.action);
            match next.index.get(&key) {
                Some(&i) => {
                    let t = &mut next.transitions[i];
                    if t.after != r.after || !t.status.agrees_with(r.status) && !r.status.agrees_with(t.status) {
                        return Err(irreconcilable(format!(
                            "the same frame and action {} led to different outcomes",
                            r.action
                        )));
                    }
                    t.seen += 1;
                    for p in distinct(t.firing.iter().flatten().copied()) {
                        *next.rule_support.entry(p).or_default() += 1;
                    }
                    for &id in &t.hits {
                        *next.pred_support.entry(id).or_default() += 1;
                    }
                }
                None => {
                    let i = next.transitions.len();
                    next.index.insert(key, i);
                    next.by_action.entry(r.action).or_default().push(i);
                    next.transitions.push(Transition {
                        before: r.before.clone(),
                        action: r.action,
                        after: r.after.clone(),
                        status: r.status,
                        seen: 1,
                        firing: vec![None; r.before.cells().len()],
                        hits: Vec::new(),
                    });
                    fresh.insert(i);
                }
            }
        }
        next.repair(fresh)?;
        next.prune();
        Ok(next)
    }

    fn repair(&mut self, mut dirty: BTreeSet<usize>) -> Result<(), InductionError> {
        for _ in 0..MAX_ROUNDS {
            if dirty.is_empty() {
                return Ok(());
            }
            for &t in &dirty {
                self.refresh(t);
            }
            let failing: BTreeSet<usize> = dirty
                .iter()
                .copied()
                .filter(|&t| {
                    let tr = &self.transitions[t];
                    !self.grid_ok(tr) || !self.status_of_hits(&tr.hits).agrees_with(tr.status)
                })
                .collect();
            if failing.is_empty() {
                return Ok(());
            }
            let changes = self.repair_round(&failing)?;
            dirty = failing;
            dirty.extend(self.affected(&changes));
        }
        Err(irreconcilable("conflict repair did not converge"))
    }

    /// Transitions whose cached firing or hits a changed pattern can touch.
    fn affected(&self, changes: &[Change]) -> Vec<usize> {
        let all: Vec<usize> = (0..self.transitions.len()).collect();
        let touched = self.execution.map(&all, |&t| {
            let tr = &self.transitions[t];
            changes.iter().any(|c| match c {
                Change::Rule(sel, p) => sel.applies_to(tr.action) && p.matches_anywhere(&tr.before),
                Change::Predicate(p) => p.matches_anywhere(&tr.after),
            })
        });
        all.into_iter().filter(|&t| touched[t]).collect()
    }

    /// Fixes the failing transitions: adds rules for unexplained changes,
    /// splits conflicting rules and predicate patterns, adds predicate
    /// patterns for unexplained statuses.
    fn repair_round(&mut self, failing: &BTreeSet<usize>) -> Result<Vec<Change>, InductionError> {
        let mut additions: Vec<(ActionId, Pattern, u8)> = Vec::new();
        let mut rule_conflicts: BTreeSet<i64> = BTreeSet::new();
        let mut new_preds: Vec<(Predicate, Pattern)> = Vec::new();
        let mut pred_conflicts: BTreeSet<u64> = BTreeSet::new();
        for &t in failing {
            let tr = &self.transitions[t];
            let w = tr.before.width();
            for (c, &expected) in tr.after.cells().iter().enumerate() {
                let (x, y) = (c % w, c / w);
                match tr.firing[c] {
                    Some(p) if self.writes[&p] != expected => {
                        rule_conflicts.insert(p);
                    }
                    None if expected != tr.before.cells()[c] => {
                        additions.push((tr.action, Pattern::window(&tr.before, x, y, 3), expected));
                    }
                    _ => {}
                }
            }
            let goal_hits: Vec<u64> =
                tr.hits.iter().copied().filter(|id| self.kinds[id] == Predicate::Goal).collect();
            let hazard_hits: Vec<u64> =
                tr.hits.iter().copied().filter(|id| self.kinds[id] == Predicate::Hazard).collect();
            let mut wanted = |kind: Predicate| {
                for (x, y) in tr.before.diff_cells(&tr.after) {
                    new_preds.push((kind, Pattern::window(&tr.after, x, y, 3)));
                }
            };
            match tr.status {
                s if s.is_win() => {
                    if goal_hits.is_empty() {
                        wanted(Predicate::Goal);
                    }
                }
                GameStatus::GameOver => {
                    pred_conflicts.extend(&goal_hits);
                    if goal_hits.is_empty() && hazard_hits.is_empty() {
                        wanted(Predicate::Hazard);
                    }
                }
                _ => {
                    pred_conflicts.extend(&goal_hits);
                    if goal_hits.is_empty() {
                        pred_conflicts.extend(&hazard_hits);
                    }
                }
            }
        }
        if additions.is_empty() && rule_conflicts.is_empty() && new_preds.is_empty() && pred_conflicts.is_empty() {
            return Err(irreconcilable(format!(
                "{} transitions cannot be explained",
                failing.len()
            )));
        }
        let mut changes = Vec::new();
        for p in rule_conflicts {
            let i = self.rules.iter().position(|r| r.rule.priority == p).expect("cached rule exists");
            let old = self.rules.remove(i);
            changes.push(Change::Rule(old.rule.selector, old.rule.pattern.clone()));
            let split = self.split_rule(old)?;
            changes.extend(split.iter().map(|r| Change::Rule(r.rule.selector, r.rule.pattern.clone())));
            self.rules.extend(split);
        }
        let mut seen: HashSet<(ActionSelector, Pattern)> =
            self.rules.iter().map(|r| (r.rule.selector, r.rule.pattern.clone())).collect();
        for (action, pattern, write) in additions {
            if seen.insert((ActionSelector::Only(action), pattern.clone())) {
                let priority = self.low();
                changes.push(Change::Rule(ActionSelector::Only(action), pattern.clone()));
                self.rules.push(LearnedRule {
                    rule: RewriteRule::new(action, pattern, write, priority),
                    support: 0,
                    literal: true,
                });
            }
        }
        for id in pred_conflicts {
            let kind = self.kinds[&id];
            let list = self.predicates_mut(kind);
            let i = list.iter().position(|p| p.id == id).expect("cached predicate exists");
            let old = list.remove(i);
            changes.push(Change::Predicate(old.pattern.clone()));
            let split = self.split_predicate(old)?;
            changes.extend(split.iter().map(|p| Change::Predicate(p.pattern.clone())));
            self.predicates_mut(kind).extend(split);
        }
        for (kind, pattern) in new_preds {
            if self.predicates(kind).iter().any(|p| p.pattern == pattern) {
                continue;
            }
            let id = self.pred_id();
            changes.push(Change::Predicate(pattern.clone()));
            self.predicates_mut(kind).push(LearnedPredicate {
                pattern,
                support: 0,
                literal: true,
                id,
            });
        }
        self.rebuild();
        Ok(changes)
    }

    /// Next window size for a conflicting pattern: a generalized pattern
    /// falls back to literal windows of its own size, a literal one widens.
    fn next_size(pattern: &Pattern, literal: bool) -> Result<usize, InductionError> {
        match (literal, pattern.size()) {
            (false, s) => Ok(s),
            (true, 1) | (true, 3) => Ok(5),
            (true, _) => Err(irreconcilable(format!(
                "a {0}x{0} context is not enough to separate the observations",
                pattern.size()
            ))),
        }
    }

    /// Cells where the rule fires and predicts correctly.
    fn rule_sites(&self, priority: i64, write: u8) -> Vec<Site> {
        let mut sites = Vec::new();
        for (t, tr) in self.transitions.iter().enumerate() {
            let w = tr.before.width();
            for (c, f) in tr.firing.iter().enumerate() {
                if *f == Some(priority) && tr.after.cells()[c] == write {
                    sites.push((t, c % w, c / w));
                }
            }
        }
        sites
    }

    fn split_rule(&mut self, old: LearnedRule) -> Result<Vec<LearnedRule>, InductionError> {
        let size = Self::next_size(&old.rule.pattern, old.literal)?;
        let mut windows: BTreeSet<Vec<Option<u8>>> = BTreeSet::new();
        let mut out = Vec::new();
        for (t, x, y) in self.rule_sites(old.rule.priority, old.rule.write) {
            let w = Pattern::window(&self.transitions[t].before, x, y, size);
            if windows.insert(w.cells().to_vec()) {
                out.push(w);
            }
        }
        Ok(out
            .into_iter()
            .map(|pattern| LearnedRule {
                rule: RewriteRule {
                    selector: old.rule.selector,
                    pattern,
                    write: old.rule.write,
                    priority: self.high(),
                },
                support: 0,
                literal: true,
            })
            .collect())
    }

    fn split_predicate(&mut self, old: LearnedPredicate) -> Result<Vec<LearnedPredicate>, InductionError> {
        let size = Self::next_size(&old.pattern, old.literal)?;
        let kind = self.kinds[&old.id];
        let correct = |t: &&Transition| match kind {
            Predicate::Goal => t.status.is_win(),
            Predicate::Hazard => t.status == GameStatus::GameOver,
        };
        let mut patterns: Vec<Pattern> = Vec::new();
        for tr in self.transitions.iter().filter(|t| t.hits.contains(&old.id)).filter(correct) {
            for y in 0..tr.after.height() {
                for x in 0..tr.after.width() {
                    if old.pattern.matches_at(&tr.after, x, y) {
                        let w = Pattern::window(&tr.after, x, y, size);
                        if !patterns.contains(&w) {
                            patterns.push(w);
                        }
                    }
                }
            }
        }
        Ok(patterns
            .into_iter()
            .map(|pattern| LearnedPredicate {
                pattern,
                support: 0,
                literal: true,
                id: self.pred_id(),
            })
            .collect())
    }

    /// Drops rules and predicate patterns that fire on no observation and
    /// copies support counts onto the survivors.
    fn prune(&mut self) {
        let rs = &self.rule_support;
        let ps = &self.pred_support;
        let before = (self.rules.len(), self.goal.len(), self.hazard.len());
        self.rules.retain(|r| rs.get(&r.rule.priority).copied().unwrap_or(0) > 0);
        self.goal.retain(|p| ps.get(&p.id).copied().unwrap_or(0) > 0);
        self.hazard.retain(|p| ps.get(&p.id).copied().unwrap_or(0) > 0);
        for r in &mut self.rules {
            r.support = rs[&r.rule.priority];
        }
        for p in self.goal.iter_mut().chain(self.hazard.iter_mut()) {
            p.support = ps[&p.id];
        }
        self.rule_support.retain(|_, s| *s > 0);
        self.pred_support.retain(|_, s| *s > 0);
        if before != (self.rules.len(), self.goal.len(), self.hazard.len()) {
            self.rebuild();
        }
    }

    fn merge_key(a: &RewriteRule, b: &RewriteRule) -> MergeKey {
        (a.selector, a.pattern.clone(), b.pattern.clone(), a.write)
    }

    /// Same-action, same-write, same-shape pairs ordered by pattern
    /// distance, then by position.
    fn candidates(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for i in 0..self.rules.len() {
            for j in i + 1..self.rules.len() {
                let (a, b) = (&self.rules[i].rule, &self.rules[j].rule);
                if a.selector != b.selector || a.write != b.write {
                    continue;
                }
                let Some(d) = a.pattern.distance(&b.pattern) else {
                    continue;
                };
                if self.rejected.contains(&Self::merge_key(a, b)) {
                    continue;
                }
                pairs.push((d, i, j));
            }
        }
        pairs.sort_unstable();
        pairs.into_iter().map(|(_, i, j)| (i, j)).collect()
    }

    /// The firing the merged rule would produce at cells it matches:
    /// `None` keeps the cached rule, which fires before it.
    fn merged_fires(cached: Option<i64>, replaced: (i64, i64), priority: i64) -> bool {
        !matches!(cached, Some(p) if p != replaced.0 && p != replaced.1 && p < priority)
    }

    /// Whether replacing the rules with priorities `replaced` by `merged`
    /// keeps every recorded transition reproduced. Only cells the merged
    /// pattern matches can change their prediction.
    fn merge_holds(&self, replaced: (i64, i64), merged: &RewriteRule) -> bool {
        let ts: Vec<usize> = self
            .by_action
            .iter()
            .filter(|(a, _)| merged.selector.applies_to(**a))
            .flat_map(|(_, ts)| ts.iter().copied())
            .collect();
        self.execution.all(&ts, |&t| {
            let tr = &self.transitions[t];
            let w = tr.before.width();
            (0..tr.before.cells().len()).all(|c| {
                let (x, y) = (c % w, c / w);
                !merged.pattern.matches_at(&tr.before, x, y)
                    || !Self::merged_fires(tr.firing[c], replaced, merged.priority)
                    || tr.after.cells()[c] == merged.write
            })
        })
    }

    fn apply_merge(&mut self, i: usize, j: usize, merged: RewriteRule) {
        let replaced = (self.rules[i].rule.priority, self.rules[j].rule.priority);
        let ts: Vec<usize> = self
            .by_action
            .iter()
            .filter(|(a, _)| merged.selector.applies_to(**a))
            .flat_map(|(_, ts)| ts.iter().copied())
            .collect();
        for t in ts {
            let tr = &self.transitions[t];
            let w = tr.before.width();
            let mut firing = tr.firing.clone();
            let mut changed = false;
            for (c, f) in firing.iter_mut().enumerate() {
                if merged.pattern.matches_at(&tr.before, c % w, c / w) && Self::merged_fires(*f, replaced, merged.priority) {
                    changed |= *f != Some(merged.priority);
                    *f = Some(merged.priority);
                }
            }
            if changed {
                self.set_firing(t, firing);
            }
        }
        self.rules.remove(j);
        self.rules.remove(i);
        self.rules.push(LearnedRule {
            rule: merged,
            support: 0,
            literal: false,
        });
        self.rebuild();
    }

    fn predicate_merge_holds(&self, kind: Predicate, replaced: (u64, u64), merged: &Pattern) -> bool {
        self.execution.all(&self.transitions, |tr| {
            let mut kinds: Vec<Predicate> = tr
                .hits
                .iter()
                .filter(|&&id| id != replaced.0 && id != replaced.1)
                .map(|id| self.kinds[id])
                .collect();
            if merged.matches_anywhere(&tr.after) {
                kinds.push(kind);
            }
            status_from(kinds).agrees_with(tr.status)
        })
    }

    fn apply_predicate_merge(&mut self, kind: Predicate, i: usize, j: usize, merged: Pattern) {
        let list = self.predicates(kind);
        let replaced = (list[i].id, list[j].id);
        let id = self.pred_id();
        for t in 0..self.transitions.len() {
            let tr = &self.transitions[t];
            let mut hits: Vec<u64> =
                tr.hits.iter().copied().filter(|&h| h != replaced.0 && h != replaced.1).collect();
            if merged.matches_anywhere(&tr.after) {
                hits.push(id);
            }
            if hits != tr.hits {
                self.set_hits(t, hits);
            }
        }
        let list = self.predicates_mut(kind);
        list.remove(j);
        list.remove(i);
        list.push(LearnedPredicate {
            pattern: merged,
            support: 0,
            literal: false,
            id,
        });
        self.rebuild();
    }

    /// Greedy verification-gated merging over rules and predicate
    /// patterns, against every transition observed so far. Never increases
    /// the description length.
    pub fn refactor(&self) -> InducedRuleSet {
        let mut next = self.clone();
        'outer: loop {
            for (i, j) in next.candidates() {
                let (a, b) = (&next.rules[i].rule, &next.rules[j].rule);
                let key = Self::merge_key(a, b);
                let Some(pattern) = a.pattern.merge(&b.pattern) else {
                    next.rejected.insert(key);
                    continue;
                };
                let merged = RewriteRule {
                    selector: a.selector,
                    pattern,
                    write: a.write,
                    priority: a.priority.min(b.priority),
                };
                if next.merge_holds((a.priority, b.priority), &merged) {
                    next.apply_merge(i, j, merged);
                    continue 'outer;
                }
                next.rejected.insert(key);
            }
            break;
        }
        for kind in [Predicate::Goal, Predicate::Hazard] {
            while next.merge_one_predicate(kind) {}
        }
        next.prune();
        next
    }

    fn merge_one_predicate(&mut self, kind: Predicate) -> bool {
        let list = self.predicates(kind);
        let mut pairs = Vec::new();
        for i in 0..list.len() {
            for j in i + 1..list.len() {
                if let Some(d) = list[i].pattern.distance(&list[j].pattern) {
                    pairs.push((d, i, j));
                }
            }
        }
        pairs.sort_unstable();
        for (_, i, j) in pairs {
            let list = self.predicates(kind);
            let Some(merged) = list[i].pattern.merge(&list[j].pattern) else {
                continue;
            };
            if self.predicate_merge_holds(kind, (list[i].id, list[j].id), &merged) {
                self.apply_predicate_merge(kind, i, j, merged);
                return true;
            }
        }
        false
    }
}

fn status_from(kinds: impl IntoIterator<Item = Predicate>) -> GameStatus {
    let mut hazard = false;
    for k in kinds {
        match k {
            Predicate::Goal => return GameStatus::LevelCompleted,
            Predicate::Hazard => hazard = true,
        }
    }
    if hazard {
        GameStatus::GameOver
    } else {
        GameStatus::Running
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::palette::*;
    use crate::verify::verify_world_model;

    fn rec(step: u32, before: &str, action: ActionId, after: &str, status: GameStatus) -> TransitionRecord {
        TransitionRecord {
            game_id: "t".into(),
            level: 0,
            attempt: 1,
            step,
            before: Frame::from_ascii(0, before).unwrap(),
            action,
            after: Frame::from_ascii(0, after).unwrap(),
            status,
        }
    }

    #[test]
    fn single_move_gives_two_rules() {
        let r = rec(0, "#####\n#@..#\n#####", ActionId::RIGHT, "#####\n#.@.#\n#####", GameStatus::Running);
        let set = InducedRuleSet::new().induce_update(std::slice::from_ref(&r)).unwrap();
        assert_eq!(set.rules().len(), 2);
        assert!(set.rules().iter().all(|r| r.support == 1));
        let writes: BTreeSet<u8> = set.rules().iter().map(|r| r.rule.write).collect();
        assert_eq!(writes, BTreeSet::from([FLOOR, AGENT]));
        let again = set.induce_update(std::slice::from_ref(&r)).unwrap();
        assert_eq!(again.rules().len(), 2);
        assert!(again.rules().iter().all(|r| r.support == 2));
        assert!(verify_world_model(again.model(), &[r]).unwrap().pass);
    }

    #[test]
    fn conflicting_contexts_widen_or_fail() {
        // identical 3x3 contexts; the key is inside both 5x5 windows
        let moves = rec(
            0,
            "#######\n#.....#\n#.....#\n#..@..#\n#######",
            ActionId::RIGHT,
            "#######\n#.....#\n#.....#\n#...@.#\n#######",
            GameStatus::Running,
        );
        let stays = rec(
            0,
            "#######\n#.k...#\n#.....#\n#..@..#\n#######",
            ActionId::RIGHT,
            "#######\n#.k...#\n#.....#\n#..@..#\n#######",
            GameStatus::Running,
        );
        let set = InducedRuleSet::new().induce_update(&[moves.clone(), stays.clone()]).unwrap();
        assert!(set.rules().iter().any(|r| r.rule.pattern.size() == 5));
        assert!(verify_world_model(set.model(), &[moves, stays]).unwrap().pass);

        let a = rec(0, "#######\n#..@..#\n#######", ActionId::RIGHT, "#######\n#...@.#\n#######", GameStatus::Running);
        let b = rec(0, "########\n#..@..##\n########", ActionId::RIGHT, "########\n#..@..##\n########", GameStatus::Running);
        // identical 5x5 windows around the agent, different outcomes
        let err = InducedRuleSet::new().induce_update(&[a, b]).unwrap_err();
        assert!(matches!(err, InductionError::Irreconcilable(_)));
    }

    #[test]
    fn predicates_follow_status() {
        let win = rec(0, "#####\n#@G.#\n#####", ActionId::RIGHT, "#####\n#.+.#\n#####", GameStatus::LevelCompleted);
        let die = rec(0, "#####\n#@X.#\n#####", ActionId::RIGHT, "#####\n#.!.#\n#####", GameStatus::GameOver);
        let set = InducedRuleSet::new().induce_update(&[win.clone(), die.clone()]).unwrap();
        assert!(!set.goal().is_empty() && !set.hazard().is_empty());
        assert!(verify_world_model(set.model(), &[win, die]).unwrap().pass);
    }

    #[test]
    fn refactor_merges_irrelevant_corner() {
        let a = rec(0, "#####\n#@..#\n#####", ActionId::RIGHT, "#####\n#.@.#\n#####", GameStatus::Running);
        let b = rec(0, "#####\n#@..#\n#.###", ActionId::RIGHT, "#####\n#.@.#\n#.###", GameStatus::Running);
        let set = InducedRuleSet::new().induce_update(&[a.clone(), b.clone()]).unwrap();
        let before = set.description_length();
        let merged = set.refactor();
        assert!(merged.description_length() < before);
        assert!(verify_world_model(merged.model(), &[a, b]).unwrap().pass);
        let fixed = merged.refactor();
        assert_eq!(fixed.description_length(), merged.description_length());
    }

    #[test]
    fn refactor_rejects_hazard_overgeneralization() {
        let walk = rec(0, "#####\n#@..#\n#####", ActionId::RIGHT, "#####\n#.@.#\n#####", GameStatus::Running);
        let die = rec(0, "#####\n#@X.#\n#####", ActionId::RIGHT, "#####\n#.!.#\n#####", GameStatus::GameOver);
        let set = InducedRuleSet::new().induce_update(&[walk.clone(), die.clone()]).unwrap();
        let merged = set.refactor();
        assert!(verify_world_model(merged.model(), &[walk, die]).unwrap().pass);
        assert!(merged.description_length() <= set.description_length());
        // the cell entered writes '@' on floor and '!' on a hazard: never one rule
        assert!(merged.model().rules().iter().all(|r| r.write != AGENT || r.pattern.anchor_symbol() == Some(FLOOR)));
    }
}
