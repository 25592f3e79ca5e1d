//! Bounded relaxed verification: partial-sum lower bounds on cumulative
//! likelihood from a prefix of the realization space, complement upper
//! bounds, pruning and adaptive subset growth.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::belief::{Agent, CellBelief};
use crate::enforce::CommDecision;
use crate::error::{Error, Result};
use crate::planning::{ActionIndex, ActionSpace, Planner, RealizationEvaluator};
use crate::relaxed::{check_epsilon, rank_one, relaxed_decision};
use crate::verify::{evaluator, step1, HistoryLedger, VerifyStep};

/// Margin used when comparing a lower bound against an upper bound, so that
/// a decision taken on bounds can never be reversed by rounding in the
/// exact sums.
pub const SEPARATION_MARGIN: f64 = 1e-9;

pub const DEFAULT_M_BATCH: usize = 4;
pub const DEFAULT_INITIAL_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsTable {
    lb: BTreeMap<ActionIndex, f64>,
    evaluated: u64,
    total: u64,
}

impl BoundsTable {
    /// No realizations yet: every lower bound 0, every upper bound 1.
    pub fn empty(total: u64) -> Self {
        Self { lb: BTreeMap::new(), evaluated: 0, total }
    }

    pub fn from_lower(lb: BTreeMap<ActionIndex, f64>, evaluated: u64, total: u64) -> Self {
        Self { lb, evaluated, total }
    }

    pub fn lb(&self, a: ActionIndex) -> f64 {
        self.lb.get(&a).copied().unwrap_or(0.0)
    }

    /// `1 - Σ_{a'≠a} lb_{a'}`, at most 1 and never below `lb_a`.
    pub fn ub(&self, a: ActionIndex) -> f64 {
        let others: f64 = self.lb.iter().filter(|(k, _)| **k != a).map(|(_, v)| v).sum();
        (1.0 - others).min(1.0).max(self.lb(a))
    }

    pub fn lower_bounds(&self) -> &BTreeMap<ActionIndex, f64> {
        &self.lb
    }

    pub fn evaluated(&self) -> u64 {
        self.evaluated
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_complete(&self) -> bool {
        self.evaluated == self.total
    }

    /// Largest upper bound over actions other than `a`, including actions
    /// with no mass yet.
    pub fn max_other_ub(&self, a: ActionIndex, actions: &ActionSpace) -> f64 {
        let keyed_others = self.lb.len() - usize::from(self.lb.contains_key(&a));
        let mut best: f64 = 0.0;
        if actions.len() > keyed_others + 1 {
            let sum: f64 = self.lb.values().sum();
            best = (1.0 - sum).clamp(0.0, 1.0);
        }
        for &k in self.lb.keys() {
            if k != a {
                best = best.max(self.ub(k));
            }
        }
        best
    }

    /// `a` dominates every other action.
    pub fn separated(&self, a: ActionIndex, actions: &ActionSpace) -> bool {
        self.lb(a) > self.max_other_ub(a, actions) + SEPARATION_MARGIN
    }

    /// Exact rank-1 action once every realization is in.
    pub fn exact_best(&self) -> Option<ActionIndex> {
        if self.is_complete() {
            rank_one(&self.lb)
        } else {
            None
        }
    }
}

/// Accumulates favored actions and likelihoods over a growing canonical
/// prefix of one realization space.
#[derive(Debug)]
pub struct PrefixBounds<'e, 'p, 'a> {
    eval: &'e mut RealizationEvaluator<'p, 'a>,
    table: BoundsTable,
}

impl<'e, 'p, 'a> PrefixBounds<'e, 'p, 'a> {
    pub fn new(eval: &'e mut RealizationEvaluator<'p, 'a>) -> Self {
        let total = eval.size();
        Self { eval, table: BoundsTable::empty(total) }
    }

    pub fn table(&self) -> &BoundsTable {
        &self.table
    }

    pub fn into_table(self) -> BoundsTable {
        self.table
    }

    /// Extends the prefix to `n` realizations (capped at the space size).
    pub fn extend_to(&mut self, n: u64) {
        let n = n.min(self.table.total);
        for i in self.table.evaluated..n {
            let a = self.eval.favored(i);
            *self.table.lb.entry(a).or_insert(0.0) += self.eval.likelihood(i);
        }
        self.table.evaluated = self.table.evaluated.max(n);
    }
}

/// Bounds from an explicit realization subset.
pub fn bounds_from_subset(eval: &mut RealizationEvaluator<'_, '_>, subset: &[u64]) -> Result<BoundsTable> {
    let total = eval.size();
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.last().is_some_and(|&i| i >= total) {
        return Err(Error::input("subset refers to realizations outside the space"));
    }
    let mut lb: BTreeMap<ActionIndex, f64> = BTreeMap::new();
    for &i in &sorted {
        *lb.entry(eval.favored(i)).or_insert(0.0) += eval.likelihood(i);
    }
    Ok(BoundsTable::from_lower(lb, sorted.len() as u64, total))
}

/// Actions that no other action's lower bound rules out.
pub fn prune(bounds: &BoundsTable, actions: &ActionSpace) -> Vec<ActionIndex> {
    actions
        .indices()
        .filter(|&a| {
            let ub = bounds.ub(a);
            !bounds.lower_bounds().iter().any(|(&k, &v)| k != a && v > ub + SEPARATION_MARGIN)
        })
        .collect()
}

pub fn initial_size(total: u64, initial_fraction: f64) -> u64 {
    ((initial_fraction * total as f64).ceil() as u64).clamp(1, total.max(1))
}

/// Grows the prefix by `m_batch` until one action separates from all others,
/// falling back to the exact rank-1 action once the space is exhausted.
pub fn adaptive_bounds(
    eval: &mut RealizationEvaluator<'_, '_>,
    initial: u64,
    m_batch: usize,
    actions: &ActionSpace,
) -> Result<(ActionIndex, BoundsTable)> {
    if m_batch == 0 {
        return Err(Error::input("m_batch must be at least 1"));
    }
    let mut acc = PrefixBounds::new(eval);
    acc.extend_to(initial.max(1));
    loop {
        let t = acc.table();
        let survivors = prune(t, actions);
        if let Some(&a) = survivors.iter().find(|&&a| t.separated(a, actions)) {
            return Ok((a, acc.into_table()));
        }
        if let Some(a) = t.exact_best() {
            return Ok((a, acc.into_table()));
        }
        let next = t.evaluated() + m_batch as u64;
        acc.extend_to(next);
    }
}

/// Outcome of resolving one step's half of the relaxed predicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepBounds {
    pub pass: bool,
    pub separated: bool,
    pub bounds: BoundsTable,
}

/// Decides `rank-1(a) ∨ Cl_a > 1-ε` from a growing prefix, stopping as soon
/// as the bounds settle it.
pub fn resolve_step(
    eval: &mut RealizationEvaluator<'_, '_>,
    a: ActionIndex,
    epsilon: f64,
    initial_fraction: f64,
    m_batch: usize,
    actions: &ActionSpace,
) -> Result<StepBounds> {
    if m_batch == 0 {
        return Err(Error::input("m_batch must be at least 1"));
    }
    let threshold = 1.0 - epsilon;
    let mut acc = PrefixBounds::new(eval);
    acc.extend_to(initial_size(acc.table().total(), initial_fraction));
    loop {
        let t = acc.table();
        let separated = t.separated(a, actions);
        if t.is_complete() {
            let pass = t.exact_best() == Some(a) || t.lb(a) > threshold;
            return Ok(StepBounds { pass, separated, bounds: acc.into_table() });
        }
        if t.lb(a) > threshold || separated {
            return Ok(StepBounds { pass: true, separated, bounds: acc.into_table() });
        }
        let ub_a = t.ub(a);
        let outranked = t.lower_bounds().iter().any(|(&k, &v)| k != a && v > ub_a + SEPARATION_MARGIN);
        if outranked && ub_a < threshold - SEPARATION_MARGIN {
            return Ok(StepBounds { pass: false, separated, bounds: acc.into_table() });
        }
        let next = t.evaluated() + m_batch as u64;
        acc.extend_to(next);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimpParams {
    pub epsilon: f64,
    pub m_batch: usize,
    pub initial_fraction: f64,
}

impl Default for SimpParams {
    fn default() -> Self {
        Self { epsilon: 0.0, m_batch: DEFAULT_M_BATCH, initial_fraction: DEFAULT_INITIAL_FRACTION }
    }
}

impl SimpParams {
    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        if self.m_batch == 0 {
            return Err(Error::input("m_batch must be at least 1"));
        }
        if !(self.initial_fraction > 0.0 && self.initial_fraction <= 1.0) {
            return Err(Error::input("initial_fraction must be in (0,1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimpOutcome {
    pub agent: Agent,
    pub step1_action: ActionIndex,
    /// `None` past the slot cap.
    pub step2: Option<StepBounds>,
    /// `None` past the slot cap or when step 2 already failed.
    pub step3: Option<StepBounds>,
    pub declared: bool,
    /// `[lb, ub]` on the probability that the peer selects the same action.
    pub bracket: Option<(f64, f64)>,
    /// Both steps separated and no other action can pass the threshold.
    pub deterministic: bool,
    pub decision: CommDecision,
    pub evaluated: u64,
}

fn capped_step(
    ledger: &HistoryLedger,
    prior: &CellBelief,
    planner: &Planner<'_>,
    which: VerifyStep,
    a: ActionIndex,
    params: &SimpParams,
) -> Result<Option<StepBounds>> {
    match evaluator(ledger, prior, planner, which) {
        Ok(mut eval) => Ok(Some(resolve_step(&mut eval, a, params.epsilon, params.initial_fraction, params.m_batch, planner.actions())?)),
        Err(Error::EnumerationLimit { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Relaxed verification on bounds. The declare/comm outcome and the send and
/// expect flags equal [`crate::relaxed::r_verify`] on the same inputs; the
/// recorded reasons can differ because step 3 is skipped once step 2 fails.
pub fn r_verify_simp(ledger: &HistoryLedger, prior: &CellBelief, planner: &Planner<'_>, params: &SimpParams) -> Result<SimpOutcome> {
    params.validate()?;
    let a = step1(ledger, prior, planner)?;
    let step2 = capped_step(ledger, prior, planner, VerifyStep::Peer, a, params)?;
    let cond2 = step2.as_ref().is_some_and(|s| s.pass);
    let step3 = if cond2 { capped_step(ledger, prior, planner, VerifyStep::Own, a, params)? } else { None };
    let cond3 = step3.as_ref().is_some_and(|s| s.pass);
    let declared = cond2 && cond3;
    let evaluated = [&step2, &step3].iter().filter_map(|s| s.as_ref()).map(|s| s.bounds.evaluated()).sum();
    let bracket = step2.as_ref().filter(|_| declared).map(|s| (s.bounds.lb(a), s.bounds.ub(a)));
    let deterministic = declared
        && [&step2, &step3].iter().all(|s| {
            let s = s.as_ref().expect("declared steps are evaluated");
            s.separated && s.bounds.max_other_ub(a, planner.actions()) < 1.0 - params.epsilon
        });
    Ok(SimpOutcome {
        agent: ledger.agent(),
        step1_action: a,
        step2,
        step3,
        declared,
        bracket,
        deterministic,
        decision: relaxed_decision(cond2, cond3 || !cond2),
        evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bt(pairs: &[(usize, f64)], evaluated: u64, total: u64) -> BoundsTable {
        BoundsTable::from_lower(pairs.iter().map(|&(a, v)| (ActionIndex(a), v)).collect(), evaluated, total)
    }

    #[test]
    fn complement_upper_bound() {
        let t = bt(&[(0, 0.5), (1, 0.2), (2, 0.1)], 3, 8);
        assert_abs_diff_eq!(t.ub(ActionIndex(0)), 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(t.ub(ActionIndex(1)), 0.4, epsilon = 1e-12);
        let e = BoundsTable::empty(4);
        assert_eq!((e.lb(ActionIndex(3)), e.ub(ActionIndex(3))), (0.0, 1.0));
    }

    #[test]
    fn pruning() {
        let actions = ActionSpace::new(1).unwrap();
        assert_eq!(prune(&BoundsTable::empty(4), &actions).len(), 16);
        let t = bt(&[(0, 0.6), (1, 0.2)], 4, 4);
        assert_eq!(prune(&t, &actions), vec![ActionIndex(0)]);
        let t = bt(&[(0, 0.5), (1, 0.5)], 4, 4);
        assert_eq!(prune(&t, &actions), vec![ActionIndex(0), ActionIndex(1)]);
    }

    #[test]
    fn separation_against_unseen_actions() {
        let actions = ActionSpace::new(1).unwrap();
        // 0.3 unassigned mass could all go to an unseen action
        let t = bt(&[(0, 0.6), (1, 0.1)], 2, 8);
        assert_abs_diff_eq!(t.max_other_ub(ActionIndex(0), &actions), 0.4, epsilon = 1e-12);
        assert!(t.separated(ActionIndex(0), &actions));
        let t = bt(&[(0, 0.4), (1, 0.1)], 2, 8);
        assert!(!t.separated(ActionIndex(0), &actions));
    }

    #[test]
    fn params_validation() {
        assert!(SimpParams::default().validate().is_ok());
        assert!(SimpParams { m_batch: 0, ..Default::default() }.validate().is_err());
        assert!(SimpParams { initial_fraction: 0.0, ..Default::default() }.validate().is_err());
        assert!(SimpParams { epsilon: 1.0, ..Default::default() }.validate().is_err());
        assert_eq!(initial_size(16, 0.25), 4);
        assert_eq!(initial_size(4, 0.25), 1);
        assert_eq!(initial_size(1, 0.25), 1);
        assert_eq!(initial_size(2, 1.0), 2);
    }
}
