//! Relaxed verification: cumulative likelihood per action, the ε-MRAC
//! predicate and the probability guarantees that accompany a declaration.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::belief::{Agent, CellBelief, Observation};
use crate::enforce::{CommDecision, TriggerReason};
use crate::error::{Error, Result};
use crate::planning::{argmax_with_ties, ActionIndex, ObsSeqSpace, Planner, RealizationEvaluator, TIE_TOLERANCE};
use crate::verify::{evaluator, step1, HistoryLedger, VerifyStep};

/// Total predictive mass of the realizations favoring each action. Actions
/// favored by no realization are absent and read as 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulativeLikelihoodTable {
    values: BTreeMap<ActionIndex, f64>,
    best: ActionIndex,
}

impl CumulativeLikelihoodTable {
    /// Builds a table from explicit values. The best action is the first
    /// maximum under the shared tie rule.
    pub fn from_values(values: BTreeMap<ActionIndex, f64>) -> Result<Self> {
        if values.values().any(|v| !(0.0..=1.0 + 1e-9).contains(v)) {
            return Err(Error::input("cumulative likelihoods must lie in [0,1]"));
        }
        let best = rank_one(&values).ok_or_else(|| Error::input("empty cumulative likelihood table"))?;
        Ok(Self { values, best })
    }

    /// Accumulates likelihoods in realization order.
    pub fn from_realizations(favored: &[ActionIndex], likelihoods: &[f64]) -> Result<Self> {
        let mut values: BTreeMap<ActionIndex, f64> = BTreeMap::new();
        for (a, l) in favored.iter().zip(likelihoods) {
            *values.entry(*a).or_insert(0.0) += l;
        }
        Self::from_values(values)
    }

    pub fn get(&self, a: ActionIndex) -> f64 {
        self.values.get(&a).copied().unwrap_or(0.0)
    }

    pub fn best(&self) -> ActionIndex {
        self.best
    }

    pub fn best_value(&self) -> f64 {
        self.get(self.best)
    }

    pub fn is_rank_one(&self, a: ActionIndex) -> bool {
        self.best == a
    }

    pub fn values(&self) -> &BTreeMap<ActionIndex, f64> {
        &self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.values().sum()
    }
}

pub(crate) fn rank_one(values: &BTreeMap<ActionIndex, f64>) -> Option<ActionIndex> {
    let keys: Vec<ActionIndex> = values.keys().copied().collect();
    let vals: Vec<f64> = values.values().copied().collect();
    argmax_with_ties(&vals, TIE_TOLERANCE).map(|i| keys[i.0])
}

/// Table over every realization of the evaluator's space.
pub fn table_from_evaluator(eval: &mut RealizationEvaluator<'_, '_>) -> Result<CumulativeLikelihoodTable> {
    let n = eval.size();
    let favored: Vec<ActionIndex> = (0..n).map(|i| eval.favored(i)).collect();
    let likelihoods: Vec<f64> = (0..n).map(|i| eval.likelihood(i)).collect();
    CumulativeLikelihoodTable::from_realizations(&favored, &likelihoods)
}

pub fn cumulative_likelihood(
    planner: &Planner<'_>,
    prior: &CellBelief,
    common: &[Observation],
    space: ObsSeqSpace,
) -> Result<CumulativeLikelihoodTable> {
    let mut eval = RealizationEvaluator::new(planner, prior, common, space)?;
    table_from_evaluator(&mut eval)
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::input(format!("epsilon must be in [0,1), got {epsilon}")));
    }
    Ok(())
}

/// One step's half of the predicate: rank-1, or mass strictly above `1-ε`.
pub fn step_condition(table: &CumulativeLikelihoodTable, a: ActionIndex, epsilon: f64) -> bool {
    table.is_rank_one(a) || table.get(a) > 1.0 - epsilon
}

pub fn epsilon_mrac(step2: &CumulativeLikelihoodTable, step3: &CumulativeLikelihoodTable, a: ActionIndex, epsilon: f64) -> Result<bool> {
    check_epsilon(epsilon)?;
    Ok(step_condition(step2, a, epsilon) && step_condition(step3, a, epsilon))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GuaranteeTriple {
    pub p_ac: f64,
    pub p_not_ac: f64,
    pub p_comm: f64,
}

impl GuaranteeTriple {
    pub fn certain() -> Self {
        Self { p_ac: 1.0, p_not_ac: 0.0, p_comm: 0.0 }
    }
}

/// Probabilities that the peer agrees, declares a different action, or
/// triggers a comm, given that `a_bar` passes the predicate.
pub fn guarantees(
    step2: &CumulativeLikelihoodTable,
    step3: &CumulativeLikelihoodTable,
    a_bar: ActionIndex,
    epsilon: f64,
) -> Result<GuaranteeTriple> {
    if !epsilon_mrac(step2, step3, a_bar, epsilon)? {
        return Err(Error::Contract(format!("action {} does not satisfy the relaxed predicate", a_bar.0)));
    }
    let mut p_not_ac = 0.0;
    let mut p_comm = 0.0;
    for (&a, &cl) in step2.values() {
        if a == a_bar {
            continue;
        }
        if epsilon_mrac(step2, step3, a, epsilon)? {
            p_not_ac += cl;
        } else {
            p_comm += cl;
        }
    }
    Ok(GuaranteeTriple { p_ac: step2.get(a_bar), p_not_ac, p_comm })
}

/// Comm decision when the predicate fails: the agent sends, and expects the
/// peer to send if its own step-2 half failed.
pub(crate) fn relaxed_decision(cond2: bool, cond3: bool) -> CommDecision {
    let mut d = CommDecision::none();
    if cond2 && cond3 {
        return d;
    }
    d.send = true;
    d.reasons.insert(if cond3 { TriggerReason::Step2FavorsOther } else { TriggerReason::Step3Inconsistent });
    if !cond2 {
        d.expect_receive = true;
        d.reasons.insert(TriggerReason::PeerWillSend);
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RVerifyResult {
    Declare { action: ActionIndex, guarantees: GuaranteeTriple },
    TriggerComm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelaxedOutcome {
    pub agent: Agent,
    pub step1_action: ActionIndex,
    /// `None` when the slot space exceeds the cap.
    pub step2: Option<CumulativeLikelihoodTable>,
    pub step3: Option<CumulativeLikelihoodTable>,
    pub result: RVerifyResult,
    pub decision: CommDecision,
    pub evaluated: usize,
}

impl RelaxedOutcome {
    pub fn declared(&self) -> bool {
        matches!(self.result, RVerifyResult::Declare { .. })
    }

    /// Exact probability that the peer's step-1 action equals ours.
    pub fn p_ac(&self) -> Option<f64> {
        self.step2.as_ref().map(|t| t.get(self.step1_action))
    }

    pub fn guarantees(&self) -> Option<GuaranteeTriple> {
        match self.result {
            RVerifyResult::Declare { guarantees, .. } => Some(guarantees),
            RVerifyResult::TriggerComm => None,
        }
    }
}

fn capped_table(
    ledger: &HistoryLedger,
    prior: &CellBelief,
    planner: &Planner<'_>,
    which: VerifyStep,
    evaluated: &mut usize,
) -> Result<Option<CumulativeLikelihoodTable>> {
    match evaluator(ledger, prior, planner, which) {
        Ok(mut eval) => {
            let table = table_from_evaluator(&mut eval)?;
            *evaluated += eval.evaluated();
            Ok(Some(table))
        }
        Err(Error::EnumerationLimit { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Relaxed verification: declare with guarantees iff the step-1 action
/// satisfies the ε-MRAC predicate, otherwise trigger a comm.
pub fn r_verify(ledger: &HistoryLedger, prior: &CellBelief, planner: &Planner<'_>, epsilon: f64) -> Result<RelaxedOutcome> {
    check_epsilon(epsilon)?;
    let a = step1(ledger, prior, planner)?;
    let mut evaluated = 0;
    let step2 = capped_table(ledger, prior, planner, VerifyStep::Peer, &mut evaluated)?;
    let step3 = capped_table(ledger, prior, planner, VerifyStep::Own, &mut evaluated)?;
    let cond2 = step2.as_ref().is_some_and(|t| step_condition(t, a, epsilon));
    let cond3 = step3.as_ref().is_some_and(|t| step_condition(t, a, epsilon));
    let result = match (&step2, &step3) {
        (Some(t2), Some(t3)) if cond2 && cond3 => RVerifyResult::Declare { action: a, guarantees: guarantees(t2, t3, a, epsilon)? },
        _ => RVerifyResult::TriggerComm,
    };
    Ok(RelaxedOutcome { agent: ledger.agent(), step1_action: a, step2, step3, result, decision: relaxed_decision(cond2, cond3), evaluated })
}
