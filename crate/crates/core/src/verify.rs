//! Per-agent history bookkeeping and the three-step deterministic
//! verification of action consistency.

use serde::Serialize;

use crate::belief::{Agent, CellBelief, Observation};
use crate::error::{Error, Result};
use crate::planning::{consistent_obs_sets, ActionIndex, ObsPartition, ObsSeqSpace, Planner, RealizationEvaluator, Slot};

/// One agent's view of the joint history: what both robots know, what only
/// this agent knows, and which peer observations it is missing.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryLedger {
    agent: Agent,
    common: Vec<Observation>,
    own_unshared: Vec<Observation>,
    peer_missing: ObsSeqSpace,
    last_consistent_time: u32,
}

impl HistoryLedger {
    pub fn new(agent: Agent) -> Self {
        Self { agent, common: Vec::new(), own_unshared: Vec::new(), peer_missing: ObsSeqSpace::default(), last_consistent_time: 0 }
    }

    /// Mirrored ledgers of both agents for a given split of the history.
    pub fn pair(common: &[Observation], unshared_r: &[Observation], unshared_rp: &[Observation]) -> Result<[HistoryLedger; 2]> {
        let mut ledgers = [HistoryLedger::new(Agent::R), HistoryLedger::new(Agent::Rp)];
        for l in &mut ledgers {
            l.common = common.to_vec();
        }
        for (agent, own, other) in [(Agent::R, unshared_r, unshared_rp), (Agent::Rp, unshared_rp, unshared_r)] {
            let l = &mut ledgers[agent.index()];
            for o in own {
                l.record_own(*o)?;
            }
            for o in other {
                l.record_peer_slot(Slot::of(o))?;
            }
        }
        Ok(ledgers)
    }

    pub fn agent(&self) -> Agent {
        self.agent
    }

    pub fn common(&self) -> &[Observation] {
        &self.common
    }

    pub fn own_unshared(&self) -> &[Observation] {
        &self.own_unshared
    }

    pub fn peer_missing(&self) -> &ObsSeqSpace {
        &self.peer_missing
    }

    /// The slots the peer is missing from this agent.
    pub fn own_slots(&self) -> ObsSeqSpace {
        ObsSeqSpace::of_observations(&self.own_unshared)
    }

    pub fn last_consistent_time(&self) -> u32 {
        self.last_consistent_time
    }

    /// Steps since the histories were last identical.
    pub fn p(&self, now: u32) -> u32 {
        now.saturating_sub(self.last_consistent_time)
    }

    pub fn is_fully_shared(&self) -> bool {
        self.own_unshared.is_empty() && self.peer_missing.is_empty()
    }

    pub fn record_own(&mut self, o: Observation) -> Result<()> {
        if o.robot != self.agent {
            return Err(Error::Protocol(format!("{:?} cannot record an observation made by {:?}", self.agent, o.robot)));
        }
        if o.time <= self.last_consistent_time && self.last_consistent_time > 0 {
            return Err(Error::Protocol(format!("observation at t={} predates the last consistent time", o.time)));
        }
        self.own_unshared.push(o);
        Ok(())
    }

    pub fn record_peer_slot(&mut self, slot: Slot) -> Result<()> {
        if slot.robot != self.agent.peer() {
            return Err(Error::Protocol(format!("{:?} expected a slot of {:?}", self.agent, self.agent.peer())));
        }
        self.peer_missing.insert(slot);
        Ok(())
    }

    /// Sends the whole backlog: it becomes common and is returned as payload.
    pub fn take_outgoing(&mut self) -> Vec<Observation> {
        let payload = std::mem::take(&mut self.own_unshared);
        self.common.extend_from_slice(&payload);
        payload
    }

    /// Receives a peer payload, filling the matching missing slots.
    pub fn receive(&mut self, payload: &[Observation]) -> Result<()> {
        for o in payload {
            let slot = Slot::of(o);
            if slot.robot != self.agent.peer() || !self.peer_missing.contains(&slot) {
                return Err(Error::Protocol(format!("payload references unknown slot {slot:?}")));
            }
        }
        for o in payload {
            self.peer_missing.remove(&Slot::of(o));
            self.common.push(*o);
        }
        Ok(())
    }

    /// Marks `now` as the last consistent time when nothing is unshared.
    pub fn refresh_consistency(&mut self, now: u32) {
        if self.is_fully_shared() {
            self.last_consistent_time = now;
        }
    }

    /// History this agent actually holds.
    pub fn full_history(&self) -> Vec<Observation> {
        let mut h = self.common.clone();
        h.extend_from_slice(&self.own_unshared);
        h
    }

    pub fn own_belief(&self, prior: &CellBelief, planner: &Planner<'_>) -> Result<CellBelief> {
        CellBelief::from_history(prior, &self.full_history(), planner.model())
    }
}

/// Which hypothetical the agent reasons over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VerifyStep {
    /// The peer's view given the peer's unknown-to-us observations.
    Peer,
    /// The peer's view of us given our unknown-to-the-peer observations.
    Own,
}

impl VerifyStep {
    pub fn space(self, ledger: &HistoryLedger) -> ObsSeqSpace {
        match self {
            VerifyStep::Peer => ledger.peer_missing.clone(),
            VerifyStep::Own => ledger.own_slots(),
        }
    }
}

pub fn evaluator<'p, 'a>(
    ledger: &HistoryLedger,
    prior: &CellBelief,
    planner: &'p Planner<'a>,
    which: VerifyStep,
) -> Result<RealizationEvaluator<'p, 'a>> {
    RealizationEvaluator::new(planner, prior, &ledger.common, which.space(ledger))
}

/// Partition of one step's realization space, or `None` past the slot cap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepReport {
    pub slots: usize,
    pub partition: Option<ObsPartition>,
    pub evaluated: usize,
}

impl StepReport {
    pub fn consistent_for(&self) -> Option<ActionIndex> {
        self.partition.as_ref().and_then(ObsPartition::consistent_for)
    }

    pub fn is_consistent_for(&self, a: ActionIndex) -> bool {
        self.consistent_for() == Some(a)
    }

    pub fn overflowed(&self) -> bool {
        self.partition.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyOutcome {
    pub agent: Agent,
    pub step1_action: ActionIndex,
    pub step2: StepReport,
    pub step3: StepReport,
    pub mrac: bool,
}

impl VerifyOutcome {
    pub fn evaluated(&self) -> usize {
        self.step2.evaluated + self.step3.evaluated
    }
}

/// Best action over the agent's own belief.
pub fn step1(ledger: &HistoryLedger, prior: &CellBelief, planner: &Planner<'_>) -> Result<ActionIndex> {
    Ok(planner.best_action(&ledger.own_belief(prior, planner)?))
}

fn run_step(ledger: &HistoryLedger, prior: &CellBelief, planner: &Planner<'_>, which: VerifyStep) -> Result<StepReport> {
    let mut eval = evaluator(ledger, prior, planner, which)?;
    let partition = consistent_obs_sets(&mut eval);
    Ok(StepReport { slots: eval.space().len(), partition: Some(partition), evaluated: eval.evaluated() })
}

/// Mimics the peer over every realization of the observations it holds
/// that this agent lacks.
pub fn step2(ledger: &HistoryLedger, prior: &CellBelief, planner: &Planner<'_>) -> Result<StepReport> {
    run_step(ledger, prior, planner, VerifyStep::Peer)
}

/// Mimics the peer mimicking this agent, over every realization of this
/// agent's unshared observations.
pub fn step3(ledger: &HistoryLedger, prior: &CellBelief, planner: &Planner<'_>) -> Result<StepReport> {
    run_step(ledger, prior, planner, VerifyStep::Own)
}

fn capped(result: Result<StepReport>) -> Result<StepReport> {
    match result {
        Err(Error::EnumerationLimit { slots, .. }) => Ok(StepReport { slots, partition: None, evaluated: 0 }),
        other => other,
    }
}

/// All three steps. A step whose slot space exceeds the planner's cap is
/// reported as overflowed and counts as not consistent.
pub fn verify(ledger: &HistoryLedger, prior: &CellBelief, planner: &Planner<'_>) -> Result<VerifyOutcome> {
    let step1_action = step1(ledger, prior, planner)?;
    let step2 = capped(step2(ledger, prior, planner))?;
    let step3 = capped(step3(ledger, prior, planner))?;
    let mrac = step2.is_consistent_for(step1_action) && step3.is_consistent_for(step1_action);
    Ok(VerifyOutcome { agent: ledger.agent, step1_action, step2, step3, mrac })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::ObsModel;
    use crate::planning::ActionSpace;
    use crate::scenario::{Grid, Pose};

    fn obs(t: u32, robot: Agent, cell: usize, v: bool) -> Observation {
        Observation::new(t, robot, cell, v)
    }

    #[test]
    fn ledger_bookkeeping() {
        let [mut r, mut rp] = HistoryLedger::pair(
            &[obs(1, Agent::R, 0, true)],
            &[obs(2, Agent::R, 1, false), obs(3, Agent::R, 2, true)],
            &[obs(2, Agent::Rp, 5, true)],
        )
        .unwrap();
        assert_eq!(r.own_slots().len(), 2);
        assert_eq!(rp.peer_missing().len(), 2);
        let payload = r.take_outgoing();
        assert!(r.own_slots().is_empty());
        rp.receive(&payload[..1]).unwrap();
        assert_eq!(rp.peer_missing().len(), 1);
        rp.receive(&payload[1..]).unwrap();
        assert!(rp.receive(&payload[1..]).is_err());
        let back = rp.take_outgoing();
        r.receive(&back).unwrap();
        assert!(r.is_fully_shared() && rp.is_fully_shared());
        let mut a = r.common().to_vec();
        let mut b = rp.common().to_vec();
        a.sort_by(Observation::canonical_cmp);
        b.sort_by(Observation::canonical_cmp);
        assert_eq!(a, b);
        r.refresh_consistency(3);
        assert_eq!(r.p(5), 2);
        assert!(r.record_own(obs(4, Agent::Rp, 0, true)).is_err());
    }

    #[test]
    fn fully_shared_is_trivially_consistent() {
        let grid = Grid::new(3, 3).unwrap();
        let actions = ActionSpace::new(1).unwrap();
        let planner = Planner::new(grid, ObsModel::default(), [Pose::new(0, 0), Pose::new(2, 2)], &actions);
        let prior = CellBelief::uniform(9, 0.5).unwrap();
        let [r, _] = HistoryLedger::pair(&[obs(1, Agent::R, 0, true)], &[], &[]).unwrap();
        let out = verify(&r, &prior, &planner).unwrap();
        assert!(out.mrac);
        assert_eq!(out.step2.partition.as_ref().unwrap().favored.len(), 1);
    }

    #[test]
    fn overflow_is_inconsistent() {
        let grid = Grid::new(3, 3).unwrap();
        let actions = ActionSpace::new(1).unwrap();
        let planner = Planner::new(grid, ObsModel::default(), [Pose::new(0, 0), Pose::new(2, 2)], &actions).with_slot_cap(1);
        let prior = CellBelief::uniform(9, 0.5).unwrap();
        let own: Vec<_> = (1..=2).map(|t| obs(t, Agent::R, 0, true)).collect();
        let [r, rp] = HistoryLedger::pair(&[], &own, &[]).unwrap();
        let out = verify(&r, &prior, &planner).unwrap();
        assert!(out.step3.overflowed() && !out.mrac);
        let out = verify(&rp, &prior, &planner).unwrap();
        assert!(out.step2.overflowed() && !out.mrac);
        assert!(matches!(step2(&rp, &prior, &planner), Err(Error::EnumerationLimit { slots: 2, cap: 1 })));
    }
}
