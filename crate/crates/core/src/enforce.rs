//! Self-triggered communication: trigger conditions, message application and
//! the synchronous round loop that runs until both agents settle.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::belief::{Agent, CellBelief, Observation};
use crate::error::{Error, Result};
use crate::planning::{ActionIndex, Planner};
use crate::verify::{verify, HistoryLedger, VerifyOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum TriggerReason {
    /// Own observations do not uniformly favor the step-1 action.
    Step3Inconsistent,
    /// The peer uniformly favors another action.
    Step2FavorsOther,
    /// The peer is expected to send.
    PeerWillSend,
    /// Nobody with a trigger had anything to send, so every backlog is flushed.
    BacklogFlush,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommMessage {
    pub sender: Agent,
    pub payload: Vec<Observation>,
    pub reason: TriggerReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CommDecision {
    pub send: bool,
    pub expect_receive: bool,
    pub reasons: BTreeSet<TriggerReason>,
}

impl CommDecision {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn send_reason(&self) -> TriggerReason {
        [TriggerReason::Step3Inconsistent, TriggerReason::Step2FavorsOther]
            .into_iter()
            .find(|r| self.reasons.contains(r))
            .unwrap_or(TriggerReason::BacklogFlush)
    }
}

/// Trigger conditions evaluated on a failed verification.
pub fn comm_decision(outcome: &VerifyOutcome) -> CommDecision {
    if outcome.mrac {
        return CommDecision::none();
    }
    let a = outcome.step1_action;
    let mut d = CommDecision::none();
    if !outcome.step3.is_consistent_for(a) {
        d.send = true;
        d.reasons.insert(TriggerReason::Step3Inconsistent);
    }
    if outcome.step2.consistent_for().is_some_and(|other| other != a) {
        d.send = true;
        d.reasons.insert(TriggerReason::Step2FavorsOther);
    }
    if !outcome.step2.is_consistent_for(a) {
        d.expect_receive = true;
        d.reasons.insert(TriggerReason::PeerWillSend);
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Incoming,
    Outgoing,
}

/// Moves a payload into the common history of one ledger.
pub fn apply_comm(ledger: &mut HistoryLedger, msg: &CommMessage, direction: Direction) -> Result<()> {
    match direction {
        Direction::Outgoing => {
            if msg.sender != ledger.agent() || msg.payload.as_slice() != ledger.own_unshared() {
                return Err(Error::Protocol("outgoing payload must be the sender's whole backlog".into()));
            }
            ledger.take_outgoing();
            Ok(())
        }
        Direction::Incoming => {
            if msg.sender != ledger.agent().peer() {
                return Err(Error::Protocol("incoming message from self".into()));
            }
            ledger.receive(&msg.payload)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Transmission {
    pub time: u32,
    pub sender: Agent,
    pub size: usize,
}

/// The link between the robots: open except at scheduled timesteps.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Channel {
    restrictions: BTreeSet<u32>,
    log: Vec<Transmission>,
}

impl Channel {
    pub fn new(restrictions: BTreeSet<u32>) -> Self {
        Self { restrictions, log: Vec::new() }
    }

    pub fn is_open(&self, time: u32) -> bool {
        !self.restrictions.contains(&time)
    }

    pub fn log(&self) -> &[Transmission] {
        &self.log
    }

    /// Delivers one message between ledgers, or returns `false` if blocked.
    pub fn transmit(&mut self, time: u32, ledgers: &mut [HistoryLedger; 2], sender: Agent, reason: TriggerReason) -> Result<bool> {
        if !self.is_open(time) {
            return Ok(false);
        }
        let msg = CommMessage { sender, payload: ledgers[sender.index()].own_unshared().to_vec(), reason };
        apply_comm(&mut ledgers[sender.peer().index()], &msg, Direction::Incoming)?;
        apply_comm(&mut ledgers[sender.index()], &msg, Direction::Outgoing)?;
        self.log.push(Transmission { time, sender, size: msg.payload.len() });
        Ok(true)
    }
}

/// What one agent concludes in a round.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict<T> {
    pub action: ActionIndex,
    pub settled: bool,
    pub decision: CommDecision,
    pub detail: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome<T> {
    pub actions: [ActionIndex; 2],
    pub comms: u32,
    pub rounds: u32,
    pub forced: bool,
    pub verdicts: [Verdict<T>; 2],
}

impl<T> SessionOutcome<T> {
    pub fn agreed(&self) -> bool {
        self.actions[0] == self.actions[1]
    }
}

/// Synchronous rounds: both agents judge, and unless both settle, the
/// triggered senders transmit their backlogs and both judge again. If no
/// triggered sender has a backlog, every agent with one sends. A blocked
/// channel ends the session with each agent's own action.
pub fn run_session<T, F>(ledgers: &mut [HistoryLedger; 2], channel: &mut Channel, time: u32, mut judge: F) -> Result<SessionOutcome<T>>
where
    F: FnMut(&HistoryLedger) -> Result<Verdict<T>>,
{
    let mut comms = 0;
    let mut rounds = 0;
    loop {
        let verdicts = [judge(&ledgers[0])?, judge(&ledgers[1])?];
        let actions = [verdicts[0].action, verdicts[1].action];
        if verdicts.iter().all(|v| v.settled) {
            return Ok(SessionOutcome { actions, comms, rounds, forced: false, verdicts });
        }
        let has_backlog = |a: Agent| !ledgers[a.index()].own_unshared().is_empty();
        let mut senders: Vec<(Agent, TriggerReason)> = Agent::BOTH
            .into_iter()
            .filter(|&a| verdicts[a.index()].decision.send && has_backlog(a))
            .map(|a| (a, verdicts[a.index()].decision.send_reason()))
            .collect();
        if senders.is_empty() {
            senders = Agent::BOTH.into_iter().filter(|&a| has_backlog(a)).map(|a| (a, TriggerReason::BacklogFlush)).collect();
        }
        if senders.is_empty() {
            return Err(Error::Contract("agents failed to settle with fully shared histories".into()));
        }
        if !channel.is_open(time) {
            return Ok(SessionOutcome { actions, comms, rounds, forced: true, verdicts });
        }
        for (sender, reason) in senders {
            channel.transmit(time, ledgers, sender, reason)?;
            comms += 1;
        }
        rounds += 1;
    }
}

/// Deterministic enforcement: repeat verification until both agents verify
/// action consistency.
pub fn enforce(
    ledgers: &mut [HistoryLedger; 2],
    channel: &mut Channel,
    time: u32,
    prior: &CellBelief,
    planner: &Planner<'_>,
) -> Result<SessionOutcome<VerifyOutcome>> {
    run_session(ledgers, channel, time, |ledger| {
        let outcome = verify(ledger, prior, planner)?;
        Ok(Verdict { action: outcome.step1_action, settled: outcome.mrac, decision: comm_decision(&outcome), detail: outcome })
    })
}
